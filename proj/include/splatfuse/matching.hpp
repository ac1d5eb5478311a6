#pragma once

#include <vector>

#include "splatfuse/core/image.hpp"
#include "splatfuse/geometry.hpp"

namespace splatfuse {

// Per-pixel matching descriptor at quarter resolution. Channels:
//   0-2  box-downsampled RGB, local mean subtracted
//   3-6  Sobel d/dx, d/dy of luma at two smoothing scales
//   7    local luma variance
//   8    constant epsilon (keeps the vector norm positive on flat patches)
// Each pixel's 9-vector is L2-normalized after filling. `texture` keeps the
// raw (pre-normalization) variance for texturedness thresholds.
struct FeatureMap {
  static constexpr int kChannels = 9;
  ImageF values;   // h x w x 9, normalized
  ImageF texture;  // h x w x 1, raw local variance

  int height() const { return values.height; }
  int width() const { return values.width; }
};

enum class PlaneSpacing { Uniform, InverseDepth };

struct CostVolume {
  std::vector<double> plane_depths;  // strictly increasing, [d_near, d_far]
  int height = 0, width = 0;
  std::vector<float> scores;  // plane-major: [k][y][x]

  float& at(int k, int y, int x) {
    return scores[(static_cast<size_t>(k) * height + y) * width + x];
  }
  float at(int k, int y, int x) const {
    return scores[(static_cast<size_t>(k) * height + y) * width + x];
  }
  int num_planes() const { return static_cast<int>(plane_depths.size()); }
};

struct MatchingConfig {
  double d_near = 0.25;
  double d_far = 8.0;
  int num_planes = 64;
  PlaneSpacing plane_spacing = PlaneSpacing::InverseDepth;
  double temperature = 0.05;
  int num_neighbors = 2;
};

std::vector<double> make_depth_planes(double d_near, double d_far, int count,
                                      PlaneSpacing spacing);

// image: h x w x 3 RGB in [0,1]. Output at quarter resolution (h/4 x w/4).
FeatureMap compute_matching_features(const ImageF& image);

// The N views closest to view t under dist = |t_a - t_b| + 0.5 * angle(R_a, R_b),
// t excluded, ties to the smaller index. Throws if n >= poses.size().
std::vector<int> select_nearby_views(const std::vector<Pose>& poses, int t, int n);

// Bilinear sample with zero padding; valid iff the position lies inside
// [0, w-1] x [0, h-1].
bool sample_bilinear(const ImageF& img, double x, double y, float* out);

struct WarpedFeatures {
  ImageF values;            // h x w x 9
  std::vector<uint8_t> valid;  // per pixel
};

// For each reference pixel: unproject at depth plane_depth, move to the source
// frame via ref_to_src, project with k, bilinearly sample src features.
WarpedFeatures warp_features(const FeatureMap& src, const Pose& ref_to_src,
                             const Intrinsics& k, double plane_depth);

struct NeighborView {
  const FeatureMap* features = nullptr;
  Pose ref_to_src;
};

// score(k, px) = mean cosine similarity between the reference feature and the
// valid warped neighbor features at plane k; 0 where no neighbor is valid.
CostVolume build_cost_volume(const FeatureMap& ref,
                             const std::vector<NeighborView>& neighbors,
                             const Intrinsics& k, const std::vector<double>& planes);
CostVolume build_cost_volume_serial(const FeatureMap& ref,
                                    const std::vector<NeighborView>& neighbors,
                                    const Intrinsics& k,
                                    const std::vector<double>& planes);

// 3x3 spatial box filter per plane (propagates matching evidence to neighbors
// before soft-argmax; truncated window at borders).
CostVolume smooth_cost_volume(const CostVolume& cv);

struct DepthPrediction {
  DepthMap depth;
  ConfidenceMap confidence;
};

// depth = sum_k softmax(score/tau)_k * d_k, confidence = max_k softmax.
DepthPrediction softargmax_depth(const CostVolume& cv, double temperature);

// Resample a single-channel map between strides of the same source image
// (box-center coordinate convention, bilinear with clamped taps).
ImageF resample_bilinear(const ImageF& src, int out_h, int out_w);

}  // namespace splatfuse
