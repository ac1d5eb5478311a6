#pragma once

#include <array>
#include <vector>

#include "splatfuse/core/image.hpp"
#include "splatfuse/geometry.hpp"

namespace splatfuse {

// Triplet latent layout. Kept opaque to fusion (which blends the whole
// vector); the decoder reads the named slots.
struct TripletFeature {
  static constexpr int kSize = 11;
  static constexpr int kLogScaleSeed = 0;
  static constexpr int kColor = 1;       // 3 channels
  static constexpr int kOpacityLogit = 4;
  static constexpr int kConfidenceLogit = 5;
  // slots 6..10 reserved
};

using FeatureVec = std::array<double, TripletFeature::kSize>;

// One camera's lifted triplets: one entry per strided pixel with valid depth,
// stored row-major over the lift grid.
struct LocalTriplets {
  int view_id = 0;
  std::vector<Vec3> centers;            // world frame
  std::vector<double> weights;          // (0,1)
  std::vector<FeatureVec> features;
  std::vector<int> pixel_x, pixel_y;    // lift-grid coordinates
  std::vector<float> depths;            // source-view depth, > 0

  size_t size() const { return centers.size(); }
};

// Incrementally fused scene triplets. `opacity_scale` is the multiplicative
// factor mutated by floater removal (1 = untouched); keeping it separate from
// the opacity logit makes the reduction exact arithmetic.
struct GlobalTriplets {
  std::vector<Vec3> centers;
  std::vector<double> weights;          // > 0, grows by summation
  std::vector<FeatureVec> features;
  std::vector<double> opacity_scale;    // (0,1]
  std::vector<double> lift_depths;      // depth at lift time, blended on fusion

  size_t size() const { return centers.size(); }
};

struct GaussianPrimitives {
  std::vector<Vec3> centers;
  std::vector<Quat> rotations;
  std::vector<Vec3> scales;             // meters, [1e-4, 1.0]
  std::vector<double> opacities;        // (0,1)
  std::vector<Vec3> colors;             // [0,1]

  size_t size() const { return centers.size(); }
};

struct LiftCamera {
  Intrinsics intrinsics;  // already at lift resolution
  Pose pose;
};

// One triplet per lift pixel with depth > 0. Features: log-scale seed 0,
// color sampled from `image` (full resolution, box-center mapping), opacity
// logit = logit(0.9), confidence logit from the clamped confidence.
// Throws if every pixel is invalid.
LocalTriplets lift_view(int view_id, const ImageF& image, const LiftCamera& camera, int stride,
                        const DepthMap& depth, const ConfidenceMap& confidence);

// Deterministic triplet -> primitive decoding: identity rotation, isotropic
// scale base_scale_px * lift_depth / focal_mean * exp(seed) clamped to
// [1e-4, 1], opacity sigmoid(clamped logit) * opacity_scale.
GaussianPrimitives decode_gaussians(const GlobalTriplets& g, double base_scale_px,
                                    double focal_mean);

// Append locals not consumed by fusion; new entries get opacity_scale 1.
void merge_unfused(GlobalTriplets& global, const LocalTriplets& local,
                   const std::vector<uint8_t>& fused_mask);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace splatfuse
