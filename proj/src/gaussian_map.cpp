#include "splatfuse/gaussian_map.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "splatfuse/matching.hpp"

namespace splatfuse {

LocalTriplets lift_view(int view_id, const ImageF& image, const LiftCamera& camera, int stride,
                        const DepthMap& depth, const ConfidenceMap& confidence) {
  if (stride != 1 && stride != 2 && stride != 4)
    throw std::invalid_argument("lift_view: stride must be 1, 2 or 4");
  const int h = camera.intrinsics.height, w = camera.intrinsics.width;
  if (depth.height != h || depth.width != w || confidence.height != h || confidence.width != w)
    throw std::invalid_argument("lift_view: depth/confidence shape does not match lift grid");

  LocalTriplets out;
  out.view_id = view_id;
  out.centers.reserve(static_cast<size_t>(h) * w);

  float rgb[3];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float d = depth.at(y, x);
      if (!(d > 0)) continue;
      out.centers.push_back(unproject_pixel(camera.intrinsics, camera.pose, x, y, d));
      const double conf = std::clamp(static_cast<double>(confidence.at(y, x)), 0.01, 0.99);
      out.weights.push_back(conf);

      const double u = (x + 0.5) * stride - 0.5;
      const double v = (y + 0.5) * stride - 0.5;
      sample_bilinear(image, std::clamp(u, 0.0, image.width - 1.0),
                      std::clamp(v, 0.0, image.height - 1.0), rgb);

      FeatureVec f{};
      f[TripletFeature::kLogScaleSeed] = 0.0;
      for (int c = 0; c < 3; ++c) f[TripletFeature::kColor + c] = rgb[c];
      f[TripletFeature::kOpacityLogit] = logit(0.9);
      f[TripletFeature::kConfidenceLogit] = logit(conf);
      out.features.push_back(f);
      out.pixel_x.push_back(x);
      out.pixel_y.push_back(y);
      out.depths.push_back(d);
    }
  }
  if (out.centers.empty()) throw std::runtime_error("lift_view: no valid depth pixels");
  return out;
}

GaussianPrimitives decode_gaussians(const GlobalTriplets& g, double base_scale_px,
                                    double focal_mean) {
  if (g.size() == 0) throw std::invalid_argument("decode_gaussians: empty triplet set");
  const size_t m = g.size();
  GaussianPrimitives out;
  out.centers = g.centers;
  out.rotations.assign(m, Quat::Identity());
  out.scales.resize(m);
  out.opacities.resize(m);
  out.colors.resize(m);
  for (size_t i = 0; i < m; ++i) {
    const FeatureVec& f = g.features[i];
    const double s_iso =
        std::clamp(base_scale_px * g.lift_depths[i] / focal_mean *
                       std::exp(f[TripletFeature::kLogScaleSeed]),
                   1e-4, 1.0);
    out.scales[i] = Vec3::Constant(s_iso);
    const double o = std::clamp(f[TripletFeature::kOpacityLogit], -10.0, 10.0);
    out.opacities[i] = sigmoid(o) * g.opacity_scale[i];
    for (int c = 0; c < 3; ++c)
      out.colors[i][c] = std::clamp(f[TripletFeature::kColor + c], 0.0, 1.0);
  }
  return out;
}

void merge_unfused(GlobalTriplets& global, const LocalTriplets& local,
                   const std::vector<uint8_t>& fused_mask) {
  for (size_t i = 0; i < local.size(); ++i) {
    if (!fused_mask.empty() && fused_mask[i]) continue;
    global.centers.push_back(local.centers[i]);
    global.weights.push_back(local.weights[i]);
    global.features.push_back(local.features[i]);
    global.opacity_scale.push_back(1.0);
    global.lift_depths.push_back(local.depths[i]);
  }
}

}  // namespace splatfuse
