#include "splatfuse/pipeline.hpp"

#include <cmath>
#include <stdexcept>

namespace splatfuse {

ImageF resample_nearest(const ImageF& src, int out_h, int out_w) {
  ImageF out(out_h, out_w, src.channels);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const int yy = std::clamp(static_cast<int>(round_half_up((y + 0.5) * sy - 0.5)), 0,
                              src.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const int xx = std::clamp(static_cast<int>(round_half_up((x + 0.5) * sx - 0.5)), 0,
                                src.width - 1);
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(yy, xx, c);
    }
  }
  return out;
}

DepthEstimate estimate_depth(const std::vector<CameraFrame>& frames,
                             const std::vector<FeatureMap>& features, int view,
                             const MatchingConfig& config) {
  std::vector<Pose> poses;
  poses.reserve(frames.size());
  for (const CameraFrame& f : frames) poses.push_back(f.pose);
  const std::vector<int> nearby =
      select_nearby_views(poses, view, std::min<int>(config.num_neighbors,
                                                     static_cast<int>(frames.size()) - 1));

  std::vector<NeighborView> neighbors;
  neighbors.reserve(nearby.size());
  for (const int n : nearby)
    neighbors.push_back({&features[n], compose_transform(frames[view].pose, frames[n].pose)});

  const Intrinsics quarter = frames[view].intrinsics.strided(4);
  const std::vector<double> planes =
      make_depth_planes(config.d_near, config.d_far, config.num_planes, config.plane_spacing);
  const CostVolume cv = build_cost_volume(features[view], neighbors, quarter, planes);
  const DepthPrediction pred = softargmax_depth(smooth_cost_volume(cv), config.temperature);
  return {pred.depth, pred.confidence};
}

ReconstructionResult reconstruct(const std::vector<CameraFrame>& frames,
                                 const PipelineConfig& config) {
  if (frames.empty()) throw std::invalid_argument("reconstruct: no frames");
  const int stride = config.stride;
  const MatchingConfig mconfig = config.matching();

  std::vector<FeatureMap> features;
  if (!config.use_gt_depth) {
    if (frames.size() < 2)
      throw std::runtime_error("reconstruct: depth prediction needs at least 2 views");
    features.reserve(frames.size());
    for (const CameraFrame& f : frames) features.push_back(compute_matching_features(f.image));
  }

  ReconstructionResult result;
  std::vector<LiftedView> lifted;
  lifted.reserve(frames.size());

  for (size_t v = 0; v < frames.size(); ++v) {
    const CameraFrame& frame = frames[v];
    LiftCamera camera{frame.intrinsics.strided(stride), frame.pose};
    const int lift_h = camera.intrinsics.height, lift_w = camera.intrinsics.width;

    DepthMap depth;
    ConfidenceMap conf;
    if (config.use_gt_depth) {
      if (!frame.has_depth())
        throw std::runtime_error("reconstruct: frame " + std::to_string(v) +
                                 " has no depth but use_gt_depth is set");
      depth = resample_nearest(frame.depth, lift_h, lift_w);
      conf = ConfidenceMap(lift_h, lift_w, 1, 0.99f);
    } else {
      const DepthEstimate est = estimate_depth(frames, features, static_cast<int>(v), mconfig);
      depth = resample_bilinear(est.depth, lift_h, lift_w);
      conf = resample_bilinear(est.confidence, lift_h, lift_w);
    }

    LiftedView lv;
    lv.triplets = lift_view(static_cast<int>(v), frame.image, camera, stride, depth, conf);
    lv.camera = camera;
    lifted.push_back(std::move(lv));

    result.lift_depths.push_back(std::move(depth));
    result.lift_confs.push_back(std::move(conf));
    result.lift_cameras.push_back(camera);
  }

  result.triplets = run_ptf(lifted, config.ptf(), &result.fusion_stats);

  if (config.enable_wfr) {
    std::vector<WfrView> wfr_views;
    wfr_views.reserve(frames.size());
    for (size_t v = 0; v < frames.size(); ++v)
      wfr_views.push_back({result.lift_cameras[v], result.lift_depths[v], result.lift_confs[v]});
    result.wfr_stats = run_wfr(result.triplets, wfr_views, config.wfr());
  }

  result.primitives = decode_gaussians(result.triplets, config.base_scale_px,
                                       result.lift_cameras[0].intrinsics.focal_mean());
  return result;
}

}  // namespace splatfuse
