#pragma once

#include <vector>

#include "splatfuse/config.hpp"
#include "splatfuse/scene_io.hpp"
#include "splatfuse/wfr.hpp"

namespace splatfuse {

struct ReconstructionResult {
  GlobalTriplets triplets;             // post-fusion, post-WFR
  GaussianPrimitives primitives;
  std::vector<FusionStats> fusion_stats;
  WfrStats wfr_stats;
  std::vector<DepthMap> lift_depths;       // per view, lift resolution
  std::vector<ConfidenceMap> lift_confs;   // per view, lift resolution
  std::vector<LiftCamera> lift_cameras;
};

// Per-view depth from the plane-sweep cost volume (quarter resolution
// matching features, box-smoothed scores, soft-argmax).
struct DepthEstimate {
  DepthMap depth;
  ConfidenceMap confidence;
};
DepthEstimate estimate_depth(const std::vector<CameraFrame>& frames,
                             const std::vector<FeatureMap>& features, int view,
                             const MatchingConfig& config);

// Full feed-forward pass: per-view depth (predicted or ground truth), lift,
// pixel-wise triplet fusion, floater removal, decode.
ReconstructionResult reconstruct(const std::vector<CameraFrame>& frames,
                                 const PipelineConfig& config);

ImageF resample_nearest(const ImageF& src, int out_h, int out_w);

}  // namespace splatfuse
