#include "splatfuse/ptf.hpp"

#include <cmath>
#include <stdexcept>

namespace splatfuse {

ProjectionBuffer bin_projections(const GlobalTriplets& global, const LiftCamera& camera) {
  ProjectionBuffer buffer;
  buffer.height = camera.intrinsics.height;
  buffer.width = camera.intrinsics.width;
  buffer.bins.assign(static_cast<size_t>(buffer.height) * buffer.width, {});
  for (size_t j = 0; j < global.size(); ++j) {
    const PixelProjection p = project_point(camera.intrinsics, camera.pose, global.centers[j]);
    if (p.behind) continue;
    const int px = static_cast<int>(round_half_up(p.u));
    const int py = static_cast<int>(round_half_up(p.v));
    if (px < 0 || px >= buffer.width || py < 0 || py >= buffer.height) continue;
    buffer.bins[static_cast<size_t>(py) * buffer.width + px].push_back(
        {static_cast<int>(j), p.depth});
  }
  return buffer;
}

CorrespondenceSet pixel_align(const ProjectionBuffer& buffer, const LocalTriplets& local,
                              double delta, bool broader) {
  if (!(delta > 0)) throw std::invalid_argument("pixel_align: delta must be > 0");
  CorrespondenceSet out;
  out.delta = delta;
  std::vector<uint8_t> claimed;  // lazily sized to the max global index seen
  for (size_t i = 0; i < local.size(); ++i) {
    const auto& bin = buffer.bin(local.pixel_y[i], local.pixel_x[i]);
    if (bin.empty()) continue;
    int best = -1;
    double best_depth = 0;
    for (const auto& e : bin) {
      if (best < 0 || e.depth < best_depth ||
          (e.depth == best_depth && e.global_index < best)) {
        best = e.global_index;
        best_depth = e.depth;
      }
    }
    const double diff = static_cast<double>(local.depths[i]) - best_depth;
    const bool valid = broader ? (diff > -delta) : (std::abs(diff) < delta);
    if (!valid) continue;
    if (static_cast<size_t>(best) >= claimed.size()) claimed.resize(best + 1, 0);
    if (claimed[best]) continue;
    claimed[best] = 1;
    out.pairs.push_back({static_cast<int>(i), best});
  }
  return out;
}

FeatureVec fuse_features(const FeatureVec& f_local, const FeatureVec& f_global,
                         double w_local, double w_global) {
  if (!(w_local > 0) || !(w_global > 0))
    throw std::invalid_argument("fuse_features: weights must be > 0");
  FeatureVec out;
  const double inv = 1.0 / (w_local + w_global);
  for (int c = 0; c < TripletFeature::kSize; ++c)
    out[c] = (w_local * f_local[c] + w_global * f_global[c]) * inv;
  return out;
}

void fuse_pairs(GlobalTriplets& global, const LocalTriplets& local,
                const CorrespondenceSet& pairs) {
  std::vector<uint8_t> seen(global.size(), 0);
  std::vector<uint8_t> fused_local(local.size(), 0);
  for (const CorrespondencePair& p : pairs.pairs) {
    if (seen[p.global_index])
      throw std::invalid_argument("fuse_pairs: duplicate global index in correspondence set");
    seen[p.global_index] = 1;
    fused_local[p.local_index] = 1;

    const double wl = local.weights[p.local_index];
    const double wg = global.weights[p.global_index];
    const double inv = 1.0 / (wl + wg);
    global.centers[p.global_index] =
        (wl * local.centers[p.local_index] + wg * global.centers[p.global_index]) * inv;
    global.features[p.global_index] =
        fuse_features(local.features[p.local_index], global.features[p.global_index], wl, wg);
    global.lift_depths[p.global_index] =
        (wl * local.depths[p.local_index] + wg * global.lift_depths[p.global_index]) * inv;
    global.weights[p.global_index] = wl + wg;
  }
  merge_unfused(global, local, fused_local);
}

GlobalTriplets run_ptf(const std::vector<LiftedView>& views, const PtfOptions& options,
                       std::vector<FusionStats>* stats) {
  if (views.empty()) throw std::invalid_argument("run_ptf: need at least one view");
  GlobalTriplets global;
  for (size_t v = 0; v < views.size(); ++v) {
    const LiftedView& view = views[v];
    size_t fused = 0;
    try {
      if (global.size() == 0 || !options.fusion_enabled) {
        merge_unfused(global, view.triplets, {});
      } else {
        const ProjectionBuffer buffer = bin_projections(global, view.camera);
        const CorrespondenceSet pairs =
            pixel_align(buffer, view.triplets, options.delta, options.broader);
        fused = pairs.pairs.size();
        fuse_pairs(global, view.triplets, pairs);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("run_ptf: view " + std::to_string(view.triplets.view_id) + ": " +
                               e.what());
    }
    if (stats)
      stats->push_back({view.triplets.view_id, view.triplets.size(), fused, global.size()});
  }
  return global;
}

}  // namespace splatfuse
