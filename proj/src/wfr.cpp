#include "splatfuse/wfr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace splatfuse {

std::vector<FloaterIndication> indicate_floaters(const ProjectionBuffer& buffer,
                                                 const DepthMap& local_depth, double delta) {
  if (!(delta > 0)) throw std::invalid_argument("indicate_floaters: delta must be > 0");
  if (local_depth.height != buffer.height || local_depth.width != buffer.width)
    throw std::invalid_argument("indicate_floaters: depth shape does not match buffer");
  std::vector<FloaterIndication> out;
  for (int y = 0; y < buffer.height; ++y) {
    for (int x = 0; x < buffer.width; ++x) {
      const auto& bin = buffer.bin(y, x);
      if (bin.empty()) continue;
      const float dl = local_depth.at(y, x);
      if (!(dl > 0)) continue;
      int best = -1;
      double best_depth = 0;
      for (const auto& e : bin) {
        if (best < 0 || e.depth < best_depth ||
            (e.depth == best_depth && e.global_index < best)) {
          best = e.global_index;
          best_depth = e.depth;
        }
      }
      if (static_cast<double>(dl) - best_depth > delta)
        out.push_back({x, y, best, best_depth, static_cast<double>(dl)});
    }
  }
  return out;
}

double neighbor_weights(const std::vector<ProjectionBuffer::Entry>& bin, double d_ref,
                        const std::vector<double>& weights, double delta) {
  double sum = 0;
  for (const auto& e : bin)
    if (std::abs(d_ref - e.depth) < delta) sum += weights[e.global_index];
  return sum;
}

void apply_opacity_reduction(GlobalTriplets& global, const FloaterIndication& indication,
                             double w_global_acc, double w_local_acc, double epsilon_floor) {
  double& beta = global.opacity_scale[indication.global_index];
  if (w_global_acc <= 0) {
    beta *= epsilon_floor;
  } else {
    beta *= w_global_acc / (w_global_acc + w_local_acc);
  }
}

namespace {

void erase_indices(GlobalTriplets& g, const std::vector<uint8_t>& remove) {
  size_t keep = 0;
  for (size_t i = 0; i < g.size(); ++i) {
    if (remove[i]) continue;
    if (keep != i) {
      g.centers[keep] = g.centers[i];
      g.weights[keep] = g.weights[i];
      g.features[keep] = g.features[i];
      g.opacity_scale[keep] = g.opacity_scale[i];
      g.lift_depths[keep] = g.lift_depths[i];
    }
    ++keep;
  }
  g.centers.resize(keep);
  g.weights.resize(keep);
  g.features.resize(keep);
  g.opacity_scale.resize(keep);
  g.lift_depths.resize(keep);
}

}  // namespace

WfrStats run_wfr(GlobalTriplets& global, const std::vector<WfrView>& views,
                 const WfrOptions& options) {
  WfrStats stats;
  for (const WfrView& view : views) {
    const ProjectionBuffer buffer = bin_projections(global, view.camera);
    const std::vector<FloaterIndication> indications =
        indicate_floaters(buffer, view.depth, options.delta);
    stats.indications += indications.size();

    if (options.strategy == WfrStrategy::DirectRemoval) {
      if (indications.empty()) continue;
      std::vector<uint8_t> remove(global.size(), 0);
      for (const auto& ind : indications) {
        if (!remove[ind.global_index]) ++stats.removed;
        remove[ind.global_index] = 1;
      }
      erase_indices(global, remove);
      continue;
    }

    for (const auto& ind : indications) {
      double wg = 1, wl = 1;
      switch (options.strategy) {
        case WfrStrategy::NeighborAccumulate: {
          const auto& bin = buffer.bin(ind.pixel_y, ind.pixel_x);
          wg = neighbor_weights(bin, ind.global_depth, global.weights, options.delta);
          wl = neighbor_weights(bin, ind.local_depth, global.weights, options.delta);
          break;
        }
        case WfrStrategy::NoAccumulate:
          wg = global.weights[ind.global_index];
          wl = std::clamp(
              static_cast<double>(view.confidence.at(ind.pixel_y, ind.pixel_x)), 0.01, 0.99);
          break;
        case WfrStrategy::Uniform:
          break;
        case WfrStrategy::DirectRemoval:
          break;  // handled above
      }
      apply_opacity_reduction(global, ind, wg, wl, options.epsilon_floor);
    }
  }
  return stats;
}

}  // namespace splatfuse
