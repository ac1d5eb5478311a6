#pragma once

#include <vector>

#include "splatfuse/core/image.hpp"
#include "splatfuse/ptf.hpp"

namespace splatfuse {

struct FloaterIndication {
  int pixel_x = 0, pixel_y = 0;
  int global_index = 0;
  double global_depth = 0;  // projected depth of the indicated Gaussian
  double local_depth = 0;   // predicted depth at the pixel
};

enum class WfrStrategy {
  NeighborAccumulate,  // default: depth-window weight sums on both sides
  NoAccumulate,        // raw weights of the indicated Gaussian / local pixel
  Uniform,             // both sides 1
  DirectRemoval,       // delete indicated Gaussians outright
};

struct WfrOptions {
  double delta = 0.1;
  WfrStrategy strategy = WfrStrategy::NeighborAccumulate;
  double epsilon_floor = 0.01;  // factor when the indicated side has zero support
};

// Pixels whose bin minimum-depth entry sits more than delta in front of the
// predicted depth. Pixels with invalid (0) depth are skipped.
std::vector<FloaterIndication> indicate_floaters(const ProjectionBuffer& buffer,
                                                 const DepthMap& local_depth, double delta);

// Sum of global weights of bin entries within the depth window |d_ref - d| < delta.
double neighbor_weights(const std::vector<ProjectionBuffer::Entry>& bin, double d_ref,
                        const std::vector<double>& weights, double delta);

// opacity_scale(m) *= w_global_acc / (w_global_acc + w_local_acc); the
// epsilon floor replaces the factor when w_global_acc == 0.
void apply_opacity_reduction(GlobalTriplets& global, const FloaterIndication& indication,
                             double w_global_acc, double w_local_acc, double epsilon_floor);

struct WfrView {
  LiftCamera camera;           // lift-grid camera
  DepthMap depth;              // predicted depth at lift resolution
  ConfidenceMap confidence;    // used by the NoAccumulate strategy
};

struct WfrStats {
  size_t indications = 0;
  size_t removed = 0;  // DirectRemoval only
};

// Second pass over all views in input order. Indications within one view are
// applied in pixel row-major order; a Gaussian may be reduced several times.
WfrStats run_wfr(GlobalTriplets& global, const std::vector<WfrView>& views,
                 const WfrOptions& options);

}  // namespace splatfuse
