#pragma once

#include <vector>

#include "splatfuse/gaussian_map.hpp"

namespace splatfuse {

// Global triplet projections binned by rounded pixel on the lift grid.
// Entries keep their projected depth; every global index lands in at most
// one bin.
struct ProjectionBuffer {
  struct Entry {
    int global_index;
    double depth;
  };
  int height = 0, width = 0;
  std::vector<std::vector<Entry>> bins;  // row-major, height*width

  const std::vector<Entry>& bin(int y, int x) const {
    return bins[static_cast<size_t>(y) * width + x];
  }
};

struct CorrespondencePair {
  int local_index;
  int global_index;
};

struct CorrespondenceSet {
  std::vector<CorrespondencePair> pairs;
  double delta = 0;
};

// Projects every global center with the lift-grid camera; keeps entries with
// depth > 1e-9 whose round-half-up pixel lies in bounds.
ProjectionBuffer bin_projections(const GlobalTriplets& global, const LiftCamera& camera);

// For each local pixel (row-major): pick the bin's minimum-depth entry
// (tie -> smaller global index); valid iff d_local - d_global > -delta, or
// |d_local - d_global| < delta when broader == false. A global already
// claimed by an earlier local is dropped.
CorrespondenceSet pixel_align(const ProjectionBuffer& buffer, const LocalTriplets& local,
                              double delta, bool broader = true);

// Weight-proportional convex blend, componentwise in the layout's
// pre-activation space.
FeatureVec fuse_features(const FeatureVec& f_local, const FeatureVec& f_global,
                         double w_local, double w_global);

// Merges each pair (weighted center average, weight sum, feature blend), then
// appends unpaired locals. Throws on duplicate global indices.
void fuse_pairs(GlobalTriplets& global, const LocalTriplets& local,
                const CorrespondenceSet& pairs);

struct LiftedView {
  LocalTriplets triplets;
  LiftCamera camera;
};

struct FusionStats {
  int view_id = 0;
  size_t lifted = 0;
  size_t fused_pairs = 0;
  size_t global_after = 0;
};

struct PtfOptions {
  double delta = 0.1;
  bool broader = true;        // Eq-form asymmetric band vs symmetric window
  bool fusion_enabled = true; // false appends every view unfused
};

// Sequential fold over views: view 0 initializes the global set; each
// subsequent view runs bin_projections -> pixel_align -> fuse_pairs.
GlobalTriplets run_ptf(const std::vector<LiftedView>& views, const PtfOptions& options,
                       std::vector<FusionStats>* stats = nullptr);

}  // namespace splatfuse
