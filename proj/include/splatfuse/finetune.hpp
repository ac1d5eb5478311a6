#pragma once

#include <functional>
#include <random>
#include <vector>

#include "splatfuse/renderer.hpp"
#include "splatfuse/renderer_backward.hpp"

namespace splatfuse {

// Depth renders of the feed-forward scene at every training view, frozen
// before the first parameter update.
struct AnchorDepths {
  std::vector<ImageD> depths;
};

struct TrainingView {
  Camera camera;
  ImageD image;  // ground-truth color, h x w x 3 in [0,1]
};

AnchorDepths make_anchor_depths(const GaussianPrimitives& prims,
                                const std::vector<TrainingView>& views, int tile_size = 16);

struct LossBreakdown {
  double total = 0;
  double color = 0;
  double ssim = 0;
  double depth = 0;
};

struct LossResult {
  LossBreakdown loss;
  ImageD color_grad;  // dL/d(rendered color)
  ImageD depth_grad;  // dL/d(rendered depth)
};

// L = (1-lambda1) * meanL1(color) + lambda1 * (1 - SSIM) [optional]
//   + lambda2 * meanL1(depth - anchor).
LossResult loss_rft(const RenderedImage& rendered, const ImageD& gt_image,
                    const ImageD& anchor_depth, double lambda1, double lambda2,
                    bool use_ssim);

struct FinetuneDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FinetuneConfig {
  int iterations = 200;
  double lambda1 = 0.2;
  double lambda2 = 0.1;
  bool use_ssim = false;
  double lr_position = 1.6e-4;  // multiplied by the scene extent
  double lr_log_scale = 5e-3;
  double lr_opacity_logit = 5e-2;
  double lr_color = 2.5e-3;
  int tile_size = 16;
  bool random_sampling = false;  // default round-robin
  uint64_t sampling_seed = 0;
  // Called after each step, e.g. for PLY checkpoints.
  std::function<void(int iteration, const GaussianPrimitives&)> checkpoint;
  int checkpoint_interval = 0;
};

// Adaptive-moment descent on centers, log-scales, opacity logits and colors;
// rotations stay fixed. Aborts with FinetuneDivergence if the loss exceeds
// 10x its initial value. Zero iterations return the scene unchanged.
GaussianPrimitives run_finetune(const GaussianPrimitives& scene,
                                const std::vector<TrainingView>& views,
                                const AnchorDepths& anchors, const FinetuneConfig& config,
                                std::vector<LossBreakdown>* trace = nullptr);

}  // namespace splatfuse
