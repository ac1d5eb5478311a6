#pragma once

#include "splatfuse/renderer.hpp"

namespace splatfuse {

// Gradients in the optimizer's parameter space: centers and colors raw,
// scales through log, opacity through its logit.
struct ParamGradients {
  std::vector<Vec3> centers;
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;
  std::vector<Vec3> colors;

  explicit ParamGradients(size_t n = 0)
      : centers(n, Vec3::Zero()),
        log_scales(n, Vec3::Zero()),
        opacity_logits(n, 0.0),
        colors(n, Vec3::Zero()) {}
};

// Exact analytic gradients of the alpha blend (color and depth channels)
// under the plan's frozen visibility/order/footprints. The plan must have
// been refreshed against `prims` so the replayed forward matches.
ParamGradients render_backward(const GaussianPrimitives& prims, const Camera& camera,
                               const RenderPlan& plan, const ImageD& color_grad,
                               const ImageD& depth_grad);

// Single-threaded reference used by tests and the kernel benchmark.
ParamGradients render_backward_serial(const GaussianPrimitives& prims, const Camera& camera,
                                      const RenderPlan& plan, const ImageD& color_grad,
                                      const ImageD& depth_grad);

}  // namespace splatfuse
