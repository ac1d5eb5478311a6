#include "splatfuse/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace splatfuse {

AnchorDepths make_anchor_depths(const GaussianPrimitives& prims,
                                const std::vector<TrainingView>& views, int tile_size) {
  AnchorDepths anchors;
  anchors.depths.reserve(views.size());
  for (const TrainingView& view : views)
    anchors.depths.push_back(render(prims, view.camera, tile_size).depth);
  return anchors;
}

LossResult loss_rft(const RenderedImage& rendered, const ImageD& gt_image,
                    const ImageD& anchor_depth, double lambda1, double lambda2, bool use_ssim) {
  if (!(lambda1 >= 0 && lambda1 < 1) || !(lambda2 >= 0))
    throw std::invalid_argument("loss_rft: need lambda1 in [0,1) and lambda2 >= 0");
  if (!rendered.color.same_shape(gt_image))
    throw std::invalid_argument("loss_rft: color shape mismatch");
  if (!rendered.depth.same_shape(anchor_depth))
    throw std::invalid_argument("loss_rft: depth shape mismatch");

  LossResult out;
  out.color_grad = ImageD(rendered.color.height, rendered.color.width, 3);
  out.depth_grad = ImageD(rendered.depth.height, rendered.depth.width, 1);

  const double inv_color_n = 1.0 / static_cast<double>(rendered.color.data.size());
  double color_l1 = 0;
  for (size_t i = 0; i < rendered.color.data.size(); ++i) {
    const double d = rendered.color.data[i] - gt_image.data[i];
    color_l1 += std::abs(d);
    out.color_grad.data[i] = (1.0 - lambda1) * inv_color_n * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
  }
  color_l1 *= inv_color_n;

  const double inv_depth_n = 1.0 / static_cast<double>(rendered.depth.data.size());
  double depth_l1 = 0;
  for (size_t i = 0; i < rendered.depth.data.size(); ++i) {
    const double d = rendered.depth.data[i] - anchor_depth.data[i];
    depth_l1 += std::abs(d);
    out.depth_grad.data[i] = lambda2 * inv_depth_n * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
  }
  depth_l1 *= inv_depth_n;

  double ssim_loss = 0;
  if (use_ssim) {
    ssim_loss = 1.0 - ssim(rendered.color, gt_image);
    const ImageD g = ssim_gradient(rendered.color, gt_image);
    for (size_t i = 0; i < out.color_grad.data.size(); ++i)
      out.color_grad.data[i] -= lambda1 * g.data[i];
  }

  out.loss.color = color_l1;
  out.loss.depth = depth_l1;
  out.loss.ssim = ssim_loss;
  out.loss.total = (1.0 - lambda1) * color_l1 + lambda1 * ssim_loss + lambda2 * depth_l1;
  return out;
}

namespace {

struct AdamState {
  std::vector<double> m, v;
  explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr, int step) {
  const double bc1 = 1.0 - std::pow(kBeta1, step);
  const double bc2 = 1.0 - std::pow(kBeta2, step);
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = kBeta1 * state.m[i] + (1.0 - kBeta1) * grads[i];
    state.v[i] = kBeta2 * state.v[i] + (1.0 - kBeta2) * grads[i] * grads[i];
    params[i] -= lr * (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + kAdamEps);
  }
}

double scene_extent(const GaussianPrimitives& prims) {
  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (const Vec3& c : prims.centers) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  return std::max(1e-6, 0.5 * (hi - lo).norm());
}

}  // namespace

GaussianPrimitives run_finetune(const GaussianPrimitives& scene,
                                const std::vector<TrainingView>& views,
                                const AnchorDepths& anchors, const FinetuneConfig& config,
                                std::vector<LossBreakdown>* trace) {
  if (views.empty()) throw std::invalid_argument("run_finetune: no training views");
  if (anchors.depths.size() != views.size())
    throw std::invalid_argument("run_finetune: anchor count does not match views");
  if (config.iterations <= 0) return scene;

  const size_t n = scene.size();
  std::vector<double> pos(3 * n), log_s(3 * n), opa(n), col(3 * n);
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      pos[3 * i + c] = scene.centers[i][c];
      log_s[3 * i + c] = std::log(scene.scales[i][c]);
      col[3 * i + c] = scene.colors[i][c];
    }
    opa[i] = logit(std::clamp(scene.opacities[i], 1e-6, 1.0 - 1e-6));
  }

  AdamState st_pos(3 * n), st_log_s(3 * n), st_opa(n), st_col(3 * n);
  const double lr_pos = config.lr_position * scene_extent(scene);
  constexpr double kLogScaleMin = -9.210340371976182;  // log(1e-4)

  GaussianPrimitives prims = scene;
  auto materialize = [&] {
    for (size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        prims.centers[i][c] = pos[3 * i + c];
        prims.scales[i][c] = std::exp(log_s[3 * i + c]);
        prims.colors[i][c] = col[3 * i + c];
      }
      prims.opacities[i] = sigmoid(opa[i]);
    }
  };

  std::mt19937_64 rng(config.sampling_seed);
  double initial_loss = -1;

  for (int iter = 0; iter < config.iterations; ++iter) {
    const size_t view_index =
        config.random_sampling ? rng() % views.size() : static_cast<size_t>(iter) % views.size();
    const TrainingView& view = views[view_index];

    materialize();
    RenderPlan plan = make_render_plan(prims, view.camera, config.tile_size);
    const RenderedImage rendered = render_with_plan(plan);
    const LossResult loss = loss_rft(rendered, view.image, anchors.depths[view_index],
                                     config.lambda1, config.lambda2, config.use_ssim);
    if (initial_loss < 0) initial_loss = loss.loss.total;
    if (loss.loss.total > 10.0 * initial_loss && initial_loss > 0)
      throw FinetuneDivergence("run_finetune: loss exceeded 10x its initial value at iteration " +
                               std::to_string(iter));
    if (trace) trace->push_back(loss.loss);

    const ParamGradients grads =
        render_backward(prims, view.camera, plan, loss.color_grad, loss.depth_grad);

    std::vector<double> g_pos(3 * n), g_log_s(3 * n), g_opa(n), g_col(3 * n);
    for (size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        g_pos[3 * i + c] = grads.centers[i][c];
        g_log_s[3 * i + c] = grads.log_scales[i][c];
        g_col[3 * i + c] = grads.colors[i][c];
      }
      g_opa[i] = grads.opacity_logits[i];
    }

    const int step = iter + 1;
    adam_step(pos, g_pos, st_pos, lr_pos, step);
    adam_step(log_s, g_log_s, st_log_s, config.lr_log_scale, step);
    adam_step(opa, g_opa, st_opa, config.lr_opacity_logit, step);
    adam_step(col, g_col, st_col, config.lr_color, step);
    for (double& v : log_s) v = std::clamp(v, kLogScaleMin, 0.0);

    if (config.checkpoint && config.checkpoint_interval > 0 &&
        (iter + 1) % config.checkpoint_interval == 0) {
      materialize();
      config.checkpoint(iter + 1, prims);
    }
  }

  materialize();
  return prims;
}

}  // namespace splatfuse
