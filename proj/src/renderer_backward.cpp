#include "splatfuse/renderer_backward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "splatfuse/core/parallel.hpp"

namespace splatfuse {

namespace {

// Per-splat accumulation slots: d(mean.x,mean.y), d(conic 00,01,11),
// d(opacity raw), d(color rgb), d(splat depth).
constexpr int kSlots = 10;

struct Contribution {
  int splat = 0;   // index into plan.splats
  double alpha = 0;
  double weight = 0;  // alpha * transmittance before
};

inline bool in_rect(const SplatRecord& rec, int px, int py) {
  return px >= rec.x0 && px <= rec.x1 && py >= rec.y0 && py <= rec.y1;
}

void backward_pixel(const RenderPlan& plan, const std::vector<int>& indices, int px, int py,
                    const double* g_color, double g_depth, std::vector<Contribution>& stack,
                    double* acc) {
  stack.clear();
  double t = 1.0;
  double alpha_acc = 0.0;
  for (const int si : indices) {
    const SplatRecord& rec = plan.splats[si];
    if (!in_rect(rec, px, py)) continue;
    const double dx = px - rec.mean.x();
    const double dy = py - rec.mean.y();
    const double maha =
        rec.conic(0, 0) * dx * dx + 2.0 * rec.conic(0, 1) * dx * dy + rec.conic(1, 1) * dy * dy;
    const double a = std::min(rec.opacity * std::exp(-0.5 * maha), kAlphaClamp);
    if (a <= 0) continue;
    stack.push_back({si, a, a * t});
    alpha_acc += a * t;
    t *= 1.0 - a;
    if (t < kTransmittanceFloor) break;
  }
  // The forward zeroes the depth channel below the alpha floor; the depth
  // gradient must vanish there too.
  if (alpha_acc < 1e-4) g_depth = 0.0;

  // Reverse sweep. The suffix accumulators hold the blend of everything
  // behind splat i, normalized by the transmittance after i:
  //   A_i = sum_{k>i} c_k a_k prod_{i<j<k} (1 - a_j),
  // so d(blend)/d(a_i) = T_i * (c_i - A_i).
  double sc0 = 0, sc1 = 0, sc2 = 0, sd = 0;
  for (size_t n = stack.size(); n-- > 0;) {
    const Contribution& cb = stack[n];
    const SplatRecord& rec = plan.splats[cb.splat];
    const double t_before = cb.weight / cb.alpha;
    const double one_minus = 1.0 - cb.alpha;

    const double d_alpha_color = g_color[0] * t_before * (rec.color.x() - sc0) +
                                 g_color[1] * t_before * (rec.color.y() - sc1) +
                                 g_color[2] * t_before * (rec.color.z() - sc2);
    const double d_alpha = d_alpha_color + g_depth * t_before * (rec.depth - sd);

    double* slot = acc + static_cast<size_t>(cb.splat) * kSlots;
    // Chain through a = min(opacity * G, clamp); the clamp zeroes the path.
    if (cb.alpha < kAlphaClamp) {
      const double g_gauss = cb.alpha / rec.opacity;  // exp(-maha/2)
      slot[5] += d_alpha * g_gauss;                   // d/d(opacity)
      const double d_maha = -0.5 * cb.alpha * d_alpha;
      const double dx = px - rec.mean.x();
      const double dy = py - rec.mean.y();
      const double qx = rec.conic(0, 0) * dx + rec.conic(0, 1) * dy;
      const double qy = rec.conic(0, 1) * dx + rec.conic(1, 1) * dy;
      slot[0] += -2.0 * d_maha * qx;  // d/d(mean.x)
      slot[1] += -2.0 * d_maha * qy;
      slot[2] += d_maha * dx * dx;    // d/d(conic)
      slot[3] += d_maha * 2.0 * dx * dy;
      slot[4] += d_maha * dy * dy;
    }
    slot[6] += g_color[0] * cb.weight;
    slot[7] += g_color[1] * cb.weight;
    slot[8] += g_color[2] * cb.weight;
    slot[9] += g_depth * cb.weight;

    sc0 = rec.color.x() * cb.alpha + sc0 * one_minus;
    sc1 = rec.color.y() * cb.alpha + sc1 * one_minus;
    sc2 = rec.color.z() * cb.alpha + sc2 * one_minus;
    sd = rec.depth * cb.alpha + sd * one_minus;
  }
}

// Chains the per-splat screen-space gradients down to the primitive
// parameters (centers through projection and the Jacobian, log-scales
// through the covariance chain, opacity through its logit).
void chain_to_params(const GaussianPrimitives& prims, const Camera& camera,
                     const RenderPlan& plan, const std::vector<double>& acc,
                     ParamGradients& out) {
  const Intrinsics& k = camera.intrinsics;
  const Mat3 rot = camera.pose.rotation;

  const int splat_count = static_cast<int>(plan.splats.size());
#pragma omp parallel for schedule(static)
  for (int s = 0; s < splat_count; ++s) {
    const double* slot = acc.data() + static_cast<size_t>(s) * kSlots;
    const SplatRecord& rec = plan.splats[s];
    const int i = rec.index;

    const Vec3 x_cam = camera.pose.apply(prims.centers[i]);
    const double z = x_cam.z();

    Vec3 d_xcam = Vec3::Zero();

    // Through the projected mean.
    const Mat23 jproj = perspective_jacobian(k, x_cam);
    d_xcam += jproj.transpose() * Vec2(slot[0], slot[1]);

    // Through the rendered splat depth.
    d_xcam.z() += slot[9];

    // conic = inverse(cov2d): d(cov2d) = -Q dQ Q.
    Mat2 d_conic;
    d_conic << slot[2], 0.5 * slot[3], 0.5 * slot[3], slot[4];
    // slot stores d/dq00, d/dq01(sym combined), d/dq11 with the off-diagonal
    // already doubled; rebuild the symmetric gradient matrix.
    const Mat2 q = rec.conic;
    const Mat2 d_cov2d = -q * d_conic * q;

    // cov2d = J * M * J^T + floor, M = R * Sigma3 * R^T.
    const Mat3 sigma3 = [&] {
      Covariance3 cov;
      cov.q = prims.rotations[i];
      cov.scales = prims.scales[i];
      return cov.matrix();
    }();
    const Mat3 m_world = rot * sigma3 * rot.transpose();
    const Mat3 d_m = jproj.transpose() * d_cov2d * jproj;
    const Mat23 d_j = 2.0 * d_cov2d * jproj * m_world;

    // J entries depend on the camera-frame point.
    const double fx = k.fx, fy = k.fy;
    const double z2 = z * z, z3 = z2 * z;
    d_xcam.x() += d_j(0, 2) * (-fx / z2);
    d_xcam.y() += d_j(1, 2) * (-fy / z2);
    d_xcam.z() += d_j(0, 0) * (-fx / z2) + d_j(0, 2) * (2.0 * fx * x_cam.x() / z3) +
                  d_j(1, 1) * (-fy / z2) + d_j(1, 2) * (2.0 * fy * x_cam.y() / z3);

    out.centers[i] += rot.transpose() * d_xcam;

    // Sigma3 = B B^T with B = Rq * diag(s): dB = 2 dSigma3 B,
    // ds_k = (Rq^T dB)_kk, dlog s_k = ds_k * s_k.
    const Mat3 d_sigma3 = rot.transpose() * d_m * rot;
    const Mat3 rq = prims.rotations[i].normalized().toRotationMatrix();
    const Mat3 b = rq * prims.scales[i].asDiagonal();
    const Mat3 d_b = 2.0 * d_sigma3 * b;
    const Vec3 d_s = (rq.transpose() * d_b).diagonal();
    out.log_scales[i] += d_s.cwiseProduct(prims.scales[i]);

    const double alpha = prims.opacities[i];
    out.opacity_logits[i] += slot[5] * alpha * (1.0 - alpha);

    out.colors[i] += Vec3(slot[6], slot[7], slot[8]);
  }
}

ParamGradients run_backward(const GaussianPrimitives& prims, const Camera& camera,
                            const RenderPlan& plan, const ImageD& color_grad,
                            const ImageD& depth_grad, bool parallel) {
  if (color_grad.height != plan.height || color_grad.width != plan.width ||
      color_grad.channels != 3)
    throw std::invalid_argument("render_backward: color gradient shape mismatch");
  if (depth_grad.height != plan.height || depth_grad.width != plan.width)
    throw std::invalid_argument("render_backward: depth gradient shape mismatch");

  const size_t slots = plan.splats.size() * kSlots;
  const int tiles = plan.tiles_x * plan.tiles_y;

  ParamGradients out(prims.size());
  if (plan.splats.empty()) return out;

  std::vector<double> acc(slots, 0.0);
  if (parallel && tiles > 0) {
    const int nthreads = thread_count();
    std::vector<std::vector<double>> buckets(nthreads);
#pragma omp parallel
    {
      const int tid = current_thread();
      buckets[tid].assign(slots, 0.0);
      std::vector<Contribution> stack;
#pragma omp for schedule(static)
      for (int tile = 0; tile < tiles; ++tile) {
        const auto& indices = plan.tile_splats[tile];
        if (indices.empty()) continue;
        const int tx = tile % plan.tiles_x, ty = tile / plan.tiles_x;
        const int x0 = tx * plan.tile_size, y0 = ty * plan.tile_size;
        const int x1 = std::min(plan.width, x0 + plan.tile_size);
        const int y1 = std::min(plan.height, y0 + plan.tile_size);
        for (int py = y0; py < y1; ++py)
          for (int px = x0; px < x1; ++px)
            backward_pixel(plan, indices, px, py, &color_grad.at(py, px, 0),
                           depth_grad.at(py, px), stack, buckets[tid].data());
      }
    }
    // Merge in thread order for run-to-run determinism.
    for (int t = 0; t < nthreads; ++t) {
      if (buckets[t].empty()) continue;
      for (size_t i = 0; i < slots; ++i) acc[i] += buckets[t][i];
    }
  } else {
    std::vector<Contribution> stack;
    for (int py = 0; py < plan.height; ++py)
      for (int px = 0; px < plan.width; ++px) {
        const int tile = (py / plan.tile_size) * plan.tiles_x + (px / plan.tile_size);
        backward_pixel(plan, plan.tile_splats[tile], px, py, &color_grad.at(py, px, 0),
                       depth_grad.at(py, px), stack, acc.data());
      }
  }

  chain_to_params(prims, camera, plan, acc, out);
  return out;
}

}  // namespace

ParamGradients render_backward(const GaussianPrimitives& prims, const Camera& camera,
                               const RenderPlan& plan, const ImageD& color_grad,
                               const ImageD& depth_grad) {
  return run_backward(prims, camera, plan, color_grad, depth_grad, true);
}

ParamGradients render_backward_serial(const GaussianPrimitives& prims, const Camera& camera,
                                      const RenderPlan& plan, const ImageD& color_grad,
                                      const ImageD& depth_grad) {
  return run_backward(prims, camera, plan, color_grad, depth_grad, false);
}

}  // namespace splatfuse
