#include "splatfuse/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace splatfuse {

std::vector<SplatRecord> prepare_splats(const GaussianPrimitives& prims, const Camera& camera) {
  std::vector<SplatRecord> out;
  out.reserve(prims.size());
  const Intrinsics& k = camera.intrinsics;
  for (size_t i = 0; i < prims.size(); ++i) {
    const Vec3 x_cam = camera.pose.apply(prims.centers[i]);
    if (x_cam.z() < kNearPlane) continue;

    SplatRecord rec;
    rec.index = static_cast<int>(i);
    rec.depth = x_cam.z();
    rec.mean = Vec2(k.fx * x_cam.x() / x_cam.z() + k.cx, k.fy * x_cam.y() / x_cam.z() + k.cy);

    Covariance3 cov;
    cov.q = prims.rotations[i];
    cov.scales = prims.scales[i];
    rec.covariance = project_covariance(cov.matrix(), camera.pose,
                                        perspective_jacobian(k, x_cam));
    const double a = rec.covariance(0, 0), b = rec.covariance(0, 1), c = rec.covariance(1, 1);
    const double mid = 0.5 * (a + c);
    const double disc = std::sqrt(std::max(0.0, mid * mid - (a * c - b * b)));
    rec.radius = 3.0 * std::sqrt(mid + disc);

    if (rec.mean.x() < -rec.radius || rec.mean.x() > k.width - 1 + rec.radius ||
        rec.mean.y() < -rec.radius || rec.mean.y() > k.height - 1 + rec.radius)
      continue;

    const double det = a * c - b * b;
    rec.conic << c / det, -b / det, -b / det, a / det;
    rec.opacity = prims.opacities[i];
    rec.color = prims.colors[i];
    rec.x0 = static_cast<int>(std::ceil(rec.mean.x() - rec.radius));
    rec.x1 = static_cast<int>(std::floor(rec.mean.x() + rec.radius));
    rec.y0 = static_cast<int>(std::ceil(rec.mean.y() - rec.radius));
    rec.y1 = static_cast<int>(std::floor(rec.mean.y() + rec.radius));
    out.push_back(rec);
  }
  return out;
}

RenderPlan make_render_plan(const GaussianPrimitives& prims, const Camera& camera,
                            int tile_size) {
  if (tile_size != 8 && tile_size != 16 && tile_size != 32)
    throw std::invalid_argument("make_render_plan: tile_size must be 8, 16 or 32");
  RenderPlan plan;
  plan.height = camera.intrinsics.height;
  plan.width = camera.intrinsics.width;
  plan.tile_size = tile_size;
  plan.splats = prepare_splats(prims, camera);
  std::sort(plan.splats.begin(), plan.splats.end(), [](const SplatRecord& a, const SplatRecord& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index < b.index;
  });

  plan.tiles_x = (plan.width + tile_size - 1) / tile_size;
  plan.tiles_y = (plan.height + tile_size - 1) / tile_size;
  plan.tile_splats.assign(static_cast<size_t>(plan.tiles_x) * plan.tiles_y, {});
  for (size_t s = 0; s < plan.splats.size(); ++s) {
    const SplatRecord& rec = plan.splats[s];
    const int x0 = std::max(0, rec.x0);
    const int x1 = std::min(plan.width - 1, rec.x1);
    const int y0 = std::max(0, rec.y0);
    const int y1 = std::min(plan.height - 1, rec.y1);
    if (x1 < x0 || y1 < y0) continue;
    for (int ty = y0 / tile_size; ty <= y1 / tile_size; ++ty)
      for (int tx = x0 / tile_size; tx <= x1 / tile_size; ++tx)
        plan.tile_splats[static_cast<size_t>(ty) * plan.tiles_x + tx].push_back(
            static_cast<int>(s));
  }
  return plan;
}

void refresh_plan_splats(RenderPlan& plan, const GaussianPrimitives& prims,
                         const Camera& camera) {
  // Visibility, order and footprints stay frozen; only the per-splat
  // quantities are recomputed from the current parameters.
  const Intrinsics& k = camera.intrinsics;
  for (SplatRecord& rec : plan.splats) {
    const Vec3 x_cam = camera.pose.apply(prims.centers[rec.index]);
    rec.depth = x_cam.z();
    rec.mean = Vec2(k.fx * x_cam.x() / x_cam.z() + k.cx, k.fy * x_cam.y() / x_cam.z() + k.cy);
    Covariance3 cov;
    cov.q = prims.rotations[rec.index];
    cov.scales = prims.scales[rec.index];
    rec.covariance = project_covariance(cov.matrix(), camera.pose,
                                        perspective_jacobian(k, x_cam));
    const double a = rec.covariance(0, 0), b = rec.covariance(0, 1), c = rec.covariance(1, 1);
    const double det = a * c - b * b;
    rec.conic << c / det, -b / det, -b / det, a / det;
    rec.opacity = prims.opacities[rec.index];
    rec.color = prims.colors[rec.index];
  }
}

namespace {

inline bool in_footprint(const SplatRecord& rec, int px, int py) {
  return px >= rec.x0 && px <= rec.x1 && py >= rec.y0 && py <= rec.y1;
}

template <typename SplatIndexRange>
void blend_pixel(const RenderPlan& plan, const SplatIndexRange& indices, int px, int py,
                 double* color, double* depth, double* alpha) {
  double t = 1.0;
  double c0 = 0, c1 = 0, c2 = 0, d = 0, acc = 0;
  for (const int si : indices) {
    const SplatRecord& rec = plan.splats[si];
    if (!in_footprint(rec, px, py)) continue;
    const double dx = px - rec.mean.x();
    const double dy = py - rec.mean.y();
    const double maha =
        rec.conic(0, 0) * dx * dx + 2.0 * rec.conic(0, 1) * dx * dy + rec.conic(1, 1) * dy * dy;
    const double a = std::min(rec.opacity * std::exp(-0.5 * maha), kAlphaClamp);
    if (a <= 0) continue;
    const double w = a * t;
    c0 += rec.color.x() * w;
    c1 += rec.color.y() * w;
    c2 += rec.color.z() * w;
    d += rec.depth * w;
    acc += w;
    t *= 1.0 - a;
    if (t < kTransmittanceFloor) break;
  }
  color[0] = c0;
  color[1] = c1;
  color[2] = c2;
  *depth = acc < 1e-4 ? 0.0 : d;
  *alpha = acc;
}

}  // namespace

RenderedImage render_with_plan(const RenderPlan& plan) {
  RenderedImage out;
  out.color = ImageD(plan.height, plan.width, 3);
  out.depth = ImageD(plan.height, plan.width, 1);
  out.alpha = ImageD(plan.height, plan.width, 1);

  const int tiles = plan.tiles_x * plan.tiles_y;
#pragma omp parallel for schedule(static)
  for (int tile = 0; tile < tiles; ++tile) {
    const auto& indices = plan.tile_splats[tile];
    const int tx = tile % plan.tiles_x, ty = tile / plan.tiles_x;
    const int x0 = tx * plan.tile_size, y0 = ty * plan.tile_size;
    const int x1 = std::min(plan.width, x0 + plan.tile_size);
    const int y1 = std::min(plan.height, y0 + plan.tile_size);
    for (int py = y0; py < y1; ++py)
      for (int px = x0; px < x1; ++px)
        blend_pixel(plan, indices, px, py, &out.color.at(py, px, 0), &out.depth.at(py, px),
                    &out.alpha.at(py, px));
  }
  return out;
}

RenderedImage render(const GaussianPrimitives& prims, const Camera& camera, int tile_size) {
  return render_with_plan(make_render_plan(prims, camera, tile_size));
}

RenderedImage render_reference(const GaussianPrimitives& prims, const Camera& camera) {
  RenderPlan plan;
  plan.height = camera.intrinsics.height;
  plan.width = camera.intrinsics.width;
  plan.splats = prepare_splats(prims, camera);
  std::sort(plan.splats.begin(), plan.splats.end(), [](const SplatRecord& a, const SplatRecord& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index < b.index;
  });
  std::vector<int> all(plan.splats.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  RenderedImage out;
  out.color = ImageD(plan.height, plan.width, 3);
  out.depth = ImageD(plan.height, plan.width, 1);
  out.alpha = ImageD(plan.height, plan.width, 1);
  for (int py = 0; py < plan.height; ++py)
    for (int px = 0; px < plan.width; ++px)
      blend_pixel(plan, all, px, py, &out.color.at(py, px, 0), &out.depth.at(py, px),
                  &out.alpha.at(py, px));
  return out;
}

// ---- Metrics ----

double psnr(const ImageD& a, const ImageD& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

const std::array<double, kSsimWindow>& ssim_kernel() {
  static const std::array<double, kSsimWindow> k = [] {
    std::array<double, kSsimWindow> w{};
    double sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - kSsimWindow / 2;
      w[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
      sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
  }();
  return k;
}

struct SsimStats {
  double mu_a, mu_b, var_a, var_b, cov;
};

// Windowed statistics at a valid center (full window inside the image).
SsimStats window_stats(const ImageD& a, const ImageD& b, int cy, int cx, int ch) {
  const auto& w = ssim_kernel();
  const int r = kSsimWindow / 2;
  double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
  for (int j = -r; j <= r; ++j)
    for (int i = -r; i <= r; ++i) {
      const double wij = w[j + r] * w[i + r];
      const double va = a.at(cy + j, cx + i, ch);
      const double vb = b.at(cy + j, cx + i, ch);
      ma += wij * va;
      mb += wij * vb;
      saa += wij * va * va;
      sbb += wij * vb * vb;
      sab += wij * va * vb;
    }
  return {ma, mb, saa - ma * ma, sbb - mb * mb, sab - ma * mb};
}

}  // namespace

double ssim(const ImageD& a, const ImageD& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  const int r = kSsimWindow / 2;
  if (a.height < kSsimWindow || a.width < kSsimWindow)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  double total = 0;
  size_t count = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = r; y < a.height - r; ++y)
      for (int x = r; x < a.width - r; ++x) {
        const SsimStats s = window_stats(a, b, y, x, c);
        const double n = (2 * s.mu_a * s.mu_b + kSsimC1) * (2 * s.cov + kSsimC2);
        const double d = (s.mu_a * s.mu_a + s.mu_b * s.mu_b + kSsimC1) * (s.var_a + s.var_b + kSsimC2);
        total += n / d;
        ++count;
      }
  return total / count;
}

ImageD ssim_gradient(const ImageD& a, const ImageD& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim_gradient: shape mismatch");
  const auto& w = ssim_kernel();
  const int r = kSsimWindow / 2;
  ImageD grad(a.height, a.width, a.channels);
  const size_t windows_per_channel =
      static_cast<size_t>(a.height - 2 * r) * (a.width - 2 * r);
  const double inv_n = 1.0 / (windows_per_channel * a.channels);
  for (int c = 0; c < a.channels; ++c) {
    for (int cy = r; cy < a.height - r; ++cy) {
      for (int cx = r; cx < a.width - r; ++cx) {
        const SsimStats s = window_stats(a, b, cy, cx, c);
        const double a1 = 2 * s.mu_a * s.mu_b + kSsimC1;
        const double a2 = 2 * s.cov + kSsimC2;
        const double b1 = s.mu_a * s.mu_a + s.mu_b * s.mu_b + kSsimC1;
        const double b2 = s.var_a + s.var_b + kSsimC2;
        const double val = (a1 * a2) / (b1 * b2);
        // d ssim / d a(q) = w * (P + Q*a(q) + R*b(q)) over the window.
        const double p = 2 * s.mu_b * (a2 - a1) / (b1 * b2) +
                         2 * val * s.mu_a * (1.0 / b2 - 1.0 / b1);
        const double q = -2 * val / b2;
        const double rr = 2 * a1 / (b1 * b2);
        for (int j = -r; j <= r; ++j)
          for (int i = -r; i <= r; ++i) {
            const double wij = w[j + r] * w[i + r];
            const double va = a.at(cy + j, cx + i, c);
            const double vb = b.at(cy + j, cx + i, c);
            grad.at(cy + j, cx + i, c) += inv_n * wij * (p + q * va + rr * vb);
          }
      }
    }
  }
  return grad;
}

DepthMetrics depth_metrics(const ImageD& pred, const ImageD& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("depth_metrics: shape mismatch");
  DepthMetrics m;
  double abs_diff = 0, abs_rel = 0;
  size_t d125 = 0, d110 = 0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double p = pred.data[i], g = gt.data[i];
    if (!(p > 0) || !(g > 0)) continue;
    ++m.valid_pixels;
    abs_diff += std::abs(p - g);
    abs_rel += std::abs(p - g) / g;
    const double ratio = std::max(p / g, g / p);
    if (ratio < 1.25) ++d125;
    if (ratio < 1.1) ++d110;
  }
  if (m.valid_pixels == 0) throw std::runtime_error("depth_metrics: no jointly valid pixels");
  m.abs_diff = abs_diff / m.valid_pixels;
  m.abs_rel = abs_rel / m.valid_pixels;
  m.delta_125 = static_cast<double>(d125) / m.valid_pixels;
  m.delta_110 = static_cast<double>(d110) / m.valid_pixels;
  return m;
}

}  // namespace splatfuse
