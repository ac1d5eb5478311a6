#pragma once

#include <vector>

#include "splatfuse/core/image.hpp"
#include "splatfuse/gaussian_map.hpp"

namespace splatfuse {

struct Camera {
  Intrinsics intrinsics;
  Pose pose;
};

struct RenderedImage {
  ImageD color;  // h x w x 3
  ImageD depth;  // h x w, alpha-weighted sum, 0 where alpha < 1e-4
  ImageD alpha;  // h x w, accumulated alpha
};

struct SplatRecord {
  Vec2 mean;         // pixels
  Mat2 covariance;   // px^2, diagonal floor applied
  Mat2 conic;        // inverse covariance
  double depth = 0;  // camera-frame z
  double opacity = 0;
  Vec3 color = Vec3::Zero();
  double radius = 0;  // 3 * sqrt(max eigenvalue)
  int index = -1;     // position in the source primitive array
  // Integer footprint rectangle [x0,x1] x [y0,y1]. Pixel membership is
  // decided by this rectangle alone, so tiling never changes the blend.
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

// Culls Gaussians behind the near plane (z < 0.05) or whose center lies
// farther than `radius` outside the image.
std::vector<SplatRecord> prepare_splats(const GaussianPrimitives& prims, const Camera& camera);

// Frozen rasterization topology: depth-sorted visible splats (ties by source
// index) plus their per-splat bounding rectangles. Reusing a plan across a
// forward/backward pair keeps the blend a smooth function of the parameters.
struct RenderPlan {
  int height = 0, width = 0;
  int tile_size = 16;
  std::vector<SplatRecord> splats;              // sorted front to back
  std::vector<std::vector<int>> tile_splats;    // indices into `splats`
  int tiles_x = 0, tiles_y = 0;
};

RenderPlan make_render_plan(const GaussianPrimitives& prims, const Camera& camera,
                            int tile_size = 16);

// Re-evaluates splat quantities from current primitives under the plan's
// frozen visibility, order and footprints.
void refresh_plan_splats(RenderPlan& plan, const GaussianPrimitives& prims,
                         const Camera& camera);

RenderedImage render_with_plan(const RenderPlan& plan);

// Front-to-back alpha blending; effective alpha clamped to 0.99, blending
// stops once transmittance drops below 1e-4. tile_size in {8, 16, 32}.
RenderedImage render(const GaussianPrimitives& prims, const Camera& camera, int tile_size = 16);

// Serial per-pixel reference (no tiling); matches `render` bitwise.
RenderedImage render_reference(const GaussianPrimitives& prims, const Camera& camera);

constexpr double kAlphaClamp = 0.99;
constexpr double kTransmittanceFloor = 1e-4;
constexpr double kNearPlane = 0.05;

// ---- Image / depth quality metrics ----

// 10*log10(1/MSE) on [0,1] images; identical images report 99.0.
double psnr(const ImageD& a, const ImageD& b);

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, C1=0.01^2, C2=0.03^2,
// reflect padding, channels averaged.
double ssim(const ImageD& a, const ImageD& b);

// d(SSIM mean)/d(a), same shape as a. Used by the optional SSIM loss term.
ImageD ssim_gradient(const ImageD& a, const ImageD& b);

struct DepthMetrics {
  double abs_diff = 0;
  double abs_rel = 0;
  double delta_125 = 0;  // fraction with max(p/g, g/p) < 1.25
  double delta_110 = 0;
  size_t valid_pixels = 0;
};

// Computed over pixels where both maps are > 0; throws if none are.
DepthMetrics depth_metrics(const ImageD& pred, const ImageD& gt);

}  // namespace splatfuse
