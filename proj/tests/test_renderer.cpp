#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "splatfuse/renderer.hpp"
#include "test_util.hpp"

using namespace splatfuse;
using namespace splatfuse::test;

namespace {

Camera centered_camera(int w, int h, double focal) {
  Camera cam;
  cam.intrinsics.fx = cam.intrinsics.fy = focal;
  cam.intrinsics.cx = w / 2;  // integer principal point: a pixel center
  cam.intrinsics.cy = h / 2;
  cam.intrinsics.width = w;
  cam.intrinsics.height = h;
  cam.pose = Pose::identity();
  return cam;
}

GaussianPrimitives one_gaussian(const Vec3& center, double scale, double opacity,
                                const Vec3& color) {
  GaussianPrimitives p;
  p.centers = {center};
  p.rotations = {Quat::Identity()};
  p.scales = {Vec3::Constant(scale)};
  p.opacities = {opacity};
  p.colors = {color};
  return p;
}

void append(GaussianPrimitives& p, const GaussianPrimitives& other) {
  p.centers.insert(p.centers.end(), other.centers.begin(), other.centers.end());
  p.rotations.insert(p.rotations.end(), other.rotations.begin(), other.rotations.end());
  p.scales.insert(p.scales.end(), other.scales.begin(), other.scales.end());
  p.opacities.insert(p.opacities.end(), other.opacities.begin(), other.opacities.end());
  p.colors.insert(p.colors.end(), other.colors.begin(), other.colors.end());
}

GaussianPrimitives random_scene(std::mt19937_64& rng, int count, double spread = 1.0) {
  std::uniform_real_distribution<double> uxy(-spread, spread), uz(0.5, 4.0), us(0.01, 0.25),
      uo(0.05, 0.95), uc(0.0, 1.0);
  GaussianPrimitives p;
  for (int i = 0; i < count; ++i) {
    p.centers.push_back(Vec3(uxy(rng), uxy(rng), uz(rng)));
    p.rotations.push_back(Quat(random_rotation(rng)));
    p.scales.push_back(Vec3(us(rng), us(rng), us(rng)));
    p.opacities.push_back(uo(rng));
    p.colors.push_back(Vec3(uc(rng), uc(rng), uc(rng)));
  }
  return p;
}

}  // namespace

TEST_CASE("prepare_splats: culling and the on-axis conic") {
  const Camera cam = centered_camera(64, 64, 100.0);

  CHECK(prepare_splats(one_gaussian(Vec3(0, 0, -1), 0.05, 0.5, Vec3(1, 0, 0)), cam).empty());
  CHECK(prepare_splats(one_gaussian(Vec3(0, 0, 0.01), 0.05, 0.5, Vec3(1, 0, 0)), cam).empty());
  CHECK(prepare_splats(GaussianPrimitives{}, cam).empty());

  // Far off-screen: culled by the radius test.
  CHECK(prepare_splats(one_gaussian(Vec3(50, 0, 1), 0.01, 0.5, Vec3(1, 0, 0)), cam).empty());

  const double sigma = 0.04, z = 2.0;
  const auto recs = prepare_splats(one_gaussian(Vec3(0, 0, z), sigma, 0.7, Vec3(1, 0, 0)), cam);
  REQUIRE(recs.size() == 1);
  const double var = 100.0 * 100.0 * sigma * sigma / (z * z) + 0.3;
  CHECK(recs[0].mean.x() == doctest::Approx(32.0));
  CHECK(recs[0].mean.y() == doctest::Approx(32.0));
  CHECK(recs[0].covariance(0, 0) == doctest::Approx(var));
  CHECK(recs[0].covariance(1, 1) == doctest::Approx(var));
  CHECK(std::abs(recs[0].covariance(0, 1)) < 1e-9);
  CHECK(recs[0].radius == doctest::Approx(3.0 * std::sqrt(var)));
  CHECK(recs[0].conic(0, 0) == doctest::Approx(1.0 / var));
}

TEST_CASE("render: single on-axis splat closed form") {
  const Camera cam = centered_camera(32, 32, 50.0);
  const double z = 2.0;
  const auto prims = one_gaussian(Vec3(0, 0, z), 0.05, 1.0, Vec3(1, 0, 0));
  const RenderedImage img = render(prims, cam, 16);
  // Center pixel: effective alpha clamps to 0.99.
  CHECK(img.color.at(16, 16, 0) == doctest::Approx(0.99).epsilon(1e-9));
  CHECK(img.color.at(16, 16, 1) == 0.0);
  CHECK(img.depth.at(16, 16) == doctest::Approx(0.99 * z).epsilon(1e-9));
  CHECK(img.alpha.at(16, 16) == doctest::Approx(0.99).epsilon(1e-9));
}

TEST_CASE("render: two-splat front-to-back arithmetic") {
  const Camera cam = centered_camera(32, 32, 50.0);
  GaussianPrimitives prims = one_gaussian(Vec3(0, 0, 1), 0.02, 0.5, Vec3(1, 0, 0));
  append(prims, one_gaussian(Vec3(0, 0, 2), 0.04, 0.5, Vec3(0, 0, 1)));
  const RenderedImage img = render(prims, cam, 16);
  CHECK(img.color.at(16, 16, 0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(img.color.at(16, 16, 2) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(img.depth.at(16, 16) == doctest::Approx(0.5 * 1 + 0.25 * 2).epsilon(1e-6));
  CHECK(img.alpha.at(16, 16) == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("render: empty scene gives black image, zero depth and alpha") {
  const Camera cam = centered_camera(16, 16, 20.0);
  const RenderedImage img = render(GaussianPrimitives{}, cam, 8);
  for (const double v : img.color.data) CHECK(v == 0.0);
  for (const double v : img.depth.data) CHECK(v == 0.0);
  for (const double v : img.alpha.data) CHECK(v == 0.0);
}

TEST_CASE("render: permutation invariance") {
  std::mt19937_64 rng(41);
  const Camera cam = centered_camera(48, 40, 60.0);
  GaussianPrimitives prims = random_scene(rng, 60);
  const RenderedImage base = render(prims, cam, 16);

  std::vector<size_t> perm(prims.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  GaussianPrimitives shuffled;
  for (const size_t i : perm) {
    shuffled.centers.push_back(prims.centers[i]);
    shuffled.rotations.push_back(prims.rotations[i]);
    shuffled.scales.push_back(prims.scales[i]);
    shuffled.opacities.push_back(prims.opacities[i]);
    shuffled.colors.push_back(prims.colors[i]);
  }
  const RenderedImage out = render(shuffled, cam, 16);
  for (size_t i = 0; i < base.color.data.size(); ++i)
    CHECK(std::abs(base.color.data[i] - out.color.data[i]) < 1e-6);
  for (size_t i = 0; i < base.depth.data.size(); ++i)
    CHECK(std::abs(base.depth.data[i] - out.depth.data[i]) < 1e-6);
}

TEST_CASE("render: tile sizes agree and match the serial reference bitwise") {
  std::mt19937_64 rng(43);
  const Camera cam = centered_camera(50, 38, 55.0);  // non-multiple of tile size
  const GaussianPrimitives prims = random_scene(rng, 80);

  const RenderedImage t8 = render(prims, cam, 8);
  const RenderedImage t16 = render(prims, cam, 16);
  const RenderedImage t32 = render(prims, cam, 32);
  const RenderedImage ref = render_reference(prims, cam);

  CHECK(t8.color.data == ref.color.data);
  CHECK(t16.color.data == ref.color.data);
  CHECK(t32.color.data == ref.color.data);
  CHECK(t8.depth.data == ref.depth.data);
  CHECK(t32.alpha.data == ref.alpha.data);

  CHECK_THROWS_AS(render(prims, cam, 7), std::invalid_argument);
}

TEST_CASE("render: accumulated alpha bounded by 1 on random scenes") {
  std::mt19937_64 rng(47);
  const Camera cam = centered_camera(32, 24, 30.0);
  for (int trial = 0; trial < 100; ++trial) {
    const GaussianPrimitives prims = random_scene(rng, 40);
    const RenderedImage img = render(prims, cam, 16);
    for (const double a : img.alpha.data) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("render: adding a zero-opacity gaussian changes nothing bitwise") {
  std::mt19937_64 rng(53);
  const Camera cam = centered_camera(40, 32, 40.0);
  GaussianPrimitives prims = random_scene(rng, 30);
  const RenderedImage base = render(prims, cam, 16);
  append(prims, one_gaussian(Vec3(0.1, 0.1, 1.5), 0.1, 0.0, Vec3(1, 1, 1)));
  const RenderedImage with_ghost = render(prims, cam, 16);
  CHECK(base.color.data == with_ghost.color.data);
  CHECK(base.depth.data == with_ghost.depth.data);
  CHECK(base.alpha.data == with_ghost.alpha.data);
}

TEST_CASE("render: dense wall depth accuracy at opaque pixels") {
  const Camera cam = centered_camera(64, 48, 70.0);
  GaussianPrimitives wall;
  const double z = 2.0;
  // Gaussians on a grid spaced ~1 px apart at depth 2.
  for (double y = -0.8; y <= 0.8; y += 0.028) {
    for (double x = -0.9; x <= 0.9; x += 0.028) {
      append(wall, one_gaussian(Vec3(x, y, z), 0.03, 0.9, Vec3(0.5, 0.5, 0.5)));
    }
  }
  const RenderedImage img = render(wall, cam, 16);
  size_t opaque = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      if (img.alpha.at(y, x) <= 0.99) continue;
      ++opaque;
      CHECK(std::abs(img.depth.at(y, x) - z) < 0.02);
    }
  CHECK(opaque > 500);
}

TEST_CASE("psnr: closed forms") {
  ImageD a(8, 8, 3, 0.0), b(8, 8, 3, 0.0);
  CHECK(psnr(a, a) == 99.0);
  for (double& v : b.data) v = 1.0;
  CHECK(psnr(a, b) == doctest::Approx(0.0));
  for (double& v : b.data) v = 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0));
  ImageD c(4, 4, 3, 0.0);
  CHECK_THROWS_AS(psnr(a, c), std::invalid_argument);
}

TEST_CASE("ssim: identical, anticorrelated, and constant-shift cases") {
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> u(0, 1);
  ImageD img(24, 24, 1);
  for (double& v : img.data) v = u(rng);
  CHECK(ssim(img, img) == doctest::Approx(1.0));

  // Negative of a 0.5-mean textured image: structure anticorrelates.
  ImageD neg(24, 24, 1);
  for (size_t i = 0; i < img.data.size(); ++i) neg.data[i] = 1.0 - img.data[i];
  CHECK(ssim(img, neg) < 0.0);

  // Constant vs constant: only the luminance term differs; direct formula.
  ImageD ca(16, 16, 1, 0.25), cb(16, 16, 1, 0.75);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double expected =
      ((2 * 0.25 * 0.75 + c1) * (0 + c2)) / ((0.25 * 0.25 + 0.75 * 0.75 + c1) * (0 + c2));
  CHECK(ssim(ca, cb) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("ssim_gradient matches finite differences") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  ImageD a(13, 14, 1), b(13, 14, 1);
  for (double& v : a.data) v = u(rng);
  for (double& v : b.data) v = u(rng);
  const ImageD grad = ssim_gradient(a, b);
  const double h = 1e-6;
  std::uniform_int_distribution<size_t> pick(0, a.data.size() - 1);
  for (int probe = 0; probe < 40; ++probe) {
    const size_t i = pick(rng);
    ImageD ap = a, am = a;
    ap.data[i] += h;
    am.data[i] -= h;
    const double fd = (ssim(ap, b) - ssim(am, b)) / (2 * h);
    // Absolute floor 1e-5: FD roundoff (~1e-10) dominates corner pixels whose
    // true gradient is orders of magnitude below the interior ~1e-3 scale.
    CHECK(rel_error(grad.data[i], fd, 1e-5) < 1e-4);
  }
}

TEST_CASE("depth_metrics: exactness, uniform scale, mixture") {
  ImageD gt(8, 8, 1, 2.0);
  CHECK(depth_metrics(gt, gt).abs_diff == 0.0);
  CHECK(depth_metrics(gt, gt).delta_110 == 1.0);

  ImageD scaled(8, 8, 1, 2.4);  // 1.2x
  const DepthMetrics m = depth_metrics(scaled, gt);
  CHECK(m.delta_125 == 1.0);
  CHECK(m.delta_110 == 0.0);
  CHECK(m.abs_rel == doctest::Approx(0.2));

  ImageD half(8, 8, 1, 2.0);
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 4; ++y) half.at(y, x) = 4.0;
  CHECK(depth_metrics(half, gt).delta_110 == doctest::Approx(0.5));

  // Invalid pixels are excluded; all-invalid throws.
  ImageD holes = gt;
  holes.at(0, 0) = 0.0;
  CHECK(depth_metrics(holes, gt).valid_pixels == 63);
  ImageD zeros(8, 8, 1, 0.0);
  CHECK_THROWS(depth_metrics(zeros, gt));
}
