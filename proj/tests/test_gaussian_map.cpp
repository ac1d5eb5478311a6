#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "splatfuse/gaussian_map.hpp"
#include "splatfuse/ptf.hpp"
#include "test_util.hpp"

using namespace splatfuse;
using namespace splatfuse::test;

namespace {

LiftCamera identity_camera(int w, int h, double focal) {
  LiftCamera cam;
  cam.intrinsics.fx = cam.intrinsics.fy = focal;
  cam.intrinsics.cx = w / 2.0;
  cam.intrinsics.cy = h / 2.0;
  cam.intrinsics.width = w;
  cam.intrinsics.height = h;
  cam.pose = Pose::identity();
  return cam;
}

GlobalTriplets globals_from(const LocalTriplets& local) {
  GlobalTriplets g;
  merge_unfused(g, local, {});
  return g;
}

}  // namespace

TEST_CASE("lift_view: 2x2 depth map at 1 m lifts 4 triplets on the rays") {
  const LiftCamera cam = identity_camera(2, 2, 10.0);
  ImageF image(2, 2, 3, 0.5f);
  DepthMap depth(2, 2, 1, 1.0f);
  ConfidenceMap conf(2, 2, 1, 0.8f);
  const LocalTriplets t = lift_view(0, image, cam, 1, depth, conf);
  REQUIRE(t.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    const Vec3 expected =
        unproject_pixel(cam.intrinsics, cam.pose, t.pixel_x[i], t.pixel_y[i], 1.0);
    CHECK((t.centers[i] - expected).norm() < 1e-12);
    CHECK(t.depths[i] == 1.0f);
    CHECK(t.weights[i] == doctest::Approx(0.8));
  }
}

TEST_CASE("lift_view: stride-2 count and invalid-pixel handling") {
  const LiftCamera full = identity_camera(4, 4, 10.0);
  const LiftCamera half = identity_camera(2, 2, 5.0);
  ImageF image(4, 4, 3, 0.5f);

  DepthMap d4(4, 4, 1, 2.0f);
  ConfidenceMap c4(4, 4, 1, 0.5f);
  CHECK(lift_view(0, image, full, 1, d4, c4).size() == 16);

  DepthMap d2(2, 2, 1, 2.0f);
  ConfidenceMap c2(2, 2, 1, 0.5f);
  CHECK(lift_view(0, image, half, 2, d2, c2).size() == 4);

  d2.at(0, 0) = 0.0f;  // invalid sentinel
  CHECK(lift_view(0, image, half, 2, d2, c2).size() == 3);

  DepthMap all_invalid(2, 2, 1, 0.0f);
  CHECK_THROWS(lift_view(0, image, half, 2, all_invalid, c2));
  CHECK_THROWS_AS(lift_view(0, image, full, 3, d4, c4), std::invalid_argument);
}

TEST_CASE("lift_view: centers reproject onto their own pixel centers") {
  std::mt19937_64 rng(3);
  const int w = 16, h = 12;
  LiftCamera cam = identity_camera(w, h, 14.0);
  cam.pose = random_pose(rng);
  ImageF image(h, w, 3, 0.3f);
  DepthMap depth(h, w, 1);
  ConfidenceMap conf(h, w, 1, 0.6f);
  std::uniform_real_distribution<float> ud(0.5f, 5.0f);
  for (float& d : depth.data) d = ud(rng);

  const LocalTriplets t = lift_view(0, image, cam, 2, depth, conf);
  REQUIRE(t.size() == static_cast<size_t>(w) * h);
  for (size_t i = 0; i < t.size(); ++i) {
    const PixelProjection p = project_point(cam.intrinsics, cam.pose, t.centers[i]);
    CHECK(std::abs(p.u - t.pixel_x[i]) < 1e-6);
    CHECK(std::abs(p.v - t.pixel_y[i]) < 1e-6);
    CHECK(std::abs(p.depth - t.depths[i]) < 1e-6);
  }
}

TEST_CASE("lift_view: feature layout carries color, opacity logit and confidence") {
  const LiftCamera cam = identity_camera(2, 2, 10.0);
  ImageF image(2, 2, 3);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = 0.25f * (y * 2 + x) + 0.05f * c;
  DepthMap depth(2, 2, 1, 1.5f);
  ConfidenceMap conf(2, 2, 1, 0.7f);
  const LocalTriplets t = lift_view(0, image, cam, 1, depth, conf);
  for (size_t i = 0; i < t.size(); ++i) {
    const FeatureVec& f = t.features[i];
    CHECK(f[TripletFeature::kLogScaleSeed] == 0.0);
    CHECK(f[TripletFeature::kOpacityLogit] == doctest::Approx(logit(0.9)));
    CHECK(f[TripletFeature::kConfidenceLogit] == doctest::Approx(logit(0.7)));
    const int y = t.pixel_y[i], x = t.pixel_x[i];
    for (int c = 0; c < 3; ++c)
      CHECK(f[TripletFeature::kColor + c] == doctest::Approx(image.at(y, x, c)));
    for (int c = 6; c < TripletFeature::kSize; ++c) CHECK(f[c] == 0.0);
  }
}

TEST_CASE("decode_gaussians: opacity saturation and WFR scaling") {
  GlobalTriplets g;
  g.centers = {Vec3(0, 0, 1), Vec3(0, 0, 2)};
  g.weights = {1.0, 1.0};
  g.opacity_scale = {1.0, 0.25};
  g.lift_depths = {1.0, 1.0};
  FeatureVec saturated{};
  saturated[TripletFeature::kOpacityLogit] = 50.0;  // clamped to +10
  FeatureVec neutral{};
  neutral[TripletFeature::kOpacityLogit] = 0.0;
  g.features = {saturated, neutral};

  const GaussianPrimitives prims = decode_gaussians(g, 1.5, 500.0);
  CHECK(prims.opacities[0] == doctest::Approx(sigmoid(10.0)).epsilon(1e-12));
  CHECK(prims.opacities[1] == doctest::Approx(0.125));
  CHECK(prims.opacities[0] < 1.0);
  CHECK(prims.opacities[0] > 0.9999);
}

TEST_CASE("decode_gaussians: isotropic scale formula") {
  GlobalTriplets g;
  g.centers = {Vec3::Zero()};
  g.weights = {1.0};
  g.opacity_scale = {1.0};
  g.lift_depths = {2.0};
  FeatureVec f{};
  g.features = {f};
  const GaussianPrimitives prims = decode_gaussians(g, 1.5, 500.0);
  // base_scale_px * depth / focal * exp(0) = 1.5 * 2 / 500
  CHECK(prims.scales[0].x() == doctest::Approx(0.006));
  CHECK(prims.scales[0].y() == doctest::Approx(0.006));
  CHECK(prims.scales[0].z() == doctest::Approx(0.006));
  CHECK(prims.rotations[0].w() == 1.0);

  // Clamp range.
  g.lift_depths = {1e-9};
  CHECK(decode_gaussians(g, 1.5, 500.0).scales[0].x() == doctest::Approx(1e-4));
  g.lift_depths = {1e9};
  CHECK(decode_gaussians(g, 1.5, 500.0).scales[0].x() == doctest::Approx(1.0));

  CHECK_THROWS(decode_gaussians(GlobalTriplets{}, 1.5, 500.0));
}

TEST_CASE("decode_gaussians: deterministic and bounded") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1), ud(0.2, 6.0), uw(0.1, 5.0), ub(0.01, 1.0);
  GlobalTriplets g;
  for (int i = 0; i < 200; ++i) {
    g.centers.push_back(Vec3(u(rng), u(rng), u(rng)));
    g.weights.push_back(uw(rng));
    g.opacity_scale.push_back(ub(rng));
    g.lift_depths.push_back(ud(rng));
    FeatureVec f{};
    f[TripletFeature::kLogScaleSeed] = u(rng);
    f[TripletFeature::kColor] = u(rng) + 0.5;
    f[TripletFeature::kColor + 1] = u(rng) + 0.5;
    f[TripletFeature::kColor + 2] = u(rng) + 0.5;
    f[TripletFeature::kOpacityLogit] = 20.0 * u(rng);
    g.features.push_back(f);
  }
  const GaussianPrimitives a = decode_gaussians(g, 1.5, 400.0);
  const GaussianPrimitives b = decode_gaussians(g, 1.5, 400.0);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.opacities[i] == b.opacities[i]);
    CHECK(a.scales[i] == b.scales[i]);
    CHECK(a.opacities[i] > 0.0);
    CHECK(a.opacities[i] < 1.0);
    CHECK(a.scales[i].x() >= 1e-4);
    CHECK(a.scales[i].x() <= 1.0);
    CHECK(a.colors[i].minCoeff() >= 0.0);
    CHECK(a.colors[i].maxCoeff() <= 1.0);
  }
}

TEST_CASE("merge_unfused: counts for empty global, no locals, and masks") {
  const LiftCamera cam = identity_camera(4, 4, 10.0);
  ImageF image(4, 4, 3, 0.5f);
  DepthMap depth(4, 4, 1, 1.0f);
  ConfidenceMap conf(4, 4, 1, 0.5f);
  const LocalTriplets local = lift_view(0, image, cam, 1, depth, conf);

  GlobalTriplets empty;
  merge_unfused(empty, local, {});
  CHECK(empty.size() == 16);
  for (const double b : empty.opacity_scale) CHECK(b == 1.0);

  GlobalTriplets g = globals_from(local);
  const size_t before = g.size();
  std::vector<uint8_t> all_fused(local.size(), 1);
  merge_unfused(g, local, all_fused);
  CHECK(g.size() == before);

  std::vector<uint8_t> half(local.size(), 0);
  for (size_t i = 0; i < half.size(); i += 2) half[i] = 1;
  merge_unfused(g, local, half);
  CHECK(g.size() == before + local.size() / 2);
}
