#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "splatfuse/finetune.hpp"
#include "splatfuse/renderer_backward.hpp"
#include "test_util.hpp"

using namespace splatfuse;
using namespace splatfuse::test;

namespace {

Camera small_camera(int w = 16, int h = 16, double focal = 20.0) {
  Camera cam;
  cam.intrinsics.fx = focal;
  cam.intrinsics.fy = focal * 1.02;
  cam.intrinsics.cx = w / 2.0 - 0.15;
  cam.intrinsics.cy = h / 2.0 + 0.1;
  cam.intrinsics.width = w;
  cam.intrinsics.height = h;
  cam.pose = Pose::identity();
  return cam;
}

// Gradcheck scenes stay inside the smooth region: opacities below the 0.99
// clamp, transmittance above the termination floor, footprints frozen by the
// shared plan.
GaussianPrimitives gradcheck_scene(std::mt19937_64& rng, int count = 5) {
  std::uniform_real_distribution<double> uxy(-0.45, 0.45), uz(1.0, 3.0), us(0.04, 0.18),
      uo(0.1, 0.7), uc(0.1, 0.9);
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

double plan_loss(const GaussianPrimitives& prims, const Camera& cam, RenderPlan& plan,
                 const ImageD& up_color, const ImageD& up_depth) {
  refresh_plan_splats(plan, prims, cam);
  const RenderedImage img = render_with_plan(plan);
  double loss = 0;
  for (size_t i = 0; i < img.color.data.size(); ++i) loss += up_color.data[i] * img.color.data[i];
  for (size_t i = 0; i < img.depth.data.size(); ++i) loss += up_depth.data[i] * img.depth.data[i];
  return loss;
}

}  // namespace

TEST_CASE("render_backward: single-gaussian color gradient equals effective alpha") {
  const Camera cam = small_camera();
  GaussianPrimitives prims;
  prims.centers = {Vec3(0, 0, 2)};
  prims.rotations = {Quat::Identity()};
  prims.scales = {Vec3::Constant(0.15)};
  prims.opacities = {0.6};
  prims.colors = {Vec3(0.3, 0.5, 0.7)};

  RenderPlan plan = make_render_plan(prims, cam, 16);
  const RenderedImage img = render_with_plan(plan);

  // Loss = red channel of the pixel nearest the splat center.
  const int px = static_cast<int>(round_half_up(plan.splats[0].mean.x()));
  const int py = static_cast<int>(round_half_up(plan.splats[0].mean.y()));
  ImageD up_color(16, 16, 3, 0.0), up_depth(16, 16, 1, 0.0);
  up_color.at(py, px, 0) = 1.0;

  const ParamGradients grads = render_backward(prims, cam, plan, up_color, up_depth);
  const double dx = px - plan.splats[0].mean.x();
  const double dy = py - plan.splats[0].mean.y();
  const double maha = plan.splats[0].conic(0, 0) * dx * dx +
                      2 * plan.splats[0].conic(0, 1) * dx * dy +
                      plan.splats[0].conic(1, 1) * dy * dy;
  const double a = 0.6 * std::exp(-0.5 * maha);
  CHECK(grads.colors[0].x() == doctest::Approx(a).epsilon(1e-12));
  CHECK(grads.colors[0].y() == 0.0);
  CHECK(grads.colors[0].z() == 0.0);
  (void)img;
}

TEST_CASE("render_backward: zero upstream gradients give zero parameter gradients") {
  std::mt19937_64 rng(71);
  const Camera cam = small_camera();
  const GaussianPrimitives prims = gradcheck_scene(rng);
  RenderPlan plan = make_render_plan(prims, cam, 16);
  ImageD zc(16, 16, 3, 0.0), zd(16, 16, 1, 0.0);
  const ParamGradients grads = render_backward(prims, cam, plan, zc, zd);
  for (size_t i = 0; i < prims.size(); ++i) {
    CHECK(grads.centers[i].norm() == 0.0);
    CHECK(grads.log_scales[i].norm() == 0.0);
    CHECK(grads.opacity_logits[i] == 0.0);
    CHECK(grads.colors[i].norm() == 0.0);
  }
}

TEST_CASE("render_backward: all parameter gradients match central finite differences") {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> ug(-1.0, 1.0);
  const Camera cam = small_camera();
  const double h = 1e-4;

  for (int scene_i = 0; scene_i < 20; ++scene_i) {
    GaussianPrimitives prims = gradcheck_scene(rng);
    RenderPlan plan = make_render_plan(prims, cam, 16);
    if (plan.splats.empty()) continue;

    ImageD up_color(16, 16, 3), up_depth(16, 16, 1);
    for (double& v : up_color.data) v = ug(rng);
    for (double& v : up_depth.data) v = ug(rng);
    // Keep the depth-channel loss away from the alpha floor that zeroes the
    // rendered depth: probing across that step would not be differentiable.
    const RenderedImage base = render_with_plan(plan);
    for (size_t i = 0; i < up_depth.data.size(); ++i)
      if (base.alpha.data[i] < 1e-2) up_depth.data[i] = 0.0;

    const ParamGradients grads = render_backward(prims, cam, plan, up_color, up_depth);

    for (size_t i = 0; i < prims.size(); ++i) {
      for (int c = 0; c < 3; ++c) {
        // centers
        {
          GaussianPrimitives p = prims;
          p.centers[i][c] += h;
          const double fp = plan_loss(p, cam, plan, up_color, up_depth);
          p.centers[i][c] -= 2 * h;
          const double fm = plan_loss(p, cam, plan, up_color, up_depth);
          CHECK(rel_error(grads.centers[i][c], (fp - fm) / (2 * h), 1e-8) < 1e-3);
        }
        // log-scales
        {
          GaussianPrimitives p = prims;
          p.scales[i][c] = std::exp(std::log(prims.scales[i][c]) + h);
          const double fp = plan_loss(p, cam, plan, up_color, up_depth);
          p.scales[i][c] = std::exp(std::log(prims.scales[i][c]) - h);
          const double fm = plan_loss(p, cam, plan, up_color, up_depth);
          CHECK(rel_error(grads.log_scales[i][c], (fp - fm) / (2 * h), 1e-8) < 1e-3);
        }
        // colors
        {
          GaussianPrimitives p = prims;
          p.colors[i][c] += h;
          const double fp = plan_loss(p, cam, plan, up_color, up_depth);
          p.colors[i][c] -= 2 * h;
          const double fm = plan_loss(p, cam, plan, up_color, up_depth);
          CHECK(rel_error(grads.colors[i][c], (fp - fm) / (2 * h), 1e-8) < 1e-3);
        }
      }
      // opacity logit
      {
        GaussianPrimitives p = prims;
        const double o = logit(prims.opacities[i]);
        p.opacities[i] = sigmoid(o + h);
        const double fp = plan_loss(p, cam, plan, up_color, up_depth);
        p.opacities[i] = sigmoid(o - h);
        const double fm = plan_loss(p, cam, plan, up_color, up_depth);
        CHECK(rel_error(grads.opacity_logits[i], (fp - fm) / (2 * h), 1e-8) < 1e-3);
      }
    }
    // Restore the plan to base parameters for the next scene's sanity.
    refresh_plan_splats(plan, prims, cam);
  }
}

TEST_CASE("render_backward: parallel and serial agree") {
  std::mt19937_64 rng(79);
  const Camera cam = small_camera(32, 24, 30.0);
  const GaussianPrimitives prims = gradcheck_scene(rng, 40);
  RenderPlan plan = make_render_plan(prims, cam, 8);
  ImageD up_color(24, 32, 3), up_depth(24, 32, 1);
  std::uniform_real_distribution<double> ug(-1, 1);
  for (double& v : up_color.data) v = ug(rng);
  for (double& v : up_depth.data) v = ug(rng);

  const ParamGradients a = render_backward(prims, cam, plan, up_color, up_depth);
  const ParamGradients b = render_backward_serial(prims, cam, plan, up_color, up_depth);
  for (size_t i = 0; i < prims.size(); ++i) {
    CHECK((a.centers[i] - b.centers[i]).norm() < 1e-10);
    CHECK((a.log_scales[i] - b.log_scales[i]).norm() < 1e-10);
    CHECK(std::abs(a.opacity_logits[i] - b.opacity_logits[i]) < 1e-10);
    CHECK((a.colors[i] - b.colors[i]).norm() < 1e-10);
  }
}

TEST_CASE("loss_rft: closed-form values and gradient structure") {
  RenderedImage rendered;
  rendered.color = ImageD(8, 8, 3, 0.5);
  rendered.depth = ImageD(8, 8, 1, 2.0);
  rendered.alpha = ImageD(8, 8, 1, 1.0);
  ImageD gt(8, 8, 3, 0.5);
  ImageD anchor(8, 8, 1, 2.0);

  const LossResult zero = loss_rft(rendered, gt, anchor, 0.2, 0.1, false);
  CHECK(zero.loss.total == 0.0);

  // Uniform color error 0.1 with lambda1 = 0 and zero depth error.
  for (double& v : rendered.color.data) v = 0.6;
  const LossResult color_only = loss_rft(rendered, gt, anchor, 0.0, 0.1, false);
  CHECK(color_only.loss.total == doctest::Approx(0.1));
  CHECK(color_only.color_grad.at(3, 3, 0) ==
        doctest::Approx(1.0 / (8 * 8 * 3)));

  // Zero color error, uniform depth error 0.5 m, lambda2 = 0.1.
  for (double& v : rendered.color.data) v = 0.5;
  for (double& v : rendered.depth.data) v = 2.5;
  const LossResult depth_only = loss_rft(rendered, gt, anchor, 0.0, 0.1, false);
  CHECK(depth_only.loss.total == doctest::Approx(0.05));
  CHECK(depth_only.depth_grad.at(3, 3) == doctest::Approx(0.1 / 64));

  // lambda1 scales the color term down.
  for (double& v : rendered.color.data) v = 0.6;
  for (double& v : rendered.depth.data) v = 2.0;
  const LossResult mixed = loss_rft(rendered, gt, anchor, 0.2, 0.1, false);
  CHECK(mixed.loss.total == doctest::Approx(0.8 * 0.1));

  CHECK_THROWS_AS(loss_rft(rendered, gt, anchor, 1.0, 0.1, false), std::invalid_argument);
  CHECK_THROWS_AS(loss_rft(rendered, gt, anchor, 0.2, -0.1, false), std::invalid_argument);
  ImageD bad(4, 4, 3, 0.0);
  CHECK_THROWS_AS(loss_rft(rendered, bad, anchor, 0.2, 0.1, false), std::invalid_argument);
}

namespace {

// Shared fixture for the recovery experiments: a wall of Gaussians renders
// the ground truth; a color-perturbed copy is the optimization start.
struct RecoveryFixture {
  GaussianPrimitives truth, perturbed;
  std::vector<TrainingView> views;
  AnchorDepths anchors;

  RecoveryFixture() {
    std::mt19937_64 rng(83);
    std::uniform_real_distribution<double> uc(0.15, 0.85), un(-0.22, 0.22);
    for (double y = -0.75; y <= 0.75; y += 0.05) {
      for (double x = -1.0; x <= 1.0; x += 0.05) {
        truth.centers.push_back(Vec3(x, y, 2.0 + 0.1 * std::sin(5 * x) * std::cos(4 * y)));
        truth.rotations.push_back(Quat::Identity());
        truth.scales.push_back(Vec3::Constant(0.035));
        truth.opacities.push_back(0.92);
        truth.colors.push_back(Vec3(uc(rng), uc(rng), uc(rng)));
      }
    }
    for (int v = 0; v < 3; ++v) {
      Camera cam = small_camera(64, 48, 55.0);
      cam.pose.translation = Vec3(-0.25 + 0.25 * v, 0.05 * v, 0);
      views.push_back({cam, render(truth, cam, 16).color});
    }
    perturbed = truth;
    for (Vec3& c : perturbed.colors) {
      c += Vec3(un(rng), un(rng), un(rng));
      c = c.cwiseMax(0.02).cwiseMin(0.98);
    }
    anchors = make_anchor_depths(perturbed, views);
  }

  double mean_psnr(const GaussianPrimitives& prims) const {
    double sum = 0;
    for (const TrainingView& view : views)
      sum += psnr(render(prims, view.camera, 16).color, view.image);
    return sum / views.size();
  }

  double anchor_l1(const GaussianPrimitives& prims) const {
    double sum = 0;
    size_t n = 0;
    for (size_t v = 0; v < views.size(); ++v) {
      const ImageD d = render(prims, views[v].camera, 16).depth;
      for (size_t i = 0; i < d.data.size(); ++i) sum += std::abs(d.data[i] - anchors.depths[v].data[i]);
      n += d.data.size();
    }
    return sum / n;
  }
};

}  // namespace

TEST_CASE("run_finetune: zero iterations returns the scene unchanged") {
  RecoveryFixture fx;
  FinetuneConfig config;
  config.iterations = 0;
  const GaussianPrimitives out = run_finetune(fx.perturbed, fx.views, fx.anchors, config);
  CHECK(out.centers == fx.perturbed.centers);
  CHECK(out.opacities == fx.perturbed.opacities);
  CHECK(out.colors == fx.perturbed.colors);
  CHECK(out.scales == fx.perturbed.scales);
}

TEST_CASE("run_finetune: recovers a color perturbation by >= 3 dB in 200 iterations") {
  RecoveryFixture fx;
  const double before = fx.mean_psnr(fx.perturbed);

  FinetuneConfig config;
  config.iterations = 200;
  std::vector<LossBreakdown> trace;
  const std::vector<ImageD> anchors_before = fx.anchors.depths;
  const GaussianPrimitives tuned = run_finetune(fx.perturbed, fx.views, fx.anchors, config, &trace);
  const double after = fx.mean_psnr(tuned);
  CHECK(after - before >= 3.0);

  // Anchors are immutable.
  REQUIRE(fx.anchors.depths.size() == anchors_before.size());
  for (size_t i = 0; i < anchors_before.size(); ++i)
    CHECK(fx.anchors.depths[i].data == anchors_before[i].data);

  // Loss trace: non-increasing under a 20-step moving average.
  REQUIRE(trace.size() == 200);
  double prev_avg = 1e300;
  for (size_t start = 0; start + 20 <= trace.size(); start += 20) {
    double avg = 0;
    for (size_t i = start; i < start + 20; ++i) avg += trace[i].total;
    avg /= 20;
    CHECK(avg <= prev_avg);
    prev_avg = avg;
  }
}

TEST_CASE("run_finetune: larger lambda2 anchors the depth tighter") {
  RecoveryFixture fx;
  double prev = 1e300;
  for (const double lambda2 : {0.0, 0.1, 1.0}) {
    FinetuneConfig config;
    config.iterations = 120;
    config.lambda2 = lambda2;
    const GaussianPrimitives tuned = run_finetune(fx.perturbed, fx.views, fx.anchors, config);
    const double l1 = fx.anchor_l1(tuned);
    CHECK(l1 <= prev + 1e-12);
    prev = l1;
  }
}

TEST_CASE("run_finetune: divergence guard trips on an absurd learning rate") {
  RecoveryFixture fx;
  FinetuneConfig config;
  config.iterations = 200;
  config.lr_color = 50.0;
  config.lr_position = 10.0;
  CHECK_THROWS_AS(run_finetune(fx.perturbed, fx.views, fx.anchors, config), FinetuneDivergence);
}
