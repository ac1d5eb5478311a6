// Kernel benchmark: OpenMP-parallel paths against their serial references.
//
//   bench_kernels [--threads N]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>

#include "splatfuse/core/parallel.hpp"
#include "splatfuse/matching.hpp"
#include "splatfuse/renderer.hpp"
#include "splatfuse/renderer_backward.hpp"
#include "splatfuse/synthetic.hpp"

using namespace splatfuse;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename F>
double time_best_of(F&& fn, int repeats = 3) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    const double t0 = now_seconds();
    fn();
    best = std::min(best, now_seconds() - t0);
  }
  return best;
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %.2fx\n", name,
              serial * 1e3, parallel * 1e3, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc - 1; ++i)
    if (std::strcmp(argv[i], "--threads") == 0) set_thread_count(std::atoi(argv[i + 1]));
  std::printf("threads: %d\n\n", thread_count());

  // Scene shared by all benchmarks: textured room, two nearby views.
  SyntheticScene scene;
  scene.box_min = Vec3(-3, -2, -1);
  scene.box_max = Vec3(3, 2, 4);
  scene.seed = 11;
  scene.intrinsics = {420.0, 420.0, 255.6, 192.3, 512, 384};
  Pose a = Pose::identity(), b = Pose::identity();
  b.translation = Vec3(-0.12, 0, 0);
  scene.poses = {a, b};
  const SyntheticFrames frames = generate_synthetic(scene);

  // Plane-sweep cost volume at quarter resolution, 64 planes.
  const FeatureMap ref = compute_matching_features(frames.frames[0].image);
  const FeatureMap src = compute_matching_features(frames.frames[1].image);
  const Intrinsics quarter = scene.intrinsics.strided(4);
  const std::vector<NeighborView> neighbors = {{&src, compose_transform(a, b)}};
  const auto planes = make_depth_planes(0.25, 8.0, 64, PlaneSpacing::InverseDepth);

  CostVolume cv;
  const double cv_serial = time_best_of(
      [&] { cv = build_cost_volume_serial(ref, neighbors, quarter, planes); });
  const double cv_parallel =
      time_best_of([&] { cv = build_cost_volume(ref, neighbors, quarter, planes); });
  report("cost volume (64 planes)", cv_serial, cv_parallel);

  // Splat rendering of a dense wall scene.
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> uc(0.1, 0.9);
  GaussianPrimitives prims;
  for (double y = -1.6; y <= 1.6; y += 0.03) {
    for (double x = -2.4; x <= 2.4; x += 0.03) {
      prims.centers.push_back(Vec3(x, y, 3.6 + 0.2 * std::sin(3 * x) * std::cos(2 * y)));
      prims.rotations.push_back(Quat::Identity());
      prims.scales.push_back(Vec3::Constant(0.025));
      prims.opacities.push_back(0.85);
      prims.colors.push_back(Vec3(uc(rng), uc(rng), uc(rng)));
    }
  }
  Camera cam{scene.intrinsics, a};
  std::printf("scene: %zu gaussians at %dx%d\n", prims.size(), cam.intrinsics.width,
              cam.intrinsics.height);

  // The untiled reference is the semantic oracle (bitwise-equal output); the
  // threading comparison runs the tiled kernel at 1 vs N threads.
  RenderedImage img;
  const int nthreads = thread_count();
  const double render_reference_time =
      time_best_of([&] { img = render_reference(prims, cam); }, 1);
  set_thread_count(1);
  const double render_1t = time_best_of([&] { img = render(prims, cam, 16); });
  set_thread_count(nthreads);
  const double render_nt = time_best_of([&] { img = render(prims, cam, 16); });
  std::printf("%-28s %8.3f ms (untiled oracle)\n", "forward render (reference)",
              render_reference_time * 1e3);
  report("forward render (tiled)", render_1t, render_nt);

  // Backward pass with random upstream gradients.
  RenderPlan plan = make_render_plan(prims, cam, 16);
  ImageD up_color(cam.intrinsics.height, cam.intrinsics.width, 3);
  ImageD up_depth(cam.intrinsics.height, cam.intrinsics.width, 1);
  std::uniform_real_distribution<double> ug(-1, 1);
  for (double& v : up_color.data) v = ug(rng);
  for (double& v : up_depth.data) v = ug(rng);

  ParamGradients grads;
  const double bwd_serial = time_best_of(
      [&] { grads = render_backward_serial(prims, cam, plan, up_color, up_depth); });
  const double bwd_parallel =
      time_best_of([&] { grads = render_backward(prims, cam, plan, up_color, up_depth); });
  report("backward pass", bwd_serial, bwd_parallel);

  return 0;
}
