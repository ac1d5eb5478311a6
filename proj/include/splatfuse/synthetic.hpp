#pragma once

#include <cstdint>
#include <vector>

#include "splatfuse/scene_io.hpp"

namespace splatfuse {

// Depth-noise phantom: a sphere injected into the depth maps (and optionally
// the color images) of the listed views. Views not listed see the clean room,
// which is what makes the sphere a multi-view-inconsistent floater.
//
// With depth_offset == 0 the ray reports the sphere surface (a foreground
// floater). With depth_offset > 0, rays through the sphere report the clean
// surface depth plus the offset instead (a "pit": depth noise behind the
// true surface).
struct FloaterSpec {
  Vec3 center = Vec3::Zero();
  double radius = 0.2;
  Vec3 color = Vec3(0.85, 0.25, 0.2);
  bool paint_color = false;         // also draw the sphere into the color image
  std::vector<int> view_ids;        // empty = all views
  double depth_offset = 0.0;
};

// Analytic room: the interior of an axis-aligned box with procedurally
// textured walls (checker + multi-octave value noise), ray-traced color and
// exact depth per frame. Deterministic for a fixed seed.
struct SyntheticScene {
  Vec3 box_min = Vec3(-3, -2, -1);
  Vec3 box_max = Vec3(3, 2, 4);
  double checker_frequency = 2.0;   // cells per meter
  double noise_frequency = 8.0;     // lattice cells per meter
  uint64_t seed = 0;
  std::vector<FloaterSpec> floaters;
  Intrinsics intrinsics;
  std::vector<Pose> poses;          // world-to-camera
};

struct SyntheticFrames {
  std::vector<CameraFrame> frames;           // depth includes per-view floaters
  std::vector<Image<uint8_t>> floater_masks; // 1 where a floater is the nearest hit
};

// Throws if a camera center is not strictly inside the box.
SyntheticFrames generate_synthetic(const SyntheticScene& scene);

// Clean analytic depth (no floaters) at an arbitrary camera; the evaluation
// ground truth.
DepthMap synthetic_depth(const SyntheticScene& scene, const Intrinsics& k, const Pose& pose);

// Clean analytic depth along the exact (possibly fractional) pixel ray.
double synthetic_ray_depth(const SyntheticScene& scene, const Intrinsics& k, const Pose& pose,
                           double u, double v);

// Clean analytic color at an arbitrary camera.
ImageF synthetic_color(const SyntheticScene& scene, const Intrinsics& k, const Pose& pose);

// World-to-camera pose with the camera z axis aimed from eye at target
// (image y runs against world `up`).
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, 1, 0));

}  // namespace splatfuse
