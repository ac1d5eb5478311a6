#include "splatfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace splatfuse {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice_value(uint64_t seed, int wall, int channel, int octave, int64_t ix, int64_t iy) {
  uint64_t h = seed;
  h = splitmix64(h ^ static_cast<uint64_t>(wall) * 0x9e3779b97f4a7c15ULL);
  h = splitmix64(h ^ static_cast<uint64_t>(channel + 7));
  h = splitmix64(h ^ static_cast<uint64_t>(octave + 13));
  h = splitmix64(h ^ static_cast<uint64_t>(ix) * 0xff51afd7ed558ccdULL);
  h = splitmix64(h ^ static_cast<uint64_t>(iy) * 0xc4ceb9fe1a85ec53ULL);
  return (h >> 11) * (1.0 / 9007199254740992.0);
}

double value_noise(uint64_t seed, int wall, int channel, double u, double v) {
  double total = 0, amp = 0.5, freq = 1.0;
  for (int octave = 0; octave < 3; ++octave) {
    const double x = u * freq, y = v * freq;
    const int64_t ix = static_cast<int64_t>(std::floor(x));
    const int64_t iy = static_cast<int64_t>(std::floor(y));
    const double fx = x - ix, fy = y - iy;
    const double v00 = lattice_value(seed, wall, channel, octave, ix, iy);
    const double v01 = lattice_value(seed, wall, channel, octave, ix + 1, iy);
    const double v10 = lattice_value(seed, wall, channel, octave, ix, iy + 1);
    const double v11 = lattice_value(seed, wall, channel, octave, ix + 1, iy + 1);
    total += amp * ((1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v01 + (1 - fx) * fy * v10 +
                    fx * fy * v11);
    amp *= 0.5;
    freq *= 2.0;
  }
  return total / 0.875;  // back to [0,1)
}

const Vec3 kWallBase[6] = {
    {0.75, 0.45, 0.40},  // -x
    {0.40, 0.65, 0.75},  // +x
    {0.50, 0.70, 0.45},  // -y (floor)
    {0.80, 0.78, 0.70},  // +y (ceiling)
    {0.70, 0.55, 0.70},  // -z
    {0.72, 0.68, 0.50},  // +z
};

struct WallHit {
  double t = 0;
  int wall = -1;  // 0..5: -x,+x,-y,+y,-z,+z
  Vec3 point = Vec3::Zero();
};

// Exit point of a ray starting inside the box.
WallHit intersect_box_interior(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir) {
  WallHit hit;
  hit.t = 1e300;
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(dir[axis]) < 1e-15) continue;
    const bool positive = dir[axis] > 0;
    const double bound = positive ? scene.box_max[axis] : scene.box_min[axis];
    const double t = (bound - origin[axis]) / dir[axis];
    if (t > 0 && t < hit.t) {
      hit.t = t;
      hit.wall = 2 * axis + (positive ? 1 : 0);
    }
  }
  hit.point = origin + hit.t * dir;
  return hit;
}

Vec3 wall_color(const SyntheticScene& scene, const WallHit& hit) {
  const int axis = hit.wall / 2;
  const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
  const double pu = hit.point[ua], pv = hit.point[va];

  const int cu = static_cast<int>(std::floor(pu * scene.checker_frequency));
  const int cv = static_cast<int>(std::floor(pv * scene.checker_frequency));
  const double checker = ((cu + cv) & 1) ? 1.0 : 0.0;

  Vec3 c;
  for (int ch = 0; ch < 3; ++ch) {
    const double n =
        value_noise(scene.seed, hit.wall, ch, pu * scene.noise_frequency, pv * scene.noise_frequency);
    c[ch] = kWallBase[hit.wall][ch] * (0.55 + 0.22 * checker) + 0.28 * n;
  }
  return c.cwiseMin(1.0).cwiseMax(0.0);
}

// Nearest positive ray-sphere intersection, or a negative value.
double intersect_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius) {
  const Vec3 oc = origin - center;
  const double a = dir.squaredNorm();
  const double b = 2.0 * oc.dot(dir);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return -1;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2 * a);
  if (t0 > 1e-9) return t0;
  const double t1 = (-b + sq) / (2 * a);
  if (t1 > 1e-9) return t1;
  return -1;
}

bool floater_applies(const FloaterSpec& f, int view) {
  if (f.view_ids.empty()) return true;
  return std::find(f.view_ids.begin(), f.view_ids.end(), view) != f.view_ids.end();
}

}  // namespace

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 down = -up - forward * (-up).dot(forward);
  if (down.norm() < 1e-12)
    throw std::invalid_argument("look_at: view direction parallel to up");
  down.normalize();
  const Vec3 right = down.cross(forward);
  Pose pose;
  pose.rotation.row(0) = right;
  pose.rotation.row(1) = down;
  pose.rotation.row(2) = forward;
  pose.translation = -(pose.rotation * eye);
  return pose;
}

SyntheticFrames generate_synthetic(const SyntheticScene& scene) {
  if (scene.poses.empty()) throw std::invalid_argument("generate_synthetic: no camera poses");
  const Intrinsics& k = scene.intrinsics;

  SyntheticFrames out;
  out.frames.resize(scene.poses.size());
  out.floater_masks.resize(scene.poses.size());

  for (size_t view = 0; view < scene.poses.size(); ++view) {
    const Pose& pose = scene.poses[view];
    const Vec3 origin = pose.camera_center();
    for (int axis = 0; axis < 3; ++axis)
      if (origin[axis] <= scene.box_min[axis] || origin[axis] >= scene.box_max[axis])
        throw std::runtime_error("generate_synthetic: camera " + std::to_string(view) +
                                 " is not inside the room");

    CameraFrame& frame = out.frames[view];
    frame.intrinsics = k;
    frame.pose = pose;
    frame.image = ImageF(k.height, k.width, 3);
    frame.depth = DepthMap(k.height, k.width, 1);
    Image<uint8_t>& mask = out.floater_masks[view];
    mask = Image<uint8_t>(k.height, k.width, 1, 0);

    const Mat3 rot_t = pose.rotation.transpose();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        // Camera-frame direction with unit z: the ray parameter equals depth.
        const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
        const Vec3 dir = rot_t * dir_cam;
        const WallHit wall = intersect_box_interior(scene, origin, dir);

        double depth = wall.t;
        const FloaterSpec* hit_floater = nullptr;
        for (const FloaterSpec& f : scene.floaters) {
          if (!floater_applies(f, static_cast<int>(view))) continue;
          const double t = intersect_sphere(origin, dir, f.center, f.radius);
          if (t <= 0) continue;
          if (f.depth_offset > 0) {
            depth = wall.t + f.depth_offset;
            hit_floater = &f;
          } else if (t < depth) {
            depth = t;
            hit_floater = &f;
          }
        }

        Vec3 color = wall_color(scene, wall);
        if (hit_floater && hit_floater->paint_color) color = hit_floater->color;

        frame.depth.at(y, x) = static_cast<float>(depth);
        for (int c = 0; c < 3; ++c) frame.image.at(y, x, c) = static_cast<float>(color[c]);
        if (hit_floater) mask.at(y, x) = 1;
      }
    }
  }
  return out;
}

DepthMap synthetic_depth(const SyntheticScene& scene, const Intrinsics& k, const Pose& pose) {
  DepthMap out(k.height, k.width, 1);
  const Vec3 origin = pose.camera_center();
  const Mat3 rot_t = pose.rotation.transpose();
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      out.at(y, x) = static_cast<float>(intersect_box_interior(scene, origin, rot_t * dir_cam).t);
    }
  return out;
}

double synthetic_ray_depth(const SyntheticScene& scene, const Intrinsics& k, const Pose& pose,
                           double u, double v) {
  const Vec3 origin = pose.camera_center();
  const Vec3 dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  return intersect_box_interior(scene, origin, pose.rotation.transpose() * dir_cam).t;
}

ImageF synthetic_color(const SyntheticScene& scene, const Intrinsics& k, const Pose& pose) {
  ImageF out(k.height, k.width, 3);
  const Vec3 origin = pose.camera_center();
  const Mat3 rot_t = pose.rotation.transpose();
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 c = wall_color(scene, intersect_box_interior(scene, origin, rot_t * dir_cam));
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = static_cast<float>(c[ch]);
    }
  return out;
}

}  // namespace splatfuse
