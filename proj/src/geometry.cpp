#include "splatfuse/geometry.hpp"

#include <stdexcept>

namespace splatfuse {

Pose compose_transform(const Pose& src, const Pose& dst) {
  Pose t;
  t.rotation = dst.rotation * src.rotation.transpose();
  t.translation = dst.translation - t.rotation * src.translation;
  return t;
}

PixelProjection project_point(const Intrinsics& k, const Pose& pose, const Vec3& x_world) {
  const Vec3 x_cam = pose.apply(x_world);
  PixelProjection p;
  p.depth = x_cam.z();
  if (p.depth <= 1e-9) {
    p.behind = true;
    return p;
  }
  p.u = k.fx * x_cam.x() / x_cam.z() + k.cx;
  p.v = k.fy * x_cam.y() / x_cam.z() + k.cy;
  return p;
}

Vec3 unproject_pixel(const Intrinsics& k, const Pose& pose, double u, double v, double depth) {
  if (depth <= 0) throw std::invalid_argument("unproject_pixel: depth must be > 0");
  const Vec3 x_cam((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth);
  return pose.apply_inverse(x_cam);
}

Mat23 perspective_jacobian(const Intrinsics& k, const Vec3& x_cam) {
  const double z = x_cam.z();
  if (z <= 0) throw std::invalid_argument("perspective_jacobian: z must be > 0");
  Mat23 j;
  j << k.fx / z, 0, -k.fx * x_cam.x() / (z * z),
       0, k.fy / z, -k.fy * x_cam.y() / (z * z);
  return j;
}

Mat2 project_covariance(const Mat3& sigma, const Pose& pose, const Mat23& jacobian) {
  const Mat23 a = jacobian * pose.rotation;
  Mat2 out = a * sigma * a.transpose();
  // Symmetrize before the floor: the product accumulates tiny asymmetry.
  out = 0.5 * (out + out.transpose()).eval();
  out(0, 0) += 0.3;
  out(1, 1) += 0.3;
  return out;
}

}  // namespace splatfuse
