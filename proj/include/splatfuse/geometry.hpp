#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace splatfuse {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Quat = Eigen::Quaterniond;

// Pinhole intrinsics. Pixel centers sit at integer coordinates; the principal
// ray crosses the image plane at exactly (cx, cy).
struct Intrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && cx > 0 && cx < width && cy > 0 && cy < height;
  }
  double focal_mean() const { return 0.5 * (fx + fy); }

  // Intrinsics of the same camera resampled by integer stride (box-center
  // convention: pixel j at the new scale covers original pixels
  // [j*stride, (j+1)*stride), so u_orig = (u_new + 0.5)*stride - 0.5).
  Intrinsics strided(int stride) const {
    const double s = 1.0 / stride;
    Intrinsics k;
    k.fx = fx * s;
    k.fy = fy * s;
    k.cx = (cx + 0.5) * s - 0.5;
    k.cy = (cy + 0.5) * s - 0.5;
    k.width = width / stride;
    k.height = height / stride;
    return k;
  }
};

// World-to-camera rigid transform: x_cam = rotation * x_world + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return Pose{}; }

  Vec3 apply(const Vec3& x_world) const { return rotation * x_world + translation; }
  Vec3 apply_inverse(const Vec3& x_cam) const {
    return rotation.transpose() * (x_cam - translation);
  }
  Pose inverse() const {
    Pose p;
    p.rotation = rotation.transpose();
    p.translation = -(rotation.transpose() * translation);
    return p;
  }
  Vec3 camera_center() const { return -(rotation.transpose() * translation); }
  bool orthonormal(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < tol &&
           std::abs(rotation.determinant() - 1.0) < tol;
  }
};

// 3x3 covariance stored via unit quaternion + per-axis scales, so the
// reconstructed matrix R S S^T R^T stays PSD under any parameter update.
struct Covariance3 {
  Quat q = Quat::Identity();
  Vec3 scales = Vec3::Zero();  // meters, >= 0

  Mat3 matrix() const {
    const Mat3 r = q.normalized().toRotationMatrix();
    return r * scales.cwiseProduct(scales).asDiagonal() * r.transpose();
  }
};

struct PixelProjection {
  double u = 0, v = 0;
  double depth = 0;        // camera-frame z, meters
  bool behind = false;     // depth <= 1e-9
};

// T such that applying T to a point in src's camera frame lands it in dst's
// camera frame: T = dst * src^-1.
Pose compose_transform(const Pose& src, const Pose& dst);

PixelProjection project_point(const Intrinsics& k, const Pose& pose, const Vec3& x_world);

// Requires depth > 0.
Vec3 unproject_pixel(const Intrinsics& k, const Pose& pose, double u, double v, double depth);

// d(u,v)/d(x,y,z) of the perspective projection at a camera-frame point.
// Requires z > 0.
Mat23 perspective_jacobian(const Intrinsics& k, const Vec3& x_cam);

// EWA projection J * R_w * Sigma * R_w^T * J^T with a +0.3 px^2 diagonal
// floor (anti-aliasing low-pass; degenerate Gaussians stay rasterizable).
Mat2 project_covariance(const Mat3& sigma, const Pose& pose, const Mat23& jacobian);

inline double round_half_up(double x) { return std::floor(x + 0.5); }

}  // namespace splatfuse
