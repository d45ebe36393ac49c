#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "mfos/errors.hpp"
#include "mfos/rng.hpp"

namespace mfos::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// 3x3 orthonormal matrix with det +1. from_matrix validates
// (max |R^T R - I| < 1e-6, |det - 1| < 1e-6); constructors that build from
// axis-angle or quaternions are exact by construction.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  static Rotation from_matrix(const Mat3& m);
  static Rotation axis_angle(const Vec3& axis, double radians);
  static Rotation from_quaternion(const Eigen::Quaterniond& q);
  // Shoemake subgroup-algorithm sample, uniform over SO(3)
  static Rotation random_uniform(Rng& rng);

  const Mat3& matrix() const { return m_; }
  Rotation transposed() const { return Rotation(Mat3(m_.transpose()), unchecked{}); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation operator*(const Rotation& o) const { return Rotation(Mat3(m_ * o.m_), unchecked{}); }
  bool is_identity(double tol = 0.0) const { return (m_ - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol; }

 private:
  struct unchecked {};
  Rotation(const Mat3& m, unchecked) : m_(m) {}
  Mat3 m_;
};

struct Pose {
  Rotation r;
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x_obj) const { return r * x_obj + t; }
  Mat4 homogeneous() const;
  // camera center expressed in the object frame, -R^T t
  Vec3 camera_center() const { return -(r.transposed() * t); }
};

// applies b then a: (Ra Rb, Ra tb + ta)
Pose compose(const Pose& a, const Pose& b);
// (R^T, -R^T t)
Pose invert(const Pose& p);

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
};

// pinhole projection; z must exceed 1e-9 or NonPositiveDepth is thrown
Vec2 project(const Intrinsics& k, const Vec3& x_cam);
// continuous pixel -> unit ray direction through that pixel
Vec3 pixel_ray(const Intrinsics& k, double px, double py);

// Normalized object reference frame: maps the (oriented) object bounding box
// onto the cube [-1,1]^3. r is the bbox orientation in the object frame.
struct RefFrame {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  Rotation r;

  void validate() const;
};

// componentwise (r^T (x_obj - center)) / half_extents
Vec3 ref_coords(const RefFrame& f, const Vec3& x_obj);
// inverse of ref_coords
Vec3 denormalize(const RefFrame& f, const Vec3& x_ref);

struct FramePerturbation {
  Rotation rot;                    // uniform over SO(3) when sampled
  Vec3 trans_frac = Vec3::Zero();  // in [-0.1, 0.1], fraction of bbox dims
  double scale = 1.0;              // in [0.9, 1.1]

  static FramePerturbation identity() { return {}; }
  static FramePerturbation sample(Rng& rng);
};

// rotation composed, center shifted by trans_frac .* (2 * half_extents),
// half_extents scaled
RefFrame perturb_frame(const RefFrame& f, const FramePerturbation& p);

// arccos(clamp((trace(a^T b) - 1) / 2, -1, 1)) in degrees
double geodesic_angle_deg(const Rotation& a, const Rotation& b);

}  // namespace mfos::geom
