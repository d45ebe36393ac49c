#include "mfos/geom.hpp"

#include <cmath>

namespace mfos::geom {

Rotation Rotation::from_matrix(const Mat3& m) {
  Mat3 gram = m.transpose() * m;
  double ortho_err = (gram - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err >= 1e-6) fail(ErrorKind::InvalidArgument, "rotation matrix not orthonormal");
  if (std::abs(m.determinant() - 1.0) >= 1e-6) fail(ErrorKind::InvalidArgument, "rotation matrix det != 1");
  return Rotation(m, unchecked{});
}

Rotation Rotation::axis_angle(const Vec3& axis, double radians) {
  double n = axis.norm();
  if (n < 1e-12) fail(ErrorKind::InvalidArgument, "axis_angle: zero axis");
  return Rotation(Eigen::AngleAxisd(radians, axis / n).toRotationMatrix(), unchecked{});
}

Rotation Rotation::from_quaternion(const Eigen::Quaterniond& q) {
  return Rotation(q.normalized().toRotationMatrix(), unchecked{});
}

Rotation Rotation::random_uniform(Rng& rng) {
  double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  Eigen::Quaterniond q(b * std::cos(2.0 * M_PI * u3),   // w
                       a * std::sin(2.0 * M_PI * u2),   // x
                       a * std::cos(2.0 * M_PI * u2),   // y
                       b * std::sin(2.0 * M_PI * u3));  // z
  return from_quaternion(q);
}

Mat4 Pose::homogeneous() const {
  Mat4 h = Mat4::Identity();
  h.topLeftCorner<3, 3>() = r.matrix();
  h.topRightCorner<3, 1>() = t;
  return h;
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose{a.r * b.r, a.r * b.t + a.t};
}

Pose invert(const Pose& p) {
  Rotation rt = p.r.transposed();
  return Pose{rt, -(rt * p.t)};
}

void Intrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) fail(ErrorKind::BadIntrinsics, "focal lengths must be positive");
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
    fail(ErrorKind::BadIntrinsics, "principal point outside image");
}

Vec2 project(const Intrinsics& k, const Vec3& x_cam) {
  if (x_cam.z() <= 1e-9) fail(ErrorKind::NonPositiveDepth, "point at or behind camera plane");
  return Vec2(k.fx * x_cam.x() / x_cam.z() + k.cx, k.fy * x_cam.y() / x_cam.z() + k.cy);
}

Vec3 pixel_ray(const Intrinsics& k, double px, double py) {
  Vec3 d((px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0);
  return d / d.norm();
}

void RefFrame::validate() const {
  if (!(half_extents.minCoeff() > 0)) fail(ErrorKind::InvalidArgument, "half_extents must be positive");
  if (!center.allFinite() || !half_extents.allFinite())
    fail(ErrorKind::InvalidArgument, "non-finite reference frame");
}

Vec3 ref_coords(const RefFrame& f, const Vec3& x_obj) {
  Vec3 local = f.r.transposed() * (x_obj - f.center);
  return local.cwiseQuotient(f.half_extents);
}

Vec3 denormalize(const RefFrame& f, const Vec3& x_ref) {
  return f.r * x_ref.cwiseProduct(f.half_extents) + f.center;
}

FramePerturbation FramePerturbation::sample(Rng& rng) {
  FramePerturbation p;
  p.rot = Rotation::random_uniform(rng);
  for (int i = 0; i < 3; ++i) p.trans_frac[i] = rng.uniform(-0.1, 0.1);
  p.scale = rng.uniform(0.9, 1.1);
  return p;
}

RefFrame perturb_frame(const RefFrame& f, const FramePerturbation& p) {
  // identity perturbation is exactly the identity map
  if (p.rot.is_identity() && p.trans_frac.isZero(0.0) && p.scale == 1.0) return f;
  RefFrame out;
  out.center = f.center + p.trans_frac.cwiseProduct(2.0 * f.half_extents);
  out.half_extents = f.half_extents * p.scale;
  out.r = f.r * p.rot;
  return out;
}

double geodesic_angle_deg(const Rotation& a, const Rotation& b) {
  double tr = (a.matrix().transpose() * b.matrix()).trace();
  double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

}  // namespace mfos::geom
