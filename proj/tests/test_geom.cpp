#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>

#include "mfos/geom.hpp"

using namespace mfos;
using geom::Mat4;
using geom::Pose;
using geom::Rotation;
using geom::Vec3;

namespace {

Pose random_pose(Rng& rng, double t_scale = 1.0) {
  Pose p;
  p.r = Rotation::random_uniform(rng);
  p.t = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)) * t_scale;
  return p;
}

double pose_diff(const Pose& a, const Pose& b) {
  return (a.homogeneous() - b.homogeneous()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("compose: identity and inverse") {
  Rng rng(1);
  Pose p = random_pose(rng);
  CHECK(pose_diff(geom::compose(Pose{}, p), p) < 1e-15);
  Pose round = geom::compose(p, geom::invert(p));
  CHECK(pose_diff(round, Pose{}) < 1e-9);
}

TEST_CASE("compose matches homogeneous-matrix oracle") {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    Pose a = random_pose(rng), b = random_pose(rng);
    Mat4 expected = a.homogeneous() * b.homogeneous();
    CHECK((geom::compose(a, b).homogeneous() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("invert matches 4x4 matrix inverse; involution") {
  Rng rng(3);
  CHECK(pose_diff(geom::invert(Pose{}), Pose{}) == 0);
  for (int i = 0; i < 50; ++i) {
    Pose p = random_pose(rng);
    Mat4 expected = p.homogeneous().inverse();
    CHECK((geom::invert(p).homogeneous() - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(pose_diff(geom::invert(geom::invert(p)), p) < 1e-9);
  }
}

TEST_CASE("project: principal ray and unprojection round-trip") {
  geom::Intrinsics k{300, 320, 112, 112, 224, 224};
  geom::Vec2 uv = geom::project(k, Vec3(0, 0, 1));
  CHECK(uv.x() == doctest::Approx(112));
  CHECK(uv.y() == doctest::Approx(112));

  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    double u = rng.uniform(0, 224), v = rng.uniform(0, 224), z = rng.uniform(0.2, 5.0);
    Vec3 x(z * (u - k.cx) / k.fx, z * (v - k.cy) / k.fy, z);
    geom::Vec2 p = geom::project(k, x);
    CHECK(std::abs(p.x() - u) < 1e-6);
    CHECK(std::abs(p.y() - v) < 1e-6);
  }
}

TEST_CASE("project: batch matches scalar oracle, nonpositive depth throws") {
  geom::Intrinsics k{250, 260, 100, 120, 224, 224};
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.1, 4.0));
    geom::Vec2 p = geom::project(k, x);
    // scalar re-derivation
    double eu = k.fx * x.x() / x.z() + k.cx;
    double ev = k.fy * x.y() / x.z() + k.cy;
    CHECK(p.x() == doctest::Approx(eu).epsilon(1e-12));
    CHECK(p.y() == doctest::Approx(ev).epsilon(1e-12));
  }
  CHECK_THROWS_AS(geom::project(k, Vec3(0, 0, 0)), Error);
  CHECK_THROWS_AS(geom::project(k, Vec3(0, 0, -1)), Error);
}

TEST_CASE("ref_coords: corners, center, inverse round-trip") {
  Rng rng(6);
  geom::RefFrame f;
  f.center = Vec3(0.1, -0.2, 0.3);
  f.half_extents = Vec3(0.2, 0.3, 0.15);
  f.r = Rotation::random_uniform(rng);

  Vec3 corner = f.center + f.r * f.half_extents;
  CHECK((geom::ref_coords(f, corner) - Vec3(1, 1, 1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(geom::ref_coords(f, f.center).cwiseAbs().maxCoeff() < 1e-12);

  for (int i = 0; i < 100; ++i) {
    Vec3 r(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    Vec3 x = geom::denormalize(f, r);
    CHECK((geom::ref_coords(f, x) - r).cwiseAbs().maxCoeff() < 1e-9);
    Vec3 x2(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
    CHECK((geom::denormalize(f, geom::ref_coords(f, x2)) - x2).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("perturb_frame: identity is exact, scale-only scales half_extents") {
  Rng rng(7);
  geom::RefFrame f;
  f.center = Vec3(0.05, 0.02, -0.01);
  f.half_extents = Vec3(0.1, 0.2, 0.3);
  f.r = Rotation::random_uniform(rng);

  geom::RefFrame same = geom::perturb_frame(f, geom::FramePerturbation::identity());
  CHECK(same.center == f.center);
  CHECK(same.half_extents == f.half_extents);
  CHECK((same.r.matrix() - f.r.matrix()).cwiseAbs().maxCoeff() == 0);

  geom::FramePerturbation scale_only;
  scale_only.scale = 1.1;
  geom::RefFrame scaled = geom::perturb_frame(f, scale_only);
  CHECK((scaled.half_extents - 1.1 * f.half_extents).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(scaled.center == f.center);
  CHECK((scaled.r.matrix() - f.r.matrix()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("perturb_frame sampler: translation marginals uniform (KS < 0.02)") {
  Rng rng(8);
  geom::RefFrame f;
  f.half_extents = Vec3(0.2, 0.1, 0.3);
  const int n = 100000;
  std::array<std::vector<double>, 3> fracs;
  for (auto& v : fracs) v.reserve(n);
  for (int i = 0; i < n; ++i) {
    geom::FramePerturbation p = geom::FramePerturbation::sample(rng);
    geom::RefFrame g = geom::perturb_frame(f, p);
    Vec3 delta = g.center - f.center;
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(p.trans_frac[a]) <= 0.1);
      fracs[size_t(a)].push_back(delta[a] / (2.0 * f.half_extents[a]));  // recovers trans_frac
    }
    CHECK(p.scale >= 0.9);
    CHECK(p.scale <= 1.1);
  }
  for (int a = 0; a < 3; ++a) {
    auto& v = fracs[size_t(a)];
    std::sort(v.begin(), v.end());
    double ks = 0;
    for (size_t i = 0; i < v.size(); ++i) {
      double cdf = (v[i] + 0.1) / 0.2;  // uniform on [-0.1, 0.1]
      double lo = double(i) / double(n), hi = double(i + 1) / double(n);
      ks = std::max({ks, std::abs(cdf - lo), std::abs(cdf - hi)});
    }
    CHECK(ks < 0.02);
  }
}

TEST_CASE("geodesic angle: zero, axis-angle construction, quaternion oracle") {
  Rng rng(9);
  Rotation a = Rotation::random_uniform(rng);
  CHECK(geom::geodesic_angle_deg(a, a) == doctest::Approx(0).epsilon(1e-9));

  for (int i = 0; i < 20; ++i) {
    Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    Rotation r = Rotation::axis_angle(axis, 30.0 * M_PI / 180.0);
    CHECK(std::abs(geom::geodesic_angle_deg(r, Rotation()) - 30.0) < 1e-6);
  }

  for (int i = 0; i < 100; ++i) {
    Rotation r1 = Rotation::random_uniform(rng), r2 = Rotation::random_uniform(rng);
    Eigen::Quaterniond q1(r1.matrix()), q2(r2.matrix());
    double dot = std::min(1.0, std::abs(q1.dot(q2)));
    double expected = 2.0 * std::acos(dot) * 180.0 / M_PI;
    CHECK(std::abs(geom::geodesic_angle_deg(r1, r2) - expected) < 1e-6);
  }
}

TEST_CASE("properties: compose associativity, geodesic metric axioms") {
  Rng rng(10);
  for (int i = 0; i < 50; ++i) {
    Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    CHECK(pose_diff(geom::compose(geom::compose(a, b), c),
                    geom::compose(a, geom::compose(b, c))) < 1e-9);

    double dab = geom::geodesic_angle_deg(a.r, b.r);
    double dba = geom::geodesic_angle_deg(b.r, a.r);
    double dac = geom::geodesic_angle_deg(a.r, c.r);
    double dcb = geom::geodesic_angle_deg(c.r, b.r);
    CHECK(std::abs(dab - dba) < 1e-6);
    CHECK(dab <= dac + dcb + 1e-6);
  }
}

TEST_CASE("rotation validation rejects non-orthonormal input") {
  geom::Mat3 bad = geom::Mat3::Identity();
  bad(0, 0) = 1.5;
  CHECK_THROWS_AS(Rotation::from_matrix(bad), Error);
  geom::Mat3 reflect = geom::Mat3::Identity();
  reflect(2, 2) = -1;
  CHECK_THROWS_AS(Rotation::from_matrix(reflect), Error);
}
