#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mfos/pnp.hpp"

using namespace mfos;
using geom::Pose;
using geom::Rotation;
using geom::Vec2;
using geom::Vec3;
using pnp::CorrespondenceSet;
using pnp::PnPConfig;

namespace {

const geom::Intrinsics kCam{420, 400, 310, 245, 640, 480};

Pose random_pose(Rng& rng) {
  Pose p;
  p.r = Rotation::random_uniform(rng);
  p.t = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.8, 1.6));
  return p;
}

// noise-free synthetic correspondences from a known pose
CorrespondenceSet synth_correspondences(const Pose& pose, int n, Rng& rng, bool planar = false) {
  CorrespondenceSet c;
  while (int(c.size()) < n) {
    Vec3 x(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15),
           planar ? 0.0 : rng.uniform(-0.15, 0.15));
    Vec3 q = pose.apply(x);
    if (q.z() < 0.2) continue;
    Vec2 px = geom::project(kCam, q);
    if (px.x() < 0 || px.x() >= kCam.width || px.y() < 0 || px.y() >= kCam.height) continue;
    c.push(px, x, rng.uniform(1.0, 4.0));
  }
  return c;
}

}  // namespace

TEST_CASE("extract_correspondences: thresholding and failure") {
  PnPConfig cfg;
  DensePrediction pred;
  pred.height = 4;
  pred.width = 4;
  pred.coords.assign(4 * 4 * 3, 0.25f);
  pred.conf_raw.assign(4 * 4, -3.0f);  // tau = e^-3 << 2.5

  CHECK_THROWS_AS(pnp::extract_correspondences(pred, cfg), Error);

  pred.conf_raw.assign(4 * 4, 2.0f);  // tau = e^2 > 2.5 everywhere
  CorrespondenceSet all = pnp::extract_correspondences(pred, cfg);
  CHECK(all.size() == 16);
  CHECK(all.px[0].x() == doctest::Approx(0.5));
  CHECK(all.px[0].y() == doctest::Approx(0.5));

  // mixed map: exactly the pixels at or above the threshold survive
  Rng rng(60);
  for (auto& v : pred.conf_raw) v = float(rng.uniform(-2, 3));
  CorrespondenceSet mixed = pnp::extract_correspondences(pred, cfg);
  size_t expected = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      if (std::exp(std::clamp(double(pred.conf_raw[size_t(y * 4 + x)]), -5.0, 5.0)) >=
          cfg.conf_threshold)
        ++expected;
  CHECK(mixed.size() == expected);
}

TEST_CASE("denormalize maps reference coordinates into meters") {
  geom::RefFrame f;
  f.center = Vec3(0.1, 0, -0.05);
  f.half_extents = Vec3(0.2, 0.1, 0.3);
  CorrespondenceSet c;
  c.push(Vec2(1, 1), Vec3(1, -1, 0.5), 2.0);
  CorrespondenceSet m = pnp::denormalize(c, f);
  CHECK((m.ref3d[0] - geom::denormalize(f, c.ref3d[0])).norm() == doctest::Approx(0));
  CHECK(m.conf[0] == 2.0);
}

TEST_CASE("weighted_sample: identity, uniformity, heavy weight, scaling invariance") {
  Rng rng(61);
  CorrespondenceSet c;
  for (int i = 0; i < 10; ++i) c.push(Vec2(i, 0), Vec3(i, 0, 0), 1.0);

  CorrespondenceSet same = pnp::weighted_sample(c, 10, rng);
  CHECK(same.size() == 10);
  CorrespondenceSet more = pnp::weighted_sample(c, 50, rng);
  CHECK(more.size() == 10);

  // chi-square on selection counts, n=1 draws: df = 9, crit(p=0.01) = 21.666
  std::array<int64_t, 10> counts{};
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    CorrespondenceSet s = pnp::weighted_sample(c, 1, rng);
    counts[size_t(s.ref3d[0].x())] += 1;
  }
  double expected = trials / 10.0, chi2 = 0;
  for (auto n : counts) chi2 += (double(n) - expected) * (double(n) - expected) / expected;
  CHECK(chi2 < 21.666);

  // one dominant weight: included in > 99% of single draws
  CorrespondenceSet heavy = c;
  heavy.conf[3] = 1e6;
  int hits = 0;
  for (int t = 0; t < 5000; ++t) {
    CorrespondenceSet s = pnp::weighted_sample(heavy, 1, rng);
    if (s.ref3d[0].x() == 3.0) ++hits;
  }
  CHECK(double(hits) / 5000.0 > 0.99);

  // scaling all weights leaves the realized selection unchanged
  CorrespondenceSet scaled = heavy;
  for (auto& w : scaled.conf) w *= 1000.0;
  Rng r1(77), r2(77);
  CorrespondenceSet s1 = pnp::weighted_sample(heavy, 4, r1);
  CorrespondenceSet s2 = pnp::weighted_sample(scaled, 4, r2);
  REQUIRE(s1.size() == s2.size());
  for (size_t i = 0; i < s1.size(); ++i) CHECK(s1.ref3d[i] == s2.ref3d[i]);
}

TEST_CASE("solve_pnp: noise-free recovery to numerical precision") {
  Rng rng(62);
  for (int trial = 0; trial < 20; ++trial) {
    Pose gt = random_pose(rng);
    CorrespondenceSet c = synth_correspondences(gt, 40, rng);
    Pose est = pnp::solve_pnp(c, kCam);
    CHECK(geom::geodesic_angle_deg(est.r, gt.r) < 1e-4);
    CHECK((est.t - gt.t).norm() < 1e-6);
  }
}

TEST_CASE("solve_pnp: coplanar points in general position") {
  Rng rng(63);
  for (int trial = 0; trial < 10; ++trial) {
    Pose gt = random_pose(rng);
    CorrespondenceSet c = synth_correspondences(gt, 30, rng, /*planar=*/true);
    Pose est = pnp::solve_pnp(c, kCam);
    CHECK(geom::geodesic_angle_deg(est.r, gt.r) < 1e-3);
    CHECK((est.t - gt.t).norm() < 1e-5);
  }
}

TEST_CASE("solve_pnp: degenerate configurations are rejected") {
  Rng rng(64);
  Pose gt = random_pose(rng);
  // three collinear points (also fewer than six)
  CorrespondenceSet tri;
  for (int i = 0; i < 3; ++i) {
    Vec3 x(0.01 * i, 0.02 * i, 0.03 * i);
    tri.push(geom::project(kCam, gt.apply(x)), x, 1.0);
  }
  CHECK_THROWS_AS(pnp::solve_pnp(tri, kCam), Error);

  // eight collinear points: enough rows, still rank-deficient
  CorrespondenceSet line;
  for (int i = 0; i < 8; ++i) {
    Vec3 x = Vec3(0.01, -0.02, 0.015) * double(i);
    line.push(geom::project(kCam, gt.apply(x)), x, 1.0);
  }
  try {
    pnp::solve_pnp(line, kCam);
    FAIL("expected DegenerateConfiguration");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateConfiguration);
  }
}

TEST_CASE("solve_pnp: confidence scaling leaves the pose unchanged") {
  Rng rng(65);
  Pose gt = random_pose(rng);
  CorrespondenceSet c = synth_correspondences(gt, 25, rng);
  // perturb pixels slightly so weights matter
  Rng noise(66);
  for (auto& p : c.px) p += Vec2(noise.uniform(-0.5, 0.5), noise.uniform(-0.5, 0.5));
  Pose a = pnp::solve_pnp(c, kCam);
  CorrespondenceSet scaled = c;
  for (auto& w : scaled.conf) w *= 3721.0;
  Pose b = pnp::solve_pnp(scaled, kCam);
  CHECK(geom::geodesic_angle_deg(a.r, b.r) < 1e-10);
  CHECK((a.t - b.t).norm() < 1e-12);
}

TEST_CASE("robust_pnp: full consensus equals the direct solve") {
  Rng rng(67);
  Pose gt = random_pose(rng);
  CorrespondenceSet c = synth_correspondences(gt, 200, rng);
  PnPConfig cfg;
  Rng ransac_rng(1);
  pnp::RobustResult rr = pnp::robust_pnp(c, kCam, cfg, ransac_rng);
  Pose direct = pnp::solve_pnp(c, kCam);
  CHECK((rr.pose.r.matrix() - direct.r.matrix()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((rr.pose.t - direct.t).norm() < 1e-6);
  CHECK(rr.n_inliers == 200);
}

TEST_CASE("robust_pnp: 40% outliers recovered; inlier gate honored") {
  Rng rng(68);
  Pose gt = random_pose(rng);
  CorrespondenceSet c = synth_correspondences(gt, 600, rng);
  for (int i = 0; i < 400; ++i) {  // 40% of 1000 total
    Vec3 x(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15));
    c.push(Vec2(rng.uniform(0, 640), rng.uniform(0, 480)), x, rng.uniform(1.0, 4.0));
  }
  PnPConfig cfg;
  Rng ransac_rng(2);
  pnp::RobustResult rr = pnp::robust_pnp(c, kCam, cfg, ransac_rng);
  CHECK(geom::geodesic_angle_deg(rr.pose.r, gt.r) < 0.5);
  CHECK((rr.pose.t - gt.t).norm() / gt.t.norm() < 1e-3);
  CHECK(rr.trials <= cfg.max_iter);

  // every reported inlier reprojects within the gate
  for (size_t i = 0; i < c.size(); ++i) {
    if (!rr.inliers[i]) continue;
    Vec3 q = rr.pose.apply(c.ref3d[i]);
    CHECK((geom::project(kCam, q) - c.px[i]).norm() <= cfg.reproj_px + 1e-9);
  }
}

TEST_CASE("robust_pnp: all-outlier input yields no consensus") {
  Rng rng(69);
  CorrespondenceSet c;
  for (int i = 0; i < 60; ++i) {
    c.push(Vec2(rng.uniform(0, 640), rng.uniform(0, 480)),
           Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)), 1.0);
  }
  PnPConfig cfg;
  cfg.max_iter = 200;
  Rng ransac_rng(3);
  try {
    pnp::robust_pnp(c, kCam, cfg, ransac_rng);
    FAIL("expected NoConsensus");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoConsensus);
  }
}

TEST_CASE("robust_pnp is deterministic under a fixed seed") {
  Rng rng(70);
  Pose gt = random_pose(rng);
  CorrespondenceSet c = synth_correspondences(gt, 300, rng);
  for (int i = 0; i < 100; ++i)
    c.push(Vec2(rng.uniform(0, 640), rng.uniform(0, 480)),
           Vec3(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15)),
           1.0);
  PnPConfig cfg;
  Rng r1(123), r2(123);
  pnp::RobustResult a = pnp::robust_pnp(c, kCam, cfg, r1);
  pnp::RobustResult b = pnp::robust_pnp(c, kCam, cfg, r2);
  CHECK(std::memcmp(a.pose.r.matrix().data(), b.pose.r.matrix().data(), 9 * 8) == 0);
  CHECK(a.pose.t == b.pose.t);
  CHECK(a.n_inliers == b.n_inliers);
  CHECK(a.trials == b.trials);
}

TEST_CASE("defaults match the inference parameters") {
  PnPConfig cfg;
  CHECK(cfg.conf_threshold == 2.5);
  CHECK(cfg.n_samples == 1024);
  CHECK(cfg.max_iter == 1000);
  CHECK(cfg.reproj_px == 5.0);
  CHECK(cfg.min_inliers == 6);
}
