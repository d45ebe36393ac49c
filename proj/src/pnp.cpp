#include "mfos/pnp.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mfos::pnp {

using geom::Mat3;

CorrespondenceSet extract_correspondences(const DensePrediction& pred, const PnPConfig& cfg) {
  CorrespondenceSet out;
  for (int y = 0; y < pred.height; ++y) {
    for (int x = 0; x < pred.width; ++x) {
      double tau = std::exp(std::clamp(double(pred.raw_at(x, y)), -cfg.conf_clamp, cfg.conf_clamp));
      if (tau < cfg.conf_threshold) continue;
      const float* c = pred.coord_at(x, y);
      out.push(Vec2(x + 0.5, y + 0.5), Vec3(c[0], c[1], c[2]), tau);
    }
  }
  if (int(out.size()) < cfg.min_inliers)
    fail(ErrorKind::TooFewPoints, "only " + std::to_string(out.size()) +
                                      " correspondences above confidence threshold");
  return out;
}

CorrespondenceSet denormalize(const CorrespondenceSet& c, const geom::RefFrame& frame) {
  CorrespondenceSet out = c;
  for (auto& x : out.ref3d) x = geom::denormalize(frame, x);
  return out;
}

CorrespondenceSet weighted_sample(const CorrespondenceSet& c, int n, Rng& rng) {
  const int m = int(c.size());
  if (m <= n) return c;
  // Efraimidis-Spirakis: top-n by log(u)/w. Scaling all weights by a common
  // positive factor rescales every key monotonically, leaving the selection
  // unchanged.
  std::vector<std::pair<double, int>> keys(m);
  for (int i = 0; i < m; ++i) {
    double u = rng.uniform();
    double w = c.conf[size_t(i)];
    keys[size_t(i)] = {std::log(std::max(u, 1e-300)) / w, i};
  }
  std::partial_sort(keys.begin(), keys.begin() + n, keys.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;  // larger key wins
    return a.second < b.second;
  });
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[size_t(i)] = keys[size_t(i)].second;
  std::sort(idx.begin(), idx.end());
  CorrespondenceSet out;
  for (int i : idx) out.push(c.px[size_t(i)], c.ref3d[size_t(i)], c.conf[size_t(i)]);
  return out;
}

namespace {

struct Normalization {
  Vec3 mu = Vec3::Zero();
  double s = 1.0;  // X' = s * (X - mu)
  Mat3 basis = Mat3::Identity();
  double sv0 = 0, sv1 = 0, sv2 = 0;  // singular values of the centered cloud
};

Normalization analyze_points(const std::vector<Vec3>& pts) {
  Normalization nz;
  const int n = int(pts.size());
  for (const auto& p : pts) nz.mu += p;
  nz.mu /= double(n);
  Eigen::MatrixXd centered(n, 3);
  for (int i = 0; i < n; ++i) centered.row(i) = (pts[size_t(i)] - nz.mu).transpose();
  double rms = std::sqrt(centered.squaredNorm() / double(n));
  nz.s = rms > 1e-12 ? std::sqrt(3.0) / rms : 1.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  nz.sv0 = svd.singularValues()(0);
  nz.sv1 = svd.singularValues()(1);
  nz.sv2 = svd.singularValues()(2);
  Mat3 v = svd.matrixV();
  if (v.determinant() < 0) v.col(2) = -v.col(2);
  nz.basis = v;
  return nz;
}

Mat3 project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 d = Mat3::Identity();
    d(2, 2) = -1;
    r = svd.matrixU() * d * svd.matrixV().transpose();
  }
  return r;
}

struct InitPose {
  Mat3 R;
  Vec3 t;
};

// Homogeneous DLT on the 3x4 projection, valid for non-planar clouds.
InitPose dlt_init(const std::vector<Vec3>& pts, const std::vector<Vec2>& xn,
                  const std::vector<double>& sw, const Normalization& nz) {
  const int n = int(pts.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 12);
  for (int i = 0; i < n; ++i) {
    Vec3 xp = nz.s * (pts[size_t(i)] - nz.mu);
    Eigen::RowVector4d xt(xp.x(), xp.y(), xp.z(), 1.0);
    double w = sw[size_t(i)];
    a.block<1, 4>(2 * i, 0) = w * xt;
    a.block<1, 4>(2 * i, 8) = -w * xn[size_t(i)].x() * xt;
    a.block<1, 4>(2 * i + 1, 4) = w * xt;
    a.block<1, 4>(2 * i + 1, 8) = -w * xn[size_t(i)].y() * xt;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  Eigen::VectorXd v = svd.matrixV().col(11);
  Mat3 m;
  m << v(0), v(1), v(2), v(4), v(5), v(6), v(8), v(9), v(10);
  Vec3 tv(v(3), v(7), v(11));
  if (m.determinant() < 0) {
    m = -m;
    tv = -tv;
  }
  Eigen::JacobiSVD<Mat3> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  double sigma = msvd.singularValues().mean();
  if (sigma < 1e-14) fail(ErrorKind::DegenerateConfiguration, "DLT produced a rank-deficient map");
  InitPose ip;
  ip.R = project_to_rotation(m);
  ip.t = tv / (sigma * nz.s) - ip.R * nz.mu;
  return ip;
}

// Plane-to-image homography decomposition for (near-)coplanar clouds.
InitPose planar_init(const std::vector<Vec3>& pts, const std::vector<Vec2>& xn,
                     const std::vector<double>& sw, const Normalization& nz) {
  const int n = int(pts.size());
  const Vec3 e1 = nz.basis.col(0), e2 = nz.basis.col(1);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    Vec3 xp = nz.s * (pts[size_t(i)] - nz.mu);
    double p = e1.dot(xp), q = e2.dot(xp);
    Eigen::RowVector3d pq(p, q, 1.0);
    double w = sw[size_t(i)];
    a.block<1, 3>(2 * i, 0) = w * pq;
    a.block<1, 3>(2 * i, 6) = -w * xn[size_t(i)].x() * pq;
    a.block<1, 3>(2 * i + 1, 3) = w * pq;
    a.block<1, 3>(2 * i + 1, 6) = -w * xn[size_t(i)].y() * pq;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  Eigen::VectorXd v = svd.matrixV().col(8);
  Mat3 h;
  h << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);

  Vec3 h1 = h.col(0), h2 = h.col(1), h3 = h.col(2);
  double norm_sum = h1.norm() + h2.norm();
  if (norm_sum < 1e-14) fail(ErrorKind::DegenerateConfiguration, "degenerate homography");
  double lambda = 2.0 / norm_sum;
  // sign: majority of plane points must land in front of the camera
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    Vec3 xp = nz.s * (pts[size_t(i)] - nz.mu);
    if (lambda * h.row(2).dot(Eigen::Vector3d(e1.dot(xp), e2.dot(xp), 1.0)) > 0) ++pos;
  }
  if (2 * pos < n) lambda = -lambda;

  Vec3 r1 = lambda * h1, r2 = lambda * h2;
  Mat3 r0;
  r0.col(0) = r1;
  r0.col(1) = r2;
  r0.col(2) = r1.cross(r2);
  Mat3 rh = project_to_rotation(r0);
  InitPose ip;
  ip.R = rh * nz.basis.transpose();
  ip.t = (lambda / nz.s) * h3 - ip.R * nz.mu;
  return ip;
}

double reproj_cost(const CorrespondenceSet& c, const geom::Intrinsics& k,
                   const std::vector<double>& w, const Mat3& R, const Vec3& t) {
  double cost = 0;
  for (size_t i = 0; i < c.size(); ++i) {
    Vec3 q = R * c.ref3d[i] + t;
    if (q.z() <= 1e-9) {
      cost += w[i] * 1e8;  // behind the camera: large fixed penalty
      continue;
    }
    double du = k.fx * q.x() / q.z() + k.cx - c.px[i].x();
    double dv = k.fy * q.y() / q.z() + k.cy - c.px[i].y();
    cost += w[i] * (du * du + dv * dv);
  }
  return cost;
}

}  // namespace

geom::Pose solve_pnp(const CorrespondenceSet& c, const geom::Intrinsics& k) {
  const int n = int(c.size());
  if (n < 6) fail(ErrorKind::DegenerateConfiguration, "solve_pnp needs at least 6 points");

  Normalization nz = analyze_points(c.ref3d);
  if (nz.sv0 < 1e-12 || nz.sv1 < 1e-9 * nz.sv0)
    fail(ErrorKind::DegenerateConfiguration, "points are collinear or coincident");

  // weights normalized by their mean so a common scale factor cancels
  double mean_conf = std::accumulate(c.conf.begin(), c.conf.end(), 0.0) / double(n);
  std::vector<double> w(c.conf.size());
  for (size_t i = 0; i < c.conf.size(); ++i) {
    if (!(c.conf[i] > 0)) fail(ErrorKind::InvalidArgument, "confidence weights must be positive");
    w[i] = c.conf[i] / mean_conf;
  }
  std::vector<double> sw(w.size());
  for (size_t i = 0; i < w.size(); ++i) sw[i] = std::sqrt(w[i]);

  std::vector<Vec2> xn(c.size());
  for (size_t i = 0; i < c.size(); ++i)
    xn[i] = Vec2((c.px[i].x() - k.cx) / k.fx, (c.px[i].y() - k.cy) / k.fy);

  const bool planar = nz.sv2 < 1e-6 * nz.sv0;
  InitPose ip = planar ? planar_init(c.ref3d, xn, sw, nz) : dlt_init(c.ref3d, xn, sw, nz);

  // damped Gauss-Newton on the weighted reprojection cost
  Mat3 R = ip.R;
  Vec3 t = ip.t;
  double cost = reproj_cost(c, k, w, R, t);
  double lambda = 1e-6;
  for (int iter = 0; iter < 50; ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (int i = 0; i < n; ++i) {
      Vec3 p = R * c.ref3d[size_t(i)];
      Vec3 q = p + t;
      if (q.z() <= 1e-9) continue;
      double iz = 1.0 / q.z();
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << k.fx * iz, 0, -k.fx * q.x() * iz * iz, 0, k.fy * iz, -k.fy * q.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dq;
      dq.block<3, 3>(0, 0) << 0, p.z(), -p.y(), -p.z(), 0, p.x(), p.y(), -p.x(), 0;  // -[p]x
      dq.block<3, 3>(0, 3) = Mat3::Identity();
      Eigen::Matrix<double, 2, 6> j = sw[size_t(i)] * (dpi * dq);
      Vec2 r(k.fx * q.x() * iz + k.cx - c.px[size_t(i)].x(),
             k.fy * q.y() * iz + k.cy - c.px[size_t(i)].y());
      r *= sw[size_t(i)];
      h += j.transpose() * j;
      g += j.transpose() * r;
    }
    bool accepted = false;
    for (int inner = 0; inner < 10; ++inner) {
      Eigen::Matrix<double, 6, 6> hd = h;
      for (int d = 0; d < 6; ++d) hd(d, d) += lambda * std::max(h(d, d), 1e-12);
      Eigen::Matrix<double, 6, 1> delta = hd.ldlt().solve(-g);
      if (!delta.allFinite()) break;
      Vec3 omega = delta.head<3>();
      Mat3 r_new = (omega.norm() > 0
                        ? Eigen::AngleAxisd(omega.norm(), omega.normalized()).toRotationMatrix() * R
                        : R);
      Vec3 t_new = t + delta.tail<3>();
      double c_new = reproj_cost(c, k, w, r_new, t_new);
      if (c_new < cost) {
        R = r_new;
        t = t_new;
        double improvement = cost - c_new;
        cost = c_new;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (improvement <= 1e-10 * std::max(1.0, cost)) iter = 50;  // converged
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
  }

  int in_front = 0;
  for (int i = 0; i < n; ++i)
    if ((R * c.ref3d[size_t(i)] + t).z() > 1e-9) ++in_front;
  if (in_front == 0) fail(ErrorKind::BehindCamera, "all points project behind the camera");

  return geom::Pose{geom::Rotation::from_matrix(project_to_rotation(R)), t};
}

RobustResult robust_pnp(const CorrespondenceSet& c, const geom::Intrinsics& k,
                        const PnPConfig& cfg, Rng& rng) {
  if (int(c.size()) < cfg.min_inliers)
    fail(ErrorKind::TooFewPoints, "robust_pnp needs at least min_inliers correspondences");

  CorrespondenceSet working = weighted_sample(c, cfg.n_samples, rng);
  const int m = int(working.size());
  const double thr2 = cfg.reproj_px * cfg.reproj_px;

  auto count_inliers = [&](const geom::Pose& pose, const CorrespondenceSet& set,
                           std::vector<uint8_t>* mask, double* cost_out) {
    int count = 0;
    double cost = 0;
    if (mask) mask->assign(set.size(), 0);
    for (size_t i = 0; i < set.size(); ++i) {
      Vec3 q = pose.r * set.ref3d[i] + pose.t;
      if (q.z() <= 1e-9) {
        cost += thr2;
        continue;
      }
      double du = k.fx * q.x() / q.z() + k.cx - set.px[i].x();
      double dv = k.fy * q.y() / q.z() + k.cy - set.px[i].y();
      double e2 = du * du + dv * dv;
      if (e2 <= thr2) {
        ++count;
        cost += e2;
        if (mask) (*mask)[i] = 1;
      } else {
        cost += thr2;
      }
    }
    if (cost_out) *cost_out = cost;
    return count;
  };

  geom::Pose best_pose;
  int best_count = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  int64_t needed = cfg.max_iter;
  int trials = 0;
  for (; trials < cfg.max_iter && trials < needed; ++trials) {
    CorrespondenceSet minimal = weighted_sample(working, 6, rng);
    geom::Pose hyp;
    try {
      hyp = solve_pnp(minimal, k);
    } catch (const Error&) {
      continue;  // degenerate or behind-camera draw
    }
    double cost = 0;
    int count = count_inliers(hyp, working, nullptr, &cost);
    if (count > best_count || (count == best_count && cost < best_cost)) {
      best_count = count;
      best_cost = cost;
      best_pose = hyp;
      if (count >= cfg.min_inliers) {
        double w_in = double(count) / double(m);
        double p_fail = 1.0 - std::pow(w_in, 6);
        if (p_fail < 1e-12) {
          needed = trials + 1;
        } else {
          needed = int64_t(
              std::ceil(std::log(1.0 - cfg.success_conf) / std::log(p_fail)));
        }
      }
    }
  }

  if (best_count < cfg.min_inliers)
    fail(ErrorKind::NoConsensus, "best hypothesis supports only " + std::to_string(best_count) +
                                     " of " + std::to_string(m) + " points");

  // final refit on the consensus set
  std::vector<uint8_t> wmask;
  count_inliers(best_pose, working, &wmask, nullptr);
  CorrespondenceSet refit;
  for (size_t i = 0; i < working.size(); ++i) {
    if (wmask[i]) refit.push(working.px[i], working.ref3d[i],
                             cfg.refit_weighted ? working.conf[i] : 1.0);
  }
  geom::Pose final_pose = best_pose;
  if (int(refit.size()) >= 6) {
    try {
      final_pose = solve_pnp(refit, k);
    } catch (const Error&) {
      final_pose = best_pose;  // keep the hypothesis if the refit degenerates
    }
  }

  RobustResult res;
  res.pose = final_pose;
  res.trials = trials;
  res.n_inliers = count_inliers(final_pose, c, &res.inliers, nullptr);
  double err_sum = 0;
  int err_n = 0;
  for (size_t i = 0; i < c.size(); ++i) {
    if (!res.inliers[i]) continue;
    Vec3 q = final_pose.r * c.ref3d[i] + final_pose.t;
    double du = k.fx * q.x() / q.z() + k.cx - c.px[i].x();
    double dv = k.fy * q.y() / q.z() + k.cy - c.px[i].y();
    err_sum += std::sqrt(du * du + dv * dv);
    ++err_n;
  }
  res.mean_inlier_reproj_px = err_n ? err_sum / err_n : 0.0;
  return res;
}

}  // namespace mfos::pnp
