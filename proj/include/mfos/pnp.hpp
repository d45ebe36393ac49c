#pragma once

#include <vector>

#include "mfos/geom.hpp"
#include "mfos/prediction.hpp"
#include "mfos/rng.hpp"

namespace mfos::pnp {

using geom::Vec2;
using geom::Vec3;

// Pixel / 3D-point / confidence triples. ref3d may hold normalized reference
// coordinates (as produced by extract_correspondences) or metric object
// coordinates (after denormalize); the solvers expect meters.
struct CorrespondenceSet {
  std::vector<Vec2> px;
  std::vector<Vec3> ref3d;
  std::vector<double> conf;

  size_t size() const { return px.size(); }
  void push(const Vec2& p, const Vec3& x, double c) {
    px.push_back(p);
    ref3d.push_back(x);
    conf.push_back(c);
  }
};

struct PnPConfig {
  double conf_threshold = 2.5;  // tau filter on the dense map
  int n_samples = 1024;         // working-set size drawn by confidence
  int max_iter = 1000;          // RANSAC trial budget
  double reproj_px = 5.0;       // inlier gate
  int min_inliers = 6;
  bool refit_weighted = true;   // weight the final refit by tau
  double success_conf = 0.999;  // early-exit confidence for the trial budget
  double conf_clamp = 5.0;      // activation clamp, mirrors the loss module
};

// Pixels whose confidence tau = exp(clamp(raw)) reaches cfg.conf_threshold
// become correspondences at pixel centers. TooFewPoints when fewer than
// cfg.min_inliers survive.
CorrespondenceSet extract_correspondences(const DensePrediction& pred, const PnPConfig& cfg);

// Reference coordinates -> metric object coordinates.
CorrespondenceSet denormalize(const CorrespondenceSet& c, const geom::RefFrame& frame);

// n draws without replacement with probability proportional to conf
// (Efraimidis-Spirakis keys); identity when |c| <= n.
CorrespondenceSet weighted_sample(const CorrespondenceSet& c, int n, Rng& rng);

// Pose minimizing sum_j conf_j * ||project(k, R x_j + t) - px_j||^2 to a
// local optimum: normalized DLT (planar-aware) initialization followed by
// damped Gauss-Newton. Throws DegenerateConfiguration / BehindCamera.
geom::Pose solve_pnp(const CorrespondenceSet& c, const geom::Intrinsics& k);

struct RobustResult {
  geom::Pose pose;
  std::vector<uint8_t> inliers;  // over the input set, from the final pose
  int n_inliers = 0;
  double mean_inlier_reproj_px = 0.0;
  int trials = 0;
};

// RANSAC over a confidence-weighted working set of cfg.n_samples points:
// minimal 6-point hypotheses, reprojection gating at cfg.reproj_px, final
// weighted refit on the best consensus. NoConsensus when the best hypothesis
// supports fewer than cfg.min_inliers points.
RobustResult robust_pnp(const CorrespondenceSet& c, const geom::Intrinsics& k,
                        const PnPConfig& cfg, Rng& rng);

}  // namespace mfos::pnp
