#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mfos/geom.hpp"

namespace mfos::metrics {

using geom::Vec3;

struct MetricConfig {
  double proj2d_px = 5.0;
  double add_frac = 0.1;  // fraction of object diameter
  std::vector<std::pair<double, double>> cmdeg_thresholds = {{1, 1}, {3, 3}, {5, 5}};  // (cm, deg)
};

// (translation error in cm, rotation error in degrees); a pose passes a
// (c, d) threshold iff both are within bounds.
std::pair<double, double> cm_degree_err(const geom::Pose& pred, const geom::Pose& gt);

struct DistResult {
  double dist = 0;
  bool pass = false;
};

// Average distance between model points transformed by the two poses.
DistResult add(const geom::Pose& pred, const geom::Pose& gt, std::span<const Vec3> pts,
               double diameter, double add_frac = 0.1);

// Average point-to-set distance, for symmetric objects.
DistResult adds(const geom::Pose& pred, const geom::Pose& gt, std::span<const Vec3> pts,
                double diameter, double add_frac = 0.1);

// Mean pixel distance between the projected model points; BehindCamera if
// any transformed point has nonpositive depth under either pose.
DistResult proj2d(const geom::Pose& pred, const geom::Pose& gt, std::span<const Vec3> pts,
                  const geom::Intrinsics& k, double proj2d_px = 5.0);

// max pairwise distance, the object diameter used by the ADD threshold
double diameter(std::span<const Vec3> pts);

// Per-query evaluation record consumed by report().
struct QueryResult {
  std::string object_id;
  bool failed = false;  // pose estimation failed; counts against every metric
  double rot_deg = 0;
  double trans_m = 0;
  double diameter = 0;  // 0 when no model points are available
  std::optional<double> add_m;
  std::optional<double> adds_m;
  std::optional<double> proj2d_px;
};

// Aggregates per-object and mean accuracy-at-threshold percentages plus
// median errors; shape documented in docs/formats.md.
nlohmann::json report(std::span<const QueryResult> results, const MetricConfig& cfg);

}  // namespace mfos::metrics
