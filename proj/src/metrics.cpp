#include "mfos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mfos::metrics {

std::pair<double, double> cm_degree_err(const geom::Pose& pred, const geom::Pose& gt) {
  double cm = (pred.t - gt.t).norm() * 100.0;
  double deg = geom::geodesic_angle_deg(pred.r, gt.r);
  return {cm, deg};
}

DistResult add(const geom::Pose& pred, const geom::Pose& gt, std::span<const Vec3> pts,
               double diameter, double add_frac) {
  if (pts.empty() || !(diameter > 0)) fail(ErrorKind::InvalidArgument, "add: needs points and diameter");
  double acc = 0;
  for (const auto& p : pts) acc += (pred.apply(p) - gt.apply(p)).norm();
  DistResult r;
  r.dist = acc / double(pts.size());
  r.pass = r.dist < add_frac * diameter;
  return r;
}

DistResult adds(const geom::Pose& pred, const geom::Pose& gt, std::span<const Vec3> pts,
                double diameter, double add_frac) {
  if (pts.empty() || !(diameter > 0)) fail(ErrorKind::InvalidArgument, "adds: needs points and diameter");
  std::vector<Vec3> gt_pts(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) gt_pts[i] = gt.apply(pts[i]);
  double acc = 0;
  for (const auto& p : pts) {
    Vec3 tp = pred.apply(p);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& g : gt_pts) best = std::min(best, (tp - g).norm());
    acc += best;
  }
  DistResult r;
  r.dist = acc / double(pts.size());
  r.pass = r.dist < add_frac * diameter;
  return r;
}

DistResult proj2d(const geom::Pose& pred, const geom::Pose& gt, std::span<const Vec3> pts,
                  const geom::Intrinsics& k, double proj2d_px) {
  if (pts.empty()) fail(ErrorKind::InvalidArgument, "proj2d: needs points");
  double acc = 0;
  for (const auto& p : pts) {
    Vec3 a = pred.apply(p), b = gt.apply(p);
    if (a.z() <= 1e-9 || b.z() <= 1e-9)
      fail(ErrorKind::BehindCamera, "proj2d: point behind camera");
    acc += (geom::project(k, a) - geom::project(k, b)).norm();
  }
  DistResult r;
  r.dist = acc / double(pts.size());
  r.pass = r.dist < proj2d_px;
  return r;
}

double diameter(std::span<const Vec3> pts) {
  double best = 0;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j)
      best = std::max(best, (pts[i] - pts[j]).norm());
  return best;
}

namespace {

std::string threshold_key(double cm, double deg) {
  auto fmt = [](double v) {
    if (v == std::floor(v)) return std::to_string(int64_t(v));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return std::string(buf);
  };
  return fmt(cm) + "cm_" + fmt(deg) + "deg";
}

double pct(int64_t hits, int64_t total) {
  return total ? 100.0 * double(hits) / double(total) : 0.0;
}

std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void put_median(nlohmann::json& j, const std::string& key, const std::optional<double>& m) {
  if (m) j[key] = *m;
}

}  // namespace

nlohmann::json report(std::span<const QueryResult> results, const MetricConfig& cfg) {
  nlohmann::json out;
  out["config"] = {{"proj2d_px", cfg.proj2d_px},
                   {"add_frac", cfg.add_frac},
                   {"cmdeg_thresholds", cfg.cmdeg_thresholds}};
  out["objects"] = nlohmann::json::array();

  // group by object id, preserving first-seen order
  std::vector<std::string> order;
  std::map<std::string, std::vector<const QueryResult*>> groups;
  for (const auto& r : results) {
    if (!groups.count(r.object_id)) order.push_back(r.object_id);
    groups[r.object_id].push_back(&r);
  }

  struct Acc {
    std::vector<double> per_object;  // object-level percentages
  };
  std::map<std::string, Acc> mean_acc;
  std::vector<double> all_rot, all_trans, all_trans_rel;

  for (const auto& id : order) {
    const auto& rs = groups[id];
    nlohmann::json obj;
    obj["id"] = id;
    obj["n_queries"] = rs.size();
    int64_t n_failed = 0;
    for (auto* r : rs) n_failed += r->failed ? 1 : 0;
    obj["n_failed"] = n_failed;

    nlohmann::json acc;
    nlohmann::json cmdeg;
    for (auto [cm_thr, deg_thr] : cfg.cmdeg_thresholds) {
      int64_t hits = 0;
      for (auto* r : rs)
        if (!r->failed && r->trans_m * 100.0 <= cm_thr && r->rot_deg <= deg_thr) ++hits;
      std::string key = threshold_key(cm_thr, deg_thr);
      cmdeg[key] = pct(hits, int64_t(rs.size()));
      mean_acc["cmdeg." + key].per_object.push_back(cmdeg[key].get<double>());
    }
    acc["cmdeg"] = cmdeg;

    // model-point metrics apply to queries whose object carries vertices
    // (diameter > 0); failed queries count against the column
    auto dist_col = [&](const char* name, auto getter, bool is_px) {
      int64_t hits = 0, total = 0;
      for (auto* r : rs) {
        if (!(r->diameter > 0)) continue;
        ++total;
        auto v = getter(r);
        if (r->failed || !v) continue;
        double bound = is_px ? cfg.proj2d_px : cfg.add_frac * r->diameter;
        if (*v < bound) ++hits;
      }
      if (total) {
        acc[name] = pct(hits, total);
        mean_acc[name].per_object.push_back(acc[name].get<double>());
      }
    };
    dist_col("add", [](const QueryResult* r) { return r->add_m; }, false);
    dist_col("adds", [](const QueryResult* r) { return r->adds_m; }, false);
    dist_col("proj2d", [](const QueryResult* r) { return r->proj2d_px; }, true);
    obj["acc"] = acc;

    std::vector<double> rot, trans, trans_rel, addv, projv;
    for (auto* r : rs) {
      if (r->failed) continue;
      rot.push_back(r->rot_deg);
      trans.push_back(r->trans_m);
      all_rot.push_back(r->rot_deg);
      all_trans.push_back(r->trans_m);
      if (r->diameter > 0) {
        trans_rel.push_back(r->trans_m / r->diameter);
        all_trans_rel.push_back(r->trans_m / r->diameter);
      }
      if (r->add_m) addv.push_back(*r->add_m);
      if (r->proj2d_px) projv.push_back(*r->proj2d_px);
    }
    nlohmann::json med;
    put_median(med, "rot_deg", median(rot));
    put_median(med, "trans_m", median(trans));
    put_median(med, "trans_over_diameter", median(trans_rel));
    put_median(med, "add_m", median(addv));
    put_median(med, "proj2d_px", median(projv));
    obj["median"] = med;
    out["objects"].push_back(obj);
  }

  nlohmann::json mean;
  for (const auto& [key, acc] : mean_acc) {
    double s = 0;
    for (double v : acc.per_object) s += v;
    double m = acc.per_object.empty() ? 0.0 : s / double(acc.per_object.size());
    if (key.rfind("cmdeg.", 0) == 0) {
      mean["cmdeg"][key.substr(6)] = m;
    } else {
      mean[key] = m;
    }
  }
  out["mean"] = mean;

  nlohmann::json omed;
  put_median(omed, "rot_deg", median(all_rot));
  put_median(omed, "trans_m", median(all_trans));
  put_median(omed, "trans_over_diameter", median(all_trans_rel));
  out["overall_median"] = omed;
  return out;
}

}  // namespace mfos::metrics
