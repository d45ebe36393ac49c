#include "mfos/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mfos::select {

double view_distance(const geom::Pose& a, const geom::Pose& b, ViewMetric metric) {
  if (metric == ViewMetric::Geodesic) return geom::geodesic_angle_deg(a.r, b.r);
  geom::Vec3 ca = a.camera_center();
  geom::Vec3 cb = b.camera_center();
  double na = ca.norm(), nb = cb.norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;  // camera at the object center
  double c = std::clamp(ca.dot(cb) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

namespace {

std::vector<int> greedy_complete(std::span<const geom::Pose> poses, std::vector<int> selected,
                                 int n_total, ViewMetric metric) {
  const int n = int(poses.size());
  std::vector<double> min_dist(size_t(n), std::numeric_limits<double>::infinity());
  std::vector<uint8_t> taken(size_t(n), 0);
  for (int s : selected) taken[size_t(s)] = 1;
  for (int i = 0; i < n; ++i) {
    if (taken[size_t(i)]) continue;
    for (int s : selected)
      min_dist[size_t(i)] = std::min(min_dist[size_t(i)], view_distance(poses[size_t(i)], poses[size_t(s)], metric));
  }
  while (int(selected.size()) < n_total) {
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (taken[size_t(i)]) continue;
      if (min_dist[size_t(i)] > best_d) {  // strict: ties keep the lowest index
        best_d = min_dist[size_t(i)];
        best = i;
      }
    }
    selected.push_back(best);
    taken[size_t(best)] = 1;
    for (int i = 0; i < n; ++i) {
      if (taken[size_t(i)]) continue;
      min_dist[size_t(i)] =
          std::min(min_dist[size_t(i)], view_distance(poses[size_t(i)], poses[size_t(best)], metric));
    }
  }
  return selected;
}

}  // namespace

std::vector<int> farthest_sample(std::span<const geom::Pose> poses, int k, int seed_idx,
                                 ViewMetric metric) {
  const int n = int(poses.size());
  if (k < 1 || k > n) fail(ErrorKind::BadK, "farthest_sample: k out of range");
  if (seed_idx < 0 || seed_idx >= n) fail(ErrorKind::BadK, "farthest_sample: seed out of range");
  return greedy_complete(poses, {seed_idx}, k, metric);
}

std::vector<int> train_select(std::span<const geom::Pose> poses, int n_random, int n_total,
                              Rng& rng, ViewMetric metric) {
  const int n = int(poses.size());
  if (n_total < 1 || n_total > n) fail(ErrorKind::BadK, "train_select: n_total out of range");
  if (n_random < 0 || n_random > n_total) fail(ErrorKind::BadK, "train_select: bad n_random");
  if (n_random == 0) {
    int seed = int(rng.uniform_int(0, n - 1));
    return farthest_sample(poses, n_total, seed, metric);
  }
  std::vector<int> drawn = rng.sample_without_replacement(n, n_random);
  return greedy_complete(poses, std::move(drawn), n_total, metric);
}

}  // namespace mfos::select
