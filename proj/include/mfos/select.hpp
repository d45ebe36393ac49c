#pragma once

#include <span>
#include <vector>

#include "mfos/geom.hpp"
#include "mfos/rng.hpp"

namespace mfos::select {

enum class ViewMetric {
  Direction,  // angle between object-center-to-camera directions
  Geodesic,   // full SO(3) rotation angle
};

double view_distance(const geom::Pose& a, const geom::Pose& b,
                     ViewMetric metric = ViewMetric::Direction);

// Greedy farthest sampling: start from seed_idx, repeatedly add the view
// maximizing the minimum distance to the selected set; ties break to the
// lowest index.
std::vector<int> farthest_sample(std::span<const geom::Pose> poses, int k, int seed_idx,
                                 ViewMetric metric = ViewMetric::Direction);

// Training mix: n_random uniform draws without replacement, then greedy
// farthest completion conditioned on the drawn set.
std::vector<int> train_select(std::span<const geom::Pose> poses, int n_random, int n_total,
                              Rng& rng, ViewMetric metric = ViewMetric::Direction);

}  // namespace mfos::select
