#pragma once

#include <vector>

namespace mfos {

// Plain-array snapshot of a dense prediction for one query view: per-pixel
// reference coordinates and raw (pre-activation) confidence.
struct DensePrediction {
  int height = 0, width = 0;
  std::vector<float> coords;    // H*W*3
  std::vector<float> conf_raw;  // H*W

  const float* coord_at(int x, int y) const { return &coords[(size_t(y) * width + x) * 3]; }
  float raw_at(int x, int y) const { return conf_raw[size_t(y) * width + x]; }
};

}  // namespace mfos
