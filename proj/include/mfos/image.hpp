#pragma once

#include <cstdint>
#include <vector>

#include "mfos/errors.hpp"

namespace mfos {

// Row-major interleaved images.
struct ImageU8 {
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> px;

  ImageU8() = default;
  ImageU8(int w, int h, int c) : width(w), height(h), channels(c), px(size_t(w) * h * c, 0) {}

  uint8_t& at(int x, int y, int c) { return px[(size_t(y) * width + x) * channels + c]; }
  uint8_t at(int x, int y, int c) const { return px[(size_t(y) * width + x) * channels + c]; }
};

struct ImageF32 {
  int width = 0, height = 0, channels = 0;
  std::vector<float> px;

  ImageF32() = default;
  ImageF32(int w, int h, int c) : width(w), height(h), channels(c), px(size_t(w) * h * c, 0.f) {}

  float& at(int x, int y, int c) { return px[(size_t(y) * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return px[(size_t(y) * width + x) * channels + c]; }
};

ImageF32 to_f32(const ImageU8& img);  // values scaled to [0,1]
ImageU8 to_u8(const ImageF32& img);   // clamped to [0,1], rounded

// Bilinear sample at continuous pixel-index coordinates (x, y measured so
// that integer coordinates land on pixel centers). Out-of-bounds reads are
// clamped to the border.
void sample_bilinear(const ImageF32& img, double x, double y, float* out);

}  // namespace mfos
