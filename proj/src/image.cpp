#include "mfos/image.hpp"

#include <algorithm>
#include <cmath>

namespace mfos {

ImageF32 to_f32(const ImageU8& img) {
  ImageF32 out(img.width, img.height, img.channels);
  for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = float(img.px[i]) / 255.0f;
  return out;
}

ImageU8 to_u8(const ImageF32& img) {
  ImageU8 out(img.width, img.height, img.channels);
  for (size_t i = 0; i < img.px.size(); ++i) {
    float v = std::clamp(img.px[i], 0.0f, 1.0f);
    out.px[i] = uint8_t(std::lround(v * 255.0f));
  }
  return out;
}

void sample_bilinear(const ImageF32& img, double x, double y, float* out) {
  int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  double fx = x - x0, fy = y - y0;
  auto cl = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  int x0c = cl(x0, img.width), x1c = cl(x0 + 1, img.width);
  int y0c = cl(y0, img.height), y1c = cl(y0 + 1, img.height);
  for (int c = 0; c < img.channels; ++c) {
    double top = (1 - fx) * img.at(x0c, y0c, c) + fx * img.at(x1c, y0c, c);
    double bot = (1 - fx) * img.at(x0c, y1c, c) + fx * img.at(x1c, y1c, c);
    out[c] = float((1 - fy) * top + fy * bot);
  }
}

}  // namespace mfos
