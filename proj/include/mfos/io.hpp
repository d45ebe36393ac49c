#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mfos/image.hpp"

namespace mfos::io {

// PNG (8-bit gray or RGB). read_png returns the channel count found in the
// file (1 or 3); palette/alpha/16-bit inputs are converted.
void write_png(const std::filesystem::path& path, const ImageU8& img);
ImageU8 read_png(const std::filesystem::path& path);

// Raw tensor container, little-endian throughout (see docs/formats.md):
//   magic  8 bytes  "MFTENSR\0"
//   u32    version  (1)
//   u8     dtype    (1 = f32, 2 = f64, 3 = u8)
//   u8[3]  padding  (zero)
//   u32    rank
//   u32    dims[rank]
//   payload, row-major
enum class RawDType : uint8_t { F32 = 1, F64 = 2, U8 = 3 };

struct RawTensor {
  RawDType dtype = RawDType::F32;
  std::vector<uint32_t> shape;
  std::vector<uint8_t> payload;

  size_t count() const;
  const float* as_f32() const;
  const uint8_t* as_u8() const;
};

void write_raw_tensor(const std::filesystem::path& path, RawDType dtype,
                      const std::vector<uint32_t>& shape, const void* data, size_t bytes);
RawTensor read_raw_tensor(const std::filesystem::path& path);

void write_raw_f32(const std::filesystem::path& path, const std::vector<uint32_t>& shape,
                   const std::vector<float>& data);
void write_raw_u8(const std::filesystem::path& path, const std::vector<uint32_t>& shape,
                  const std::vector<uint8_t>& data);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace mfos::io
