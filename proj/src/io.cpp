#include "mfos/io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "mfos/errors.hpp"

namespace mfos::io {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

constexpr char kRawMagic[8] = {'M', 'F', 'T', 'E', 'N', 'S', 'R', '\0'};
constexpr uint32_t kRawVersion = 1;

template <typename T>
void put_le(std::ofstream& os, T v) {
  uint8_t buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = uint8_t((uint64_t(v) >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::ifstream& is) {
  uint8_t buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= uint64_t(buf[i]) << (8 * i);
  return T(v);
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    fail(ErrorKind::InvalidArgument, "write_png supports 1 or 3 channels");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) fail(ErrorKind::IoError, "cannot open for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::IoError, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::IoError, "png write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(&img.px[size_t(y) * img.width * img.channels]);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) fail(ErrorKind::MissingFile, path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::IoError, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::ParseError, "not a readable png: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);  // palette -> rgb, gray<8 -> 8
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int w = int(png_get_image_width(png, info));
  int h = int(png_get_image_height(png, info));
  int c = int(png_get_channels(png, info));
  if (c != 1 && c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::ParseError, "unsupported png channel count");
  }
  ImageU8 img(w, h, c);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = &img.px[size_t(y) * w * c];
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

size_t RawTensor::count() const {
  size_t n = 1;
  for (uint32_t d : shape) n *= d;
  return n;
}

const float* RawTensor::as_f32() const {
  if (dtype != RawDType::F32) fail(ErrorKind::ParseError, "raw tensor is not f32");
  return reinterpret_cast<const float*>(payload.data());
}

const uint8_t* RawTensor::as_u8() const {
  if (dtype != RawDType::U8) fail(ErrorKind::ParseError, "raw tensor is not u8");
  return payload.data();
}

void write_raw_tensor(const std::filesystem::path& path, RawDType dtype,
                      const std::vector<uint32_t>& shape, const void* data, size_t bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::IoError, "cannot open for writing: " + path.string());
  os.write(kRawMagic, 8);
  put_le<uint32_t>(os, kRawVersion);
  uint8_t head[4] = {uint8_t(dtype), 0, 0, 0};
  os.write(reinterpret_cast<const char*>(head), 4);
  put_le<uint32_t>(os, uint32_t(shape.size()));
  for (uint32_t d : shape) put_le<uint32_t>(os, d);
  os.write(reinterpret_cast<const char*>(data), std::streamsize(bytes));
  if (!os) fail(ErrorKind::IoError, "short write: " + path.string());
}

RawTensor read_raw_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::MissingFile, path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kRawMagic, 8) != 0)
    fail(ErrorKind::ParseError, "bad raw tensor magic: " + path.string());
  uint32_t version = get_le<uint32_t>(is);
  if (version != kRawVersion) fail(ErrorKind::ParseError, "unsupported raw tensor version");
  uint8_t head[4];
  is.read(reinterpret_cast<char*>(head), 4);
  RawTensor t;
  t.dtype = RawDType(head[0]);
  size_t elem = t.dtype == RawDType::F32 ? 4 : t.dtype == RawDType::F64 ? 8 : 1;
  uint32_t rank = get_le<uint32_t>(is);
  if (rank > 8) fail(ErrorKind::ParseError, "raw tensor rank too large");
  t.shape.resize(rank);
  for (auto& d : t.shape) d = get_le<uint32_t>(is);
  t.payload.resize(t.count() * elem);
  is.read(reinterpret_cast<char*>(t.payload.data()), std::streamsize(t.payload.size()));
  if (!is) fail(ErrorKind::ParseError, "raw tensor truncated: " + path.string());
  return t;
}

void write_raw_f32(const std::filesystem::path& path, const std::vector<uint32_t>& shape,
                   const std::vector<float>& data) {
  write_raw_tensor(path, RawDType::F32, shape, data.data(), data.size() * 4);
}

void write_raw_u8(const std::filesystem::path& path, const std::vector<uint32_t>& shape,
                  const std::vector<uint8_t>& data) {
  write_raw_tensor(path, RawDType::U8, shape, data.data(), data.size());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::MissingFile, path.string());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::IoError, "cannot open for writing: " + path.string());
  os.write(content.data(), std::streamsize(content.size()));
  if (!os) fail(ErrorKind::IoError, "short write: " + path.string());
}

}  // namespace mfos::io
