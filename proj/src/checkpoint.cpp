#include "mfos/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mfos::engine {

namespace {

constexpr char kMagic[8] = {'M', 'F', 'O', 'S', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

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

void put_record(std::ofstream& os, uint8_t kind, const std::string& name, const Shape& shape,
                const float* data, int64_t n) {
  uint8_t head[4] = {kind, 0, 0, 0};
  os.write(reinterpret_cast<const char*>(head), 4);
  put_le<uint32_t>(os, uint32_t(name.size()));
  os.write(name.data(), std::streamsize(name.size()));
  put_le<uint32_t>(os, uint32_t(shape.size()));
  for (int64_t d : shape) put_le<uint32_t>(os, uint32_t(d));
  os.write(reinterpret_cast<const char*>(data), std::streamsize(n * 4));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore<float>& store,
                     nlohmann::json header) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::IoError, "cannot open for writing: " + path.string());

  header["store"] = {{"step", store.step}};
  std::string hj = header.dump();

  os.write(kMagic, 8);
  put_le<uint32_t>(os, kVersion);
  put_le<uint32_t>(os, 0);
  put_le<uint64_t>(os, hj.size());
  os.write(hj.data(), std::streamsize(hj.size()));

  uint32_t records = 0;
  for (const auto& name : store.names()) {
    records += 1;
    if (const auto* st = store.find_adam_state(name); st && !st->m.empty()) records += 2;
  }
  put_le<uint32_t>(os, records);
  for (const auto& name : store.names()) {
    const Tensor<float>& p = store.get(name);
    put_record(os, 0, name, p.shape(), p.data(), p.numel());
    if (const auto* st = store.find_adam_state(name); st && !st->m.empty()) {
      put_record(os, 1, name, p.shape(), st->m.data(), p.numel());
      put_record(os, 2, name, p.shape(), st->v.data(), p.numel());
    }
  }
  if (!os) fail(ErrorKind::IoError, "short write: " + path.string());
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, ParamStore<float>& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::MissingFile, path.string());

  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    fail(ErrorKind::ParseError, "bad checkpoint magic: " + path.string());
  if (get_le<uint32_t>(is) != kVersion) fail(ErrorKind::ParseError, "unsupported checkpoint version");
  get_le<uint32_t>(is);  // reserved

  uint64_t hj_len = get_le<uint64_t>(is);
  std::string hj(hj_len, '\0');
  is.read(hj.data(), std::streamsize(hj_len));
  nlohmann::json header = nlohmann::json::parse(hj, nullptr, false);
  if (header.is_discarded()) fail(ErrorKind::ParseError, "checkpoint header is not valid JSON");

  uint32_t records = get_le<uint32_t>(is);
  for (uint32_t r = 0; r < records; ++r) {
    uint8_t head[4];
    is.read(reinterpret_cast<char*>(head), 4);
    uint32_t name_len = get_le<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t rank = get_le<uint32_t>(is);
    Shape shape(rank);
    int64_t n = 1;
    for (auto& d : shape) {
      d = get_le<uint32_t>(is);
      n *= d;
    }
    std::vector<float> vals(static_cast<size_t>(n), 0.f);
    is.read(reinterpret_cast<char*>(vals.data()), std::streamsize(n * 4));
    if (!is) fail(ErrorKind::ParseError, "checkpoint truncated: " + path.string());
    switch (head[0]) {
      case 0:
        store.put(name, Tensor<float>::from_vector(shape, std::move(vals)));
        break;
      case 1:
        store.adam_state(name).m = std::move(vals);
        break;
      case 2:
        store.adam_state(name).v = std::move(vals);
        break;
      default:
        fail(ErrorKind::ParseError, "unknown checkpoint record kind");
    }
  }
  if (header.contains("store")) {
    store.step = header["store"].value("step", int64_t(0));
    header.erase("store");
  }
  return header;
}

}  // namespace mfos::engine
