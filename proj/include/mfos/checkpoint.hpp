#pragma once

#include <filesystem>

#include <json.hpp>

#include "mfos/engine.hpp"

namespace mfos::engine {

// Binary checkpoint container (see docs/formats.md):
//   16-byte header: "MFOSCKPT" + u32 version (1) + u32 zero
//   u64 header_json_len, header JSON bytes (UTF-8)
//   u32 record count
//   records: u8 kind (0 param, 1 adam m, 2 adam v), u8[3] zero,
//            u32 name_len, name bytes, u32 rank, u32 dims[rank],
//            f32 little-endian payload
// The optimizer step count rides in the header JSON under "store". Saving
// and loading round-trips parameters and moments bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ParamStore<float>& store,
                     nlohmann::json header);

// Replaces the store contents with the checkpoint's records; returns the
// header JSON (with the internal "store" block removed).
nlohmann::json load_checkpoint(const std::filesystem::path& path, ParamStore<float>& store);

}  // namespace mfos::engine
