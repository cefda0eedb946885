#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dadl/tensor.hpp"

namespace dadl {

// Standard IEEE CRC32 (zlib-compatible), running form.
std::uint32_t crc32_update(std::uint32_t crc, const void* data, std::size_t len);
inline std::uint32_t crc32(const void* data, std::size_t len) { return crc32_update(0, data, len); }

// On-disk tensor container, also used for dataset fixtures:
//   "DADS" | version u32 LE | payload | crc32(payload) u32 LE
// payload = meta_len u64 | meta JSON (UTF-8) | count u64 |
//           per tensor: name_len u64 | name | rank u64 | dims u64... |
//                       float32 LE data
// Tensors are stored at 32-bit precision; loading widens back to doubles.
struct TensorContainer {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_container(const std::string& path, const TensorContainer& container);
TensorContainer load_container(const std::string& path);

// Writes to path + ".tmp" then renames, so readers never observe partial files.
void atomic_write_file(const std::string& path, const std::string& contents);

}  // namespace dadl
