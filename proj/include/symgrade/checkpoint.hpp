// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace symgrade {

inline constexpr char kCheckpointMagic[4] = {'C', 'K', 'O', 'A'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<double> data;

    friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

/// On disk, little-endian throughout:
///   "CKOA" | u32 version | u32 count | count x array     (parameters)
///   u32 count | count x array                            (optimizer state)
///   u32 length | UTF-8 JSON                              (epoch, config snapshot)
/// where array = u16 name length | name | u8 rank | rank x u64 dim | f64 data.
struct Checkpoint {
    std::vector<NamedArray> params;
    std::vector<NamedArray> optimizer;
    std::uint64_t epoch = 0;
    nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws FormatError on bad magic/version, truncation or trailing bytes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace symgrade
