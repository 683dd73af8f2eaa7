#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slidemil/tensor.hpp"

namespace slidemil {

// Self-describing binary checkpoint: header (magic, version, kind, config
// JSON), then named weight blobs as raw little-endian 64-bit reals.
// Round-trips bit-exactly.
struct Checkpoint {
    std::string kind;  // "vit" | "mil"
    nlohmann::json config;
    std::vector<std::pair<std::string, Tensor>> blobs;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the canonical JSON dump; used for provenance and
// checkpoint/config mismatch detection.
std::uint64_t config_hash(const nlohmann::json& config);
std::string config_hash_hex(const nlohmann::json& config);

}  // namespace slidemil
