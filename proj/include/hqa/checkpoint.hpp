#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hqa/network.hpp"

namespace hqa {

// Layout: "RGQM", version byte, u32 LE manifest length, UTF-8 JSON manifest
// (spec + ordered tensor names/shapes), then little-endian float32 weights in
// manifest order.
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkSpec spec;
  Parameters params;
};

std::vector<std::uint8_t> encode_checkpoint(const NetworkSpec& spec, const Parameters& params);
/// Throws CorruptCheckpoint.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Throws IoFailure.
void save_checkpoint(const Parameters& params, const NetworkSpec& spec, const std::filesystem::path& path);
/// Throws IoFailure, CorruptCheckpoint.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// NetworkSpec <-> JSON text used inside the manifest and CLI config.
std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);

}  // namespace hqa
