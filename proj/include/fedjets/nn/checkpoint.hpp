#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedjets/nn/net.hpp"

namespace fedjets::nn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

// Layout: "FJET" | u16 version | u32 header length | header JSON |
// param_count little-endian float32. The header is {"spec": ..., "meta": ...}.
struct Checkpoint {
  NetSpec spec;
  ParamVector params;
  nlohmann::json meta = nlohmann::json::object();
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace fedjets::nn
