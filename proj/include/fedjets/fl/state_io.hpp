#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedjets/fl/types.hpp"
#include "fedjets/nn/checkpoint.hpp"

namespace fedjets::fl {

inline constexpr std::uint16_t kStateVersion = 1;

// Layout: "FJSS" | u16 version | u32 header length | header JSON
// {round, method, seed, num_experts, has_gate} | per network (gate first,
// then experts) a u64 length and a FJET checkpoint blob.
struct SavedState {
  ServerState state;
  nn::NetSpec expert_spec;
  std::optional<nn::NetSpec> gate_spec;
  std::string method;
  std::uint64_t seed = 0;
};

std::vector<std::uint8_t> encode_state(const SavedState& saved);
SavedState decode_state(const std::vector<std::uint8_t>& bytes);

void save_state(const std::filesystem::path& path, const SavedState& saved);
SavedState load_state(const std::filesystem::path& path);

}  // namespace fedjets::fl
