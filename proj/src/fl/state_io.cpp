#include "fedjets/fl/state_io.hpp"

#include <cstring>

#include "fedjets/error.hpp"

namespace fedjets::fl {

namespace {

constexpr char kMagic[4] = {'F', 'J', 'S', 'S'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("state file truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(in[pos + i]) << (8 * i));
  pos += sizeof(T);
  return value;
}

void put_blob(std::vector<std::uint8_t>& out, const nn::NetSpec& spec, const nn::ParamVector& params) {
  const auto blob = nn::encode_checkpoint(nn::Checkpoint{spec, params, nlohmann::json::object()});
  put_le<std::uint64_t>(out, blob.size());
  out.insert(out.end(), blob.begin(), blob.end());
}

nn::Checkpoint get_blob(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  const auto len = get_le<std::uint64_t>(in, pos);
  if (len > in.size() - pos) throw IoError("state file truncated");
  std::vector<std::uint8_t> blob(in.begin() + static_cast<std::ptrdiff_t>(pos),
                                 in.begin() + static_cast<std::ptrdiff_t>(pos + len));
  pos += len;
  return nn::decode_checkpoint(blob);
}

}  // namespace

std::vector<std::uint8_t> encode_state(const SavedState& saved) {
  const auto& s = saved.state;
  if (s.gate.has_value() != saved.gate_spec.has_value()) throw ConfigError("gate and gate spec must come together");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint16_t>(out, kStateVersion);
  const std::string header = nlohmann::json{{"round", s.round},
                                            {"method", saved.method},
                                            {"seed", saved.seed},
                                            {"num_experts", s.experts.size()},
                                            {"has_gate", s.gate.has_value()}}
                                 .dump();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  if (s.gate) put_blob(out, *saved.gate_spec, *s.gate);
  for (const auto& e : s.experts) put_blob(out, saved.expert_spec, e);
  return out;
}

SavedState decode_state(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("not a FJSS state file");
  std::size_t pos = 4;
  const auto version = get_le<std::uint16_t>(bytes, pos);
  if (version != kStateVersion) throw IoError("unsupported state version " + std::to_string(version));
  const auto header_len = get_le<std::uint32_t>(bytes, pos);
  if (header_len > bytes.size() - pos) throw IoError("state header truncated");
  SavedState saved;
  std::size_t num_experts = 0;
  bool has_gate = false;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                              bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
    saved.state.round = header.at("round").get<std::size_t>();
    saved.method = header.at("method").get<std::string>();
    saved.seed = header.at("seed").get<std::uint64_t>();
    num_experts = header.at("num_experts").get<std::size_t>();
    has_gate = header.at("has_gate").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad state header: ") + e.what());
  }
  pos += header_len;
  if (has_gate) {
    auto g = get_blob(bytes, pos);
    saved.gate_spec = g.spec;
    saved.state.gate = std::move(g.params);
  }
  if (num_experts == 0) throw IoError("state holds no experts");
  for (std::size_t i = 0; i < num_experts; ++i) {
    auto e = get_blob(bytes, pos);
    if (i == 0) saved.expert_spec = e.spec;
    else if (!(e.spec == saved.expert_spec)) throw IoError("experts in a state file must share one spec");
    saved.state.experts.push_back(std::move(e.params));
  }
  if (pos != bytes.size()) throw IoError("trailing bytes after state");
  return saved;
}

void save_state(const std::filesystem::path& path, const SavedState& saved) {
  nn::write_file_bytes(path, encode_state(saved));
}

SavedState load_state(const std::filesystem::path& path) { return decode_state(nn::read_file_bytes(path)); }

}  // namespace fedjets::fl
