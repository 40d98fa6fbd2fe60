#include "fedjets/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fedjets/error.hpp"

namespace fedjets::nn {

namespace {

constexpr char kMagic[4] = {'F', 'J', 'E', 'T'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("checkpoint truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(in[pos + i]) << (8 * i));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  check_params(ckpt.spec, ckpt.params);
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint16_t>(out, kCheckpointVersion);
  const std::string header = nlohmann::json{{"spec", ckpt.spec}, {"meta", ckpt.meta}}.dump();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (double v : ckpt.params.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("not a FJET checkpoint");
  std::size_t pos = 4;
  const auto version = get_le<std::uint16_t>(bytes, pos);
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get_le<std::uint32_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw IoError("checkpoint header truncated");
  Checkpoint ckpt;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  pos += header_len;
  try {
    ckpt.spec = header.at("spec").get<NetSpec>();
    if (header.contains("meta")) ckpt.meta = header["meta"];
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header has no valid spec: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint header has no valid spec: ") + e.what());
  }
  const std::size_t count = ckpt.spec.param_count();
  if (bytes.size() - pos != count * 4)
    throw IoError("checkpoint payload holds " + std::to_string((bytes.size() - pos) / 4) + " floats, spec needs " +
                  std::to_string(count));
  ckpt.params.spec_hash = ckpt.spec.hash();
  ckpt.params.values.resize(count);
  for (auto& v : ckpt.params.values) v = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos)));
  return ckpt;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace fedjets::nn
