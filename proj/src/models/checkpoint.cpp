#include <bit>
#include <cstring>
#include <stdexcept>

#include "hippo/io_util.hpp"
#include "hippo/models.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace hippo::models {

namespace {

constexpr char kMagic[8] = {'H', 'I', 'P', 'P', 'O', 'C', 'K', 'P'};

template <typename U>
void append(std::vector<std::uint8_t>& out, U v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

template <typename U>
U read_at(const std::vector<std::uint8_t>& in, std::size_t offset) {
  if (offset + sizeof(U) > in.size()) throw io::InputError("checkpoint truncated");
  U v;
  std::memcpy(&v, in.data() + offset, sizeof(U));
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& metadata) {
  const auto state = model.state();
  nlohmann::json header;
  header["format"] = "hippo-checkpoint";
  header["version"] = kCheckpointVersion;
  header["dtype"] = "float32";
  header["config"] = to_json(model.config());
  header["metadata"] = metadata;
  auto& index = header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : state) {
    const auto& s = t.shape();
    index.push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}, {"count", t.size()}});
    offset += t.size();
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> bytes(kMagic, kMagic + 8);
  append<std::uint32_t>(bytes, kCheckpointVersion);
  append<std::uint64_t>(bytes, text.size());
  bytes.insert(bytes.end(), text.begin(), text.end());
  for (const auto& [name, t] : state) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
    bytes.insert(bytes.end(), p, p + t.size() * sizeof(float));
  }
  io::write_file_atomic(path, bytes);
}

Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata) {
  const auto bytes = io::read_file(path);
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw io::InputError(path.string() + ": not a hippo checkpoint (bad magic)");
  }
  const auto version = read_at<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    throw io::InputError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = read_at<std::uint64_t>(bytes, 12);
  const std::size_t header_start = 20;
  if (header_start + header_len > bytes.size()) throw io::InputError(path.string() + ": checkpoint truncated");
  const auto header = nlohmann::json::parse(bytes.begin() + header_start,
                                            bytes.begin() + static_cast<long>(header_start + header_len));
  if (!header.contains("version") || header["version"].get<std::uint32_t>() != kCheckpointVersion) {
    throw io::InputError(path.string() + ": checkpoint header lacks a supported version field");
  }

  Model model(model_config_from_json(header.at("config")), 0);
  const std::size_t payload = header_start + header_len;
  std::vector<std::pair<std::string, nn::Tensor<float>>> state;
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 4) throw io::InputError(path.string() + ": tensor shape must have 4 entries");
    const nn::Shape4 s{shape[0], shape[1], shape[2], shape[3]};
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<std::size_t>();
    if (count != s.numel()) throw io::InputError(path.string() + ": tensor count does not match shape");
    const std::size_t start = payload + offset * sizeof(float);
    if (start + count * sizeof(float) > bytes.size()) throw io::InputError(path.string() + ": checkpoint truncated");
    std::vector<float> values(count);
    std::memcpy(values.data(), bytes.data() + start, count * sizeof(float));
    state.emplace_back(entry.at("name").get<std::string>(), nn::Tensor<float>(s, std::move(values)));
  }
  model.load_state(state);
  if (metadata) *metadata = header.value("metadata", nlohmann::json::object());
  return model;
}

}  // namespace hippo::models
