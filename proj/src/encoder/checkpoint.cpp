#include "disco/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace disco {
namespace {

constexpr std::string_view kMagic = "DISCOCKP";
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw CheckpointError("checkpoint truncated");
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

nlohmann::json config_to_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab.size},
          {"vocab_scheme", c.vocab.scheme},
          {"embed_dim", c.embed_dim},
          {"pooling", std::string(pooling_name(c.pooling))},
          {"blocks", c.blocks},
          {"output_dim", c.output_dim},
          {"frozen", c.frozen},
          {"projection_dim", c.projection_dim}};
}

EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  try {
    c.vocab.size = j.at("vocab_size").get<std::size_t>();
    c.vocab.scheme = j.at("vocab_scheme").get<std::uint64_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.pooling = parse_pooling(j.at("pooling").get<std::string>());
    c.blocks = j.at("blocks").get<std::size_t>();
    c.output_dim = j.at("output_dim").get<std::size_t>();
    c.frozen = j.at("frozen").get<bool>();
    c.projection_dim = j.at("projection_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string serialize_checkpoint(const Model& model, const nlohmann::json& metadata) {
  model.validate();
  nlohmann::json arrays = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, tensor] : model.params) {
    arrays.push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
    offset += tensor.size();
  }
  const nlohmann::json header = {{"config", config_to_json(model.config)}, {"metadata", metadata}, {"arrays", arrays}};
  const std::string header_text = header.dump();

  std::string out(kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  out.reserve(out.size() + offset * sizeof(double));
  for (const auto& [name, tensor] : model.params) {
    const auto data = tensor.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size_bytes());
  }
  return out;
}

Model deserialize_checkpoint(std::string_view bytes, nlohmann::json* metadata) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw CheckpointError("not a checkpoint (bad magic)");
  std::size_t pos = kMagic.size();
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw CheckpointError("checkpoint header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  pos += header_len;

  Model model;
  model.config = config_from_json(header.at("config"));
  const std::size_t payload_doubles = (bytes.size() - pos) / sizeof(double);
  if ((bytes.size() - pos) % sizeof(double) != 0) throw CheckpointError("checkpoint payload not a whole number of doubles");
  try {
    for (const auto& entry : header.at("arrays")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(shape);
      if (offset + n > payload_doubles) throw CheckpointError("array '" + name + "' runs past the payload");
      std::vector<double> values(n);
      std::memcpy(values.data(), bytes.data() + pos + offset * sizeof(double), n * sizeof(double));
      model.params.emplace(name, Tensor(shape, std::move(values)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint array table: ") + e.what());
  }
  try {
    model.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
  if (metadata) *metadata = header.value("metadata", nlohmann::json::object());
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& metadata) {
  const std::string bytes = serialize_checkpoint(model, metadata);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str(), metadata);
}

}  // namespace disco
