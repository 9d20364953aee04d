#pragma once

// Checkpoint container:
//
//   "DISCOCKP"            8-byte magic
//   u32 version           little-endian, currently 1
//   u64 header_bytes      length of the JSON header that follows
//   header                {"config": {...}, "metadata": {...},
//                          "arrays": [{"name", "shape", "offset"}]}
//   payload               raw little-endian IEEE-754 doubles, arrays in
//                         name order; "offset" counts doubles
//
// Identical models and metadata serialise to identical bytes.

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "disco/encoder.hpp"

namespace disco {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json config_to_json(const EncoderConfig& config);
EncoderConfig config_from_json(const nlohmann::json& j);

std::string serialize_checkpoint(const Model& model, const nlohmann::json& metadata = nlohmann::json::object());
Model deserialize_checkpoint(std::string_view bytes, nlohmann::json* metadata = nullptr);

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const nlohmann::json& metadata = nlohmann::json::object());
Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

}  // namespace disco
