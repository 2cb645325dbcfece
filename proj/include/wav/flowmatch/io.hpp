#pragma once

// Field persistence: <base>.bin holds the parameters as little-endian
// float64, <base>.json the layer sizes, activation and a training-config hash.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "wav/core/error.hpp"
#include "wav/flowmatch/mlp.hpp"

namespace wav {

static_assert(std::endian::native == std::endian::little, "field files are written in host byte order");

inline void save_field(const MlpField& field, const std::filesystem::path& base, std::uint64_t config_hash) {
  const auto& s = field.shape();
  nlohmann::json header{{"format", "wav-mlp-field"},
                        {"version", 1},
                        {"activation", "tanh"},
                        {"input", s.input()},
                        {"dim_cond", s.dim_cond},
                        {"dim_x", s.dim_x},
                        {"hidden", s.hidden},
                        {"layers", {s.input(), s.hidden, s.hidden, s.dim_x}},
                        {"param_count", field.params().size()},
                        {"config_hash", config_hash}};
  std::ofstream bin(base.string() + ".bin", std::ios::binary | std::ios::trunc);
  bin.write(reinterpret_cast<const char*>(field.params().data()),
            static_cast<std::streamsize>(field.params().size() * sizeof(double)));
  std::ofstream js(base.string() + ".json", std::ios::trunc);
  js << header.dump(2) << '\n';
  if (!bin || !js) throw std::runtime_error("save_field: could not write " + base.string() + ".{bin,json}");
}

struct LoadedField {
  MlpField field;
  std::uint64_t config_hash = 0;
};

inline LoadedField load_field(const std::filesystem::path& base) {
  std::ifstream js(base.string() + ".json");
  if (!js) throw std::runtime_error("load_field: missing " + base.string() + ".json");
  const auto header = nlohmann::json::parse(js);
  require(header.value("format", "") == "wav-mlp-field", "load_field: not a field header");
  require(header.value("activation", "") == "tanh", "load_field: unsupported activation");
  const MlpShape shape{header.at("dim_cond").get<int>(), header.at("dim_x").get<int>(),
                       header.at("hidden").get<int>()};
  const auto count = header.at("param_count").get<long long>();
  require(count == shape.param_count(), "load_field: param_count disagrees with layer sizes");
  Vector params(count);
  std::ifstream bin(base.string() + ".bin", std::ios::binary);
  bin.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!bin || bin.gcount() != static_cast<std::streamsize>(count * sizeof(double))) {
    throw std::runtime_error("load_field: truncated parameter file " + base.string() + ".bin");
  }
  return {MlpField(shape, std::move(params)), header.at("config_hash").get<std::uint64_t>()};
}

}  // namespace wav
