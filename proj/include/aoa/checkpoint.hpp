#pragma once

// JSON parameter container. Layout (see docs/file_formats.md):
//
//   {
//     "format": "aoa-checkpoint",
//     "version": 1,
//     "kind": "aoa_reader" | "sent_reader" | "weighting",
//     "meta": {"seed": ..., "config_hash": "...", "git_describe": "..."},
//     "config": {...},            model hyperparameters
//     "vocab": ["[PAD]", ...],    absent for the weighting model
//     "params": {"<name>": {"shape": [..], "values": [..]}, ...}
//   }
//
// Values are written with round-trip precision, so save -> load is exact.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "aoa/autodiff.hpp"
#include "aoa/util.hpp"

namespace aoa {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ArtifactMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string git_describe{kVersion};

  json to_json() const { return {{"seed", seed}, {"config_hash", config_hash}, {"git_describe", git_describe}}; }

  static ArtifactMeta for_config(std::uint64_t seed, const json& config) {
    ArtifactMeta m;
    m.seed = seed;
    m.config_hash = hex64(fnv1a(config.dump()));
    return m;
  }
};

inline json tensor_to_json(const Tensor& t) { return {{"shape", t.shape()}, {"values", t.values()}}; }

inline Tensor tensor_from_json(const json& j) {
  try {
    return Tensor(j.at("shape").get<Shape>(), j.at("values").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed tensor entry: ") + e.what());
  }
}

inline json params_to_json(const ParamStore& store) {
  json out = json::object();
  store.for_each([&](const Param& p) { out[p.name] = tensor_to_json(p.value); });
  return out;
}

inline Snapshot snapshot_from_json(const json& params) {
  Snapshot snap;
  for (auto it = params.begin(); it != params.end(); ++it) snap.emplace(it.key(), tensor_from_json(it.value()));
  return snap;
}

inline json make_checkpoint(std::string_view kind, const ArtifactMeta& meta, json config,
                            const ParamStore& store) {
  json j;
  j["format"] = "aoa-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = kind;
  j["meta"] = meta.to_json();
  j["config"] = std::move(config);
  j["params"] = params_to_json(store);
  return j;
}

inline void check_checkpoint(const json& j, std::string_view kind) {
  if (!j.is_object() || j.value("format", "") != "aoa-checkpoint") throw FormatError("not an aoa checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  }
  if (!kind.empty() && j.value("kind", "") != kind) {
    throw FormatError("checkpoint kind is '" + j.value("kind", std::string()) + "', expected '" +
                      std::string(kind) + "'");
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(1) + "\n"); }

}  // namespace aoa
