#pragma once

// Model checkpoints as JSON. Doubles are written in shortest round-trip form,
// so save -> load reproduces every parameter bit for bit.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "asap/error.hpp"
#include "asap/model.hpp"

namespace asap {

inline constexpr const char* kCheckpointFormat = "asap-softmax-linear";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  const auto w = ck.params.weights.entries();
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"classes", ck.params.classes()},
          {"dim", ck.params.dim()},
          {"seed", ck.seed},
          {"weights", std::vector<double>(w.begin(), w.end())},
          {"biases", ck.params.biases}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw ConfigError("checkpoint: unknown format");
    if (j.at("version").get<int>() != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version");
    const auto classes = j.at("classes").get<std::size_t>();
    const auto dim = j.at("dim").get<std::size_t>();
    Checkpoint ck;
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.params.weights = Matrix(classes, dim, j.at("weights").get<std::vector<double>>());
    ck.params.biases = j.at("biases").get<std::vector<double>>();
    if (ck.params.biases.size() != classes) throw ConfigError("checkpoint: bias count mismatch");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  } catch (const StructuralError& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << checkpoint_to_json(ck).dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace asap
