#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nri/core.hpp"
#include "nri/training.hpp"

namespace nri {

// Single-file container of named float64 tensors:
//   line 1: "NRICKPT1"
//   line 2: byte length of the JSON metadata
//   JSON metadata, including "tensors": [{name, rows, cols}, ...]
//   raw little-endian row-major payloads in the listed order
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* find(const std::string& name) const;
  const Matrix& at(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Training state in checkpoint form. Parameter tensors are stored under
// "model/", "best/", "adam_m/" and "adam_v/" prefixes.
Checkpoint make_checkpoint(TrainState& state, const Normalizer& normalizer, const std::string& config_hash,
                           std::uint64_t seed, bool with_optimizer);

// Copies stored tensors into `state` (whose parameter shapes are already
// built) and returns the normalizer. Only entries present are restored.
Normalizer restore_checkpoint(const Checkpoint& ckpt, TrainState& state);

// Throws ConfigError unless the stored hash equals `expected` or `force`.
void check_config_hash(const Checkpoint& ckpt, const std::string& expected, bool force);

}  // namespace nri
