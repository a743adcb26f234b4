#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "glyco/nncore.hpp"

namespace glyco {

/// Self-describing JSON model file: named tensors with shapes, ADAM state,
/// the canonical config text and its hash.
struct Checkpoint {
  std::string kind;  // hybrid | blackbox | tcl
  std::string config_text;
  std::uint64_t seed = 0;
  std::vector<double> normalizer;
  std::vector<std::pair<std::string, nn::Matrix>> params;
  nn::AdamState adam;

  std::string config_hash() const;
};

Checkpoint capture_checkpoint(std::string kind, std::string config_text, std::uint64_t seed,
                              const nn::ParameterStore& store, const nn::AdamState& adam,
                              std::vector<double> normalizer = {});

/// Copies tensors into a store built with the same architecture. Throws
/// InvalidConfig on missing names or shape mismatches.
void restore_parameters(nn::ParameterStore& store, const Checkpoint& ckpt);

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace glyco
