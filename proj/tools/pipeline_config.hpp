#pragma once

// Pipeline configuration: a flat key=value file, overridable from the command
// line. Every key has a default, so an empty file is a valid config.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sapa/anchors.hpp"
#include "sapa/evalkit.hpp"
#include "sapa/synthetic.hpp"
#include "sapa/trainer.hpp"

namespace sapa::cli {

struct PipelineConfig {
  std::map<std::string, std::string> values;  // every known key, resolved

  std::filesystem::path out_dir;
  std::filesystem::path source_data;
  std::filesystem::path target_data;
  std::string source_corpus;
  std::string target_corpus;
  std::uint64_t seed = 0;
  double tau = 0.0;
  bool unweighted = false;
  AnchorRule anchor_rule;
  TrainConfig train;
  std::size_t ablate_seeds = 0;
  std::size_t threads = 1;
  GroupOptions transfer;
  SyntheticSpec synth;

  // 16 hex digits of FNV-1a over the sorted key=value lines of hashed keys.
  std::string hash() const;
  // The hashed lines, one "key=value" per line.
  std::string canonical() const;
};

// False for keys that cannot change results (out_dir, threads); these are
// left out of the hash and of the config stamped into artifacts.
bool hashed_key(const std::string& key);

// Known keys with their defaults.
const std::map<std::string, std::string>& default_values();

// Reads "key = value" lines; '#' starts a comment. Throws ConfigError on
// malformed lines or unknown keys.
std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin);

// Defaults, then the file (if any), then overrides in order. Throws
// ConfigError; MissingArtifactError when the file does not exist.
PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace sapa::cli
