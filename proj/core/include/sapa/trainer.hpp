#pragma once

// Mini-batch Adam training of the fused classifier with per-epoch triplet
// re-mining and early stopping on validation UAR.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sapa/anchors.hpp"
#include "sapa/embstore.hpp"
#include "sapa/model.hpp"
#include "sapa/simgraph.hpp"
#include "sapa/triplets.hpp"

namespace sapa {

enum class TrainMode { sapa, only_s, only_p, sapa_only_s, sapa_only_p };

inline constexpr std::array<TrainMode, 5> kAllModes{TrainMode::sapa, TrainMode::only_s,
                                                     TrainMode::only_p, TrainMode::sapa_only_s,
                                                     TrainMode::sapa_only_p};

// "SAPA", "Only-S", "Only-P", "SAPA-Only-S", "SAPA-Only-P"
std::string_view to_string(TrainMode m) noexcept;
std::optional<TrainMode> parse_mode(std::string_view s) noexcept;

// Only-S / Only-P read one embedding kind and drop both triplet losses;
// SAPA-Only-S / SAPA-Only-P keep the fused input and one triplet loss.
ModelConfig configure_for_mode(ModelConfig base, TrainMode mode);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;  // decoupled, scaled by the learning rate
  std::size_t max_epochs = 70;
  std::size_t batch_size = 64;
  std::size_t early_stop_patience = 7;
  std::uint64_t seed = 0;
  MiningConfig mining;  // anchors_per_batch is per optimizer step; seed is ignored
  TrainMode mode = TrainMode::sapa;
  ModelConfig model;    // before mode gating
  AdamConfig adam;
  std::string source_corpus = "src";

  // Throws ConfigError.
  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double ser = 0.0;       // batch means, averaged over the epoch's batches
  double phoneme = 0.0;
  double speaker = 0.0;
  double total = 0.0;
  double validation_uar = 0.0;
  std::size_t phoneme_triplets = 0;
  std::size_t speaker_triplets = 0;
};

enum class StopReason { max_epochs, early_stopping, diverged };
std::string_view to_string(StopReason r) noexcept;

struct TrainReport {
  TrainMode mode = TrainMode::sapa;
  std::uint64_t seed = 0;
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch finished
  double best_validation_uar = 0.0;
  StopReason stop_reason = StopReason::max_epochs;
  std::size_t train_utterances = 0;
  std::size_t validation_utterances = 0;
  std::vector<std::string> notices;
};

struct TrainResult {
  ModelParams params;  // parameters of the best validation epoch
  TrainReport report;
};

// Trains on the source corpus's train split and validates on its validation
// split. Triplets are mined from the train-split records of every corpus.
// Throws InsufficientDataError when either source split is empty.
TrainResult train(std::span<const EmbeddingRecord> records, const TrainConfig& cfg,
                  const AnchorSet& anchors, const PartitionMap& partitions);

struct SuiteRun {
  TrainMode mode = TrainMode::sapa;
  std::uint64_t seed = 0;
  std::optional<TrainResult> result;
  std::string error;  // set when training threw
};

// Every mode for every seed, in seed-major order. Failures are recorded and
// the suite continues. Runs execute in parallel on up to `threads` threads
// (0 = hardware concurrency); results do not depend on the thread count.
std::vector<SuiteRun> run_mode_suite(std::span<const EmbeddingRecord> records,
                                     const TrainConfig& base, std::span<const std::uint64_t> seeds,
                                     const AnchorSet& anchors, const PartitionMap& partitions,
                                     std::span<const TrainMode> modes = kAllModes,
                                     std::size_t threads = 1);

void write_report_json(std::ostream& out, const TrainReport& report);

}  // namespace sapa
