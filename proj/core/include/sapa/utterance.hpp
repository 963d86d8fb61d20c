#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sapa/embstore.hpp"

namespace sapa {

// All embeddings of one utterance, gathered from its records.
struct Utterance {
  std::string corpus_id;
  std::string speaker_id;
  std::string utterance_id;
  Emotion emotion = Emotion::neutral;
  Split split = Split::train;
  std::optional<Eigen::VectorXd> speaker;  // absent when no speaker-kind record
  Eigen::MatrixXd content;                 // one row per segment, file order
};

struct UtteranceFilter {
  std::optional<std::string> corpus_id;
  std::optional<Split> split;
};

// Groups records by (corpus_id, utterance_id), preserving first-seen order.
// Throws SchemaError when one utterance mixes speakers, emotions or splits,
// or carries more than one speaker-kind record.
std::vector<Utterance> assemble_utterances(std::span<const EmbeddingRecord> records,
                                           const UtteranceFilter& filter = {});

}  // namespace sapa
