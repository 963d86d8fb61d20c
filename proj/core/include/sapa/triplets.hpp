#pragma once

// Phoneme-space and speaker-space triplet mining.
//
// Phoneme space: anchor, positive and negative are content records of one
// phoneme. Anchor and positive share the emotion and come from different
// speakers of the same style community; the negative carries another emotion.
// Speaker space: speaker records of one emotion; anchor and positive from
// different speakers of one community, negative from another community.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sapa/anchors.hpp"
#include "sapa/embstore.hpp"
#include "sapa/simgraph.hpp"

namespace sapa {

enum class TripletSpace { phoneme, speaker };

std::string_view to_string(TripletSpace s) noexcept;

struct Triplet {
  TripletSpace space = TripletSpace::phoneme;
  std::string anchor_id;
  std::string positive_id;
  std::string negative_id;
  Emotion emotion = Emotion::neutral;
  std::optional<std::string> phoneme;

  bool operator==(const Triplet&) const = default;
};

struct MiningConfig {
  std::size_t anchors_per_batch = 64;
  std::size_t n_batches = 1;  // draws per call = anchors_per_batch * n_batches
  bool cross_corpus_positive = true;
  bool restrict_to_anchor_set = true;
  std::uint64_t seed = 0;
};

struct MiningReport {
  std::size_t attempted = 0;
  std::size_t emitted = 0;
  std::size_t skipped_no_positive = 0;
  std::size_t skipped_no_negative = 0;
  std::vector<std::string> notices;
};

struct MiningResult {
  std::vector<Triplet> triplets;
  MiningReport report;
};

// Anchors are drawn uniformly over (emotion, phoneme, community) cells that hold
// at least one content record. Records whose speaker is missing from the
// emotion's partition are ignored.
MiningResult mine_phoneme_triplets(std::span<const EmbeddingRecord> records,
                                   const AnchorSet& anchors, const PartitionMap& partitions,
                                   const MiningConfig& cfg);

// Anchors are drawn uniformly over (emotion, community) cells. Emotions with
// fewer than two communities contribute nothing and add a notice.
MiningResult mine_speaker_triplets(std::span<const EmbeddingRecord> records,
                                   const PartitionMap& partitions, const MiningConfig& cfg);

// One tab-separated line per triplet: space, anchor, positive, negative,
// emotion, phoneme ("-" for speaker space).
void write_triplets(std::ostream& out, std::span<const Triplet> triplets);

}  // namespace sapa
