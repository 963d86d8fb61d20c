#pragma once

// Cross-corpus phoneme similarity per emotion and anchor-set selection.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sapa/embstore.hpp"
#include "sapa/emotion.hpp"

namespace sapa {

struct PhonemeSimilarityTable {
  std::vector<std::string> phonemes;  // column order; ties in selection follow it
  std::map<Emotion, std::map<std::string, double>> cells;
  std::vector<std::string> warnings;

  std::optional<double> at(Emotion e, const std::string& phoneme) const;
  bool empty() const;
};

// Cell (e, p) = cosine between the per-corpus means of train-split content
// vectors of phoneme p under emotion e; present only when both corpora have p
// under e. Columns follow `inventory`, then any unlisted phoneme in record order.
PhonemeSimilarityTable phoneme_similarity(std::span<const EmbeddingRecord> records,
                                          const std::string& src_corpus,
                                          const std::string& tgt_corpus,
                                          std::span<const std::string> inventory = {});

const std::vector<std::string>& default_vowel_inventory();

struct AnchorRule {
  enum class Kind { top_k, threshold };

  Kind kind = Kind::top_k;
  std::size_t k = 3;
  std::map<Emotion, std::size_t> k_per_emotion;  // overrides k
  double theta = 0.7;                            // keep sim >= theta
  // Candidate phonemes; empty means the whole table.
  std::vector<std::string> candidates = default_vowel_inventory();

  static AnchorRule top_k(std::size_t k);
  static AnchorRule threshold(double theta);
  std::size_t k_for(Emotion e) const;
};

struct AnchorEntry {
  std::string phoneme;
  double sim = 0.0;

  bool operator==(const AnchorEntry&) const = default;
};

struct AnchorSet {
  std::map<Emotion, std::vector<AnchorEntry>> per_emotion;  // descending by sim

  bool contains(Emotion e, const std::string& phoneme) const;
  std::vector<std::string> phonemes(Emotion e) const;
  bool empty() const;
  bool operator==(const AnchorSet&) const = default;
};

// Throws InsufficientDataError listing every requested emotion without a
// candidate cell. Defaults to all four emotions.
AnchorSet select_anchors(const PhonemeSimilarityTable& table, const AnchorRule& rule,
                         std::span<const Emotion> emotions = kAllEmotions);

void write_similarity_csv(std::ostream& out, const PhonemeSimilarityTable& table);
void write_anchor_json(std::ostream& out, const AnchorSet& anchors);
AnchorSet read_anchor_json(std::istream& in);

}  // namespace sapa
