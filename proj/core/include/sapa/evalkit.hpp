#pragma once

// Recall metrics, cross-corpus scoring and speaker-group accuracy analysis.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sapa/embstore.hpp"
#include "sapa/model.hpp"
#include "sapa/simgraph.hpp"
#include "sapa/utterance.hpp"

namespace sapa {

// Rows are the true emotion, columns the prediction.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumEmotions>, kNumEmotions> counts{};

  void add(Emotion truth, Emotion predicted, std::size_t n = 1);
  std::size_t support(Emotion truth) const;
  std::size_t total() const;
  double accuracy() const;
  bool operator==(const ConfusionMatrix&) const = default;
};

// Mean per-class recall over classes with support. Zero-support classes are
// skipped and named in `warnings` when it is non-null. Throws DomainError
// when every row is empty.
double uar(const ConfusionMatrix& cm, std::vector<std::string>* warnings = nullptr);

struct Prediction {
  std::string corpus_id;
  std::string speaker_id;
  std::string utterance_id;
  Emotion truth = Emotion::neutral;
  Emotion predicted = Emotion::neutral;

  bool correct() const { return truth == predicted; }
};

// Classifier input for one utterance, or nullopt when the embeddings the
// config reads are missing.
std::optional<Example> make_example(const Utterance& u, const ModelConfig& config);

// Argmax prediction per utterance; ties go to the lowest emotion index.
// Utterances lacking required embeddings are skipped and counted.
std::vector<Prediction> predict(const ModelParams& params, std::span<const Utterance> utterances,
                                std::size_t* skipped = nullptr);

ConfusionMatrix confusion(std::span<const Prediction> predictions);

struct CrossEvalResult {
  ConfusionMatrix confusion;
  double uar = 0.0;
  std::size_t scored = 0;
  std::size_t skipped = 0;
  std::vector<Prediction> predictions;
  std::vector<std::string> warnings;
};

// Scores every test-split utterance of `target_corpus`. Throws
// InsufficientDataError when there is none.
CrossEvalResult evaluate_cross(const ModelParams& params, std::span<const EmbeddingRecord> records,
                               const std::string& target_corpus);

enum class Grouping { with_emotion, without_emotion, random };
std::string_view to_string(Grouping g) noexcept;

struct GroupStats {
  std::size_t group = 0;
  std::size_t speakers = 0;
  std::size_t utterances = 0;
  std::size_t correct = 0;
  double accuracy() const {
    return utterances == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(utterances);
  }
};

struct EmotionGroupAccuracy {
  double macro = 0.0;  // mean over groups of group accuracy
  double micro = 0.0;  // pooled over every grouped utterance
  std::vector<GroupStats> groups;  // empty for the random grouping
};

struct GroupAccuracyReport {
  Grouping grouping = Grouping::with_emotion;
  std::map<Emotion, EmotionGroupAccuracy> per_emotion;
  std::size_t random_seeds = 0;
  std::vector<std::string> notices;
};

struct GroupOptions {
  std::size_t n_random_seeds = 10;
  std::uint64_t seed = 0;
  // Communities with fewer speakers (after restricting to the scored
  // utterances) do not form a group.
  std::size_t min_group_speakers = 1;
};

// For each emotion, the utterances of that emotion are grouped by their
// speaker's community: under that emotion's partition (with_emotion), under
// the emotion-agnostic partition (without_emotion), or by random speaker
// groups with the same sizes as the with_emotion groups drawn from every
// scored speaker (random; averaged over n_random_seeds). Groups without
// utterances are dropped with a notice.
std::vector<GroupAccuracyReport> group_transferability(std::span<const Prediction> predictions,
                                                       const PartitionMap& per_emotion,
                                                       const CommunityMap& global,
                                                       const GroupOptions& options = {});

// Hubert-Arabie adjusted Rand index between two labelings of equal length.
// Returns 1 when both labelings are a single cluster or all singletons alike.
double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

struct PermutationTest {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double p_value = 1.0;
  std::size_t permutations = 0;
  bool exact = false;
};

// Two-sided test on the difference of means of two independent samples.
// Enumerates every relabeling when there are at most `exact_limit` of them,
// otherwise draws `n_resamples` random relabelings (p includes the observed one).
PermutationTest permutation_test(std::span<const double> a, std::span<const double> b,
                                 std::uint64_t seed = 0, std::size_t n_resamples = 10000,
                                 std::size_t exact_limit = 20000);

}  // namespace sapa
