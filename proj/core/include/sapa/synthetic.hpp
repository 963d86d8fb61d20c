#pragma once

// Synthetic two-corpus embedding generator with planted structure.
//
// Speaker-kind vectors sit around per-(emotion, style-cluster) centroids built
// from a prototype pool both corpora share, so per-emotion speaker graphs
// contain cross-corpus communities. Content-kind vectors sit around per-(corpus, phoneme, emotion)
// centroids
//
//   c(corpus, p, e) = (1 - g) * (phi_p + s * u_e) + g * (phi_p^corpus + s * u_e^corpus)
//
// where g is the cross-corpus gap of (p, e): cross_corpus_anchor_gap when p is
// anchored for e, non_anchor_gap otherwise. s is emotion_signal_strength.
//
// All noise magnitudes are relative norms: a noise level r adds an isotropic
// Gaussian whose expected norm is r (centroids have unit-scale norm).

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sapa/embstore.hpp"
#include "sapa/emotion.hpp"

namespace sapa {

struct SyntheticSpec {
  std::uint64_t seed = 1;
  std::vector<std::string> corpora{"src", "tgt"};
  std::size_t speakers_per_corpus = 12;
  std::size_t utterances_per_speaker = 10;  // per emotion
  std::size_t segments_per_utterance = 8;
  std::size_t n_style_clusters = 3;  // per emotion
  double cluster_spread = 0.05;

  std::vector<std::string> phoneme_inventory{"i", "E", "@", "A,a", "O", "u",
                                             "p", "t", "k", "s", "m", "n"};
  // Indexed by Emotion. Defaults mirror the reference anchor candidates.
  std::array<std::vector<std::string>, kNumEmotions> anchored_phonemes{{
      {"E", "@", "A,a"},
      {"i", "A,a"},
      {"A,a", "i", "u"},
      {"E", "@", "O"},
  }};
  double cross_corpus_anchor_gap = 0.0;
  double non_anchor_gap = 1.0;

  double emotion_signal_strength = 1.0;
  // Weight of the shared per-emotion direction inside speaker style centroids.
  double speaker_emotion_strength = 0.6;
  // Blend weight of a corpus-specific emotion direction in the speaker styles,
  // the speaker-side analogue of the content gaps.
  double speaker_corpus_gap = 0.0;
  double speaker_noise = 0.0;  // per utterance, speaker kind
  double content_noise = 0.0;  // per segment, on top of cluster_spread

  std::size_t d_s = 64;
  std::size_t d_c = 64;
  double validation_fraction = 0.2;
  double test_fraction = 0.2;

  // Throws ConfigError.
  void validate() const;
};

struct SyntheticTruth {
  // (corpus_id, speaker_id) -> planted style cluster per emotion.
  std::map<std::pair<std::string, std::string>, std::array<std::size_t, kNumEmotions>>
      style_cluster;
  std::array<std::vector<std::string>, kNumEmotions> anchored_phonemes;
};

struct SyntheticDataset {
  Dataset dataset;
  SyntheticTruth truth;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace sapa
