#include "sapa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "sapa/error.hpp"

namespace sapa {

namespace {

using Vec = std::vector<double>;

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Vec gaussian(std::size_t d, double per_dim_std) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec v(d);
    for (auto& x : v) x = n(rng_) * per_dim_std;
    return v;
  }

  Vec unit(std::size_t d) {
    Vec v = gaussian(d, 1.0);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
  }

  // Isotropic noise with expected norm close to `level`.
  Vec noise(std::size_t d, double level) {
    if (level == 0.0) return Vec(d, 0.0);
    return gaussian(d, level / std::sqrt(static_cast<double>(d)));
  }

  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, rng_);
  }

 private:
  std::mt19937_64 rng_;
};

Vec axpy(const Vec& a, double s, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
  return out;
}

Vec blend(const Vec& shared, const Vec& own, double gap) {
  Vec out(shared.size());
  for (std::size_t i = 0; i < shared.size(); ++i) out[i] = (1.0 - gap) * shared[i] + gap * own[i];
  return out;
}

Vec normalized(Vec v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::string padded(std::size_t i, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

void SyntheticSpec::validate() const {
  if (corpora.empty()) throw ConfigError("synthetic spec: at least one corpus required");
  if (std::set<std::string>(corpora.begin(), corpora.end()).size() != corpora.size()) {
    throw ConfigError("synthetic spec: corpus ids must be distinct");
  }
  if (speakers_per_corpus == 0 || utterances_per_speaker == 0 || segments_per_utterance == 0 ||
      n_style_clusters == 0 || d_s == 0 || d_c == 0) {
    throw ConfigError("synthetic spec: all counts and dimensions must be positive");
  }
  if (cross_corpus_anchor_gap < 0.0 || cross_corpus_anchor_gap > 1.0 || non_anchor_gap < 0.0 ||
      non_anchor_gap > 1.0 || speaker_corpus_gap < 0.0 || speaker_corpus_gap > 1.0) {
    throw ConfigError("synthetic spec: gaps must lie in [0, 1]");
  }
  if (cluster_spread < 0.0 || speaker_noise < 0.0 || content_noise < 0.0 ||
      emotion_signal_strength < 0.0 || speaker_emotion_strength < 0.0) {
    throw ConfigError("synthetic spec: noise levels and strengths must be non-negative");
  }
  if (validation_fraction < 0.0 || test_fraction < 0.0 ||
      validation_fraction + test_fraction >= 1.0) {
    throw ConfigError("synthetic spec: split fractions must be non-negative and sum below 1");
  }
  if (phoneme_inventory.empty()) throw ConfigError("synthetic spec: empty phoneme inventory");
  const std::set<std::string> inv(phoneme_inventory.begin(), phoneme_inventory.end());
  if (inv.size() != phoneme_inventory.size()) {
    throw ConfigError("synthetic spec: duplicate phoneme in inventory");
  }
  for (const auto& list : anchored_phonemes) {
    for (const auto& p : list) {
      if (!inv.contains(p)) {
        throw ConfigError("synthetic spec: anchored phoneme '" + p + "' not in inventory");
      }
    }
  }
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Sampler rng(spec.seed);
  const std::size_t n_ph = spec.phoneme_inventory.size();
  const std::size_t n_corp = spec.corpora.size();
  const std::size_t k = spec.n_style_clusters;

  // Speaker style centroids: a shared prototype pool, permuted per emotion and
  // tilted toward an emotion direction that is partly corpus-specific.
  std::vector<Vec> prototypes(k);
  for (auto& p : prototypes) p = rng.unit(spec.d_s);
  std::array<Vec, kNumEmotions> speaker_emotion_dir;
  for (auto& v : speaker_emotion_dir) v = rng.unit(spec.d_s);
  std::vector<std::array<Vec, kNumEmotions>> speaker_emotion_own(n_corp);
  for (auto& dirs : speaker_emotion_own) {
    for (auto& v : dirs) v = rng.unit(spec.d_s);
  }
  // style_centroid[corpus][emotion][cluster]
  std::vector<std::array<std::vector<Vec>, kNumEmotions>> style_centroid(n_corp);
  for (std::size_t e = 0; e < kNumEmotions; ++e) {
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    for (std::size_t c = 0; c < n_corp; ++c) {
      const Vec dir =
          blend(speaker_emotion_dir[e], speaker_emotion_own[c][e], spec.speaker_corpus_gap);
      for (std::size_t cl = 0; cl < k; ++cl) {
        style_centroid[c][e].push_back(
            normalized(axpy(prototypes[perm[cl]], spec.speaker_emotion_strength, dir)));
      }
    }
  }

  // Content centroids.
  std::vector<Vec> phone_shared(n_ph);
  for (auto& v : phone_shared) v = rng.unit(spec.d_c);
  std::array<Vec, kNumEmotions> emo_shared;
  for (auto& v : emo_shared) v = rng.unit(spec.d_c);
  std::vector<std::vector<Vec>> phone_own(n_corp, std::vector<Vec>(n_ph));
  std::vector<std::array<Vec, kNumEmotions>> emo_own(n_corp);
  for (std::size_t c = 0; c < n_corp; ++c) {
    for (auto& v : phone_own[c]) v = rng.unit(spec.d_c);
    for (auto& v : emo_own[c]) v = rng.unit(spec.d_c);
  }
  const double s = spec.emotion_signal_strength;
  // content_centroid[corpus][phoneme][emotion]
  std::vector<std::vector<std::array<Vec, kNumEmotions>>> content_centroid(
      n_corp, std::vector<std::array<Vec, kNumEmotions>>(n_ph));
  for (std::size_t e = 0; e < kNumEmotions; ++e) {
    const auto& anchored = spec.anchored_phonemes[e];
    for (std::size_t p = 0; p < n_ph; ++p) {
      const bool is_anchor = std::find(anchored.begin(), anchored.end(),
                                       spec.phoneme_inventory[p]) != anchored.end();
      const double gap = is_anchor ? spec.cross_corpus_anchor_gap : spec.non_anchor_gap;
      const Vec shared = axpy(phone_shared[p], s, emo_shared[e]);
      for (std::size_t c = 0; c < n_corp; ++c) {
        content_centroid[c][p][e] = blend(shared, axpy(phone_own[c][p], s, emo_own[c][e]), gap);
      }
    }
  }

  SyntheticDataset out;
  out.truth.anchored_phonemes = spec.anchored_phonemes;
  auto& records = out.dataset.records;

  const int spk_width = spec.speakers_per_corpus < 100 ? 2 : 4;
  const int utt_width = spec.utterances_per_speaker < 100 ? 2 : 4;
  const int seg_width = spec.segments_per_utterance < 100 ? 2 : 4;

  for (std::size_t c = 0; c < n_corp; ++c) {
    const std::string& corpus = spec.corpora[c];
    // Balanced planted clusters: shuffled round-robin per emotion.
    std::array<std::vector<std::size_t>, kNumEmotions> cluster_of;
    for (std::size_t e = 0; e < kNumEmotions; ++e) {
      std::vector<std::size_t> order(spec.speakers_per_corpus);
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order.begin(), order.end());
      cluster_of[e].resize(spec.speakers_per_corpus);
      for (std::size_t i = 0; i < order.size(); ++i) cluster_of[e][order[i]] = i % k;
    }
    for (std::size_t spk = 0; spk < spec.speakers_per_corpus; ++spk) {
      const std::string speaker = corpus + "_spk" + padded(spk, spk_width);
      auto& truth = out.truth.style_cluster[{corpus, speaker}];
      for (std::size_t e = 0; e < kNumEmotions; ++e) {
        const Emotion emo = kAllEmotions[e];
        truth[e] = cluster_of[e][spk];
        const Vec style = axpy(style_centroid[c][e][truth[e]], 1.0,
                               rng.noise(spec.d_s, spec.cluster_spread));

        const std::size_t n = spec.utterances_per_speaker;
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order.begin(), order.end());
        const auto n_test = static_cast<std::size_t>(std::floor(n * spec.test_fraction + 0.5));
        const auto n_val =
            static_cast<std::size_t>(std::floor(n * spec.validation_fraction + 0.5));
        std::vector<Split> split_of(n, Split::train);
        for (std::size_t i = 0; i < n; ++i) {
          if (i < n_test) {
            split_of[order[i]] = Split::test;
          } else if (i < n_test + n_val) {
            split_of[order[i]] = Split::validation;
          }
        }

        for (std::size_t u = 0; u < n; ++u) {
          const std::string utt =
              speaker + "_" + std::string(to_string(emo)) + "_u" + padded(u, utt_width);
          EmbeddingRecord sr;
          sr.record_id = utt + "_spk";
          sr.corpus_id = corpus;
          sr.speaker_id = speaker;
          sr.utterance_id = utt;
          sr.emotion = emo;
          sr.kind = EmbeddingKind::speaker;
          sr.vector = axpy(style, 1.0, rng.noise(spec.d_s, spec.speaker_noise));
          sr.split = split_of[u];
          records.push_back(std::move(sr));

          for (std::size_t g = 0; g < spec.segments_per_utterance; ++g) {
            const std::size_t p = rng.index(n_ph);
            EmbeddingRecord cr;
            cr.record_id = utt + "_seg" + padded(g, seg_width);
            cr.corpus_id = corpus;
            cr.speaker_id = speaker;
            cr.utterance_id = utt;
            cr.emotion = emo;
            cr.kind = EmbeddingKind::content;
            cr.phoneme = spec.phoneme_inventory[p];
            Vec v = axpy(content_centroid[c][p][e], 1.0, rng.noise(spec.d_c, spec.cluster_spread));
            if (spec.content_noise > 0.0) v = axpy(v, 1.0, rng.noise(spec.d_c, spec.content_noise));
            cr.vector = std::move(v);
            cr.split = split_of[u];
            records.push_back(std::move(cr));
          }
        }
      }
    }
  }

  out.dataset.manifest = make_manifest(spec.d_s, spec.d_c, records, spec.phoneme_inventory);
  out.dataset.manifest.corpora = spec.corpora;
  out.dataset.manifest.metadata["generator"] = "sapa-synthetic";
  out.dataset.manifest.metadata["seed"] = std::to_string(spec.seed);
  return out;
}

}  // namespace sapa
