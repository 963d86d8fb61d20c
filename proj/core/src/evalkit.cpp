#include "sapa/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "sapa/error.hpp"

namespace sapa {

void ConfusionMatrix::add(Emotion truth, Emotion predicted, std::size_t n) {
  counts[index_of(truth)][index_of(predicted)] += n;
}

std::size_t ConfusionMatrix::support(Emotion truth) const {
  const auto& row = counts[index_of(truth)];
  return std::accumulate(row.begin(), row.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (Emotion e : kAllEmotions) n += support(e);
  return n;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  if (n == 0) throw DomainError("accuracy of an empty confusion matrix");
  std::size_t diag = 0;
  for (std::size_t i = 0; i < kNumEmotions; ++i) diag += counts[i][i];
  return static_cast<double>(diag) / static_cast<double>(n);
}

double uar(const ConfusionMatrix& cm, std::vector<std::string>* warnings) {
  double sum = 0.0;
  std::size_t classes = 0;
  for (Emotion e : kAllEmotions) {
    const std::size_t n = cm.support(e);
    if (n == 0) {
      if (warnings) warnings->push_back("class '" + std::string(to_string(e)) + "' has no support");
      continue;
    }
    sum += static_cast<double>(cm.counts[index_of(e)][index_of(e)]) / static_cast<double>(n);
    ++classes;
  }
  if (classes == 0) throw DomainError("UAR of an empty confusion matrix");
  return sum / static_cast<double>(classes);
}

std::optional<Example> make_example(const Utterance& u, const ModelConfig& config) {
  Example ex;
  ex.label = index_of(u.emotion);
  if (config.uses_content()) {
    if (u.content.rows() == 0) return std::nullopt;
    ex.content = u.content;
  }
  if (config.uses_speaker()) {
    if (!u.speaker) return std::nullopt;
    ex.speaker = *u.speaker;
  }
  return ex;
}

std::vector<Prediction> predict(const ModelParams& params, std::span<const Utterance> utterances,
                                std::size_t* skipped) {
  std::vector<Prediction> out;
  std::size_t miss = 0;
  for (const auto& u : utterances) {
    auto ex = make_example(u, params.config);
    if (!ex) {
      ++miss;
      continue;
    }
    const Eigen::VectorXd z = logits(params, *ex);
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < z.size(); ++k) {
      if (z(k) > z(best)) best = k;
    }
    out.push_back(Prediction{u.corpus_id, u.speaker_id, u.utterance_id, u.emotion,
                             emotion_from_index(static_cast<std::size_t>(best))});
  }
  if (skipped) *skipped = miss;
  return out;
}

ConfusionMatrix confusion(std::span<const Prediction> predictions) {
  ConfusionMatrix cm;
  for (const auto& p : predictions) cm.add(p.truth, p.predicted);
  return cm;
}

CrossEvalResult evaluate_cross(const ModelParams& params, std::span<const EmbeddingRecord> records,
                               const std::string& target_corpus) {
  const auto utts = assemble_utterances(records, UtteranceFilter{target_corpus, Split::test});
  if (utts.empty()) {
    throw InsufficientDataError("no test utterances for corpus '" + target_corpus + "'");
  }
  CrossEvalResult r;
  r.predictions = predict(params, utts, &r.skipped);
  r.scored = r.predictions.size();
  if (r.skipped > 0) {
    r.warnings.push_back(std::to_string(r.skipped) + " utterance(s) skipped for missing embeddings");
  }
  r.confusion = confusion(r.predictions);
  if (r.scored == 0) throw InsufficientDataError("every test utterance lacks required embeddings");
  r.uar = uar(r.confusion, &r.warnings);
  return r;
}

std::string_view to_string(Grouping g) noexcept {
  switch (g) {
    case Grouping::with_emotion:
      return "with_emotion";
    case Grouping::without_emotion:
      return "without_emotion";
    case Grouping::random:
      return "random";
  }
  return "unknown";
}

namespace {

struct SpeakerTally {
  std::size_t utterances = 0;
  std::size_t correct = 0;
};

using Tallies = std::map<NodeId, SpeakerTally>;

EmotionGroupAccuracy summarize(std::vector<GroupStats> groups) {
  EmotionGroupAccuracy out;
  std::size_t n = 0;
  std::size_t c = 0;
  double macro = 0.0;
  for (const auto& g : groups) {
    n += g.utterances;
    c += g.correct;
    macro += g.accuracy();
  }
  if (!groups.empty()) {
    out.macro = macro / static_cast<double>(groups.size());
    out.micro = static_cast<double>(c) / static_cast<double>(n);
  }
  out.groups = std::move(groups);
  return out;
}

std::vector<GroupStats> group_by(const Tallies& tallies, const CommunityMap& communities,
                                 std::size_t min_speakers, Emotion e,
                                 std::vector<std::string>& notices) {
  std::map<std::size_t, GroupStats> by_comm;
  std::size_t unmapped = 0;
  for (const auto& [node, t] : tallies) {
    auto it = communities.find(node);
    if (it == communities.end()) {
      ++unmapped;
      continue;
    }
    auto& g = by_comm[it->second];
    g.group = it->second;
    ++g.speakers;
    g.utterances += t.utterances;
    g.correct += t.correct;
  }
  if (unmapped > 0) {
    notices.push_back(std::string(to_string(e)) + ": " + std::to_string(unmapped) +
                      " scored speaker(s) missing from the partition");
  }
  // Communities that hold no scored speaker never appear in by_comm.
  std::set<std::size_t> all;
  for (const auto& [node, c] : communities) all.insert(c);
  const std::size_t empty = all.size() - std::min(all.size(), by_comm.size());
  if (empty > 0) {
    notices.push_back(std::string(to_string(e)) + ": " + std::to_string(empty) +
                      " communit(ies) without test utterances excluded");
  }
  std::vector<GroupStats> out;
  for (auto& [c, g] : by_comm) {
    if (g.speakers >= min_speakers) out.push_back(g);
  }
  return out;
}

}  // namespace

std::vector<GroupAccuracyReport> group_transferability(std::span<const Prediction> predictions,
                                                       const PartitionMap& per_emotion,
                                                       const CommunityMap& global,
                                                       const GroupOptions& options) {
  if (options.n_random_seeds == 0) throw DomainError("group_transferability needs n_random_seeds >= 1");
  GroupAccuracyReport with{Grouping::with_emotion, {}, 0, {}};
  GroupAccuracyReport without{Grouping::without_emotion, {}, 0, {}};
  GroupAccuracyReport rand{Grouping::random, {}, options.n_random_seeds, {}};

  for (Emotion e : kAllEmotions) {
    Tallies tallies;
    for (const auto& p : predictions) {
      if (p.truth != e) continue;
      auto& t = tallies[NodeId{p.corpus_id, p.speaker_id}];
      ++t.utterances;
      t.correct += p.correct() ? 1 : 0;
    }
    if (tallies.empty()) continue;

    auto part = per_emotion.find(e);
    if (part == per_emotion.end()) {
      with.notices.push_back(std::string(to_string(e)) + ": no emotion partition");
      continue;
    }
    auto groups = group_by(tallies, part->second, options.min_group_speakers, e, with.notices);
    if (groups.empty()) continue;
    std::vector<std::size_t> sizes;
    for (const auto& g : groups) sizes.push_back(g.speakers);
    with.per_emotion[e] = summarize(std::move(groups));

    auto global_groups = group_by(tallies, global, options.min_group_speakers, e, without.notices);
    if (!global_groups.empty()) without.per_emotion[e] = summarize(std::move(global_groups));

    std::vector<NodeId> speakers;
    for (const auto& [node, t] : tallies) speakers.push_back(node);
    double macro = 0.0;
    double micro = 0.0;
    for (std::size_t s = 0; s < options.n_random_seeds; ++s) {
      std::mt19937_64 rng(options.seed + 1000003ULL * s + index_of(e));
      std::shuffle(speakers.begin(), speakers.end(), rng);
      std::vector<GroupStats> draws;
      std::size_t next = 0;
      for (std::size_t size : sizes) {
        GroupStats g;
        g.group = draws.size();
        for (std::size_t k = 0; k < size && next < speakers.size(); ++k, ++next) {
          const auto& t = tallies.at(speakers[next]);
          ++g.speakers;
          g.utterances += t.utterances;
          g.correct += t.correct;
        }
        if (g.utterances > 0) draws.push_back(g);
      }
      const auto summary = summarize(std::move(draws));
      macro += summary.macro;
      micro += summary.micro;
    }
    const double n = static_cast<double>(options.n_random_seeds);
    rand.per_emotion[e] = EmotionGroupAccuracy{macro / n, micro / n, {}};
  }
  return {std::move(with), std::move(without), std::move(rand)};
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw DomainError("adjusted_rand_index: labelings differ in length");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> ra;
  std::map<std::size_t, double> rb;
  for (std::size_t i = 0; i < n; ++i) {
    table[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [k, v] : table) index += c2(v);
  double sa = 0.0;
  double sb = 0.0;
  for (const auto& [k, v] : ra) sa += c2(v);
  for (const auto& [k, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(n));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

PermutationTest permutation_test(std::span<const double> a, std::span<const double> b,
                                 std::uint64_t seed, std::size_t n_resamples,
                                 std::size_t exact_limit) {
  if (a.empty() || b.empty()) throw DomainError("permutation_test needs two non-empty samples");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t na = a.size();
  const std::size_t n = pooled.size();
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  auto diff_for = [&](double sum_a) {
    const double ma = sum_a / static_cast<double>(na);
    const double mb = (total - sum_a) / static_cast<double>(n - na);
    return std::abs(ma - mb);
  };
  PermutationTest out;
  out.mean_a = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(na);
  out.mean_b = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
  const double observed = std::abs(out.mean_a - out.mean_b);
  const double tol = 1e-12 * std::max(1.0, observed);

  // n choose na, saturating.
  double combos = 1.0;
  for (std::size_t k = 1; k <= na; ++k) {
    combos = combos * static_cast<double>(n - na + k) / static_cast<double>(k);
  }
  std::size_t extreme = 0;
  if (combos <= static_cast<double>(exact_limit)) {
    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(na), true);
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (pick[i]) s += pooled[i];
      }
      if (diff_for(s) >= observed - tol) ++extreme;
      ++out.permutations;
    } while (std::prev_permutation(pick.begin(), pick.end()));
    out.exact = true;
    out.p_value = static_cast<double>(extreme) / static_cast<double>(out.permutations);
    return out;
  }
  std::mt19937_64 rng(seed);
  std::vector<double> work = pooled;
  for (std::size_t r = 0; r < n_resamples; ++r) {
    std::shuffle(work.begin(), work.end(), rng);
    const double s = std::accumulate(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
    if (diff_for(s) >= observed - tol) ++extreme;
  }
  out.permutations = n_resamples;
  out.p_value = static_cast<double>(extreme + 1) / static_cast<double>(n_resamples + 1);
  return out;
}

}  // namespace sapa
