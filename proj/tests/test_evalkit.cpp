#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sapa/error.hpp"
#include "sapa/evalkit.hpp"

using namespace sapa;

namespace {

Prediction pred(std::string spk, Emotion truth, Emotion predicted, std::string corpus = "tgt") {
  static int n = 0;
  return {std::move(corpus), std::move(spk), "u" + std::to_string(n++), truth, predicted};
}

// Brute-force two-sided permutation p-value over every split of the pooled sample.
double brute_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n = pooled.size();
  auto mean = [](double s, std::size_t k) { return s / static_cast<double>(k); };
  double sa = 0.0, total = 0.0;
  for (double x : a) sa += x;
  for (double x : pooled) total += x;
  const double observed = std::abs(mean(sa, a.size()) - mean(total - sa, b.size()));
  std::size_t extreme = 0, count = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != a.size()) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) s += pooled[i];
    }
    const double d = std::abs(mean(s, a.size()) - mean(total - s, b.size()));
    ++count;
    if (d >= observed - 1e-12) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(count);
}

}  // namespace

TEST(Uar, MeanOfPerClassRecall) {
  ConfusionMatrix cm;
  cm.add(Emotion::neutral, Emotion::neutral, 8);
  cm.add(Emotion::neutral, Emotion::anger, 2);
  cm.add(Emotion::anger, Emotion::anger, 1);
  cm.add(Emotion::anger, Emotion::sadness, 3);
  cm.add(Emotion::sadness, Emotion::sadness, 5);
  cm.add(Emotion::happiness, Emotion::neutral, 5);
  EXPECT_NEAR(uar(cm), (0.8 + 0.0 + 0.25 + 1.0) / 4.0, 1e-15);
  EXPECT_EQ(cm.total(), 24u);
  EXPECT_EQ(cm.support(Emotion::anger), 4u);
  EXPECT_NEAR(cm.accuracy(), 14.0 / 24.0, 1e-15);
}

TEST(Uar, SkipsEmptyClassesWithWarning) {
  ConfusionMatrix cm;
  cm.add(Emotion::happiness, Emotion::happiness, 3);
  cm.add(Emotion::sadness, Emotion::happiness, 1);
  std::vector<std::string> warnings;
  EXPECT_NEAR(uar(cm, &warnings), 0.5, 1e-15);
  EXPECT_EQ(warnings.size(), 2u);
  EXPECT_THROW(uar(ConfusionMatrix{}), DomainError);
}

TEST(Uar, BalancedClassesEqualAccuracy) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    ConfusionMatrix cm;
    for (Emotion t : kAllEmotions) {
      for (int i = 0; i < 10; ++i) cm.add(t, emotion_from_index(rng() % 4));
    }
    EXPECT_NEAR(uar(cm), cm.accuracy(), 1e-12);
  }
}

TEST(Predict, ZeroModelPicksLowestIndex) {
  ModelConfig c;
  c.d_c = 3;
  c.d_s = 2;
  c.d_proj = 2;
  c.d_model = 4;
  c.n_heads = 2;
  c.d_ff = 4;
  const auto params = ModelParams::zeros(c);
  Utterance u;
  u.corpus_id = "tgt";
  u.speaker_id = "s";
  u.utterance_id = "u";
  u.emotion = Emotion::sadness;
  u.speaker = Eigen::VectorXd::Ones(2);
  u.content = Eigen::MatrixXd::Ones(2, 3);
  Utterance missing = u;
  missing.speaker.reset();
  const std::vector<Utterance> utts{u, missing};
  std::size_t skipped = 0;
  const auto preds = predict(params, utts, &skipped);
  ASSERT_EQ(preds.size(), 1u);
  EXPECT_EQ(skipped, 1u);
  EXPECT_EQ(preds[0].predicted, Emotion::neutral);
  EXPECT_FALSE(preds[0].correct());
  EXPECT_EQ(confusion(preds).counts[3][0], 1u);
}

TEST(EvaluateCross, NoTestUtterancesIsInsufficientData) {
  const auto params = ModelParams::zeros(ModelConfig{});
  std::vector<EmbeddingRecord> recs;
  EXPECT_THROW(evaluate_cross(params, recs, "tgt"), InsufficientDataError);
}

TEST(Ari, MatchesPairCountingOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<std::size_t> a(n), b(n);
    for (auto& x : a) x = rng() % 4;
    for (auto& x : b) x = rng() % 5;
    EXPECT_NEAR(adjusted_rand_index(a, b), oracle::ari(a, b), 1e-12);
  }
}

TEST(Ari, InvariantToRelabelingAndPerfectOnIdentity) {
  const std::vector<std::size_t> a{0, 0, 1, 1, 2, 2, 2};
  const std::vector<std::size_t> b{5, 5, 9, 9, 1, 1, 1};
  EXPECT_DOUBLE_EQ(adjusted_rand_index(a, b), 1.0);
  const std::vector<std::size_t> one(4, 0);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(one, one), 1.0);
}

TEST(Permutation, ExactMatchesBruteForce) {
  const std::vector<double> a{0.61, 0.64, 0.66, 0.70, 0.69};
  const std::vector<double> b{0.55, 0.58, 0.63, 0.60, 0.57};
  const auto r = permutation_test(a, b);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.permutations, 252u);
  EXPECT_NEAR(r.p_value, brute_p(a, b), 1e-12);
  EXPECT_NEAR(r.mean_a, 0.66, 1e-12);
}

TEST(Permutation, IdenticalSamplesGiveOne) {
  const std::vector<double> a{1.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(permutation_test(a, a).p_value, 1.0);
}

TEST(Permutation, MonteCarloIsSeededAndClose) {
  std::vector<double> a, b;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 12; ++i) a.push_back(n(rng) + 0.8);
  for (int i = 0; i < 12; ++i) b.push_back(n(rng));
  const auto r1 = permutation_test(a, b, 5, 4000, 10);
  const auto r2 = permutation_test(a, b, 5, 4000, 10);
  EXPECT_FALSE(r1.exact);
  EXPECT_EQ(r1.p_value, r2.p_value);
  const auto exact = permutation_test(a, b, 0, 0, 10'000'000);
  EXPECT_TRUE(exact.exact);
  EXPECT_NEAR(r1.p_value, exact.p_value, 0.03);
  EXPECT_GT(r1.p_value, 0.0);
}

TEST(GroupTransfer, HandComputedMacroMicro) {
  // Anger: community 0 = {a, b}, community 1 = {c}. Global puts everyone together.
  std::vector<Prediction> preds;
  for (int i = 0; i < 3; ++i) preds.push_back(pred("a", Emotion::anger, Emotion::anger));
  preds.push_back(pred("a", Emotion::anger, Emotion::neutral));
  preds.push_back(pred("b", Emotion::anger, Emotion::anger));
  preds.push_back(pred("b", Emotion::anger, Emotion::sadness));
  preds.push_back(pred("c", Emotion::anger, Emotion::neutral));
  preds.push_back(pred("c", Emotion::anger, Emotion::neutral));

  PartitionMap part;
  part[Emotion::anger] = {{{"tgt", "a"}, 0}, {{"tgt", "b"}, 0}, {{"tgt", "c"}, 1}};
  CommunityMap global{{{"tgt", "a"}, 4}, {{"tgt", "b"}, 4}, {{"tgt", "c"}, 4}};
  GroupOptions opt;
  opt.n_random_seeds = 50;
  const auto reports = group_transferability(preds, part, global, opt);
  ASSERT_EQ(reports.size(), 3u);

  const auto& with = reports[0].per_emotion.at(Emotion::anger);
  EXPECT_EQ(reports[0].grouping, Grouping::with_emotion);
  ASSERT_EQ(with.groups.size(), 2u);
  EXPECT_NEAR(with.macro, (4.0 / 6.0 + 0.0) / 2.0, 1e-15);
  EXPECT_NEAR(with.micro, 4.0 / 8.0, 1e-15);

  const auto& without = reports[1].per_emotion.at(Emotion::anger);
  EXPECT_NEAR(without.macro, 0.5, 1e-15);
  EXPECT_NEAR(without.micro, 0.5, 1e-15);

  // Random groups of sizes {2, 1}: the singleton is a, b or c.
  // Singleton a: (1/4 + 3/4)/2, b: (3/6 + 1/2)/2, c: (4/6 + 0)/2.
  const auto& rnd = reports[2].per_emotion.at(Emotion::anger);
  EXPECT_NEAR(rnd.micro, 0.5, 1e-15);
  EXPECT_GT(rnd.macro, 1.0 / 3.0 - 1e-12);
  EXPECT_LT(rnd.macro, 0.5 + 1e-12);
  EXPECT_TRUE(rnd.groups.empty());
  EXPECT_EQ(reports[2].random_seeds, 50u);
}

TEST(GroupTransfer, UnmappedSpeakersAndMinimumSizeProduceNotices) {
  std::vector<Prediction> preds{pred("a", Emotion::sadness, Emotion::sadness),
                                pred("b", Emotion::sadness, Emotion::neutral),
                                pred("z", Emotion::sadness, Emotion::sadness)};
  PartitionMap part;
  part[Emotion::sadness] = {{{"tgt", "a"}, 0}, {{"tgt", "b"}, 1}};
  const CommunityMap global{{{"tgt", "a"}, 0}, {{"tgt", "b"}, 0}};
  GroupOptions opt;
  opt.min_group_speakers = 2;
  const auto reports = group_transferability(preds, part, global, opt);
  EXPECT_FALSE(reports[0].notices.empty());
  EXPECT_FALSE(reports[0].per_emotion.contains(Emotion::sadness));
  EXPECT_FALSE(reports[0].per_emotion.contains(Emotion::neutral));
}

TEST(GroupTransfer, DeterministicForSeed) {
  std::vector<Prediction> preds;
  std::mt19937_64 rng(2);
  PartitionMap part;
  CommunityMap global;
  for (int s = 0; s < 12; ++s) {
    const std::string spk = "s" + std::to_string(s);
    part[Emotion::happiness][{"tgt", spk}] = s % 3;
    global[{"tgt", spk}] = s % 2;
    for (int u = 0; u < 4; ++u) {
      preds.push_back(pred(spk, Emotion::happiness, emotion_from_index(rng() % 4)));
    }
  }
  const auto a = group_transferability(preds, part, global, {});
  const auto b = group_transferability(preds, part, global, {});
  EXPECT_EQ(a[2].per_emotion.at(Emotion::happiness).macro,
            b[2].per_emotion.at(Emotion::happiness).macro);
}
