#include <gtest/gtest.h>

#include <sstream>

#include "sapa/anchors.hpp"
#include "sapa/error.hpp"
#include "sapa/evalkit.hpp"
#include "sapa/synthetic.hpp"
#include "sapa/trainer.hpp"

using namespace sapa;

namespace {

struct Setup {
  SyntheticDataset data;
  PartitionMap partitions;
  AnchorSet anchors;
  TrainConfig cfg;
};

Setup make_setup(std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.speakers_per_corpus = 6;
  spec.utterances_per_speaker = 5;
  spec.segments_per_utterance = 3;
  spec.d_s = 12;
  spec.d_c = 12;
  spec.speaker_noise = 0.3;
  spec.content_noise = 0.3;
  Setup s{generate_synthetic(spec), {}, {}, {}};
  const auto& recs = s.data.dataset.records;
  for (auto& [e, c] : cluster_all_emotions(recs, seed).per_emotion) {
    s.partitions[e] = to_community_map(c.graph, c.partition);
  }
  s.anchors = select_anchors(
      phoneme_similarity(recs, "src", "tgt", s.data.dataset.manifest.phoneme_inventory),
      AnchorRule::top_k(3));
  s.cfg.seed = seed;
  s.cfg.learning_rate = 3e-3;
  s.cfg.max_epochs = 6;
  s.cfg.batch_size = 16;
  s.cfg.mining.anchors_per_batch = 8;
  s.cfg.model.d_s = 12;
  s.cfg.model.d_c = 12;
  s.cfg.model.d_proj = 8;
  s.cfg.model.d_model = 8;
  s.cfg.model.n_heads = 2;
  s.cfg.model.d_ff = 8;
  s.cfg.model.fc_widths = {8, 8, 8, 4};
  return s;
}

}  // namespace

TEST(TrainMode, NamesRoundTrip) {
  for (TrainMode m : kAllModes) EXPECT_EQ(parse_mode(to_string(m)), m);
  EXPECT_FALSE(parse_mode("sapa"));
}

TEST(TrainMode, GatingOfInputsAndLosses) {
  const ModelConfig base;
  auto c = configure_for_mode(base, TrainMode::only_s);
  EXPECT_EQ(c.input, InputMode::speaker_only);
  EXPECT_FALSE(c.phoneme_loss || c.speaker_loss);
  c = configure_for_mode(base, TrainMode::only_p);
  EXPECT_EQ(c.input, InputMode::content_only);
  EXPECT_FALSE(c.phoneme_loss || c.speaker_loss);
  c = configure_for_mode(base, TrainMode::sapa_only_s);
  EXPECT_EQ(c.input, InputMode::fused);
  EXPECT_TRUE(c.speaker_loss);
  EXPECT_FALSE(c.phoneme_loss);
  c = configure_for_mode(base, TrainMode::sapa_only_p);
  EXPECT_TRUE(c.phoneme_loss);
  EXPECT_FALSE(c.speaker_loss);
  c = configure_for_mode(base, TrainMode::sapa);
  EXPECT_TRUE(c.phoneme_loss && c.speaker_loss);
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](TrainConfig& c) { c.learning_rate = 0.0; });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.early_stop_patience = 0; });
  bad([](TrainConfig& c) { c.adam.beta2 = 1.0; });
  bad([](TrainConfig& c) { c.model.n_heads = 5; });
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Train, IsDeterministicForSeed) {
  const auto s = make_setup();
  const auto& recs = s.data.dataset.records;
  const auto a = train(recs, s.cfg, s.anchors, s.partitions);
  const auto b = train(recs, s.cfg, s.anchors, s.partitions);
  EXPECT_EQ(a.params.flatten(), b.params.flatten());
  ASSERT_EQ(a.report.epochs.size(), b.report.epochs.size());
  for (std::size_t i = 0; i < a.report.epochs.size(); ++i) {
    EXPECT_EQ(a.report.epochs[i].total, b.report.epochs[i].total);
  }
}

TEST(Train, ReportIsConsistent) {
  const auto s = make_setup(2);
  const auto r = train(s.data.dataset.records, s.cfg, s.anchors, s.partitions);
  const auto& rep = r.report;
  ASSERT_FALSE(rep.epochs.empty());
  EXPECT_LE(rep.epochs.size(), s.cfg.max_epochs);
  EXPECT_GE(rep.best_epoch, 1u);
  EXPECT_LE(rep.best_epoch, rep.epochs.size());
  EXPECT_EQ(rep.best_validation_uar, rep.epochs[rep.best_epoch - 1].validation_uar);
  // 6 speakers x 4 emotions x 5 utterances, 3 train / 1 validation each.
  EXPECT_EQ(rep.train_utterances, 72u);
  EXPECT_EQ(rep.validation_utterances, 24u);
  for (const auto& e : rep.epochs) {
    EXPECT_GT(e.phoneme_triplets, 0u);
    EXPECT_GT(e.speaker_triplets, 0u);
    EXPECT_NEAR(e.total, e.ser + s.cfg.model.lambda1 * e.phoneme + s.cfg.model.lambda2 * e.speaker,
                1e-9);
  }
}

TEST(Train, LearnsEasySourceData) {
  auto s = make_setup(3);
  s.cfg.max_epochs = 25;
  s.cfg.early_stop_patience = 25;
  const auto r = train(s.data.dataset.records, s.cfg, s.anchors, s.partitions);
  EXPECT_LT(r.report.epochs.back().ser, r.report.epochs.front().ser);
  EXPECT_GT(r.report.best_validation_uar, 0.5);
}

TEST(Train, AblatedModesSkipTheirTriplets) {
  auto s = make_setup(4);
  s.cfg.max_epochs = 1;
  s.cfg.mode = TrainMode::only_p;
  auto r = train(s.data.dataset.records, s.cfg, s.anchors, s.partitions);
  EXPECT_EQ(r.report.epochs[0].phoneme_triplets, 0u);
  EXPECT_EQ(r.report.epochs[0].speaker_triplets, 0u);
  EXPECT_EQ(r.params.config.input, InputMode::content_only);
  s.cfg.mode = TrainMode::sapa_only_s;
  r = train(s.data.dataset.records, s.cfg, s.anchors, s.partitions);
  EXPECT_EQ(r.report.epochs[0].phoneme_triplets, 0u);
  EXPECT_GT(r.report.epochs[0].speaker_triplets, 0u);
}

TEST(Train, EarlyStoppingHonoursPatience) {
  auto s = make_setup(5);
  s.cfg.max_epochs = 60;
  s.cfg.early_stop_patience = 1;
  s.cfg.learning_rate = 1e-6;
  const auto r = train(s.data.dataset.records, s.cfg, s.anchors, s.partitions);
  if (r.report.stop_reason == StopReason::early_stopping) {
    EXPECT_EQ(r.report.epochs.size(), r.report.best_epoch + 1);
  } else {
    EXPECT_EQ(r.report.epochs.size(), 60u);
  }
}

TEST(Train, DivergenceIsReported) {
  auto s = make_setup(6);
  s.cfg.learning_rate = 1e300;
  s.cfg.max_epochs = 5;
  const auto r = train(s.data.dataset.records, s.cfg, s.anchors, s.partitions);
  EXPECT_EQ(r.report.stop_reason, StopReason::diverged);
  EXPECT_TRUE(r.params.all_finite());
}

TEST(Train, MissingSourceSplitIsInsufficientData) {
  auto s = make_setup();
  s.cfg.source_corpus = "absent";
  EXPECT_THROW(train(s.data.dataset.records, s.cfg, s.anchors, s.partitions),
               InsufficientDataError);
}

TEST(Suite, ResultsDoNotDependOnThreadCount) {
  auto s = make_setup(7);
  s.cfg.max_epochs = 2;
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto& recs = s.data.dataset.records;
  const auto one = run_mode_suite(recs, s.cfg, seeds, s.anchors, s.partitions, kAllModes, 1);
  const auto many = run_mode_suite(recs, s.cfg, seeds, s.anchors, s.partitions, kAllModes, 3);
  ASSERT_EQ(one.size(), 10u);
  ASSERT_EQ(many.size(), 10u);
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].mode, many[i].mode);
    EXPECT_EQ(one[i].seed, many[i].seed);
    ASSERT_TRUE(one[i].result && many[i].result) << one[i].error << many[i].error;
    EXPECT_EQ(one[i].result->params.flatten(), many[i].result->params.flatten());
  }
  EXPECT_EQ(one[0].mode, TrainMode::sapa);
  EXPECT_EQ(one[5].seed, 2u);
}

TEST(Suite, FailuresAreRecordedPerRun) {
  auto s = make_setup(8);
  s.cfg.source_corpus = "absent";
  const std::vector<std::uint64_t> seeds{1};
  const std::array<TrainMode, 1> modes{TrainMode::only_s};
  const auto runs = run_mode_suite(s.data.dataset.records, s.cfg, seeds, s.anchors, s.partitions,
                                   modes);
  ASSERT_EQ(runs.size(), 1u);
  EXPECT_FALSE(runs[0].result);
  EXPECT_FALSE(runs[0].error.empty());
}

TEST(Report, JsonCarriesEpochs) {
  auto s = make_setup(9);
  s.cfg.max_epochs = 2;
  const auto r = train(s.data.dataset.records, s.cfg, s.anchors, s.partitions);
  std::ostringstream out;
  write_report_json(out, r.report);
  const std::string j = out.str();
  EXPECT_NE(j.find("\"mode\""), std::string::npos);
  EXPECT_NE(j.find("\"validation_uar\""), std::string::npos);
  EXPECT_NE(j.find("\"stop_reason\""), std::string::npos);
}
