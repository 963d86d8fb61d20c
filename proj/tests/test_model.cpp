#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "sapa/error.hpp"
#include "sapa/model.hpp"

using namespace sapa;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_c = 5;
  c.d_s = 4;
  c.d_proj = 3;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 6;
  c.fc_widths = {7, 6, 5, 4};
  return c;
}

}  // namespace

TEST(ModelConfig, ValidationRejectsBadShapes) {
  auto bad = [](auto mutate) {
    ModelConfig c = small_config();
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](ModelConfig& c) { c.n_heads = 3; });
  bad([](ModelConfig& c) { c.fc_widths.back() = 5; });
  bad([](ModelConfig& c) { c.alpha = 0.0; });
  bad([](ModelConfig& c) { c.lambda2 = -1.0; });
  bad([](ModelConfig& c) { c.d_proj = 0; });
  EXPECT_NO_THROW(small_config().validate());
}

TEST(ModelConfig, InputWidthFollowsModeAndProjection) {
  ModelConfig c = small_config();
  EXPECT_EQ(c.input_width(), 6u);
  c.input = InputMode::speaker_only;
  EXPECT_EQ(c.input_width(), 3u);
  c.use_projection = false;
  EXPECT_EQ(c.input_width(), 4u);
  c.input = InputMode::content_only;
  EXPECT_EQ(c.input_width(), 5u);
}

TEST(Fuse, ConcatenatesMeanSegmentAndSpeaker) {
  Eigen::MatrixXd segs(2, 2);
  segs << 1.0, 2.0, 3.0, 6.0;
  Eigen::VectorXd spk(1);
  spk << -1.0;
  const auto v = fuse(segs, spk, 2, 1);
  ASSERT_EQ(v.size(), 3);
  EXPECT_DOUBLE_EQ(v(0), 2.0);
  EXPECT_DOUBLE_EQ(v(1), 4.0);
  EXPECT_DOUBLE_EQ(v(2), -1.0);
  const auto rows = fuse_sequence(segs, spk, 2, 1);
  EXPECT_EQ(rows.rows(), 2);
  EXPECT_DOUBLE_EQ(rows(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(rows(1, 2), -1.0);
  EXPECT_THROW(fuse(Eigen::MatrixXd(0, 2), spk, 2, 1), DomainError);
  EXPECT_THROW(fuse(segs, spk, 3, 1), DomainError);
}

TEST(TripletLoss, HingeValues) {
  Eigen::VectorXd a(2), p(2), n(2);
  a << 0.0, 0.0;
  p << 1.0, 0.0;  // |a-p|^2 = 1
  n << 0.0, 2.0;  // |a-n|^2 = 4
  EXPECT_DOUBLE_EQ(triplet_loss(a, p, n, 0.4), 0.0);
  EXPECT_DOUBLE_EQ(triplet_loss(a, p, n, 3.5), 0.5);
  EXPECT_DOUBLE_EQ(triplet_loss(a, n, p, 0.6), 3.6);
}

TEST(Softmax, IsStableAndNormalized) {
  Eigen::VectorXd z(4);
  z << 1000.0, 1000.0, -1000.0, 0.0;
  const auto p = softmax(z);
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_NEAR(p(0), 0.5, 1e-15);
  EXPECT_TRUE(p.allFinite());
}

TEST(Model, InitIsDeterministicAndShaped) {
  const auto c = small_config();
  const auto a = ModelParams::init(c, 3);
  const auto b = ModelParams::init(c, 3);
  EXPECT_EQ(a.flatten(), b.flatten());
  EXPECT_NE(a.flatten(), ModelParams::init(c, 4).flatten());
  EXPECT_NO_THROW(a.check_shapes());
  EXPECT_EQ(a.size(), a.flatten().size());
  EXPECT_DOUBLE_EQ(a.layers[0].ln1_gamma(0), 1.0);
  EXPECT_DOUBLE_EQ(a.fc[3].bias(2), 0.0);
}

TEST(Model, AssignRoundTripsAndChecksLength) {
  const auto c = small_config();
  auto p = ModelParams::zeros(c);
  const auto src = ModelParams::init(c, 9).flatten();
  p.assign(src);
  EXPECT_EQ(p.flatten(), src);
  EXPECT_THROW(p.assign(std::vector<double>(3, 0.0)), DomainError);
}

TEST(Model, LossMatchesCrossEntropyOfLogits) {
  auto c = small_config();
  c.lambda1 = 0.0;
  c.lambda2 = 0.0;
  std::mt19937_64 rng(2);
  const auto params = ModelParams::init(c, 2);
  const auto batch = gradcheck::random_batch(c, 5, 3, rng);
  const auto z = forward(params, batch);
  ASSERT_EQ(z.rows(), 5);
  ASSERT_EQ(z.cols(), 4);
  double ce = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double lse = std::log(z.row(i).array().exp().sum());
    ce += lse - z(i, static_cast<Eigen::Index>(batch.examples[i].label));
  }
  ce /= 5.0;
  const auto l = loss_total(params, batch);
  EXPECT_NEAR(l.ser, ce, 1e-12);
  EXPECT_NEAR(l.total, ce, 1e-12);
}

TEST(Model, TripletTermsAreWeightedMeans) {
  auto c = small_config();
  c.lambda1 = 0.25;
  c.lambda2 = 2.0;
  std::mt19937_64 rng(4);
  const auto params = ModelParams::init(c, 4);
  const auto batch = gradcheck::random_batch(c, 3, 4, rng);
  const auto l = loss_total(params, batch);

  auto project = [](const Linear& lin, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return lin.weight * x + lin.bias;
  };
  double lp = 0.0, ls = 0.0;
  for (const auto& t : batch.phoneme_triplets) {
    lp += triplet_loss(project(params.proj_content, t.anchor), project(params.proj_content, t.positive),
                       project(params.proj_content, t.negative), c.alpha);
  }
  for (const auto& t : batch.speaker_triplets) {
    ls += triplet_loss(project(params.proj_speaker, t.anchor), project(params.proj_speaker, t.positive),
                       project(params.proj_speaker, t.negative), c.beta);
  }
  EXPECT_NEAR(l.phoneme, lp / 4.0, 1e-12);
  EXPECT_NEAR(l.speaker, ls / 4.0, 1e-12);
  EXPECT_NEAR(l.total, l.ser + 0.25 * l.phoneme + 2.0 * l.speaker, 1e-12);
}

TEST(Model, DisabledLossesContributeZero) {
  auto c = small_config();
  c.phoneme_loss = false;
  c.speaker_loss = false;
  std::mt19937_64 rng(5);
  const auto params = ModelParams::init(c, 5);
  const auto batch = gradcheck::random_batch(c, 3, 4, rng);
  const auto l = loss_total(params, batch);
  EXPECT_EQ(l.phoneme, 0.0);
  EXPECT_EQ(l.speaker, 0.0);
  EXPECT_EQ(l.total, l.ser);
}

TEST(Model, NonFiniteInputRaisesNumericError) {
  const auto c = small_config();
  std::mt19937_64 rng(6);
  const auto params = ModelParams::init(c, 6);
  auto batch = gradcheck::random_batch(c, 2, 0, rng);
  batch.examples[0].speaker(1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(forward(params, batch), NumericError);
}

TEST(Model, BadExampleShapesAreDomainErrors) {
  const auto c = small_config();
  const auto params = ModelParams::init(c, 1);
  std::mt19937_64 rng(1);
  auto batch = gradcheck::random_batch(c, 1, 0, rng);
  batch.examples[0].label = 4;
  EXPECT_THROW(forward(params, batch), DomainError);
  batch = gradcheck::random_batch(c, 1, 0, rng);
  batch.examples[0].speaker = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(forward(params, batch), DomainError);
}

struct GradCase {
  const char* name;
  InputMode input;
  Activation activation;
  SequenceMode sequence;
  bool pe;
  bool projection;
  std::size_t layers;
};

class GradientCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientCheck, AnalyticMatchesFiniteDifferences) {
  const auto& gc = GetParam();
  auto c = small_config();
  c.input = gc.input;
  c.activation = gc.activation;
  c.sequence = gc.sequence;
  c.positional_encoding = gc.pe;
  c.use_projection = gc.projection;
  c.n_layers = gc.layers;
  c.lambda1 = 0.7;
  c.lambda2 = 0.3;
  c.alpha = 5.0;  // keeps most hinges active
  c.beta = 5.0;
  std::mt19937_64 rng(31);
  const auto params = ModelParams::init(c, 31);
  const auto batch = gradcheck::random_batch(c, 3, 2, rng);
  const auto r = gradcheck::check(params, batch);
  EXPECT_LT(r.worst, 1e-4) << r.where;
}

INSTANTIATE_TEST_SUITE_P(
    Variants, GradientCheck,
    ::testing::Values(
        GradCase{"fused_gelu", InputMode::fused, Activation::gelu, SequenceMode::segments, false, true, 1},
        GradCase{"fused_tanh_pe", InputMode::fused, Activation::tanh, SequenceMode::segments, true, true, 2},
        GradCase{"content_only", InputMode::content_only, Activation::gelu, SequenceMode::segments, false, true, 1},
        GradCase{"speaker_only", InputMode::speaker_only, Activation::gelu, SequenceMode::segments, false, true, 1},
        GradCase{"utterance", InputMode::fused, Activation::gelu, SequenceMode::utterance, false, true, 1},
        GradCase{"no_projection", InputMode::fused, Activation::tanh, SequenceMode::segments, false, false, 1}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Checkpoint, RoundTripIsExact) {
  auto c = small_config();
  c.activation = Activation::tanh;
  c.positional_encoding = true;
  const auto params = ModelParams::init(c, 12);
  std::stringstream io;
  write_checkpoint(io, params, {{"mode", "SAPA"}});
  const auto back = read_checkpoint(io);
  EXPECT_EQ(back.config, params.config);
  EXPECT_EQ(back.flatten(), params.flatten());
}

TEST(Checkpoint, CorruptInputIsRejected) {
  const auto params = ModelParams::init(small_config(), 12);
  std::stringstream io;
  write_checkpoint(io, params);
  std::string text = io.str();

  std::istringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(read_checkpoint(truncated), ParseError);

  std::string wrong_format = text;
  wrong_format.replace(wrong_format.find("sapa-checkpoint"), 15, "something-else!");
  std::istringstream wf(wrong_format);
  EXPECT_THROW(read_checkpoint(wf), SchemaError);

  std::string wrong_shape = text;
  const auto pos = wrong_shape.find("\"rows\":");
  ASSERT_NE(pos, std::string::npos);
  wrong_shape.insert(pos + 7, "1");
  std::istringstream ws(wrong_shape);
  EXPECT_THROW(read_checkpoint(ws), SchemaError);
}
