#pragma once

// Fused emotion classifier with dual-space triplet anchoring.
//
//   content segments -> proj_c --+
//                                 +-> concat per segment -> input affine -> N x encoder layer
//   speaker vector   -> proj_s --+       -> mean pool -> 4 affine layers -> logits (4)
//
// Encoder layer (post-norm): H1 = LN(H + MHA(H)), H2 = LN(H1 + FF(H1)).
// The triplet losses act on the projected spaces, so they shape the same
// projections the classifier reads.
//
// Everything is double precision and single-threaded per batch.

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sapa {

enum class Activation { relu, tanh, gelu };
enum class InputMode { fused, content_only, speaker_only };
enum class SequenceMode { segments, utterance };

std::string_view to_string(Activation a) noexcept;
std::string_view to_string(InputMode m) noexcept;
std::string_view to_string(SequenceMode m) noexcept;

struct ModelConfig {
  std::size_t d_c = 64;
  std::size_t d_s = 64;
  bool use_projection = true;
  std::size_t d_proj = 32;

  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t n_layers = 1;
  std::size_t d_ff = 64;
  std::array<std::size_t, 4> fc_widths{64, 32, 16, 4};
  Activation activation = Activation::gelu;
  InputMode input = InputMode::fused;
  SequenceMode sequence = SequenceMode::segments;
  bool positional_encoding = false;
  double layer_norm_eps = 1e-5;

  double alpha = 0.4;  // phoneme-space margin
  double beta = 0.6;   // speaker-space margin
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  bool phoneme_loss = true;
  bool speaker_loss = true;

  // Throws ConfigError.
  void validate() const;
  std::size_t content_width() const noexcept;  // projected content dim
  std::size_t speaker_width() const noexcept;  // projected speaker dim
  std::size_t input_width() const noexcept;    // per-position classifier input
  bool uses_content() const noexcept { return input != InputMode::speaker_only; }
  bool uses_speaker() const noexcept { return input != InputMode::content_only; }

  bool operator==(const ModelConfig&) const = default;
};

// y = W x + b, W is (out x in).
struct Linear {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct EncoderLayer {
  Linear query, key, value, output;
  Linear ff1, ff2;
  Eigen::VectorXd ln1_gamma, ln1_beta;
  Eigen::VectorXd ln2_gamma, ln2_beta;
};

struct ModelParams {
  ModelConfig config;
  Linear proj_content;  // empty when projections are disabled
  Linear proj_speaker;
  Linear input;
  std::vector<EncoderLayer> layers;
  std::array<Linear, 4> fc;

  // Shapes from config; weights Xavier-uniform, biases 0, LN gamma 1 / beta 0.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& config);

  // Visits every tensor in a fixed order as (name, Eigen::MatrixXd& or VectorXd&).
  template <typename F>
  void for_each(F&& f);
  template <typename F>
  void for_each(F&& f) const;

  std::size_t size() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  // Throws SchemaError when a tensor's shape disagrees with config.
  void check_shapes() const;
  bool all_finite() const;
};

struct Example {
  Eigen::MatrixXd content;  // segments x d_c; may be empty in speaker_only mode
  Eigen::VectorXd speaker;  // d_s; may be empty in content_only mode
  std::size_t label = 0;
};

struct TripletVectors {
  Eigen::VectorXd anchor, positive, negative;
};

struct Batch {
  std::vector<Example> examples;
  std::vector<TripletVectors> phoneme_triplets;
  std::vector<TripletVectors> speaker_triplets;
};

struct LossBreakdown {
  double ser = 0.0;
  double phoneme = 0.0;
  double speaker = 0.0;
  double total = 0.0;
};

struct TripletInputGrad {
  Eigen::VectorXd anchor, positive, negative;
};

struct Gradients {
  ModelParams params;  // same layout as the model
  std::vector<TripletInputGrad> phoneme_inputs;
  std::vector<TripletInputGrad> speaker_inputs;
  LossBreakdown loss;
};

// Concatenation of the mean content segment with the speaker vector.
// Throws DomainError on an empty segment list or a dimension mismatch.
Eigen::VectorXd fuse(const Eigen::MatrixXd& content_segments, const Eigen::VectorXd& speaker,
                     std::size_t d_c, std::size_t d_s);
// Per-segment fused rows [segment | speaker].
Eigen::MatrixXd fuse_sequence(const Eigen::MatrixXd& content_segments,
                              const Eigen::VectorXd& speaker, std::size_t d_c, std::size_t d_s);

// max(0, |a - p|^2 - |a - n|^2 + margin)
double triplet_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& p, const Eigen::VectorXd& n,
                    double margin);

// Logits (batch x 4). Throws NumericError naming the first non-finite stage.
Eigen::MatrixXd forward(const ModelParams& params, const Batch& batch);
Eigen::VectorXd logits(const ModelParams& params, const Example& example);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// L_SER (mean cross-entropy) + lambda1 * mean L_p + lambda2 * mean L_s.
// Inactive losses (flags off or empty lists) contribute exactly 0.
LossBreakdown loss_total(const ModelParams& params, const Batch& batch);

// Analytic gradient of loss_total. The hinge subgradient is 0 at its kink.
Gradients backward(const ModelParams& params, const Batch& batch);

// Checkpoint container: JSON with a format tag, the config echo and the
// flat tensors, plus free-form string metadata. Loading validates every shape
// against the echoed config.
void write_checkpoint(std::ostream& out, const ModelParams& params,
                      const std::map<std::string, std::string>& metadata = {});
ModelParams read_checkpoint(std::istream& in);

// ---------------------------------------------------------------------------

namespace detail {
template <typename P, typename F>
void visit_params(P& p, F&& f) {
  auto lin = [&](std::string_view name, auto& l) {
    f(std::string(name) + ".weight", l.weight);
    f(std::string(name) + ".bias", l.bias);
  };
  lin("proj_content", p.proj_content);
  lin("proj_speaker", p.proj_speaker);
  lin("input", p.input);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& L = p.layers[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    lin(pre + "query", L.query);
    lin(pre + "key", L.key);
    lin(pre + "value", L.value);
    lin(pre + "output", L.output);
    lin(pre + "ff1", L.ff1);
    lin(pre + "ff2", L.ff2);
    f(pre + "ln1.gamma", L.ln1_gamma);
    f(pre + "ln1.beta", L.ln1_beta);
    f(pre + "ln2.gamma", L.ln2_gamma);
    f(pre + "ln2.beta", L.ln2_beta);
  }
  for (std::size_t i = 0; i < p.fc.size(); ++i) lin("fc" + std::to_string(i), p.fc[i]);
}
}  // namespace detail

template <typename F>
void ModelParams::for_each(F&& f) {
  detail::visit_params(*this, f);
}

template <typename F>
void ModelParams::for_each(F&& f) const {
  detail::visit_params(*this, f);
}

}  // namespace sapa
