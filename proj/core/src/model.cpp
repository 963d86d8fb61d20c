#include "sapa/model.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "sapa/error.hpp"

namespace sapa {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::gelu:
      return "gelu";
  }
  return "unknown";
}

std::string_view to_string(InputMode m) noexcept {
  switch (m) {
    case InputMode::fused:
      return "fused";
    case InputMode::content_only:
      return "content_only";
    case InputMode::speaker_only:
      return "speaker_only";
  }
  return "unknown";
}

std::string_view to_string(SequenceMode m) noexcept {
  return m == SequenceMode::segments ? "segments" : "utterance";
}

void ModelConfig::validate() const {
  if (d_c == 0 || d_s == 0 || d_model == 0 || n_heads == 0 || d_ff == 0) {
    throw ConfigError("model: dimensions must be positive");
  }
  if (use_projection && d_proj == 0) throw ConfigError("model: d_proj must be positive");
  if (d_model % n_heads != 0) throw ConfigError("model: d_model must be divisible by n_heads");
  for (std::size_t w : fc_widths) {
    if (w == 0) throw ConfigError("model: fc widths must be positive");
  }
  if (fc_widths.back() != 4) throw ConfigError("model: last fc width must be 4");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("model: margins must be positive");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("model: lambdas must be non-negative");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("model: layer_norm_eps must be positive");
}

std::size_t ModelConfig::content_width() const noexcept { return use_projection ? d_proj : d_c; }
std::size_t ModelConfig::speaker_width() const noexcept { return use_projection ? d_proj : d_s; }

std::size_t ModelConfig::input_width() const noexcept {
  switch (input) {
    case InputMode::fused:
      return content_width() + speaker_width();
    case InputMode::content_only:
      return content_width();
    case InputMode::speaker_only:
      return speaker_width();
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

Linear make_linear(std::size_t out, std::size_t in) {
  return Linear{MatrixXd::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                VectorXd::Zero(static_cast<Eigen::Index>(out))};
}

void xavier(MatrixXd& w, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
}

}  // namespace

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  if (config.use_projection) {
    p.proj_content = make_linear(config.d_proj, config.d_c);
    p.proj_speaker = make_linear(config.d_proj, config.d_s);
  } else {
    p.proj_content = make_linear(0, 0);
    p.proj_speaker = make_linear(0, 0);
  }
  p.input = make_linear(config.d_model, config.input_width());
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    EncoderLayer L;
    L.query = make_linear(config.d_model, config.d_model);
    L.key = make_linear(config.d_model, config.d_model);
    L.value = make_linear(config.d_model, config.d_model);
    L.output = make_linear(config.d_model, config.d_model);
    L.ff1 = make_linear(config.d_ff, config.d_model);
    L.ff2 = make_linear(config.d_model, config.d_ff);
    const auto dm = static_cast<Eigen::Index>(config.d_model);
    L.ln1_gamma = VectorXd::Zero(dm);
    L.ln1_beta = VectorXd::Zero(dm);
    L.ln2_gamma = VectorXd::Zero(dm);
    L.ln2_beta = VectorXd::Zero(dm);
    p.layers.push_back(std::move(L));
  }
  std::size_t in = config.d_model;
  for (std::size_t i = 0; i < 4; ++i) {
    p.fc[i] = make_linear(config.fc_widths[i], in);
    in = config.fc_widths[i];
  }
  return p;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  std::mt19937_64 rng(seed);
  p.for_each([&](const std::string& name, auto& t) {
    if (name.ends_with(".weight")) {
      if constexpr (std::is_same_v<std::decay_t<decltype(t)>, MatrixXd>) xavier(t, rng);
    } else if (name.ends_with(".gamma")) {
      t.setOnes();
    }
  });
  return p;
}

std::size_t ModelParams::size() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for_each([&](const std::string&, const auto& t) {
    out.insert(out.end(), t.data(), t.data() + t.size());
  });
  return out;
}

void ModelParams::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw DomainError("parameter vector has the wrong length");
  std::size_t off = 0;
  for_each([&](const std::string&, auto& t) {
    std::copy_n(flat.data() + off, t.size(), t.data());
    off += static_cast<std::size_t>(t.size());
  });
}

void ModelParams::check_shapes() const {
  const ModelParams ref = zeros(config);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> want;
  ref.for_each([&](const std::string&, const auto& t) { want.emplace_back(t.rows(), t.cols()); });
  std::size_t i = 0;
  bool count_ok = true;
  for_each([&](const std::string& name, const auto& t) {
    if (i >= want.size()) {
      count_ok = false;
      return;
    }
    if (t.rows() != want[i].first || t.cols() != want[i].second) {
      throw SchemaError("tensor " + name + " has shape " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()) + ", config implies " +
                        std::to_string(want[i].first) + "x" + std::to_string(want[i].second));
    }
    ++i;
  });
  if (!count_ok || i != want.size()) throw SchemaError("tensor count disagrees with config");
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

// ---------------------------------------------------------------------------
// Building blocks

Eigen::VectorXd fuse(const MatrixXd& content_segments, const VectorXd& speaker, std::size_t d_c,
                     std::size_t d_s) {
  if (content_segments.rows() == 0) throw DomainError("fuse: empty segment list");
  if (static_cast<std::size_t>(content_segments.cols()) != d_c ||
      static_cast<std::size_t>(speaker.size()) != d_s) {
    throw DomainError("fuse: dimension mismatch");
  }
  VectorXd out(content_segments.cols() + speaker.size());
  out << content_segments.colwise().mean().transpose(), speaker;
  return out;
}

Eigen::MatrixXd fuse_sequence(const MatrixXd& content_segments, const VectorXd& speaker,
                              std::size_t d_c, std::size_t d_s) {
  if (content_segments.rows() == 0) throw DomainError("fuse: empty segment list");
  if (static_cast<std::size_t>(content_segments.cols()) != d_c ||
      static_cast<std::size_t>(speaker.size()) != d_s) {
    throw DomainError("fuse: dimension mismatch");
  }
  MatrixXd out(content_segments.rows(), content_segments.cols() + speaker.size());
  out.leftCols(content_segments.cols()) = content_segments;
  out.rightCols(speaker.size()).rowwise() = speaker.transpose();
  return out;
}

double triplet_loss(const VectorXd& a, const VectorXd& p, const VectorXd& n, double margin) {
  if (a.size() != p.size() || a.size() != n.size()) {
    throw DomainError("triplet_loss: dimension mismatch");
  }
  return std::max(0.0, (a - p).squaredNorm() - (a - n).squaredNorm() + margin);
}

Eigen::VectorXd softmax(const VectorXd& z) {
  const VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <typename Derived>
MatrixXd activate(const Eigen::MatrixBase<Derived>& x, Activation a) {
  switch (a) {
    case Activation::relu:
      return x.cwiseMax(0.0);
    case Activation::tanh:
      return x.array().tanh().matrix();
    case Activation::gelu:
      return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  }
  return x;
}

// d act / dx evaluated at the pre-activation x.
template <typename Derived>
MatrixXd activate_grad(const Eigen::MatrixBase<Derived>& x, Activation a) {
  switch (a) {
    case Activation::relu:
      return x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::tanh:
      return x.unaryExpr([](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
    case Activation::gelu:
      return x.unaryExpr([](double v) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
  }
  return x;
}

// Rows times W^T plus bias.
MatrixXd affine_rows(const MatrixXd& x, const Linear& l) {
  MatrixXd y = x * l.weight.transpose();
  y.rowwise() += l.bias.transpose();
  return y;
}

void accumulate_affine_rows(Linear& g, const MatrixXd& x, const MatrixXd& dy) {
  g.weight.noalias() += dy.transpose() * x;
  g.bias += dy.colwise().sum().transpose();
}

struct NormCache {
  MatrixXd xhat;
  VectorXd inv_std;
};

MatrixXd layer_norm(const MatrixXd& x, const VectorXd& gamma, const VectorXd& beta, double eps,
                    NormCache& cache) {
  const Eigen::Index t = x.rows();
  const double d = static_cast<double>(x.cols());
  cache.xhat.resize(t, x.cols());
  cache.inv_std.resize(t);
  for (Eigen::Index r = 0; r < t; ++r) {
    const double mu = x.row(r).mean();
    const RowVectorXd c = x.row(r).array() - mu;
    const double var = c.squaredNorm() / d;
    cache.inv_std(r) = 1.0 / std::sqrt(var + eps);
    cache.xhat.row(r) = c * cache.inv_std(r);
  }
  MatrixXd y = cache.xhat.array().rowwise() * gamma.transpose().array();
  y.rowwise() += beta.transpose();
  return y;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const VectorXd& gamma, const NormCache& cache,
                             VectorXd& dgamma, VectorXd& dbeta) {
  dgamma += (dy.array() * cache.xhat.array()).colwise().sum().transpose().matrix();
  dbeta += dy.colwise().sum().transpose();
  const MatrixXd dxhat = dy.array().rowwise() * gamma.transpose().array();
  MatrixXd dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = dxhat.row(r).dot(cache.xhat.row(r)) / static_cast<double>(dy.cols());
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2).matrix();
  }
  return dx;
}

MatrixXd positional_encoding(Eigen::Index t, Eigen::Index d) {
  MatrixXd pe(t, d);
  for (Eigen::Index pos = 0; pos < t; ++pos) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe(pos, i) = (i % 2 == 0) ? std::sin(static_cast<double>(pos) * rate)
                                : std::cos(static_cast<double>(pos) * rate);
    }
  }
  return pe;
}

void require_finite(const MatrixXd& m, const char* stage) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite activation in ") + stage);
}

struct LayerCache {
  MatrixXd h_in;
  MatrixXd q, k, v;
  std::vector<MatrixXd> attn;  // per head, T x T
  MatrixXd heads;              // concatenated head outputs, T x d_model
  NormCache norm1, norm2;
  MatrixXd h1;
  MatrixXd ff_pre, ff_act;
};

struct ExampleCache {
  MatrixXd content_proj;  // T x content_width
  VectorXd speaker_proj;
  MatrixXd x0;
  std::vector<LayerCache> layers;
  std::array<VectorXd, 4> fc_in;
  std::array<VectorXd, 4> fc_pre;
  VectorXd logits;
};

VectorXd project(const Linear& l, const VectorXd& x, bool enabled) {
  return enabled ? VectorXd(l.weight * x + l.bias) : x;
}

void check_example(const ModelConfig& cfg, const Example& ex) {
  if (cfg.uses_content()) {
    if (ex.content.rows() == 0) throw DomainError("example has no content segments");
    if (static_cast<std::size_t>(ex.content.cols()) != cfg.d_c) {
      throw DomainError("content segment dimension mismatch");
    }
  }
  if (cfg.uses_speaker() && static_cast<std::size_t>(ex.speaker.size()) != cfg.d_s) {
    throw DomainError("speaker vector dimension mismatch");
  }
  if (ex.label >= 4) throw DomainError("label out of range");
}

VectorXd forward_example(const ModelParams& p, const Example& ex, ExampleCache& c) {
  const ModelConfig& cfg = p.config;
  check_example(cfg, ex);
  const bool proj = cfg.use_projection;

  if (cfg.uses_content()) {
    c.content_proj = proj ? affine_rows(ex.content, p.proj_content) : ex.content;
  }
  if (cfg.uses_speaker()) c.speaker_proj = project(p.proj_speaker, ex.speaker, proj);

  const auto cw = static_cast<Eigen::Index>(cfg.content_width());
  switch (cfg.input) {
    case InputMode::speaker_only:
      c.x0 = c.speaker_proj.transpose();
      break;
    case InputMode::content_only:
      c.x0 = cfg.sequence == SequenceMode::segments ? c.content_proj
                                                    : MatrixXd(c.content_proj.colwise().mean());
      break;
    case InputMode::fused: {
      const Eigen::Index t =
          cfg.sequence == SequenceMode::segments ? c.content_proj.rows() : Eigen::Index{1};
      c.x0.resize(t, static_cast<Eigen::Index>(cfg.input_width()));
      if (cfg.sequence == SequenceMode::segments) {
        c.x0.leftCols(cw) = c.content_proj;
      } else {
        c.x0.leftCols(cw) = c.content_proj.colwise().mean();
      }
      c.x0.rightCols(c.speaker_proj.size()).rowwise() = c.speaker_proj.transpose();
      break;
    }
  }
  require_finite(c.x0, "projection");

  MatrixXd h = affine_rows(c.x0, p.input);
  if (cfg.positional_encoding) h += positional_encoding(h.rows(), h.cols());
  require_finite(h, "input layer");

  const auto n_heads = static_cast<Eigen::Index>(cfg.n_heads);
  const Eigen::Index dh = static_cast<Eigen::Index>(cfg.d_model) / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const EncoderLayer& L = p.layers[l];
    LayerCache& lc = c.layers[l];
    lc.h_in = h;
    lc.q = affine_rows(h, L.query);
    lc.k = affine_rows(h, L.key);
    lc.v = affine_rows(h, L.value);
    lc.heads.resize(h.rows(), h.cols());
    lc.attn.resize(static_cast<std::size_t>(n_heads));
    for (Eigen::Index hd = 0; hd < n_heads; ++hd) {
      MatrixXd s = lc.q.middleCols(hd * dh, dh) * lc.k.middleCols(hd * dh, dh).transpose() * scale;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        s.row(r) = (s.row(r).array() - s.row(r).maxCoeff()).exp();
        s.row(r) /= s.row(r).sum();
      }
      lc.heads.middleCols(hd * dh, dh) = s * lc.v.middleCols(hd * dh, dh);
      lc.attn[static_cast<std::size_t>(hd)] = std::move(s);
    }
    const MatrixXd r1 = h + affine_rows(lc.heads, L.output);
    lc.h1 = layer_norm(r1, L.ln1_gamma, L.ln1_beta, cfg.layer_norm_eps, lc.norm1);
    lc.ff_pre = affine_rows(lc.h1, L.ff1);
    lc.ff_act = activate(lc.ff_pre, cfg.activation);
    const MatrixXd r2 = lc.h1 + affine_rows(lc.ff_act, L.ff2);
    h = layer_norm(r2, L.ln2_gamma, L.ln2_beta, cfg.layer_norm_eps, lc.norm2);
    require_finite(h, "encoder layer");
  }

  c.fc_in[0] = h.colwise().mean().transpose();
  for (std::size_t i = 0; i < 4; ++i) {
    c.fc_pre[i] = p.fc[i].weight * c.fc_in[i] + p.fc[i].bias;
    if (i < 3) c.fc_in[i + 1] = activate(c.fc_pre[i], cfg.activation);
  }
  c.logits = c.fc_pre[3];
  require_finite(c.logits, "fully connected head");
  return c.logits;
}

// Accumulates parameter gradients for one example given dL/dlogits.
void backward_example(const ModelParams& p, const Example& ex, const ExampleCache& c,
                      const VectorXd& dlogits, ModelParams& g) {
  const ModelConfig& cfg = p.config;

  VectorXd da = dlogits;
  for (std::size_t ii = 4; ii-- > 0;) {
    VectorXd du = da;
    if (ii < 3) du = du.cwiseProduct(activate_grad(c.fc_pre[ii], cfg.activation));
    g.fc[ii].weight.noalias() += du * c.fc_in[ii].transpose();
    g.fc[ii].bias += du;
    da = p.fc[ii].weight.transpose() * du;
  }

  const Eigen::Index t = c.x0.rows();
  MatrixXd dh = (da.transpose() / static_cast<double>(t)).replicate(t, 1);

  const auto n_heads = static_cast<Eigen::Index>(cfg.n_heads);
  const Eigen::Index dhd = static_cast<Eigen::Index>(cfg.d_model) / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dhd));
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const EncoderLayer& L = p.layers[l];
    const LayerCache& lc = c.layers[l];
    EncoderLayer& G = g.layers[l];

    const MatrixXd dr2 = layer_norm_backward(dh, L.ln2_gamma, lc.norm2, G.ln2_gamma, G.ln2_beta);
    MatrixXd dh1 = dr2;
    accumulate_affine_rows(G.ff2, lc.ff_act, dr2);
    const MatrixXd dff =
        (dr2 * L.ff2.weight).cwiseProduct(activate_grad(lc.ff_pre, cfg.activation));
    accumulate_affine_rows(G.ff1, lc.h1, dff);
    dh1.noalias() += dff * L.ff1.weight;

    const MatrixXd dr1 = layer_norm_backward(dh1, L.ln1_gamma, lc.norm1, G.ln1_gamma, G.ln1_beta);
    MatrixXd dh_in = dr1;
    accumulate_affine_rows(G.output, lc.heads, dr1);
    const MatrixXd dheads = dr1 * L.output.weight;

    MatrixXd dq(lc.q.rows(), lc.q.cols());
    MatrixXd dk(lc.k.rows(), lc.k.cols());
    MatrixXd dv(lc.v.rows(), lc.v.cols());
    for (Eigen::Index hd = 0; hd < n_heads; ++hd) {
      const MatrixXd& a = lc.attn[static_cast<std::size_t>(hd)];
      const auto d_o = dheads.middleCols(hd * dhd, dhd);
      const MatrixXd da_att = d_o * lc.v.middleCols(hd * dhd, dhd).transpose();
      dv.middleCols(hd * dhd, dhd) = a.transpose() * d_o;
      const VectorXd row_dot = (da_att.array() * a.array()).rowwise().sum();
      const MatrixXd ds = (a.array() * (da_att.colwise() - row_dot).array()).matrix() * scale;
      dq.middleCols(hd * dhd, dhd) = ds * lc.k.middleCols(hd * dhd, dhd);
      dk.middleCols(hd * dhd, dhd) = ds.transpose() * lc.q.middleCols(hd * dhd, dhd);
    }
    accumulate_affine_rows(G.query, lc.h_in, dq);
    accumulate_affine_rows(G.key, lc.h_in, dk);
    accumulate_affine_rows(G.value, lc.h_in, dv);
    dh_in.noalias() += dq * L.query.weight;
    dh_in.noalias() += dk * L.key.weight;
    dh_in.noalias() += dv * L.value.weight;
    dh = std::move(dh_in);
  }

  accumulate_affine_rows(g.input, c.x0, dh);
  if (!cfg.use_projection) return;
  const MatrixXd dx0 = dh * p.input.weight;

  const auto cw = static_cast<Eigen::Index>(cfg.content_width());
  const auto sw = static_cast<Eigen::Index>(cfg.speaker_width());
  MatrixXd dcontent;  // T_content x cw
  VectorXd dspeaker;
  switch (cfg.input) {
    case InputMode::speaker_only:
      dspeaker = dx0.row(0).transpose();
      break;
    case InputMode::content_only:
      if (cfg.sequence == SequenceMode::segments) {
        dcontent = dx0;
      } else {
        dcontent = (dx0.row(0) / static_cast<double>(ex.content.rows())).replicate(ex.content.rows(), 1);
      }
      break;
    case InputMode::fused:
      if (cfg.sequence == SequenceMode::segments) {
        dcontent = dx0.leftCols(cw);
      } else {
        dcontent = (dx0.row(0).leftCols(cw) / static_cast<double>(ex.content.rows()))
                       .replicate(ex.content.rows(), 1);
      }
      dspeaker = dx0.rightCols(sw).colwise().sum().transpose();
      break;
  }
  if (dcontent.size() > 0) accumulate_affine_rows(g.proj_content, ex.content, dcontent);
  if (dspeaker.size() > 0) {
    g.proj_speaker.weight.noalias() += dspeaker * ex.speaker.transpose();
    g.proj_speaker.bias += dspeaker;
  }
}

struct TripletTerm {
  double loss = 0.0;
};

// Mean hinge over `triplets` in the space given by `proj`; accumulates scaled
// gradients into `g` and `inputs` when they are non-null.
double triplet_term(const Linear& proj, bool use_projection,
                    const std::vector<TripletVectors>& triplets, double margin, double weight,
                    Linear* g, std::vector<TripletInputGrad>* inputs) {
  if (triplets.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(triplets.size());
  double total = 0.0;
  if (inputs) inputs->clear();
  for (const auto& t : triplets) {
    const VectorXd pa = project(proj, t.anchor, use_projection);
    const VectorXd pp = project(proj, t.positive, use_projection);
    const VectorXd pn = project(proj, t.negative, use_projection);
    const double h = (pa - pp).squaredNorm() - (pa - pn).squaredNorm() + margin;
    TripletInputGrad in{VectorXd::Zero(t.anchor.size()), VectorXd::Zero(t.positive.size()),
                        VectorXd::Zero(t.negative.size())};
    if (h > 0.0) {
      total += h;
      const double s = weight * inv_n;
      const VectorXd ga = 2.0 * s * (pn - pp);
      const VectorXd gp = -2.0 * s * (pa - pp);
      const VectorXd gn = 2.0 * s * (pa - pn);
      if (use_projection) {
        if (g) {
          g->weight.noalias() += ga * t.anchor.transpose();
          g->weight.noalias() += gp * t.positive.transpose();
          g->weight.noalias() += gn * t.negative.transpose();
          g->bias += ga + gp + gn;
        }
        in.anchor = proj.weight.transpose() * ga;
        in.positive = proj.weight.transpose() * gp;
        in.negative = proj.weight.transpose() * gn;
      } else {
        in.anchor = ga;
        in.positive = gp;
        in.negative = gn;
      }
    }
    if (inputs) inputs->push_back(std::move(in));
  }
  return total * inv_n;
}

double cross_entropy(const VectorXd& z, std::size_t label) {
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return lse - z(static_cast<Eigen::Index>(label));
}

}  // namespace

Eigen::MatrixXd forward(const ModelParams& params, const Batch& batch) {
  MatrixXd out(static_cast<Eigen::Index>(batch.examples.size()), 4);
  ExampleCache cache;
  for (std::size_t i = 0; i < batch.examples.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        forward_example(params, batch.examples[i], cache).transpose();
  }
  return out;
}

Eigen::VectorXd logits(const ModelParams& params, const Example& example) {
  ExampleCache cache;
  return forward_example(params, example, cache);
}

LossBreakdown loss_total(const ModelParams& params, const Batch& batch) {
  const ModelConfig& cfg = params.config;
  LossBreakdown out;
  if (!batch.examples.empty()) {
    ExampleCache cache;
    double sum = 0.0;
    for (const auto& ex : batch.examples) sum += cross_entropy(forward_example(params, ex, cache), ex.label);
    out.ser = sum / static_cast<double>(batch.examples.size());
  }
  if (cfg.phoneme_loss) {
    out.phoneme = triplet_term(params.proj_content, cfg.use_projection, batch.phoneme_triplets,
                               cfg.alpha, 0.0, nullptr, nullptr);
  }
  if (cfg.speaker_loss) {
    out.speaker = triplet_term(params.proj_speaker, cfg.use_projection, batch.speaker_triplets,
                               cfg.beta, 0.0, nullptr, nullptr);
  }
  out.total = out.ser + cfg.lambda1 * out.phoneme + cfg.lambda2 * out.speaker;
  if (!std::isfinite(out.total)) throw NumericError("non-finite total loss");
  return out;
}

Gradients backward(const ModelParams& params, const Batch& batch) {
  const ModelConfig& cfg = params.config;
  Gradients g{ModelParams::zeros(cfg), {}, {}, {}};
  if (!batch.examples.empty()) {
    const double inv_b = 1.0 / static_cast<double>(batch.examples.size());
    ExampleCache cache;
    double sum = 0.0;
    for (const auto& ex : batch.examples) {
      const VectorXd z = forward_example(params, ex, cache);
      sum += cross_entropy(z, ex.label);
      VectorXd dz = softmax(z);
      dz(static_cast<Eigen::Index>(ex.label)) -= 1.0;
      backward_example(params, ex, cache, dz * inv_b, g.params);
    }
    g.loss.ser = sum * inv_b;
  }
  if (cfg.phoneme_loss) {
    g.loss.phoneme = triplet_term(params.proj_content, cfg.use_projection, batch.phoneme_triplets,
                                  cfg.alpha, cfg.lambda1, &g.params.proj_content,
                                  &g.phoneme_inputs);
  }
  if (cfg.speaker_loss) {
    g.loss.speaker = triplet_term(params.proj_speaker, cfg.use_projection, batch.speaker_triplets,
                                  cfg.beta, cfg.lambda2, &g.params.proj_speaker,
                                  &g.speaker_inputs);
  }
  g.loss.total = g.loss.ser + cfg.lambda1 * g.loss.phoneme + cfg.lambda2 * g.loss.speaker;
  if (!std::isfinite(g.loss.total)) throw NumericError("non-finite total loss");
  return g;
}

}  // namespace sapa
