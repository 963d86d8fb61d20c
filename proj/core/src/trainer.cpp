#include "sapa/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "sapa/error.hpp"
#include "sapa/evalkit.hpp"
#include "sapa/utterance.hpp"

namespace sapa {

std::string_view to_string(TrainMode m) noexcept {
  switch (m) {
    case TrainMode::sapa:
      return "SAPA";
    case TrainMode::only_s:
      return "Only-S";
    case TrainMode::only_p:
      return "Only-P";
    case TrainMode::sapa_only_s:
      return "SAPA-Only-S";
    case TrainMode::sapa_only_p:
      return "SAPA-Only-P";
  }
  return "unknown";
}

std::optional<TrainMode> parse_mode(std::string_view s) noexcept {
  for (TrainMode m : kAllModes) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

std::string_view to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::max_epochs:
      return "max_epochs";
    case StopReason::early_stopping:
      return "early_stopping";
    case StopReason::diverged:
      return "diverged";
  }
  return "unknown";
}

ModelConfig configure_for_mode(ModelConfig base, TrainMode mode) {
  switch (mode) {
    case TrainMode::sapa:
      base.input = InputMode::fused;
      base.phoneme_loss = base.speaker_loss = true;
      break;
    case TrainMode::only_s:
      base.input = InputMode::speaker_only;
      base.phoneme_loss = base.speaker_loss = false;
      break;
    case TrainMode::only_p:
      base.input = InputMode::content_only;
      base.phoneme_loss = base.speaker_loss = false;
      break;
    case TrainMode::sapa_only_s:
      base.input = InputMode::fused;
      base.phoneme_loss = false;
      base.speaker_loss = true;
      break;
    case TrainMode::sapa_only_p:
      base.input = InputMode::fused;
      base.phoneme_loss = true;
      base.speaker_loss = false;
      break;
  }
  return base;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (early_stop_patience == 0) throw ConfigError("early_stop_patience must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0)) {
    throw ConfigError("adam: betas must lie in [0, 1) and epsilon must be positive");
  }
  if (source_corpus.empty()) throw ConfigError("source_corpus must be set");
  model.validate();
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E5B9ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct Adam {
  std::vector<double> m, v;
  std::size_t t = 0;
};

void adam_step(ModelParams& params, const ModelParams& grads, Adam& state, const TrainConfig& cfg) {
  std::vector<double> theta = params.flatten();
  const std::vector<double> g = grads.flatten();
  if (state.m.empty()) {
    state.m.assign(theta.size(), 0.0);
    state.v.assign(theta.size(), 0.0);
  }
  ++state.t;
  const auto& a = cfg.adam;
  const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = a.beta1 * state.m[i] + (1.0 - a.beta1) * g[i];
    state.v[i] = a.beta2 * state.v[i] + (1.0 - a.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    theta[i] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + a.epsilon) +
                                     cfg.weight_decay * theta[i]);
  }
  params.assign(theta);
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

class TripletSource {
 public:
  TripletSource(std::span<const EmbeddingRecord> records) {
    for (const auto& r : records) {
      if (r.split == Split::train) train_.push_back(r);
    }
    for (std::size_t i = 0; i < train_.size(); ++i) index_.emplace(train_[i].record_id, i);
  }

  std::vector<TripletVectors> vectors(const std::vector<Triplet>& triplets) const {
    std::vector<TripletVectors> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) {
      out.push_back(TripletVectors{vec(t.anchor_id), vec(t.positive_id), vec(t.negative_id)});
    }
    return out;
  }

  std::span<const EmbeddingRecord> records() const { return train_; }

 private:
  Eigen::VectorXd vec(const std::string& id) const {
    return to_eigen(train_[index_.at(id)].vector);
  }
  std::vector<EmbeddingRecord> train_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<Example> examples_for(const std::vector<Utterance>& utts, const ModelConfig& cfg,
                                  std::size_t& skipped) {
  std::vector<Example> out;
  skipped = 0;
  for (const auto& u : utts) {
    if (auto ex = make_example(u, cfg)) {
      out.push_back(std::move(*ex));
    } else {
      ++skipped;
    }
  }
  return out;
}

}  // namespace

TrainResult train(std::span<const EmbeddingRecord> records, const TrainConfig& cfg,
                  const AnchorSet& anchors, const PartitionMap& partitions) {
  cfg.validate();
  const ModelConfig model_cfg = configure_for_mode(cfg.model, cfg.mode);

  const auto train_utts =
      assemble_utterances(records, UtteranceFilter{cfg.source_corpus, Split::train});
  const auto valid_utts =
      assemble_utterances(records, UtteranceFilter{cfg.source_corpus, Split::validation});

  TrainReport report;
  report.mode = cfg.mode;
  report.seed = cfg.seed;
  std::size_t skipped = 0;
  const std::vector<Example> train_set = examples_for(train_utts, model_cfg, skipped);
  if (skipped > 0) {
    report.notices.push_back(std::to_string(skipped) +
                             " training utterance(s) lack required embeddings");
  }
  if (train_set.empty()) {
    throw InsufficientDataError("no usable training utterances in corpus '" + cfg.source_corpus + "'");
  }
  const std::vector<Utterance> valid_set = [&] {
    std::vector<Utterance> v;
    for (const auto& u : valid_utts) {
      if (make_example(u, model_cfg)) v.push_back(u);
    }
    return v;
  }();
  if (valid_set.empty()) {
    throw InsufficientDataError("no usable validation utterances in corpus '" + cfg.source_corpus +
                                "'");
  }
  report.train_utterances = train_set.size();
  report.validation_utterances = valid_set.size();

  const TripletSource source(records);
  const bool mine_p = model_cfg.phoneme_loss;
  const bool mine_s = model_cfg.speaker_loss;

  ModelParams params = ModelParams::init(model_cfg, cfg.seed);
  ModelParams best = params;
  Adam adam;
  std::size_t since_best = 0;
  const std::size_t n_batches = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix(cfg.seed, 2 * epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    MiningConfig mining = cfg.mining;
    mining.n_batches = n_batches;
    mining.seed = mix(cfg.seed, 2 * epoch + 1);
    std::vector<TripletVectors> p_trip;
    std::vector<TripletVectors> s_trip;
    if (mine_p) {
      auto r = mine_phoneme_triplets(source.records(), anchors, partitions, mining);
      p_trip = source.vectors(r.triplets);
      if (epoch == 1) report.notices.insert(report.notices.end(), r.report.notices.begin(), r.report.notices.end());
    }
    if (mine_s) {
      mining.seed = mix(mining.seed, 0x5eed);
      auto r = mine_speaker_triplets(source.records(), partitions, mining);
      s_trip = source.vectors(r.triplets);
      if (epoch == 1) report.notices.insert(report.notices.end(), r.report.notices.begin(), r.report.notices.end());
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.phoneme_triplets = p_trip.size();
    stats.speaker_triplets = s_trip.size();
    bool diverged = false;
    for (std::size_t b = 0; b < n_batches && !diverged; ++b) {
      Batch batch;
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(lo + cfg.batch_size, order.size());
      for (std::size_t i = lo; i < hi; ++i) batch.examples.push_back(train_set[order[i]]);
      for (std::size_t i = b; i < p_trip.size(); i += n_batches) batch.phoneme_triplets.push_back(p_trip[i]);
      for (std::size_t i = b; i < s_trip.size(); i += n_batches) batch.speaker_triplets.push_back(s_trip[i]);
      try {
        const Gradients g = backward(params, batch);
        if (!g.params.all_finite()) throw NumericError("non-finite gradient");
        adam_step(params, g.params, adam, cfg);
        if (!params.all_finite()) throw NumericError("non-finite parameters after update");
        stats.ser += g.loss.ser;
        stats.phoneme += g.loss.phoneme;
        stats.speaker += g.loss.speaker;
        stats.total += g.loss.total;
      } catch (const NumericError& e) {
        report.notices.push_back("epoch " + std::to_string(epoch) + ": " + e.what());
        diverged = true;
      }
    }
    if (diverged) {
      report.stop_reason = StopReason::diverged;
      break;
    }
    const double nb = static_cast<double>(n_batches);
    stats.ser /= nb;
    stats.phoneme /= nb;
    stats.speaker /= nb;
    stats.total /= nb;
    stats.validation_uar = uar(confusion(predict(params, valid_set)));
    report.epochs.push_back(stats);

    if (report.best_epoch == 0 || stats.validation_uar > report.best_validation_uar) {
      report.best_epoch = epoch;
      report.best_validation_uar = stats.validation_uar;
      best = params;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      report.stop_reason = StopReason::early_stopping;
      break;
    }
  }
  return TrainResult{std::move(best), std::move(report)};
}

std::vector<SuiteRun> run_mode_suite(std::span<const EmbeddingRecord> records,
                                     const TrainConfig& base, std::span<const std::uint64_t> seeds,
                                     const AnchorSet& anchors, const PartitionMap& partitions,
                                     std::span<const TrainMode> modes, std::size_t threads) {
  if (seeds.empty()) throw ConfigError("run_mode_suite needs at least one seed");
  std::vector<SuiteRun> runs;
  for (std::uint64_t s : seeds) {
    for (TrainMode m : modes) runs.push_back(SuiteRun{m, s, std::nullopt, {}});
  }
  auto work = [&](SuiteRun& run) {
    TrainConfig cfg = base;
    cfg.mode = run.mode;
    cfg.seed = run.seed;
    try {
      run.result = train(records, cfg, anchors, partitions);
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, runs.size());
  if (threads <= 1) {
    for (auto& r : runs) work(r);
    return runs;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < runs.size(); i = next++) work(runs[i]);
    });
  }
  pool.clear();
  return runs;
}

void write_report_json(std::ostream& out, const TrainReport& report) {
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"L_SER", e.ser},
                      {"L_p", e.phoneme},
                      {"L_s", e.speaker},
                      {"total", e.total},
                      {"validation_uar", e.validation_uar},
                      {"phoneme_triplets", e.phoneme_triplets},
                      {"speaker_triplets", e.speaker_triplets}});
  }
  nlohmann::ordered_json j{{"mode", to_string(report.mode)},
                           {"seed", report.seed},
                           {"train_utterances", report.train_utterances},
                           {"validation_utterances", report.validation_utterances},
                           {"best_epoch", report.best_epoch},
                           {"best_validation_uar", report.best_validation_uar},
                           {"stop_reason", to_string(report.stop_reason)},
                           {"epochs", std::move(epochs)},
                           {"notices", report.notices}};
  out << j.dump(2) << '\n';
}

}  // namespace sapa
