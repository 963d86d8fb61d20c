#include "pipeline_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sapa/error.hpp"

namespace sapa::cli {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults{
      {"out_dir", "sapa_out"},
      {"source_data", ""},
      {"target_data", ""},
      {"source_corpus", "src"},
      {"target_corpus", "tgt"},
      {"seed", "1"},
      {"tau", "0.7"},
      {"graph.unweighted", "false"},

      {"anchor.rule", "top_k"},
      {"anchor.k", "3"},
      {"anchor.theta", "0.7"},
      {"anchor.candidates", "vowels"},

      {"alpha", "0.4"},
      {"beta", "0.6"},
      {"lambda1", "0.5"},
      {"lambda2", "0.5"},
      {"model.projection", "true"},
      {"model.d_proj", "32"},
      {"model.d_model", "32"},
      {"model.n_heads", "4"},
      {"model.n_layers", "1"},
      {"model.d_ff", "64"},
      {"model.activation", "gelu"},
      {"model.sequence", "segments"},
      {"model.positional_encoding", "false"},

      {"train.mode", "SAPA"},
      {"train.learning_rate", "1e-4"},
      {"train.weight_decay", "1e-3"},
      {"train.max_epochs", "70"},
      {"train.batch_size", "64"},
      {"train.patience", "7"},
      {"mining.anchors_per_batch", "64"},
      {"mining.cross_corpus_positive", "true"},

      {"ablate.seeds", "5"},
      {"threads", "1"},
      {"transfer.random_seeds", "10"},
      {"transfer.min_group_speakers", "1"},

      {"synth.speakers", "12"},
      {"synth.utterances", "10"},
      {"synth.segments", "8"},
      {"synth.clusters", "3"},
      {"synth.spread", "0.05"},
      {"synth.anchor_gap", "0.2"},
      {"synth.non_anchor_gap", "0.9"},
      {"synth.emotion_signal", "1.0"},
      {"synth.speaker_emotion", "0.3"},
      {"synth.speaker_gap", "1.0"},
      {"synth.speaker_noise", "1.0"},
      {"synth.content_noise", "1.0"},
      {"synth.d_s", "64"},
      {"synth.d_c", "64"},
      {"synth.validation_fraction", "0.2"},
      {"synth.test_fraction", "0.2"},
  };
  return defaults;
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

class Reader {
 public:
  explicit Reader(const std::map<std::string, std::string>& v) : v_(v) {}

  const std::string& str(const std::string& key) const { return v_.at(key); }

  double real(const std::string& key) const {
    const auto& s = str(key);
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(key, "a number");
    return x;
  }

  std::uint64_t uint(const std::string& key) const {
    const auto& s = str(key);
    std::uint64_t x = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(key, "a non-negative integer");
    return x;
  }

  std::size_t size(const std::string& key) const { return static_cast<std::size_t>(uint(key)); }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    fail(key, "true or false");
  }

 private:
  [[noreturn]] void fail(const std::string& key, const char* what) const {
    throw ConfigError("config key '" + key + "' must be " + what + ", got '" + str(key) + "'");
  }
  const std::map<std::string, std::string>& v_;
};

void set_value(std::map<std::string, std::string>& values, const std::string& key,
               const std::string& value, const std::string& origin) {
  auto it = values.find(key);
  if (it == values.end()) throw ConfigError(origin + ": unknown config key '" + key + "'");
  it->second = value;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(n) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(n) + ": empty key");
    if (!default_values().contains(key)) {
      throw ConfigError(origin + ":" + std::to_string(n) + ": unknown config key '" + key + "'");
    }
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

bool hashed_key(const std::string& key) { return key != "out_dir" && key != "threads"; }

std::string PipelineConfig::canonical() const {
  std::string s;
  for (const auto& [k, v] : values) {
    if (!hashed_key(k)) continue;
    s += k + "=" + v + "\n";
  }
  return s;
}

std::string PipelineConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  PipelineConfig c;
  c.values = default_values();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw MissingArtifactError(file->string());
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : parse_config_text(ss.str(), file->string())) {
      set_value(c.values, k, v, file->string());
    }
  }
  for (const auto& [k, v] : overrides) set_value(c.values, k, v, "command line");

  const Reader r(c.values);
  c.out_dir = r.str("out_dir");
  c.source_data = r.str("source_data").empty() ? c.out_dir / "source.jsonl"
                                               : std::filesystem::path(r.str("source_data"));
  c.target_data = r.str("target_data").empty() ? c.out_dir / "target.jsonl"
                                               : std::filesystem::path(r.str("target_data"));
  c.source_corpus = r.str("source_corpus");
  c.target_corpus = r.str("target_corpus");
  if (c.source_corpus.empty() || c.target_corpus.empty() || c.source_corpus == c.target_corpus) {
    throw ConfigError("source_corpus and target_corpus must be distinct and non-empty");
  }
  c.seed = r.uint("seed");
  c.tau = r.real("tau");
  if (!(c.tau >= -1.0 && c.tau < 1.0)) throw ConfigError("tau must lie in [-1, 1)");
  c.unweighted = r.flag("graph.unweighted");

  const auto& rule = r.str("anchor.rule");
  if (rule == "top_k") {
    c.anchor_rule = AnchorRule::top_k(r.size("anchor.k"));
  } else if (rule == "threshold") {
    c.anchor_rule = AnchorRule::threshold(r.real("anchor.theta"));
  } else {
    throw ConfigError("anchor.rule must be top_k or threshold");
  }
  const auto& cand = r.str("anchor.candidates");
  if (cand == "all") {
    c.anchor_rule.candidates.clear();
  } else if (cand != "vowels") {
    throw ConfigError("anchor.candidates must be vowels or all");
  }

  auto& m = c.train.model;
  m.alpha = r.real("alpha");
  m.beta = r.real("beta");
  m.lambda1 = r.real("lambda1");
  m.lambda2 = r.real("lambda2");
  m.use_projection = r.flag("model.projection");
  m.d_proj = r.size("model.d_proj");
  m.d_model = r.size("model.d_model");
  m.n_heads = r.size("model.n_heads");
  m.n_layers = r.size("model.n_layers");
  m.d_ff = r.size("model.d_ff");
  const auto& act = r.str("model.activation");
  if (act == "gelu") {
    m.activation = Activation::gelu;
  } else if (act == "relu") {
    m.activation = Activation::relu;
  } else if (act == "tanh") {
    m.activation = Activation::tanh;
  } else {
    throw ConfigError("model.activation must be gelu, relu or tanh");
  }
  const auto& seq = r.str("model.sequence");
  if (seq == "segments") {
    m.sequence = SequenceMode::segments;
  } else if (seq == "utterance") {
    m.sequence = SequenceMode::utterance;
  } else {
    throw ConfigError("model.sequence must be segments or utterance");
  }
  m.positional_encoding = r.flag("model.positional_encoding");

  const auto mode = parse_mode(r.str("train.mode"));
  if (!mode) {
    throw ConfigError("train.mode must be one of SAPA, Only-S, Only-P, SAPA-Only-S, SAPA-Only-P");
  }
  c.train.mode = *mode;
  c.train.learning_rate = r.real("train.learning_rate");
  c.train.weight_decay = r.real("train.weight_decay");
  c.train.max_epochs = r.size("train.max_epochs");
  c.train.batch_size = r.size("train.batch_size");
  c.train.early_stop_patience = r.size("train.patience");
  c.train.seed = c.seed;
  c.train.source_corpus = c.source_corpus;
  c.train.mining.anchors_per_batch = r.size("mining.anchors_per_batch");
  c.train.mining.cross_corpus_positive = r.flag("mining.cross_corpus_positive");

  c.ablate_seeds = r.size("ablate.seeds");
  if (c.ablate_seeds == 0) throw ConfigError("ablate.seeds must be positive");
  c.threads = r.size("threads");
  c.transfer.n_random_seeds = r.size("transfer.random_seeds");
  if (c.transfer.n_random_seeds == 0) throw ConfigError("transfer.random_seeds must be positive");
  c.transfer.min_group_speakers = r.size("transfer.min_group_speakers");
  c.transfer.seed = c.seed;

  auto& s = c.synth;
  s.seed = c.seed;
  s.corpora = {c.source_corpus, c.target_corpus};
  s.speakers_per_corpus = r.size("synth.speakers");
  s.utterances_per_speaker = r.size("synth.utterances");
  s.segments_per_utterance = r.size("synth.segments");
  s.n_style_clusters = r.size("synth.clusters");
  s.cluster_spread = r.real("synth.spread");
  s.cross_corpus_anchor_gap = r.real("synth.anchor_gap");
  s.non_anchor_gap = r.real("synth.non_anchor_gap");
  s.emotion_signal_strength = r.real("synth.emotion_signal");
  s.speaker_emotion_strength = r.real("synth.speaker_emotion");
  s.speaker_corpus_gap = r.real("synth.speaker_gap");
  s.speaker_noise = r.real("synth.speaker_noise");
  s.content_noise = r.real("synth.content_noise");
  s.d_s = r.size("synth.d_s");
  s.d_c = r.size("synth.d_c");
  s.validation_fraction = r.real("synth.validation_fraction");
  s.test_fraction = r.real("synth.test_fraction");

  c.train.validate();
  return c;
}

}  // namespace sapa::cli
