#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sapa/error.hpp"
#include "sapa/synthetic.hpp"

namespace sapa::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string provenance_line(const PipelineConfig& cfg, std::string_view comment) {
  return std::string(comment) + " sapa config_hash=" + cfg.hash() +
         " seed=" + std::to_string(cfg.seed) + "\n";
}

ojson stamp(const PipelineConfig& cfg) {
  ojson config = ojson::object();
  for (const auto& [k, v] : cfg.values) {
    if (hashed_key(k)) config[k] = v;
  }
  return ojson{{"config_hash", cfg.hash()}, {"seed", cfg.seed}, {"config", std::move(config)}};
}

ojson stamped(const PipelineConfig& cfg, ojson body) {
  ojson j = stamp(cfg);
  for (auto& [k, v] : body.items()) j[k] = std::move(v);
  return j;
}

fs::path artifact(const PipelineConfig& cfg, const std::string& name) { return cfg.out_dir / name; }

void require(const fs::path& p) {
  if (!fs::exists(p)) throw MissingArtifactError(p.string());
}

void write_file(const fs::path& p, const std::function<void(std::ostream&)>& body) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  body(out);
  out.flush();
  if (!out) throw IoError("write failed for " + p.string());
}

void write_json(const fs::path& p, const ojson& j) {
  write_file(p, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

ojson read_json(const fs::path& p) {
  require(p);
  std::ifstream in(p);
  try {
    return ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what(), 0);
  }
}

void write_resolved_config(const PipelineConfig& cfg) {
  write_file(artifact(cfg, "config.resolved"), [&](std::ostream& o) {
    o << provenance_line(cfg, "#") << cfg.canonical();
  });
}

Dataset load_data(const PipelineConfig& cfg) {
  require(cfg.source_data);
  require(cfg.target_data);
  const std::vector<Dataset> parts{read_dataset(cfg.source_data), read_dataset(cfg.target_data)};
  return merge_datasets(parts);
}

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string graph_stem(const std::optional<Emotion>& e) {
  return "graph_" + (e ? std::string(to_string(*e)) : std::string("global"));
}

ojson graph_summary(const EmotionClustering& c) {
  std::size_t mixed = 0;
  std::map<std::size_t, std::set<std::string>> corpora;
  for (std::size_t i = 0; i < c.graph.nodes.size(); ++i) {
    corpora[c.partition.assignment[i]].insert(c.graph.nodes[i].corpus_id);
  }
  for (const auto& [comm, set] : corpora) mixed += set.size() > 1 ? 1 : 0;
  return ojson{{"nodes", c.graph.size()},
               {"edges", c.graph.edges.size()},
               {"communities", c.partition.n_communities},
               {"cross_corpus_communities", mixed},
               {"modularity", c.report.q},
               {"partition", graph_stem(c.graph.emotion) + ".csv"}};
}

void export_graph(const PipelineConfig& cfg, const EmotionClustering& c) {
  const std::string stem = graph_stem(c.graph.emotion);
  write_file(artifact(cfg, stem + ".edges"), [&](std::ostream& o) {
    o << provenance_line(cfg, "#");
    write_edge_list(o, c.graph);
  });
  write_file(artifact(cfg, stem + ".csv"), [&](std::ostream& o) {
    o << provenance_line(cfg, "#");
    write_communities_csv(o, c.graph, c.partition);
  });
  write_file(artifact(cfg, stem + ".dot"), [&](std::ostream& o) {
    o << provenance_line(cfg, "//");
    write_dot(o, c.graph, c.partition);
  });
}

CommunityMap load_partition_file(const fs::path& p) {
  require(p);
  std::ifstream in(p);
  return read_communities_csv(in);
}

struct Partitions {
  PartitionMap per_emotion;
  CommunityMap global;
};

Partitions load_partitions(const PipelineConfig& cfg) {
  const ojson j = read_json(artifact(cfg, "modularity.json"));
  Partitions out;
  for (const auto& [name, entry] : j.at("emotions").items()) {
    const auto e = parse_emotion(name);
    if (!e) throw SchemaError("modularity.json: unknown emotion '" + name + "'");
    out.per_emotion[*e] =
        load_partition_file(artifact(cfg, entry.at("partition").get<std::string>()));
  }
  if (out.per_emotion.empty()) throw InsufficientDataError("modularity.json lists no clustered emotion");
  out.global = load_partition_file(artifact(cfg, "graph_global.csv"));
  return out;
}

AnchorSet load_anchors(const PipelineConfig& cfg) {
  const fs::path p = artifact(cfg, "anchors.json");
  require(p);
  std::ifstream in(p);
  return read_anchor_json(in);
}

ModelParams load_model(const PipelineConfig& cfg) {
  const fs::path p = artifact(cfg, "model.ckpt");
  require(p);
  std::ifstream in(p);
  return read_checkpoint(in);
}

TrainConfig train_config_for(const PipelineConfig& cfg, const Dataset& data) {
  TrainConfig t = cfg.train;
  t.model.d_c = data.manifest.d_c;
  t.model.d_s = data.manifest.d_s;
  return t;
}

ojson confusion_json(const ConfusionMatrix& cm) {
  ojson rows = ojson::array();
  for (const auto& row : cm.counts) rows.push_back(row);
  return rows;
}

ojson recalls_json(const ConfusionMatrix& cm) {
  ojson j = ojson::object();
  for (Emotion e : kAllEmotions) {
    const auto n = cm.support(e);
    j[std::string(to_string(e))] =
        n == 0 ? ojson(nullptr)
               : ojson(static_cast<double>(cm.counts[index_of(e)][index_of(e)]) /
                       static_cast<double>(n));
  }
  return j;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void cmd_synth(const PipelineConfig& cfg, std::ostream& log) {
  const SyntheticDataset syn = generate_synthetic(cfg.synth);
  const auto& all = syn.dataset;
  auto split_out = [&](const std::string& corpus, const fs::path& path) {
    Dataset d;
    for (const auto& r : all.records) {
      if (r.corpus_id == corpus) d.records.push_back(r);
    }
    d.manifest = make_manifest(all.manifest.d_s, all.manifest.d_c, d.records,
                               all.manifest.phoneme_inventory);
    d.manifest.metadata = all.manifest.metadata;
    d.manifest.metadata["config_hash"] = cfg.hash();
    d.manifest.metadata["seed"] = std::to_string(cfg.seed);
    write_file(path, [&](std::ostream& o) { write_dataset(o, d); });
    log << "[synth] " << corpus << ": " << d.records.size() << " records -> " << path.string()
        << '\n';
  };
  split_out(cfg.source_corpus, cfg.source_data);
  split_out(cfg.target_corpus, cfg.target_data);

  ojson clusters = ojson::object();
  for (const auto& [key, arr] : syn.truth.style_cluster) clusters[key.first + ":" + key.second] = arr;
  ojson anchored = ojson::object();
  for (Emotion e : kAllEmotions) {
    anchored[std::string(to_string(e))] = syn.truth.anchored_phonemes[index_of(e)];
  }
  write_json(artifact(cfg, "truth.json"),
             stamped(cfg, ojson{{"style_cluster", clusters}, {"anchored_phonemes", anchored}}));
  write_resolved_config(cfg);
}

void cmd_graph(const PipelineConfig& cfg, std::ostream& log) {
  const Dataset data = load_data(cfg);
  GraphOptions opt;
  opt.tau = cfg.tau;
  opt.unweighted = cfg.unweighted;
  const ClusteringResult res = cluster_all_emotions(data.records, cfg.seed, opt);
  for (const auto& n : res.notices) log << "[graph] notice: " << n << '\n';
  if (res.per_emotion.empty()) {
    std::string msg = "no emotion could be clustered";
    for (const auto& n : res.notices) msg += "; " + n;
    throw InsufficientDataError(msg);
  }
  ojson emotions = ojson::object();
  for (const auto& [e, c] : res.per_emotion) {
    export_graph(cfg, c);
    emotions[std::string(to_string(e))] = graph_summary(c);
    log << "[graph] " << to_string(e) << ": " << c.graph.size() << " nodes, "
        << c.graph.edges.size() << " edges, " << c.partition.n_communities
        << " communities, Q=" << c.report.q << '\n';
  }
  const EmotionClustering global =
      cluster_graph(build_global_graph(data.records, opt), cfg.seed + kNumEmotions, cfg.unweighted);
  export_graph(cfg, global);
  log << "[graph] global: " << global.partition.n_communities << " communities, Q="
      << global.report.q << '\n';
  write_json(artifact(cfg, "modularity.json"),
             stamped(cfg, ojson{{"tau", cfg.tau},
                                {"emotions", emotions},
                                {"global", graph_summary(global)},
                                {"notices", res.notices}}));
  write_resolved_config(cfg);
}

void cmd_anchors(const PipelineConfig& cfg, std::ostream& log) {
  const Dataset data = load_data(cfg);
  const PhonemeSimilarityTable table = phoneme_similarity(
      data.records, cfg.source_corpus, cfg.target_corpus, data.manifest.phoneme_inventory);
  for (const auto& w : table.warnings) log << "[anchors] warning: " << w << '\n';
  const AnchorSet anchors = select_anchors(table, cfg.anchor_rule);
  write_file(artifact(cfg, "phoneme_similarity.csv"), [&](std::ostream& o) {
    o << provenance_line(cfg, "#");
    write_similarity_csv(o, table);
  });
  std::ostringstream ss;
  write_anchor_json(ss, anchors);
  write_json(artifact(cfg, "anchors.json"), stamped(cfg, ojson::parse(ss.str())));
  for (Emotion e : kAllEmotions) {
    log << "[anchors] " << to_string(e) << ":";
    for (const auto& p : anchors.phonemes(e)) log << ' ' << p;
    log << '\n';
  }
  write_resolved_config(cfg);
}

void cmd_train(const PipelineConfig& cfg, std::ostream& log) {
  const Dataset data = load_data(cfg);
  const AnchorSet anchors = load_anchors(cfg);
  const Partitions parts = load_partitions(cfg);
  const TrainResult res = train(data.records, train_config_for(cfg, data), anchors, parts.per_emotion);
  std::ostringstream ss;
  write_report_json(ss, res.report);
  write_json(artifact(cfg, "train_report.json"), stamped(cfg, ojson::parse(ss.str())));
  for (const auto& n : res.report.notices) log << "[train] notice: " << n << '\n';
  if (res.report.stop_reason == StopReason::diverged && res.report.best_epoch == 0) {
    throw NumericError("training diverged before the first epoch completed");
  }
  write_file(artifact(cfg, "model.ckpt"), [&](std::ostream& o) {
    write_checkpoint(o, res.params,
                     {{"config_hash", cfg.hash()},
                      {"seed", std::to_string(cfg.seed)},
                      {"mode", std::string(to_string(cfg.train.mode))}});
  });
  log << "[train] " << to_string(cfg.train.mode) << ": best epoch " << res.report.best_epoch
      << " of " << res.report.epochs.size() << ", validation UAR "
      << pct(res.report.best_validation_uar) << "%, stop " << to_string(res.report.stop_reason)
      << '\n';
  write_resolved_config(cfg);
}

void cmd_eval(const PipelineConfig& cfg, std::ostream& log) {
  const ModelParams params = load_model(cfg);
  const Dataset data = load_data(cfg);
  const CrossEvalResult cross = evaluate_cross(params, data.records, cfg.target_corpus);
  const CrossEvalResult within = evaluate_cross(params, data.records, cfg.source_corpus);
  for (const auto& w : cross.warnings) log << "[eval] warning: " << w << '\n';

  write_json(artifact(cfg, "metrics.json"),
             stamped(cfg, ojson{{"source_corpus", cfg.source_corpus},
                                {"target_corpus", cfg.target_corpus},
                                {"uar", cross.uar},
                                {"accuracy", cross.confusion.accuracy()},
                                {"recall", recalls_json(cross.confusion)},
                                {"confusion", confusion_json(cross.confusion)},
                                {"scored", cross.scored},
                                {"skipped", cross.skipped},
                                {"source_test_uar", within.uar},
                                {"warnings", cross.warnings}}));
  write_file(artifact(cfg, "metrics.txt"), [&](std::ostream& o) {
    o << provenance_line(cfg, "#");
    o << cfg.source_corpus << " -> " << cfg.target_corpus << "  UAR " << pct(cross.uar)
      << "%  (" << cross.scored << " utterances, " << cross.skipped << " skipped)\n";
    o << "within " << cfg.source_corpus << "  UAR " << pct(within.uar) << "%\n\n";
    o << pad("true \\ pred", 12);
    for (Emotion e : kAllEmotions) o << pad(std::string(to_string(e)), 11);
    o << '\n';
    for (Emotion t : kAllEmotions) {
      o << pad(std::string(to_string(t)), 12);
      for (Emotion p : kAllEmotions) {
        o << pad(std::to_string(cross.confusion.counts[index_of(t)][index_of(p)]), 11);
      }
      o << '\n';
    }
  });
  log << "[eval] " << cfg.source_corpus << " -> " << cfg.target_corpus << " UAR "
      << pct(cross.uar) << "%\n";
  write_resolved_config(cfg);
}

void cmd_ablate(const PipelineConfig& cfg, std::ostream& log) {
  const Dataset data = load_data(cfg);
  const AnchorSet anchors = load_anchors(cfg);
  const Partitions parts = load_partitions(cfg);
  std::vector<std::uint64_t> seeds(cfg.ablate_seeds);
  std::iota(seeds.begin(), seeds.end(), cfg.seed);
  const auto runs = run_mode_suite(data.records, train_config_for(cfg, data), seeds, anchors,
                                   parts.per_emotion, kAllModes, cfg.threads);

  std::map<TrainMode, std::vector<double>> uars;
  ojson run_list = ojson::array();
  for (const auto& r : runs) {
    ojson j{{"mode", to_string(r.mode)}, {"seed", r.seed}};
    if (r.result) {
      const double u = evaluate_cross(r.result->params, data.records, cfg.target_corpus).uar;
      uars[r.mode].push_back(u);
      j["uar"] = u;
      j["best_epoch"] = r.result->report.best_epoch;
      j["epochs"] = r.result->report.epochs.size();
      j["stop_reason"] = to_string(r.result->report.stop_reason);
    } else {
      j["error"] = r.error;
      log << "[ablate] " << to_string(r.mode) << " seed " << r.seed << " failed: " << r.error << '\n';
    }
    run_list.push_back(std::move(j));
  }

  ojson summary = ojson::array();
  std::ostringstream table;
  table << pad("Model", 14) << pad("UAR (%)", 10) << pad("std", 8) << pad("runs", 6)
        << "p vs SAPA\n";
  const auto& ref = uars[TrainMode::sapa];
  for (TrainMode m : kAllModes) {
    const auto& v = uars[m];
    ojson s{{"mode", to_string(m)}, {"runs", v.size()}, {"uars", v}};
    std::string p_text = "-";
    if (!v.empty()) {
      s["mean_uar"] = mean_of(v);
      s["std_uar"] = stddev_of(v);
      if (m != TrainMode::sapa && !ref.empty()) {
        const auto t = permutation_test(ref, v, cfg.seed);
        s["p_value_vs_sapa"] = t.p_value;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", t.p_value);
        p_text = buf;
      }
    }
    summary.push_back(std::move(s));
    table << pad(std::string(to_string(m)), 14) << pad(v.empty() ? "-" : pct(mean_of(v)), 10)
          << pad(v.empty() ? "-" : pct(stddev_of(v)), 8) << pad(std::to_string(v.size()), 6)
          << p_text << '\n';
  }
  write_json(artifact(cfg, "ablation.json"),
             stamped(cfg, ojson{{"source_corpus", cfg.source_corpus},
                                {"target_corpus", cfg.target_corpus},
                                {"seeds", seeds},
                                {"summary", summary},
                                {"runs", run_list}}));
  write_file(artifact(cfg, "ablation.txt"), [&](std::ostream& o) {
    o << provenance_line(cfg, "#") << cfg.source_corpus << " -> " << cfg.target_corpus << "\n"
      << table.str();
  });
  log << table.str();
  write_resolved_config(cfg);
}

void cmd_transfer(const PipelineConfig& cfg, std::ostream& log) {
  const ModelParams params = load_model(cfg);
  const Dataset data = load_data(cfg);
  const Partitions parts = load_partitions(cfg);
  const CrossEvalResult cross = evaluate_cross(params, data.records, cfg.target_corpus);
  const auto reports =
      group_transferability(cross.predictions, parts.per_emotion, parts.global, cfg.transfer);

  ojson groupings = ojson::object();
  for (const auto& rep : reports) {
    ojson per = ojson::object();
    for (const auto& [e, acc] : rep.per_emotion) {
      ojson groups = ojson::array();
      for (const auto& g : acc.groups) {
        groups.push_back({{"community", g.group},
                          {"speakers", g.speakers},
                          {"utterances", g.utterances},
                          {"correct", g.correct},
                          {"accuracy", g.accuracy()}});
      }
      per[std::string(to_string(e))] =
          ojson{{"macro", acc.macro}, {"micro", acc.micro}, {"groups", std::move(groups)}};
    }
    ojson entry{{"per_emotion", std::move(per)}, {"notices", rep.notices}};
    if (rep.grouping == Grouping::random) entry["random_seeds"] = rep.random_seeds;
    groupings[std::string(to_string(rep.grouping))] = std::move(entry);
    for (const auto& n : rep.notices) {
      log << "[transfer] " << to_string(rep.grouping) << " notice: " << n << '\n';
    }
  }
  write_json(artifact(cfg, "transfer.json"),
             stamped(cfg, ojson{{"target_corpus", cfg.target_corpus}, {"groupings", groupings}}));

  std::ostringstream table;
  table << pad("Emotion", 12) << pad("w/ Emo", 16) << pad("w/o Emo", 16) << "Rand\n";
  table << pad("", 12) << pad("macro / micro", 16) << pad("macro / micro", 16) << "macro / micro\n";
  for (Emotion e : kAllEmotions) {
    table << pad(std::string(to_string(e)), 12);
    for (const auto& rep : reports) {
      auto it = rep.per_emotion.find(e);
      const std::string cell =
          it == rep.per_emotion.end() ? "-" : pct(it->second.macro) + " / " + pct(it->second.micro);
      table << (rep.grouping == Grouping::random ? cell : pad(cell, 16));
    }
    table << '\n';
  }
  write_file(artifact(cfg, "transfer.txt"), [&](std::ostream& o) {
    o << provenance_line(cfg, "#") << "accuracy (%) on " << cfg.target_corpus
      << " test utterances by speaker grouping\n"
      << table.str();
  });
  log << table.str();
  write_resolved_config(cfg);
}

void cmd_all(const PipelineConfig& cfg, std::ostream& log) {
  if (cfg.values.at("source_data").empty() && cfg.values.at("target_data").empty()) {
    cmd_synth(cfg, log);
  }
  cmd_graph(cfg, log);
  cmd_anchors(cfg, log);
  cmd_train(cfg, log);
  cmd_eval(cfg, log);
  cmd_ablate(cfg, log);
  cmd_transfer(cfg, log);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"sapa: speaker-style aware phoneme anchoring toolkit", "sapa"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_file;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::optional<std::string> mode;
  std::optional<std::string> out_dir;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_file, "key=value config file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--tau", tau, "edge threshold for speaker graphs");
  app.add_option("--mode", mode, "SAPA, Only-S, Only-P, SAPA-Only-S or SAPA-Only-P");
  app.add_option("-o,--out", out_dir, "artifact directory");
  app.add_option("--set", sets, "override a config key (key=value), repeatable");

  using Command = void (*)(const PipelineConfig&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Command>> table{
      {"synth", "generate a synthetic two-corpus dataset", cmd_synth},
      {"graph", "build and cluster per-emotion speaker graphs", cmd_graph},
      {"anchors", "score phonemes across corpora and select anchors", cmd_anchors},
      {"train", "train one model in the configured mode", cmd_train},
      {"eval", "score the trained model on the target test split", cmd_eval},
      {"ablate", "train and score every mode over several seeds", cmd_ablate},
      {"transfer", "speaker-group accuracy analysis", cmd_transfer},
      {"all", "run every stage in order", cmd_all},
  };
  for (const auto& [name, help, fn] : table) app.add_subcommand(name, help);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "sapa: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    if (tau) {
      std::ostringstream t;
      t.precision(17);
      t << *tau;
      overrides.emplace_back("tau", t.str());
    }
    if (mode) overrides.emplace_back("train.mode", *mode);
    if (out_dir) overrides.emplace_back("out_dir", *out_dir);
    const PipelineConfig cfg =
        load_config(config_file ? std::optional<fs::path>(*config_file) : std::nullopt, overrides);

    for (const auto& [name, help, fn] : table) {
      if (app.got_subcommand(name)) fn(cfg, out);
    }
    return kOk;
  } catch (const ConfigError& e) {
    err << "sapa: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const MissingArtifactError& e) {
    err << "sapa: " << e.what() << '\n';
    return kMissingArtifact;
  } catch (const NumericError& e) {
    err << "sapa: numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "sapa: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace sapa::cli
