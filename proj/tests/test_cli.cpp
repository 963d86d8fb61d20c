#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "json.hpp"
#include "sapa/embstore.hpp"

namespace fs = std::filesystem;
using sapa::cli::run;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome sapa_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::current_path() / "cli_work" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small but complete synthetic setup that trains in well under a second.
std::vector<std::string> quick(std::vector<std::string> args) {
  for (const char* kv : {"synth.speakers=6", "synth.utterances=5", "synth.segments=3",
                         "synth.d_s=12", "synth.d_c=12", "train.max_epochs=2",
                         "train.batch_size=16", "model.d_proj=8", "model.d_model=8",
                         "model.n_heads=2", "model.d_ff=8", "mining.anchors_per_batch=8",
                         "ablate.seeds=2", "transfer.random_seeds=3"}) {
    args.push_back("--set");
    args.push_back(kv);
  }
  return args;
}

// Two groups of three speakers with identical styles inside a group and
// orthogonal styles across groups: two disjoint triangles under anger.
void write_two_triangles(const fs::path& dir) {
  auto make = [](const std::string& corpus, const std::vector<std::pair<std::string, int>>& spk) {
    sapa::Dataset d;
    for (const auto& [name, group] : spk) {
      std::vector<double> v{group == 0 ? 1.0 : 0.0, group == 0 ? 0.0 : 1.0};
      d.records.push_back({name + "_u", corpus, name, name + "_u", sapa::Emotion::anger,
                           sapa::EmbeddingKind::speaker, std::nullopt, v, sapa::Split::train});
    }
    d.manifest = sapa::make_manifest(2, 2, d.records, {"i"});
    return d;
  };
  sapa::write_dataset(dir / "src.jsonl", make("src", {{"a1", 0}, {"a2", 0}, {"b1", 1}}));
  sapa::write_dataset(dir / "tgt.jsonl", make("tgt", {{"a3", 0}, {"b2", 1}, {"b3", 1}}));
}

}  // namespace

TEST(Cli, HelpExitsZero) {
  const auto r = sapa_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("transfer"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsConfigError) {
  EXPECT_EQ(sapa_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(sapa_cli({}).code, 2);
}

TEST(Cli, UnknownKeyAndBadValuesAreConfigErrors) {
  const auto dir = fresh_dir("bad_config");
  EXPECT_EQ(sapa_cli({"synth", "-o", dir.string(), "--set", "no.such.key=1"}).code, 2);
  EXPECT_EQ(sapa_cli({"synth", "-o", dir.string(), "--set", "tau=abc"}).code, 2);
  EXPECT_EQ(sapa_cli({"synth", "-o", dir.string(), "--mode", "Everything"}).code, 2);
  EXPECT_EQ(sapa_cli({"synth", "-o", dir.string(), "--set", "model.n_heads=3"}).code, 2);

  std::ofstream(dir / "bad.cfg") << "seed = 3\nbogus = 1\n";
  const auto r = sapa_cli({"synth", "-c", (dir / "bad.cfg").string(), "-o", dir.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);
}

TEST(Cli, MissingArtifactsExitThree) {
  const auto dir = fresh_dir("missing");
  EXPECT_EQ(sapa_cli({"graph", "-o", dir.string()}).code, 3);
  EXPECT_EQ(sapa_cli({"eval", "-o", dir.string()}).code, 3);
  EXPECT_EQ(sapa_cli({"synth", "-c", (dir / "nope.cfg").string(), "-o", dir.string()}).code, 3);
  ASSERT_EQ(sapa_cli(quick({"synth", "-o", dir.string()})).code, 0);
  ASSERT_EQ(sapa_cli(quick({"graph", "-o", dir.string()})).code, 0);
  // Anchors have not been selected yet.
  EXPECT_EQ(sapa_cli(quick({"train", "-o", dir.string()})).code, 3);
}

TEST(Cli, ConfigFileAndOverridesCompose) {
  const auto dir = fresh_dir("config_file");
  std::ofstream(dir / "run.cfg") << "# comment\nseed = 9\nsynth.speakers = 6 # inline\n";
  const auto r = sapa_cli(quick({"synth", "-c", (dir / "run.cfg").string(), "--seed", "4", "-o",
                                 dir.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string resolved = slurp(dir / "config.resolved");
  EXPECT_NE(resolved.find("\nseed=4\n"), std::string::npos);
  EXPECT_NE(resolved.find("\nsynth.speakers=6\n"), std::string::npos);
  EXPECT_EQ(resolved.find("out_dir"), std::string::npos);
}

TEST(Cli, SynthIsByteIdenticalAcrossRunsAndDirectories) {
  const auto a = fresh_dir("synth_a");
  const auto b = fresh_dir("synth_b");
  ASSERT_EQ(sapa_cli(quick({"synth", "--seed", "5", "-o", a.string()})).code, 0);
  ASSERT_EQ(sapa_cli(quick({"synth", "--seed", "5", "-o", b.string()})).code, 0);
  for (const char* f : {"source.jsonl", "target.jsonl", "truth.json", "config.resolved"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const auto c = fresh_dir("synth_c");
  ASSERT_EQ(sapa_cli(quick({"synth", "--seed", "6", "-o", c.string()})).code, 0);
  EXPECT_NE(slurp(a / "source.jsonl"), slurp(c / "source.jsonl"));
}

TEST(Cli, TwoTrianglesGiveModularityOneHalf) {
  const auto dir = fresh_dir("triangles");
  write_two_triangles(dir);
  const auto r = sapa_cli({"graph", "-o", dir.string(), "--set",
                           "source_data=" + (dir / "src.jsonl").string(), "--set",
                           "target_data=" + (dir / "tgt.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir / "modularity.json"));
  const auto& anger = j.at("emotions").at("anger");
  EXPECT_NEAR(anger.at("modularity").get<double>(), 0.5, 1e-12);
  EXPECT_EQ(anger.at("communities").get<int>(), 2);
  EXPECT_EQ(anger.at("cross_corpus_communities").get<int>(), 2);
  EXPECT_EQ(j.at("notices").size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "graph_anger.dot"));
  EXPECT_EQ(slurp(dir / "graph_anger.csv").rfind("# sapa config_hash=", 0), 0u);
}

TEST(Cli, StagesChainAndStampProvenance) {
  const auto dir = fresh_dir("chain");
  for (const char* cmd : {"synth", "graph", "anchors", "train", "eval", "transfer"}) {
    const auto r = sapa_cli(quick({cmd, "-o", dir.string()}));
    ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
  }
  for (const char* f : {"modularity.json", "anchors.json", "train_report.json", "metrics.json",
                        "transfer.json"}) {
    const auto j = nlohmann::json::parse(slurp(dir / f));
    EXPECT_EQ(j.at("config_hash").get<std::string>().size(), 16u) << f;
    EXPECT_EQ(j.at("seed").get<int>(), 1) << f;
    EXPECT_FALSE(j.at("config").contains("out_dir")) << f;
  }
  const auto m = nlohmann::json::parse(slurp(dir / "metrics.json"));
  EXPECT_GE(m.at("uar").get<double>(), 0.0);
  EXPECT_LE(m.at("uar").get<double>(), 1.0);
  const auto t = nlohmann::json::parse(slurp(dir / "transfer.json"));
  for (const char* g : {"with_emotion", "without_emotion", "random"}) {
    EXPECT_TRUE(t.at("groupings").contains(g)) << g;
  }
}

TEST(Cli, AllRunsEveryStage) {
  const auto dir = fresh_dir("all");
  const auto r = sapa_cli(quick({"all", "-o", dir.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"source.jsonl", "target.jsonl", "modularity.json", "graph_global.csv",
                        "phoneme_similarity.csv", "anchors.json", "model.ckpt", "metrics.json",
                        "metrics.txt", "ablation.json", "ablation.txt", "transfer.json",
                        "transfer.txt", "config.resolved"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto a = nlohmann::json::parse(slurp(dir / "ablation.json"));
  EXPECT_EQ(a.at("summary").size(), 5u);
  EXPECT_EQ(a.at("runs").size(), 10u);
}
