#include "sapa/anchors.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>

#include "json.hpp"
#include "sapa/error.hpp"
#include "sapa/simgraph.hpp"

namespace sapa {

std::optional<double> PhonemeSimilarityTable::at(Emotion e, const std::string& phoneme) const {
  auto row = cells.find(e);
  if (row == cells.end()) return std::nullopt;
  auto it = row->second.find(phoneme);
  if (it == row->second.end()) return std::nullopt;
  return it->second;
}

bool PhonemeSimilarityTable::empty() const {
  return std::all_of(cells.begin(), cells.end(), [](const auto& kv) { return kv.second.empty(); });
}

PhonemeSimilarityTable phoneme_similarity(std::span<const EmbeddingRecord> records,
                                          const std::string& src_corpus,
                                          const std::string& tgt_corpus,
                                          std::span<const std::string> inventory) {
  struct Acc {
    std::vector<double> sum;
    std::size_t n = 0;
  };
  // [corpus 0/1][emotion][phoneme]
  std::map<std::string, Acc> acc[2][kNumEmotions];
  PhonemeSimilarityTable table;
  table.phonemes.assign(inventory.begin(), inventory.end());

  for (const auto& r : records) {
    if (r.kind != EmbeddingKind::content || r.split != Split::train || !r.phoneme) continue;
    int side = -1;
    if (r.corpus_id == src_corpus) side = 0;
    if (r.corpus_id == tgt_corpus) side = 1;
    if (side < 0) continue;
    if (std::find(table.phonemes.begin(), table.phonemes.end(), *r.phoneme) ==
        table.phonemes.end()) {
      table.phonemes.push_back(*r.phoneme);
    }
    auto& a = acc[side][index_of(r.emotion)][*r.phoneme];
    if (a.sum.empty()) a.sum.assign(r.vector.size(), 0.0);
    for (std::size_t d = 0; d < a.sum.size(); ++d) a.sum[d] += r.vector[d];
    ++a.n;
  }

  for (Emotion e : kAllEmotions) {
    const auto& src = acc[0][index_of(e)];
    const auto& tgt = acc[1][index_of(e)];
    for (const auto& p : table.phonemes) {
      auto s = src.find(p);
      auto t = tgt.find(p);
      if (s == src.end() || t == tgt.end()) continue;
      // Cosine ignores positive scale, so sums stand in for means.
      table.cells[e][p] = cosine(s->second.sum, t->second.sum);
    }
  }
  if (table.empty()) {
    table.warnings.push_back("no phoneme occurs in both '" + src_corpus + "' and '" + tgt_corpus +
                             "' under any emotion");
  }
  return table;
}

const std::vector<std::string>& default_vowel_inventory() {
  static const std::vector<std::string> vowels{"i", "E", "@", "A,a", "O", "u"};
  return vowels;
}

AnchorRule AnchorRule::top_k(std::size_t k) {
  AnchorRule r;
  r.kind = Kind::top_k;
  r.k = k;
  return r;
}

AnchorRule AnchorRule::threshold(double theta) {
  AnchorRule r;
  r.kind = Kind::threshold;
  r.theta = theta;
  return r;
}

std::size_t AnchorRule::k_for(Emotion e) const {
  auto it = k_per_emotion.find(e);
  return it == k_per_emotion.end() ? k : it->second;
}

bool AnchorSet::contains(Emotion e, const std::string& phoneme) const {
  auto it = per_emotion.find(e);
  if (it == per_emotion.end()) return false;
  return std::any_of(it->second.begin(), it->second.end(),
                     [&](const AnchorEntry& a) { return a.phoneme == phoneme; });
}

std::vector<std::string> AnchorSet::phonemes(Emotion e) const {
  std::vector<std::string> out;
  if (auto it = per_emotion.find(e); it != per_emotion.end()) {
    for (const auto& a : it->second) out.push_back(a.phoneme);
  }
  return out;
}

bool AnchorSet::empty() const {
  return std::all_of(per_emotion.begin(), per_emotion.end(),
                     [](const auto& kv) { return kv.second.empty(); });
}

AnchorSet select_anchors(const PhonemeSimilarityTable& table, const AnchorRule& rule,
                         std::span<const Emotion> emotions) {
  const std::set<std::string> allowed(rule.candidates.begin(), rule.candidates.end());
  AnchorSet out;
  std::string missing;
  for (Emotion e : emotions) {
    std::vector<std::pair<std::size_t, AnchorEntry>> ranked;  // (column, entry)
    for (std::size_t col = 0; col < table.phonemes.size(); ++col) {
      const auto& p = table.phonemes[col];
      if (!allowed.empty() && !allowed.contains(p)) continue;
      if (auto sim = table.at(e, p)) ranked.push_back({col, AnchorEntry{p, *sim}});
    }
    if (ranked.empty()) {
      missing += (missing.empty() ? "" : ", ") + std::string(to_string(e));
      continue;
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second.sim > b.second.sim;
    });
    auto& row = out.per_emotion[e];
    if (rule.kind == AnchorRule::Kind::top_k) {
      const std::size_t k = std::min(rule.k_for(e), ranked.size());
      for (std::size_t i = 0; i < k; ++i) row.push_back(ranked[i].second);
    } else {
      for (const auto& [col, entry] : ranked) {
        if (entry.sim >= rule.theta) row.push_back(entry);
      }
    }
  }
  if (!missing.empty()) {
    throw InsufficientDataError("no candidate phoneme similarity for emotion(s): " + missing);
  }
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_similarity_csv(std::ostream& out, const PhonemeSimilarityTable& table) {
  out << "emotion";
  for (const auto& p : table.phonemes) out << ',' << csv_field(p);
  out << '\n';
  for (Emotion e : kAllEmotions) {
    out << to_string(e);
    for (const auto& p : table.phonemes) {
      out << ',';
      if (auto v = table.at(e, p)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", *v);
        out << buf;
      }
    }
    out << '\n';
  }
}

void write_anchor_json(std::ostream& out, const AnchorSet& anchors) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (Emotion e : kAllEmotions) {
    auto it = anchors.per_emotion.find(e);
    if (it == anchors.per_emotion.end()) continue;
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (const auto& a : it->second) row.push_back({{"phoneme", a.phoneme}, {"sim", a.sim}});
    j[std::string(to_string(e))] = std::move(row);
  }
  out << nlohmann::ordered_json{{"anchors", j}}.dump(2) << '\n';
}

AnchorSet read_anchor_json(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed anchor JSON: ") + e.what(), 0);
  }
  AnchorSet out;
  try {
    for (const auto& [name, row] : j.at("anchors").items()) {
      const auto e = parse_emotion(name);
      if (!e) throw SchemaError("anchor file: unknown emotion '" + name + "'");
      auto& list = out.per_emotion[*e];
      for (const auto& item : row) {
        list.push_back(AnchorEntry{item.at("phoneme").get<std::string>(),
                                   item.at("sim").get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("anchor JSON: ") + e.what(), 0);
  }
  return out;
}

}  // namespace sapa
