#include "sapa/embstore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include "json.hpp"
#include "sapa/error.hpp"

namespace sapa {

using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kFormatName = "sapa-embeddings";
constexpr int kFormatVersion = 1;

std::string describe(const EmbeddingRecord& r) { return "record '" + r.record_id + "'"; }

void check_record(const EmbeddingRecord& r, const DatasetManifest& m,
                  const std::set<std::string, std::less<>>& inventory) {
  if (r.record_id.empty()) throw SchemaError("record with empty record_id");
  const std::size_t want = r.kind == EmbeddingKind::speaker ? m.d_s : m.d_c;
  if (r.vector.size() != want) {
    throw SchemaError(describe(r) + ": vector has dimension " + std::to_string(r.vector.size()) +
                      ", manifest declares " + std::to_string(want) + " for kind " +
                      std::string(to_string(r.kind)));
  }
  for (double v : r.vector) {
    if (!std::isfinite(v)) throw SchemaError(describe(r) + ": non-finite vector entry");
  }
  if (r.kind == EmbeddingKind::content && !r.phoneme) {
    throw SchemaError(describe(r) + ": content record without phoneme");
  }
  if (r.kind == EmbeddingKind::speaker && r.phoneme) {
    throw SchemaError(describe(r) + ": speaker record carries a phoneme");
  }
  if (r.phoneme && !inventory.contains(*r.phoneme)) {
    throw SchemaError(describe(r) + ": phoneme '" + *r.phoneme + "' not in inventory");
  }
  if (std::find(m.corpora.begin(), m.corpora.end(), r.corpus_id) == m.corpora.end()) {
    throw SchemaError(describe(r) + ": corpus '" + r.corpus_id + "' not declared in manifest");
  }
}

std::map<CountKey, std::size_t> count_records(std::span<const EmbeddingRecord> records) {
  std::map<CountKey, std::size_t> counts;
  for (const auto& r : records) ++counts[CountKey{r.corpus_id, r.emotion, r.split}];
  return counts;
}

ojson manifest_to_json(const DatasetManifest& m) {
  ojson j;
  j["format"] = kFormatName;
  j["version"] = kFormatVersion;
  j["d_s"] = m.d_s;
  j["d_c"] = m.d_c;
  j["corpora"] = m.corpora;
  j["phoneme_inventory"] = m.phoneme_inventory;
  ojson counts = ojson::array();
  for (const auto& [key, n] : m.counts) {
    ojson c;
    c["corpus_id"] = key.corpus_id;
    c["emotion"] = std::string(to_string(key.emotion));
    c["split"] = std::string(to_string(key.split));
    c["count"] = n;
    counts.push_back(std::move(c));
  }
  j["counts"] = std::move(counts);
  ojson meta = ojson::object();
  for (const auto& [k, v] : m.metadata) meta[k] = v;
  j["metadata"] = std::move(meta);
  return j;
}

ojson record_to_json(const EmbeddingRecord& r) {
  ojson j;
  j["record_id"] = r.record_id;
  j["corpus_id"] = r.corpus_id;
  j["speaker_id"] = r.speaker_id;
  j["utterance_id"] = r.utterance_id;
  j["emotion"] = std::string(to_string(r.emotion));
  j["kind"] = std::string(to_string(r.kind));
  j["phoneme"] = r.phoneme ? ojson(*r.phoneme) : ojson(nullptr);
  j["vector"] = r.vector;
  j["split"] = std::string(to_string(r.split));
  return j;
}

template <typename T>
T field(const ojson& j, const char* name, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(std::string("missing field '") + name + "'", line);
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("field '") + name + "' has the wrong type", line);
  }
}

std::string apply_equivalence(const std::string& p, const PhonemeEquivalence& eq) {
  auto it = eq.find(p);
  return it == eq.end() ? p : it->second;
}

DatasetManifest parse_manifest(const ojson& j, std::size_t line, const PhonemeEquivalence& eq) {
  if (!j.is_object()) throw ParseError("manifest is not a JSON object", line);
  if (field<std::string>(j, "format", line) != kFormatName) {
    throw ParseError("unrecognized format tag", line);
  }
  if (field<int>(j, "version", line) != kFormatVersion) {
    throw ParseError("unsupported format version", line);
  }
  DatasetManifest m;
  m.d_s = field<std::size_t>(j, "d_s", line);
  m.d_c = field<std::size_t>(j, "d_c", line);
  if (m.d_s == 0 || m.d_c == 0) throw SchemaError("manifest dimensions must be positive");
  m.corpora = field<std::vector<std::string>>(j, "corpora", line);
  for (const auto& p : field<std::vector<std::string>>(j, "phoneme_inventory", line)) {
    std::string mapped = apply_equivalence(p, eq);
    if (std::find(m.phoneme_inventory.begin(), m.phoneme_inventory.end(), mapped) ==
        m.phoneme_inventory.end()) {
      m.phoneme_inventory.push_back(std::move(mapped));
    }
  }
  const auto counts = field<ojson>(j, "counts", line);
  if (!counts.is_array()) throw ParseError("field 'counts' has the wrong type", line);
  for (const auto& c : counts) {
    const auto emo_name = field<std::string>(c, "emotion", line);
    const auto split_name = field<std::string>(c, "split", line);
    const auto emo = parse_emotion(emo_name);
    const auto split = parse_split(split_name);
    if (!emo) throw SchemaError("manifest: unknown emotion '" + emo_name + "'");
    if (!split) throw SchemaError("manifest: unknown split '" + split_name + "'");
    m.counts[CountKey{field<std::string>(c, "corpus_id", line), *emo, *split}] =
        field<std::size_t>(c, "count", line);
  }
  if (auto it = j.find("metadata"); it != j.end()) {
    if (!it->is_object()) throw ParseError("field 'metadata' has the wrong type", line);
    for (const auto& [k, v] : it->items()) {
      if (!v.is_string()) throw ParseError("metadata values must be strings", line);
      m.metadata[k] = v.get<std::string>();
    }
  }
  return m;
}

EmbeddingRecord parse_record(const ojson& j, std::size_t line, const PhonemeEquivalence& eq) {
  if (!j.is_object()) throw ParseError("record is not a JSON object", line);
  EmbeddingRecord r;
  r.record_id = field<std::string>(j, "record_id", line);
  r.corpus_id = field<std::string>(j, "corpus_id", line);
  r.speaker_id = field<std::string>(j, "speaker_id", line);
  r.utterance_id = field<std::string>(j, "utterance_id", line);

  const auto emo_name = field<std::string>(j, "emotion", line);
  const auto emo = parse_emotion(emo_name);
  if (!emo) {
    throw SchemaError("line " + std::to_string(line) + ": " + describe(r) + ": unknown emotion '" +
                      emo_name + "'");
  }
  r.emotion = *emo;

  const auto kind_name = field<std::string>(j, "kind", line);
  const auto kind = parse_kind(kind_name);
  if (!kind) throw ParseError("unknown kind '" + kind_name + "'", line);
  r.kind = *kind;

  auto ph = j.find("phoneme");
  if (ph == j.end()) throw ParseError("missing field 'phoneme'", line);
  if (ph->is_string()) {
    r.phoneme = apply_equivalence(ph->get<std::string>(), eq);
  } else if (!ph->is_null()) {
    throw ParseError("field 'phoneme' has the wrong type", line);
  }

  r.vector = field<std::vector<double>>(j, "vector", line);

  const auto split_name = field<std::string>(j, "split", line);
  const auto split = parse_split(split_name);
  if (!split) throw ParseError("unknown split '" + split_name + "'", line);
  r.split = *split;
  return r;
}

}  // namespace

std::string_view to_string(EmbeddingKind k) noexcept {
  return k == EmbeddingKind::speaker ? "speaker" : "content";
}

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "unknown";
}

std::optional<EmbeddingKind> parse_kind(std::string_view s) noexcept {
  if (s == "speaker") return EmbeddingKind::speaker;
  if (s == "content") return EmbeddingKind::content;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) noexcept {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  return std::nullopt;
}

std::size_t DatasetManifest::total_records() const {
  std::size_t n = 0;
  for (const auto& [key, c] : counts) n += c;
  return n;
}

DatasetManifest make_manifest(std::size_t d_s, std::size_t d_c,
                              std::span<const EmbeddingRecord> records,
                              std::vector<std::string> phoneme_inventory) {
  DatasetManifest m;
  m.d_s = d_s;
  m.d_c = d_c;
  m.phoneme_inventory = std::move(phoneme_inventory);
  for (const auto& r : records) {
    if (std::find(m.corpora.begin(), m.corpora.end(), r.corpus_id) == m.corpora.end()) {
      m.corpora.push_back(r.corpus_id);
    }
  }
  m.counts = count_records(records);
  return m;
}

void validate_dataset(const Dataset& dataset) {
  const auto& m = dataset.manifest;
  if (m.d_s == 0 || m.d_c == 0) throw SchemaError("manifest dimensions must be positive");
  const std::set<std::string, std::less<>> inventory(m.phoneme_inventory.begin(),
                                                     m.phoneme_inventory.end());
  std::unordered_set<std::string> seen;
  seen.reserve(dataset.records.size());
  for (const auto& r : dataset.records) {
    check_record(r, m, inventory);
    if (!seen.insert(r.record_id).second) throw SchemaError(describe(r) + ": duplicate record_id");
  }
  if (count_records(dataset.records) != m.counts) {
    throw SchemaError("manifest counts do not match the records (" +
                      std::to_string(m.total_records()) + " declared, " +
                      std::to_string(dataset.records.size()) + " present)");
  }
}

Dataset parse_dataset(std::istream& in, const PhonemeEquivalence& equivalence) {
  Dataset ds;
  std::string text;
  std::size_t line_no = 0;
  bool have_manifest = false;
  const std::set<std::string, std::less<>>* inventory = nullptr;
  std::set<std::string, std::less<>> inventory_storage;
  std::unordered_set<std::string> seen;

  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    ojson j;
    try {
      j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (!have_manifest) {
      ds.manifest = parse_manifest(j, line_no, equivalence);
      inventory_storage = {ds.manifest.phoneme_inventory.begin(),
                           ds.manifest.phoneme_inventory.end()};
      inventory = &inventory_storage;
      have_manifest = true;
      continue;
    }
    EmbeddingRecord r = parse_record(j, line_no, equivalence);
    try {
      check_record(r, ds.manifest, *inventory);
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(r.record_id).second) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + describe(r) +
                        ": duplicate record_id");
    }
    ds.records.push_back(std::move(r));
  }
  if (!have_manifest) throw ParseError("missing manifest", line_no + 1);
  if (count_records(ds.records) != ds.manifest.counts) {
    throw SchemaError("manifest counts do not match the records (" +
                      std::to_string(ds.manifest.total_records()) + " declared, " +
                      std::to_string(ds.records.size()) + " present)");
  }
  return ds;
}

Dataset read_dataset(const std::filesystem::path& path, const PhonemeEquivalence& equivalence) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return parse_dataset(in, equivalence);
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  validate_dataset(dataset);
  out << manifest_to_json(dataset.manifest).dump() << '\n';
  for (const auto& r : dataset.records) out << record_to_json(r).dump() << '\n';
  if (!out) throw IoError("write failure");
}

std::filesystem::path write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset(out, dataset);
  out.close();
  if (!out) throw IoError("write failure on " + path.string());
  return path;
}

Dataset merge_datasets(std::span<const Dataset> parts) {
  if (parts.empty()) throw DomainError("merge_datasets: no datasets given");
  Dataset out;
  out.manifest.d_s = parts.front().manifest.d_s;
  out.manifest.d_c = parts.front().manifest.d_c;
  for (const auto& part : parts) {
    if (part.manifest.d_s != out.manifest.d_s || part.manifest.d_c != out.manifest.d_c) {
      throw SchemaError("merge_datasets: dimension mismatch between datasets");
    }
    for (const auto& p : part.manifest.phoneme_inventory) {
      auto& inv = out.manifest.phoneme_inventory;
      if (std::find(inv.begin(), inv.end(), p) == inv.end()) inv.push_back(p);
    }
    for (const auto& [k, v] : part.manifest.metadata) out.manifest.metadata.emplace(k, v);
    out.records.insert(out.records.end(), part.records.begin(), part.records.end());
  }
  auto inventory = out.manifest.phoneme_inventory;
  auto metadata = out.manifest.metadata;
  out.manifest = make_manifest(out.manifest.d_s, out.manifest.d_c, out.records, inventory);
  out.manifest.metadata = std::move(metadata);
  validate_dataset(out);
  return out;
}

}  // namespace sapa
