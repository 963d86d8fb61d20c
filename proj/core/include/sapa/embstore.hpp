#pragma once

// Embedding data model and the JSON Lines dataset format.
//
// A dataset file is UTF-8 text. Line 1 is the manifest object; every following
// line is one record object with the fields
//   record_id, corpus_id, speaker_id, utterance_id, emotion, kind, phoneme,
//   vector, split
// in that order. Doubles are written in shortest round-trip form, so
// read_dataset(write_dataset(x)) == x bit for bit.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "sapa/emotion.hpp"

namespace sapa {

enum class EmbeddingKind { speaker, content };
enum class Split { train, validation, test };

std::string_view to_string(EmbeddingKind k) noexcept;
std::string_view to_string(Split s) noexcept;
std::optional<EmbeddingKind> parse_kind(std::string_view s) noexcept;
std::optional<Split> parse_split(std::string_view s) noexcept;

struct EmbeddingRecord {
  std::string record_id;
  std::string corpus_id;
  std::string speaker_id;
  std::string utterance_id;
  Emotion emotion = Emotion::neutral;
  EmbeddingKind kind = EmbeddingKind::speaker;
  std::optional<std::string> phoneme;  // present iff kind == content
  std::vector<double> vector;
  Split split = Split::train;

  bool operator==(const EmbeddingRecord&) const = default;
};

struct CountKey {
  std::string corpus_id;
  Emotion emotion;
  Split split;

  auto operator<=>(const CountKey&) const = default;
};

struct DatasetManifest {
  std::size_t d_s = 0;
  std::size_t d_c = 0;
  std::vector<std::string> corpora;
  std::vector<std::string> phoneme_inventory;
  std::map<CountKey, std::size_t> counts;
  // Free-form provenance (encoder name, checksum, generator seed, ...).
  std::map<std::string, std::string> metadata;

  std::size_t total_records() const;
  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<EmbeddingRecord> records;

  bool operator==(const Dataset&) const = default;
};

// Maps raw phoneme symbols onto merged classes, e.g. {"A" -> "A,a", "a" -> "A,a"}.
using PhonemeEquivalence = std::map<std::string, std::string, std::less<>>;

// Builds a manifest whose corpora and counts are derived from the records.
DatasetManifest make_manifest(std::size_t d_s, std::size_t d_c,
                              std::span<const EmbeddingRecord> records,
                              std::vector<std::string> phoneme_inventory);

// Throws SchemaError naming the first offending record.
void validate_dataset(const Dataset& dataset);

Dataset parse_dataset(std::istream& in, const PhonemeEquivalence& equivalence = {});
Dataset read_dataset(const std::filesystem::path& path,
                     const PhonemeEquivalence& equivalence = {});

void write_dataset(std::ostream& out, const Dataset& dataset);
std::filesystem::path write_dataset(const std::filesystem::path& path, const Dataset& dataset);

// Concatenates datasets that agree on d_s/d_c. Inventories are merged in
// first-seen order; duplicate record ids are rejected.
Dataset merge_datasets(std::span<const Dataset> parts);

}  // namespace sapa
