#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "sapa/embstore.hpp"
#include "sapa/error.hpp"
#include "sapa/utterance.hpp"

using namespace sapa;

namespace {

EmbeddingRecord speaker_rec(std::string id, std::string corpus, std::string spk, std::string utt,
                            Emotion e, std::vector<double> v, Split s = Split::train) {
  return EmbeddingRecord{std::move(id), std::move(corpus), std::move(spk), std::move(utt), e,
                         EmbeddingKind::speaker, std::nullopt, std::move(v), s};
}

EmbeddingRecord content_rec(std::string id, std::string corpus, std::string spk, std::string utt,
                            Emotion e, std::string ph, std::vector<double> v,
                            Split s = Split::train) {
  return EmbeddingRecord{std::move(id), std::move(corpus), std::move(spk), std::move(utt), e,
                         EmbeddingKind::content, std::move(ph), std::move(v), s};
}

Dataset tiny() {
  Dataset d;
  d.records = {
      speaker_rec("u1_spk", "src", "s1", "u1", Emotion::anger, {1.0, 0.0}),
      content_rec("u1_seg0", "src", "s1", "u1", Emotion::anger, "i", {0.5, 0.25, 0.125}),
      content_rec("u1_seg1", "src", "s1", "u1", Emotion::anger, "A,a", {0.1, 0.2, 0.3}),
      speaker_rec("u2_spk", "tgt", "t1", "u2", Emotion::sadness, {0.0, 1.0}, Split::test),
  };
  d.manifest = make_manifest(2, 3, d.records, {"i", "A,a"});
  d.manifest.metadata["encoder"] = "none";
  return d;
}

std::string serialize(const Dataset& d) {
  std::ostringstream out;
  write_dataset(out, d);
  return out.str();
}

// Replaces the n-th line (0-based) of a serialized dataset.
std::string with_line(const std::string& text, std::size_t n, const std::string& line) {
  std::istringstream in(text);
  std::string out;
  std::string cur;
  for (std::size_t i = 0; std::getline(in, cur); ++i) out += (i == n ? line : cur) + "\n";
  return out;
}

}  // namespace

TEST(Emotion, RoundTripsNamesAndIndices) {
  for (Emotion e : kAllEmotions) {
    EXPECT_EQ(parse_emotion(to_string(e)), e);
    EXPECT_EQ(emotion_from_index(index_of(e)), e);
  }
  EXPECT_FALSE(parse_emotion("fear"));
  EXPECT_THROW(emotion_from_index(4), SchemaError);
}

TEST(Embstore, WriteThenReadIsIdentity) {
  const Dataset d = tiny();
  std::istringstream in(serialize(d));
  EXPECT_EQ(parse_dataset(in), d);
}

TEST(Embstore, RoundTripThroughFile) {
  const Dataset d = tiny();
  const auto path = std::filesystem::temp_directory_path() / "sapa_embstore_roundtrip.jsonl";
  write_dataset(path, d);
  EXPECT_EQ(read_dataset(path), d);
  std::filesystem::remove(path);
}

TEST(Embstore, ManifestComesFirstWithDeclaredCounts) {
  const std::string text = serialize(tiny());
  const std::string first = text.substr(0, text.find('\n'));
  EXPECT_NE(first.find("\"format\":\"sapa-embeddings\""), std::string::npos);
  EXPECT_NE(first.find("\"count\":3"), std::string::npos);
  EXPECT_EQ(tiny().manifest.total_records(), 4u);
}

TEST(Embstore, SpeakerRecordsSerializeNullPhoneme) {
  const std::string text = serialize(tiny());
  EXPECT_NE(text.find("\"kind\":\"speaker\",\"phoneme\":null"), std::string::npos);
}

TEST(Embstore, MalformedJsonReportsLine) {
  const std::string text = with_line(serialize(tiny()), 2, "{\"record_id\": ");
  std::istringstream in(text);
  try {
    parse_dataset(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Embstore, MissingFieldIsParseError) {
  const std::string text = with_line(
      serialize(tiny()), 1,
      R"({"record_id":"u1_spk","corpus_id":"src","speaker_id":"s1","emotion":"anger","kind":"speaker","phoneme":null,"vector":[1,0],"split":"train"})");
  std::istringstream in(text);
  EXPECT_THROW(parse_dataset(in), ParseError);
}

TEST(Embstore, DimensionMismatchNamesRecordAndLine) {
  const std::string text = with_line(
      serialize(tiny()), 1,
      R"({"record_id":"u1_spk","corpus_id":"src","speaker_id":"s1","utterance_id":"u1","emotion":"anger","kind":"speaker","phoneme":null,"vector":[1,0,0],"split":"train"})");
  std::istringstream in(text);
  try {
    parse_dataset(in);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos);
    EXPECT_NE(msg.find("u1_spk"), std::string::npos);
  }
}

TEST(Embstore, UnknownEmotionIsSchemaError) {
  const std::string text = with_line(
      serialize(tiny()), 1,
      R"({"record_id":"u1_spk","corpus_id":"src","speaker_id":"s1","utterance_id":"u1","emotion":"fear","kind":"speaker","phoneme":null,"vector":[1,0],"split":"train"})");
  std::istringstream in(text);
  EXPECT_THROW(parse_dataset(in), SchemaError);
}

TEST(Embstore, PhonemeOutsideInventoryIsSchemaError) {
  Dataset d = tiny();
  d.records[1].phoneme = "zz";
  EXPECT_THROW(validate_dataset(d), SchemaError);
}

TEST(Embstore, KindPhonemeInvariantIsEnforced) {
  Dataset a = tiny();
  a.records[0].phoneme = "i";
  EXPECT_THROW(validate_dataset(a), SchemaError);
  Dataset b = tiny();
  b.records[1].phoneme.reset();
  EXPECT_THROW(validate_dataset(b), SchemaError);
}

TEST(Embstore, DuplicateIdsAndBadCountsAreRejected) {
  Dataset d = tiny();
  d.records[3].record_id = "u1_spk";
  EXPECT_THROW(validate_dataset(d), SchemaError);

  Dataset c = tiny();
  c.records.pop_back();
  EXPECT_THROW(validate_dataset(c), SchemaError);
}

TEST(Embstore, NonFiniteEntryIsRejected) {
  Dataset d = tiny();
  d.records[2].vector[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(validate_dataset(d), SchemaError);
}

TEST(Embstore, EmptyStreamHasNoManifest) {
  std::istringstream in("\n\n");
  EXPECT_THROW(parse_dataset(in), ParseError);
}

TEST(Embstore, EquivalenceMergesPhonemesAndInventory) {
  Dataset d;
  d.records = {content_rec("a", "src", "s", "u", Emotion::neutral, "A", {1.0}),
               content_rec("b", "src", "s", "u", Emotion::neutral, "a", {2.0})};
  d.manifest = make_manifest(1, 1, d.records, {"A", "a"});
  const PhonemeEquivalence eq{{"A", "A,a"}, {"a", "A,a"}};
  std::istringstream in(serialize(d));
  const Dataset got = parse_dataset(in, eq);
  EXPECT_EQ(got.manifest.phoneme_inventory, std::vector<std::string>{"A,a"});
  EXPECT_EQ(*got.records[0].phoneme, "A,a");
  EXPECT_EQ(*got.records[1].phoneme, "A,a");
}

TEST(Embstore, MergeConcatenatesAndRejectsClashes) {
  Dataset a = tiny();
  Dataset b;
  b.records = {speaker_rec("x_spk", "tgt", "t9", "x", Emotion::happiness, {0.5, 0.5})};
  b.manifest = make_manifest(2, 3, b.records, {"u"});
  const std::vector<Dataset> parts{a, b};
  const Dataset m = merge_datasets(parts);
  EXPECT_EQ(m.records.size(), 5u);
  EXPECT_EQ(m.manifest.phoneme_inventory, (std::vector<std::string>{"i", "A,a", "u"}));
  EXPECT_NO_THROW(validate_dataset(m));

  const std::vector<Dataset> twice{a, a};
  EXPECT_THROW(merge_datasets(twice), SchemaError);
}

TEST(Utterances, GroupsRecordsPerUtterance) {
  const Dataset d = tiny();
  const auto utts = assemble_utterances(d.records);
  ASSERT_EQ(utts.size(), 2u);
  EXPECT_EQ(utts[0].utterance_id, "u1");
  ASSERT_TRUE(utts[0].speaker);
  EXPECT_EQ(utts[0].content.rows(), 2);
  EXPECT_DOUBLE_EQ(utts[0].content(1, 2), 0.3);
  EXPECT_EQ(utts[1].content.rows(), 0);

  const auto test_only = assemble_utterances(d.records, UtteranceFilter{std::nullopt, Split::test});
  ASSERT_EQ(test_only.size(), 1u);
  EXPECT_EQ(test_only[0].corpus_id, "tgt");
}

TEST(Utterances, InconsistentMetadataIsSchemaError) {
  Dataset d = tiny();
  d.records[2].emotion = Emotion::happiness;
  EXPECT_THROW(assemble_utterances(d.records), SchemaError);
}
