#include "sapa/triplets.hpp"

#include <array>
#include <map>
#include <ostream>
#include <random>
#include <tuple>

#include "sapa/error.hpp"

namespace sapa {

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::optional<std::size_t> community_of(const PartitionMap& partitions, Emotion e,
                                        const EmbeddingRecord& r) {
  auto p = partitions.find(e);
  if (p == partitions.end()) return std::nullopt;
  auto it = p->second.find(NodeId{r.corpus_id, r.speaker_id});
  if (it == p->second.end()) return std::nullopt;
  return it->second;
}

bool same_speaker(const EmbeddingRecord& a, const EmbeddingRecord& b) {
  return a.corpus_id == b.corpus_id && a.speaker_id == b.speaker_id;
}

// Positive from `pool` (the anchor's cell): another speaker, opposite corpus
// preferred when requested.
std::optional<std::size_t> choose_positive(std::span<const EmbeddingRecord> records,
                                           const std::vector<std::size_t>& pool,
                                           const EmbeddingRecord& anchor, bool cross_corpus,
                                           Rng& rng) {
  std::vector<std::size_t> other_speaker;
  std::vector<std::size_t> other_corpus;
  for (std::size_t idx : pool) {
    const auto& r = records[idx];
    if (same_speaker(r, anchor)) continue;
    other_speaker.push_back(idx);
    if (r.corpus_id != anchor.corpus_id) other_corpus.push_back(idx);
  }
  const auto& chosen = (cross_corpus && !other_corpus.empty()) ? other_corpus : other_speaker;
  if (chosen.empty()) return std::nullopt;
  return chosen[pick(rng, chosen.size())];
}

}  // namespace

std::string_view to_string(TripletSpace s) noexcept {
  return s == TripletSpace::phoneme ? "phoneme" : "speaker";
}

MiningResult mine_phoneme_triplets(std::span<const EmbeddingRecord> records,
                                   const AnchorSet& anchors, const PartitionMap& partitions,
                                   const MiningConfig& cfg) {
  if (cfg.restrict_to_anchor_set && anchors.empty()) {
    throw DomainError("phoneme triplet mining needs a non-empty anchor set");
  }
  using CellKey = std::tuple<Emotion, std::string, std::size_t>;
  std::map<CellKey, std::vector<std::size_t>> cells;
  // membership[i][e] = community of record i's speaker under emotion e, or -1.
  std::vector<std::array<long, kNumEmotions>> membership(records.size());
  std::map<std::pair<std::string, Emotion>, std::vector<std::size_t>> by_phoneme_emotion;

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.kind != EmbeddingKind::content || !r.phoneme) continue;
    for (Emotion e : kAllEmotions) {
      const auto c = community_of(partitions, e, r);
      membership[i][index_of(e)] = c ? static_cast<long>(*c) : -1;
    }
    by_phoneme_emotion[{*r.phoneme, r.emotion}].push_back(i);
    if (cfg.restrict_to_anchor_set && !anchors.contains(r.emotion, *r.phoneme)) continue;
    if (const long c = membership[i][index_of(r.emotion)]; c >= 0) {
      cells[{r.emotion, *r.phoneme, static_cast<std::size_t>(c)}].push_back(i);
    }
  }

  MiningResult out;
  if (cells.empty()) {
    out.report.notices.push_back("no content record falls in an anchored (emotion, phoneme) cell");
    return out;
  }
  std::vector<const std::pair<const CellKey, std::vector<std::size_t>>*> cell_list;
  for (const auto& kv : cells) cell_list.push_back(&kv);

  Rng rng(cfg.seed);
  const std::size_t draws = cfg.anchors_per_batch * cfg.n_batches;
  for (std::size_t d = 0; d < draws; ++d) {
    ++out.report.attempted;
    const auto& [key, pool] = *cell_list[pick(rng, cell_list.size())];
    const auto& [emotion, phoneme, community] = key;
    const std::size_t a = pool[pick(rng, pool.size())];
    const auto& anchor = records[a];

    const auto p = choose_positive(records, pool, anchor, cfg.cross_corpus_positive, rng);
    if (!p) {
      ++out.report.skipped_no_positive;
      continue;
    }

    std::vector<Emotion> neg_emotions;
    for (Emotion e : kAllEmotions) {
      if (e != emotion && by_phoneme_emotion.contains({phoneme, e})) neg_emotions.push_back(e);
    }
    if (neg_emotions.empty()) {
      ++out.report.skipped_no_negative;
      continue;
    }
    const Emotion neg_emotion = neg_emotions[pick(rng, neg_emotions.size())];
    const auto& neg_pool = by_phoneme_emotion.at({phoneme, neg_emotion});
    // Same style community (under the anchor's emotion) isolates emotion.
    std::vector<std::size_t> same_community;
    for (std::size_t idx : neg_pool) {
      if (membership[idx][index_of(emotion)] == static_cast<long>(community)) {
        same_community.push_back(idx);
      }
    }
    const auto& chosen = same_community.empty() ? neg_pool : same_community;
    const std::size_t n = chosen[pick(rng, chosen.size())];

    out.triplets.push_back(Triplet{TripletSpace::phoneme, anchor.record_id, records[*p].record_id,
                                   records[n].record_id, emotion, phoneme});
  }
  out.report.emitted = out.triplets.size();
  return out;
}

MiningResult mine_speaker_triplets(std::span<const EmbeddingRecord> records,
                                   const PartitionMap& partitions, const MiningConfig& cfg) {
  // cells[emotion][community] -> speaker record indices
  std::map<Emotion, std::map<std::size_t, std::vector<std::size_t>>> cells;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.kind != EmbeddingKind::speaker) continue;
    if (auto c = community_of(partitions, r.emotion, r)) cells[r.emotion][*c].push_back(i);
  }

  MiningResult out;
  std::vector<std::pair<Emotion, std::size_t>> anchor_cells;
  for (Emotion e : kAllEmotions) {
    auto it = cells.find(e);
    if (it == cells.end() || it->second.size() < 2) {
      if (partitions.contains(e)) {
        out.report.notices.push_back(std::string(to_string(e)) +
                                     ": fewer than two populated communities, no speaker triplets");
      }
      continue;
    }
    for (const auto& [c, pool] : it->second) anchor_cells.emplace_back(e, c);
  }
  if (anchor_cells.empty()) return out;

  Rng rng(cfg.seed);
  const std::size_t draws = cfg.anchors_per_batch * cfg.n_batches;
  for (std::size_t d = 0; d < draws; ++d) {
    ++out.report.attempted;
    const auto [emotion, community] = anchor_cells[pick(rng, anchor_cells.size())];
    const auto& by_comm = cells.at(emotion);
    const auto& pool = by_comm.at(community);
    const auto& anchor = records[pool[pick(rng, pool.size())]];

    const auto p = choose_positive(records, pool, anchor, cfg.cross_corpus_positive, rng);
    if (!p) {
      ++out.report.skipped_no_positive;
      continue;
    }
    std::vector<std::size_t> others;
    for (const auto& [c, members] : by_comm) {
      if (c != community) others.push_back(c);
    }
    const auto& neg_pool = by_comm.at(others[pick(rng, others.size())]);
    const std::size_t n = neg_pool[pick(rng, neg_pool.size())];

    out.triplets.push_back(Triplet{TripletSpace::speaker, anchor.record_id, records[*p].record_id,
                                   records[n].record_id, emotion, std::nullopt});
  }
  out.report.emitted = out.triplets.size();
  return out;
}

void write_triplets(std::ostream& out, std::span<const Triplet> triplets) {
  for (const auto& t : triplets) {
    out << to_string(t.space) << '\t' << t.anchor_id << '\t' << t.positive_id << '\t'
        << t.negative_id << '\t' << to_string(t.emotion) << '\t' << t.phoneme.value_or("-")
        << '\n';
  }
}

}  // namespace sapa
