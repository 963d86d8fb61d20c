#include "sapa/utterance.hpp"

#include <map>
#include <utility>

#include "sapa/error.hpp"

namespace sapa {

std::vector<Utterance> assemble_utterances(std::span<const EmbeddingRecord> records,
                                           const UtteranceFilter& filter) {
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<Utterance> out;
  std::vector<std::vector<const EmbeddingRecord*>> segments;

  for (const auto& r : records) {
    if (filter.corpus_id && r.corpus_id != *filter.corpus_id) continue;
    if (filter.split && r.split != *filter.split) continue;
    auto [it, inserted] = index.try_emplace({r.corpus_id, r.utterance_id}, out.size());
    if (inserted) {
      Utterance u;
      u.corpus_id = r.corpus_id;
      u.speaker_id = r.speaker_id;
      u.utterance_id = r.utterance_id;
      u.emotion = r.emotion;
      u.split = r.split;
      out.push_back(std::move(u));
      segments.emplace_back();
    }
    Utterance& u = out[it->second];
    if (u.speaker_id != r.speaker_id || u.emotion != r.emotion || u.split != r.split) {
      throw SchemaError("utterance '" + r.utterance_id +
                        "' has records with inconsistent speaker, emotion or split");
    }
    if (r.kind == EmbeddingKind::speaker) {
      if (u.speaker) {
        throw SchemaError("utterance '" + r.utterance_id + "' has more than one speaker record");
      }
      u.speaker = Eigen::Map<const Eigen::VectorXd>(r.vector.data(),
                                                    static_cast<Eigen::Index>(r.vector.size()));
    } else {
      segments[it->second].push_back(&r);
    }
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& segs = segments[i];
    if (segs.empty()) continue;
    const auto dim = static_cast<Eigen::Index>(segs.front()->vector.size());
    out[i].content.resize(static_cast<Eigen::Index>(segs.size()), dim);
    for (std::size_t s = 0; s < segs.size(); ++s) {
      out[i].content.row(static_cast<Eigen::Index>(s)) =
          Eigen::Map<const Eigen::RowVectorXd>(segs[s]->vector.data(), dim);
    }
  }
  return out;
}

}  // namespace sapa
