#include "sapa/emotion.hpp"

#include <string>

#include "sapa/error.hpp"

namespace sapa {

std::string_view to_string(Emotion e) noexcept {
  switch (e) {
    case Emotion::neutral:
      return "neutral";
    case Emotion::happiness:
      return "happiness";
    case Emotion::anger:
      return "anger";
    case Emotion::sadness:
      return "sadness";
  }
  return "unknown";
}

std::optional<Emotion> parse_emotion(std::string_view name) noexcept {
  for (Emotion e : kAllEmotions) {
    if (to_string(e) == name) return e;
  }
  return std::nullopt;
}

Emotion emotion_from_index(std::size_t i) {
  if (i >= kNumEmotions) throw SchemaError("emotion index out of range: " + std::to_string(i));
  return kAllEmotions[i];
}

}  // namespace sapa
