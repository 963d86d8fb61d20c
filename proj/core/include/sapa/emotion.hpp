#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace sapa {

enum class Emotion : std::uint8_t { neutral = 0, happiness = 1, anger = 2, sadness = 3 };

inline constexpr std::size_t kNumEmotions = 4;

inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions{
    Emotion::neutral, Emotion::happiness, Emotion::anger, Emotion::sadness};

constexpr std::size_t index_of(Emotion e) noexcept { return static_cast<std::size_t>(e); }

std::string_view to_string(Emotion e) noexcept;

std::optional<Emotion> parse_emotion(std::string_view name) noexcept;

// Throws SchemaError when i >= kNumEmotions.
Emotion emotion_from_index(std::size_t i);

}  // namespace sapa
