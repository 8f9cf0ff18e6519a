#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace framing {

// Integer codes follow the classifier prompt ordering so external model
// outputs (which emit "1".."10") can be read without a translation table.
enum class Frame : std::uint8_t {
  Economic = 1,
  Morality = 2,
  FairnessAndEquality = 3,
  LegalityAndCrime = 4,
  HealthAndSafety = 5,
  CulturalIdentity = 6,
  PublicOpinion = 7,
  SecurityAndDefense = 8,
  PoliticalAndPolicies = 9,
  Other = 10,
};

inline constexpr std::size_t kFrameCount = 10;

inline constexpr std::array<Frame, kFrameCount> kAllFrames = {
    Frame::Economic,           Frame::Morality,           Frame::FairnessAndEquality,
    Frame::LegalityAndCrime,   Frame::HealthAndSafety,    Frame::CulturalIdentity,
    Frame::PublicOpinion,      Frame::SecurityAndDefense, Frame::PoliticalAndPolicies,
    Frame::Other,
};

constexpr int code(Frame f) { return static_cast<int>(f); }

/// Zero-based dense index, handy for 10-wide arrays.
constexpr std::size_t index(Frame f) { return static_cast<std::size_t>(f) - 1; }

constexpr Frame frame_at(std::size_t idx) { return static_cast<Frame>(idx + 1); }

/// Canonical display name ("Legality and Crime", ...).
std::string_view name(Frame f);

std::optional<Frame> frame_from_code(long long c);

/// Case-insensitive match on canonical names; also accepts "&" for "and".
std::optional<Frame> frame_from_name(std::string_view s);

/// Accepts a canonical name, a code as a string ("4"), or a bare code.
std::optional<Frame> parse_frame(std::string_view s);

enum class LabelSource : std::uint8_t { gold, imported, baseline };

std::string_view to_string(LabelSource s);
std::optional<LabelSource> label_source_from_string(std::string_view s);

struct SentenceLabel {
  std::string doc_id;
  std::size_t sentence_index = 0;
  Frame frame = Frame::Other;
  std::optional<double> score;
  LabelSource source = LabelSource::gold;

  bool operator==(const SentenceLabel&) const = default;
};

}  // namespace framing
