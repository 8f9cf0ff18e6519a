#include "framing/frame.hpp"

#include <algorithm>
#include <string>

#include "framing/text.hpp"

namespace framing {

namespace {

constexpr std::array<std::string_view, kFrameCount> kNames = {
    "Economic",          "Morality",        "Fairness and Equality",
    "Legality and Crime", "Health and Safety", "Cultural Identity",
    "Public Opinion",    "Security and Defense", "Political and Policies",
    "Other",
};

std::string normalize_name(std::string_view s) {
  std::string out;
  for (auto tok : whitespace_tokens(s)) {
    if (!out.empty()) out.push_back(' ');
    if (tok == "&")
      out += "and";
    else
      out += ascii_lower(tok);
  }
  return out;
}

}  // namespace

std::string_view name(Frame f) { return kNames[index(f)]; }

std::optional<Frame> frame_from_code(long long c) {
  if (c < 1 || c > static_cast<long long>(kFrameCount)) return std::nullopt;
  return static_cast<Frame>(c);
}

std::optional<Frame> frame_from_name(std::string_view s) {
  const std::string key = normalize_name(s);
  for (std::size_t i = 0; i < kFrameCount; ++i) {
    if (normalize_name(kNames[i]) == key) return frame_at(i);
  }
  return std::nullopt;
}

std::optional<Frame> parse_frame(std::string_view s) {
  const auto t = trim(s);
  if (!t.empty() && t.size() <= 2 && std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return frame_from_code(std::stoll(std::string(t)));
  return frame_from_name(t);
}

std::string_view to_string(LabelSource s) {
  switch (s) {
    case LabelSource::gold:
      return "gold";
    case LabelSource::imported:
      return "imported";
    case LabelSource::baseline:
      return "baseline";
  }
  return "gold";
}

std::optional<LabelSource> label_source_from_string(std::string_view s) {
  if (s == "gold") return LabelSource::gold;
  if (s == "imported") return LabelSource::imported;
  if (s == "baseline") return LabelSource::baseline;
  return std::nullopt;
}

}  // namespace framing
