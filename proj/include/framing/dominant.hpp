#pragma once

// Reduction of sentence labels to one dominant frame per document.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "framing/frame.hpp"
#include "framing/jsonl.hpp"

namespace framing {

struct DominantConfig {
  std::size_t min_support = 3;
  double min_coverage = 0.40;  // inclusive
};

struct DominantFrameResult {
  std::string doc_id;
  std::optional<Frame> dominant;  // nullopt: no dominant frame
  std::size_t support = 0;        // count of the most frequent label
  double coverage = 0.0;          // support / labeled sentences
  std::size_t labeled = 0;

  bool operator==(const DominantFrameResult&) const = default;
};

/// A single labeled sentence is always dominant. Otherwise the most frequent
/// label wins when it is the unique maximum, has at least min_support
/// sentences, and covers at least min_coverage of the labeled sentences.
/// Throws std::invalid_argument for empty input, mixed doc ids, or two
/// labels on one sentence.
DominantFrameResult dominant_frame(const std::vector<SentenceLabel>& labels, const DominantConfig& cfg = {});

struct DominantBatch {
  std::map<std::string, DominantFrameResult> results;
  std::vector<std::string> warnings;
};

/// One result per listed document. Documents without labels get a
/// no-dominant result with support 0 and a warning; labels for unlisted
/// documents are ignored with a warning.
DominantBatch dominant_batch(const std::vector<std::string>& doc_ids, const std::vector<SentenceLabel>& labels,
                             const DominantConfig& cfg = {});

json to_json(const DominantFrameResult& r);
DominantFrameResult parse_dominant(const json& rec);
void write_dominant(const std::filesystem::path& path, const std::map<std::string, DominantFrameResult>& results);

struct DominantLoadResult {
  std::map<std::string, DominantFrameResult> results;
  std::vector<RecordError> errors;
};
DominantLoadResult read_dominant(const std::filesystem::path& path);

}  // namespace framing
