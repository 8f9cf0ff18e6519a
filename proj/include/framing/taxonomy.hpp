#pragma once

// Legacy label merging, span-to-sentence projection, and the confusion
// analysis behind the merged label set.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "framing/corpus.hpp"
#include "framing/frame.hpp"
#include "framing/jsonl.hpp"

namespace framing {

struct MergeTarget {
  bool dropped = false;
  Frame frame = Frame::Other;  // meaningful only when !dropped
};

/// The 15 legacy label names and where each one goes.
const std::vector<std::pair<std::string, MergeTarget>>& legacy_merge_table();

/// Looks a label up case-insensitively among the legacy names and the 10
/// merged names (so the map is idempotent). nullopt for unknown labels.
std::optional<MergeTarget> merge_target(std::string_view label);

/// Offsets are Unicode code points, end-exclusive.
struct SpanAnnotation {
  std::string doc_id;
  std::string annotator_id;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string label;
  std::string topic;
  // Source line in the spans file, 0 when built in memory. Not compared.
  std::size_t line = 0;

  bool operator==(const SpanAnnotation& o) const {
    return doc_id == o.doc_id && annotator_id == o.annotator_id && start == o.start && end == o.end &&
           label == o.label && topic == o.topic;
  }
};

SpanAnnotation parse_span(const json& rec);
json to_json(const SpanAnnotation& s);

struct SpanLoadResult {
  std::vector<SpanAnnotation> spans;
  std::vector<RecordError> errors;
};
SpanLoadResult load_spans(const std::filesystem::path& path);

struct MergeResult {
  std::vector<SpanAnnotation> annotations;
  std::size_t dropped = 0;
  std::vector<RecordError> errors;
};

/// Rewrites labels to their merged names and removes dropped ones.
MergeResult apply_merge_map(const std::vector<SpanAnnotation>& annotations);

struct ProjectionResult {
  std::vector<SentenceLabel> labels;  // sorted by (sentence_index, frame)
  std::vector<RecordError> errors;
};

/// Agreed regions are maximal stretches covered by at least `min_annotators`
/// distinct annotators with the same label (each annotator's spans are
/// unioned first) and containing at least `min_words` whitespace tokens.
/// A sentence gets a label when one agreed region of that label covers it.
/// Labels must already be merged; unknown labels are per-record errors.
ProjectionResult project_spans_to_sentences(const Document& doc, const std::vector<SpanAnnotation>& annotations,
                                            std::size_t min_words = 3, std::size_t min_annotators = 2);

/// Byte ranges of the agreed regions for one label, for inspection and tests.
std::vector<std::pair<std::size_t, std::size_t>> agreed_regions(const Document& doc,
                                                                const std::vector<SpanAnnotation>& annotations,
                                                                Frame label, std::size_t min_words = 3,
                                                                std::size_t min_annotators = 2);

/// One row of the sentence-level training file.
struct TrainingSentence {
  std::string doc_id;
  std::size_t sentence_index = 0;
  std::string text;
  std::vector<Frame> labels;  // ascending codes
  std::string topic;

  bool operator==(const TrainingSentence&) const = default;
};

json to_json(const TrainingSentence& t);
TrainingSentence parse_training_sentence(const json& rec);

struct TrainingSetResult {
  std::vector<TrainingSentence> sentences;
  std::vector<RecordError> errors;
  std::size_t dropped_by_merge = 0;
  std::size_t unknown_docs = 0;
};

/// Merges, projects every annotated document, and keeps labeled sentences.
/// A document's topic is the most frequent topic among its spans (ties go
/// to the lexicographically smallest).
TrainingSetResult build_training_set(const Store& store, const std::vector<SpanAnnotation>& spans);

/// Symmetric label-by-label counts. Keys are label strings as they appear in
/// the annotations, so legacy and merged labels both work.
struct ConfusionMatrix {
  std::map<std::string, std::map<std::string, std::size_t>> cells;

  std::size_t at(const std::string& a, const std::string& b) const;
  std::size_t row_total(const std::string& a) const;
  std::size_t total() const;
  std::vector<std::string> labels() const;
  void add(const std::string& a, const std::string& b);
};

struct ConfusionResult {
  ConfusionMatrix pooled;
  std::map<std::string, ConfusionMatrix> by_topic;  // filled only when requested
  std::size_t skipped = 0;                          // spans with unknown doc or bad bounds
};

/// Every pair of spans from different annotators on the same document whose
/// intersection holds at least `min_words` tokens adds one to (a,b) and one to
/// (b,a) when the labels differ, or one to (a,a) when they agree.
ConfusionResult confusion_matrix(const std::vector<SpanAnnotation>& annotations,
                                 const std::map<std::string, std::string>& doc_texts, bool by_topic,
                                 std::size_t min_words = 3);

/// Pairs (a < b) whose confusion count divided by the smaller of the two row
/// totals exceeds theta in every topic.
std::vector<std::pair<std::string, std::string>> propose_merges(
    const std::map<std::string, ConfusionMatrix>& per_topic, double theta = 0.15);

}  // namespace framing
