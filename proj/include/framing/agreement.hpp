#pragma once

// Inter-annotator agreement and majority-vote gold construction for
// multi-label sentence annotations.

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "framing/frame.hpp"
#include "framing/jsonl.hpp"

namespace framing {

struct AnnotationRecord {
  std::string unit_id;
  std::string annotator_id;
  std::vector<Frame> labels;  // non-empty, ascending, unique

  bool operator==(const AnnotationRecord&) const = default;
};

struct Adjudication {
  std::string unit_id;
  std::string adjudicator_id;
  Frame label = Frame::Other;
};

class AgreementError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AnnotationLoadResult {
  std::vector<AnnotationRecord> records;
  std::vector<RecordError> errors;
};
/// {unit_id, annotator_id, labels: [...]}; a second record for the same
/// (unit, annotator) is an error.
AnnotationLoadResult load_annotations(const std::filesystem::path& path);
json to_json(const AnnotationRecord& a);

struct AdjudicationLoadResult {
  std::vector<Adjudication> adjudications;
  std::vector<RecordError> errors;
};
/// {unit_id, adjudicator_id, label}.
AdjudicationLoadResult load_adjudications(const std::filesystem::path& path);

/// Binary nominal alpha per label over units with at least two annotations:
/// alpha = 1 - (n - 1) * o01 / (n0 * n1) from the coincidence matrix.
/// Unused labels are undefined (nullopt). A label chosen on every
/// annotation has no observed disagreement and scores 1. Throws
/// AgreementError when no unit has two annotations.
std::map<Frame, std::optional<double>> krippendorff_alpha_per_label(const std::vector<AnnotationRecord>& records);

/// Mean |A and B| / |A or B| over all annotator pairs on multiply-annotated
/// units. Throws AgreementError when there are none.
double jaccard_index(const std::vector<AnnotationRecord>& records);

struct AgreementReport {
  std::map<Frame, std::optional<double>> alpha;
  double mean_alpha = 0.0;  // over labels with defined alpha
  std::size_t defined_labels = 0;
  double jaccard = 0.0;
  std::size_t units = 0;
  std::size_t multi_annotated_units = 0;
  std::size_t annotator_pairs = 0;
};

AgreementReport agreement_report(const std::vector<AnnotationRecord>& records);
json to_json(const AgreementReport& r);

struct GoldResult {
  std::map<std::string, std::vector<Frame>> gold;  // consensus and resolved units
  std::vector<std::string> consensus;
  std::vector<std::string> contention;  // every unit without consensus
  std::vector<std::string> resolved;    // contended, settled by adjudication
  std::vector<std::string> discarded;   // contended, adjudication failed
  std::vector<std::string> unresolved;  // contended, never adjudicated
};

/// A label is gold when at least two annotators chose it (with exactly two
/// annotators that means both). A contended unit is resolved when it has at
/// least two adjudications, all naming the same label, and that label was
/// chosen by some original annotator; otherwise it is discarded. Contended
/// units with no adjudication stay unresolved. Throws AgreementError for a
/// unit with fewer than two annotations or an adjudication naming an
/// unknown unit.
GoldResult majority_gold(const std::vector<AnnotationRecord>& records,
                         const std::optional<std::vector<Adjudication>>& adjudications = std::nullopt);

json to_json(const GoldResult& g);

}  // namespace framing
