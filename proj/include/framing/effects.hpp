#pragma once

// Retention rates, per-frame independence tests and reframing transitions
// over aligned article/comment pairs.

#include <array>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "framing/frame.hpp"
#include "framing/jsonl.hpp"
#include "framing/topics.hpp"

namespace framing {

/// Which slice dimensions to group by. All false pools every pair.
struct GroupBy {
  bool outlet = false;
  bool topic = false;
  bool frame = false;  // article frame
};

/// Parses "outlet,topic,frame" (any subset, any order; empty means pooled).
/// Throws std::invalid_argument on an unknown dimension.
GroupBy parse_group_by(std::string_view spec);

/// Composite slice key. An unset dimension means "all values".
struct SliceKey {
  std::optional<std::string> outlet;
  std::optional<std::string> topic;
  std::optional<Frame> article_frame;

  auto operator<=>(const SliceKey&) const = default;
  bool operator==(const SliceKey&) const = default;

  bool contains(const AlignedPair& p) const;
};

SliceKey slice_of(const AlignedPair& p, const GroupBy& by);

struct RetentionRecord {
  SliceKey key;
  std::size_t pairs = 0;
  std::size_t retained = 0;
  double rate = 0.0;
};

/// One record per non-empty group, ordered by key.
std::vector<RetentionRecord> retention(const std::vector<AlignedPair>& pairs, const GroupBy& by);

struct IndependenceTest {
  SliceKey key;
  Frame frame = Frame::Other;
  // Rows: article has f / not; columns: comment has f / not.
  std::array<std::array<std::size_t, 2>, 2> contingency{};
  std::size_t n = 0;
  bool defined = false;
  std::string reason;  // why the test is undefined
  double chi2 = 0.0;
  double p_value = 1.0;
  double cramers_v = 0.0;
};

/// Pearson chi-squared (no continuity correction) on a 2x2 table. A zero
/// row or column marginal leaves the test undefined with a reason.
IndependenceTest chi2_from_table(const std::array<std::array<std::size_t, 2>, 2>& table, Frame frame = Frame::Other);

/// Indicator table (article_frame == f) x (comment_frame == f) over the
/// pairs inside `slice`. Throws std::invalid_argument when no pair is in it.
IndependenceTest chi2_independence(const std::vector<AlignedPair>& pairs, Frame frame, const SliceKey& slice = {});

/// Regularized upper incomplete gamma Q(a, x) for a > 0, x >= 0.
double gamma_q(double a, double x);

/// Upper tail of the chi-squared distribution with `df` degrees of freedom.
double chi2_sf(double x, double df);

struct TransitionMatrix {
  SliceKey key;
  std::array<std::array<std::size_t, kFrameCount>, kFrameCount> counts{};  // [article][comment] by index
  std::array<std::size_t, kFrameCount> row{};
  std::array<std::size_t, kFrameCount> col{};
  std::size_t total = 0;

  std::size_t at(Frame from, Frame to) const { return counts[index(from)][index(to)]; }
  std::size_t diagonal() const;
};

/// Counts the pairs that fall inside `slice`.
TransitionMatrix transitions(const std::vector<AlignedPair>& pairs, const SliceKey& slice = {});

struct Reframing {
  Frame from = Frame::Other;
  Frame to = Frame::Other;
  std::size_t count = 0;

  bool operator==(const Reframing&) const = default;
};

/// Non-zero off-diagonal cells by count descending, then by (from, to) code.
std::vector<Reframing> top_reframings(const TransitionMatrix& m, std::size_t k);

struct FlowNode {
  std::string side;  // "article" or "comment"
  Frame frame = Frame::Other;
  double pct = 0.0;      // node height in the exported diagram
  double raw_pct = 0.0;  // share of the slice before standardization
};

struct FlowLink {
  Frame from = Frame::Other;
  Frame to = Frame::Other;
  double weight = 0.0;
};

struct FlowData {
  std::vector<FlowNode> nodes;
  std::vector<FlowLink> links;
  bool standardized = false;
};

/// Nodes for frames with non-zero mass on each side and one link per
/// non-zero cell. Unstandardized weights are counts. Standardized weights are
/// count / row_total * total / nonempty_rows, so every article-side node
/// carries the same outgoing weight and the grand total is preserved.
FlowData flow_export(const TransitionMatrix& m, bool standardize_rows);

json to_json(const SliceKey& k);
json to_json(const RetentionRecord& r);
json to_json(const IndependenceTest& t);
json to_json(const TransitionMatrix& m);
json to_json(const FlowData& f);

/// Kolmogorov-Smirnov distance between the sample and Uniform(0,1).
double ks_uniform_distance(std::vector<double> sample);

void write_retention_tsv(const std::filesystem::path& path, const std::vector<RetentionRecord>& records);
void write_independence_tsv(const std::filesystem::path& path, const std::vector<IndependenceTest>& tests);

}  // namespace framing
