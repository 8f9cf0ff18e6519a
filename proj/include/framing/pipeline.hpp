#pragma once

// End-to-end orchestration: configuration, the stage sequence, report
// assembly and the run manifest.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "framing/corpus.hpp"
#include "framing/dominant.hpp"
#include "framing/effects.hpp"
#include "framing/inference.hpp"
#include "framing/jsonl.hpp"
#include "framing/topics.hpp"

namespace framing {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::filesystem::path articles;
  std::filesystem::path comments;
  // Exactly one sentence-label source.
  std::optional<std::filesystem::path> labels;    // imported predictions
  std::optional<std::filesystem::path> model;     // baseline model file
  std::optional<std::filesystem::path> training;  // training sentences, trained in-run
  // Exactly one topic source.
  std::optional<std::filesystem::path> topics;  // topic assignments
  std::optional<std::filesystem::path> seeds;   // seed article topics for the centroid assigner
  std::optional<std::filesystem::path> annotations;
  std::optional<std::filesystem::path> adjudications;

  DominantConfig dominant;
  std::size_t min_words = 5;  // comment filter
  double tau = 0.05;
  std::vector<std::string> topic_set = default_topic_set();
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  bool glmm = true;
  std::size_t top_k = 5;
};

/// Reads a JSON config. Relative paths resolve against the config file's
/// directory. Unknown keys are errors. Does not validate; see validate().
RunConfig load_run_config(const std::filesystem::path& path);

/// Throws ConfigError listing every problem: missing or conflicting label and
/// topic sources, paths that do not exist, thresholds out of range, no
/// output directory.
void validate(const RunConfig& cfg);

/// Config as recorded in the manifest: thresholds in full, input paths by
/// file name only so the record does not depend on where the run happened.
json manifest_config(const RunConfig& cfg);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct StageStatus {
  std::string name;
  std::string status;  // "ok", "failed", "skipped"
  std::string detail;
};

struct RunResult {
  std::vector<StageStatus> stages;
  std::optional<std::string> failed_stage;
  std::filesystem::path manifest;

  bool ok() const { return !failed_stage; }
};

/// ingest -> label -> dominant -> topics/align -> effects -> glmm ->
/// agreement -> report, then the manifest. A failing stage stops the run;
/// the manifest is still written and names the failed stage. Validates the
/// config first (ConfigError escapes before any stage runs).
RunResult run_pipeline(const RunConfig& cfg);

// Stage building blocks shared with the CLI verbs.

/// Retention, independence tests, transitions, top reframings, flow files,
/// and the Fig. 2 / Fig. 3 shaped tables for one set of pairs. Returns the
/// relative paths written.
std::vector<std::string> write_analysis(const std::vector<AlignedPair>& pairs, const GroupBy& by, std::size_t top_k,
                                        const std::filesystem::path& dir);

/// Corpus table shape: outlet, topic, articles, comments, average comments per
/// article, with a Total row per outlet.
void write_corpus_table(const std::filesystem::path& path, const Store& store, const TopicMap& topics);

struct OutletGlmm {
  std::string outlet;
  std::optional<GlmmFit> fit;
  std::vector<MarginalEffect> marginals;
  std::string skipped_reason;
};

/// Fits the retention model on one outlet's pairs. Precondition failures
/// (one topic, separation, a constant outcome) are reported as skipped.
OutletGlmm fit_outlet_glmm(const std::vector<AlignedPair>& pairs, const std::string& outlet,
                           const GlmmConfig& cfg = {});
json to_json(const OutletGlmm& g);

/// Fig. 3 shape: outlet, topic, pairs, observed rate, model probability and
/// interval (NA when no model was fitted).
void write_topic_table(const std::filesystem::path& path, const std::vector<AlignedPair>& pairs,
                       const std::vector<OutletGlmm>& models);

/// Markdown summary of a bundle directory: corpus statistics, retention by
/// frame, retention by topic, independence tests and top reframings. Missing
/// pieces are marked rather than fatal.
std::string make_report(const std::filesystem::path& bundle_dir);

/// File-name-safe version of an outlet tag.
std::string slug(std::string_view s);

}  // namespace framing
