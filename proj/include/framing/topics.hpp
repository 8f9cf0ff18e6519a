#pragma once

// Topic groups: import, a nearest-centroid assigner, and article/comment
// alignment.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "framing/corpus.hpp"
#include "framing/dominant.hpp"
#include "framing/frame.hpp"
#include "framing/jsonl.hpp"

namespace framing {

inline constexpr std::string_view kUnassigned = "unassigned";

/// The eleven topic groups of the reference study.
const std::vector<std::string>& default_topic_set();

struct TopicAssignment {
  std::string doc_id;
  std::string topic;
  std::optional<double> score;

  bool operator==(const TopicAssignment&) const = default;
};

using TopicMap = std::map<std::string, TopicAssignment>;

json to_json(const TopicAssignment& t);

struct TopicImportResult {
  TopicMap assignments;
  std::vector<RecordError> errors;
};

/// Reads {doc_id, topic, score?} records. Topics must be in `topic_set` or
/// be "unassigned"; duplicate doc ids are errors.
TopicImportResult import_topics(const std::filesystem::path& path, const std::vector<std::string>& topic_set);
void write_topics(const std::filesystem::path& path, const TopicMap& topics);

/// Lower-cased word tokens of length >= 2 with stopwords removed.
std::vector<std::string> topic_terms(std::string_view text);
bool is_stopword(std::string_view lower_token);

using TermVec = std::vector<std::pair<std::size_t, double>>;  // sorted by term index

struct CentroidModel {
  std::vector<std::string> vocabulary;  // sorted; index = term id
  std::vector<double> idf;
  std::map<std::string, TermVec> centroids;
  double tau = 0.05;

  /// L2-normalized TF-IDF vector; out-of-vocabulary terms are ignored.
  TermVec vectorize(std::string_view text) const;
};

/// IDF is ln((1 + N) / (1 + df)) + 1 over all N seeds; each centroid is the
/// mean of its seeds' normalized vectors. Throws std::invalid_argument when
/// there are no topics or a topic has no seeds.
CentroidModel fit_centroids(const std::map<std::string, std::vector<std::string>>& seed_texts, double tau = 0.05);

double cosine(const TermVec& a, const TermVec& b);

/// Highest-cosine topic (ties to the lexicographically smallest name);
/// "unassigned" when the best cosine is below tau or the text is empty.
TopicAssignment assign_topic(const CentroidModel& m, const std::string& doc_id, std::string_view text);
TopicMap assign_topics(const CentroidModel& m, const std::vector<Document>& docs);

void save_centroids(const std::filesystem::path& path, const CentroidModel& m);
CentroidModel load_centroids(const std::filesystem::path& path);

struct AlignedPair {
  std::string article_id;
  std::string comment_id;
  std::string topic;
  Frame article_frame = Frame::Other;
  Frame comment_frame = Frame::Other;
  std::string outlet;

  bool operator==(const AlignedPair&) const = default;
};

json to_json(const AlignedPair& p);
AlignedPair parse_aligned_pair(const json& rec);
void write_pairs(const std::filesystem::path& path, const std::vector<AlignedPair>& pairs);
std::vector<AlignedPair> read_pairs(const std::filesystem::path& path);

/// Exclusion reasons, checked in this order.
inline constexpr std::string_view kTopicUnassigned = "topic unassigned";
inline constexpr std::string_view kTopicMismatch = "topic mismatch";
inline constexpr std::string_view kArticleNoDominant = "article no-dominant";
inline constexpr std::string_view kCommentNoDominant = "comment no-dominant";

struct AlignReport {
  std::vector<AlignedPair> pairs;  // sorted by (article_id, comment_id)
  std::map<std::string, std::size_t> excluded;
};

/// One pair per linked (article, comment) whose topics match, are assigned,
/// and whose dominant frames both exist. A missing topic counts as
/// unassigned and a missing dominant result as no-dominant. The outlet comes
/// from `outlets` (article id to outlet), empty when absent.
AlignReport align(const Links& links, const TopicMap& topics, const std::map<std::string, DominantFrameResult>& dominants,
                  const std::map<std::string, std::string>& outlets);

}  // namespace framing
