#pragma once

// Document store: ingestion, sentence splitting, comment filtering, and
// article/comment linking.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "framing/jsonl.hpp"

namespace framing {

enum class DocKind { article, comment };

std::string_view to_string(DocKind k);
std::optional<DocKind> doc_kind_from_string(std::string_view s);

struct Sentence {
  std::size_t index = 0;
  std::string text;
  std::size_t word_count = 0;
  // Byte range of `text` inside the owning document's text.
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Sentence&) const = default;
};

struct Document {
  std::string doc_id;
  DocKind kind = DocKind::article;
  std::string outlet;
  std::optional<std::string> parent_id;
  std::string text;
  std::vector<Sentence> sentences;

  bool operator==(const Document&) const = default;
};

/// Version tag of the shipped abbreviation list; bump when the list changes.
inline constexpr std::string_view kAbbreviationListVersion = "1";

/// Rule-based splitter: a sentence ends at '.', '!' or '?' (optionally
/// followed by closing quotes/brackets) when followed by whitespace and an
/// upper-case letter (optionally behind an opening quote or bracket), or by
/// end of text. Known abbreviations and single-letter initials never end a
/// sentence. Sentence texts are trimmed substrings of the input.
std::vector<Sentence> split_sentences(std::string_view text);

bool is_abbreviation(std::string_view token_without_period);

struct LoadResult {
  std::vector<Document> documents;
  std::vector<RecordError> errors;
};

/// Parses a documents file ({doc_id, kind, outlet, parent_id?, text} per
/// line). Records whose kind differs from `expected` are errors.
/// Throws InputError when the file cannot be read.
LoadResult load_corpus(const std::filesystem::path& path, DocKind expected);

/// Parses one document record; throws RecordFieldError.
Document parse_document(const json& rec);

json to_json(const Document& d, bool with_sentences);

struct FilterReport {
  std::size_t input = 0;
  std::size_t dropped_short = 0;
  std::size_t dropped_duplicate = 0;
};

/// Drops comments with fewer than `min_words` whitespace tokens in the raw
/// text, then exact duplicates after whitespace normalization and ASCII case
/// folding (the first occurrence in input order survives). Throws
/// std::invalid_argument if any input is an article.
std::vector<Document> filter_comments(const std::vector<Document>& comments, std::size_t min_words = 5,
                                      FilterReport* report = nullptr);

struct Links {
  std::map<std::string, std::vector<std::string>> by_article;
  std::vector<std::string> orphans;
};

/// Maps article ids to their comments' ids (comment input order preserved).
/// Every article gets an entry, possibly empty.
Links link(const std::vector<Document>& articles, const std::vector<Document>& comments);

/// Store on disk: a directory with documents.jsonl (articles then comments,
/// sentences included) plus ingest metadata.
struct Store {
  std::vector<Document> articles;
  std::vector<Document> comments;

  const Document* find(std::string_view doc_id) const;
};

void save_store(const std::filesystem::path& dir, const Store& store);
Store load_store(const std::filesystem::path& dir);

struct CorpusStatsRow {
  std::string outlet;
  std::string topic;
  std::size_t article_count = 0;
  std::size_t comment_count = 0;
  double avg_comments_per_article = 0.0;
};

/// Article and comment counts per (outlet, topic). Documents without a
/// topic entry are counted under "unassigned". Rows are sorted by
/// (outlet, topic).
std::vector<CorpusStatsRow> corpus_stats(const Store& store, const std::map<std::string, std::string>& topic_of);

}  // namespace framing
