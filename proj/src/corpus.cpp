#include "framing/corpus.hpp"

#include <algorithm>
#include <iterator>
#include <stdexcept>
#include <unordered_set>

#include "framing/text.hpp"

namespace framing {

std::string_view to_string(DocKind k) { return k == DocKind::article ? "article" : "comment"; }

std::optional<DocKind> doc_kind_from_string(std::string_view s) {
  if (s == "article") return DocKind::article;
  if (s == "comment") return DocKind::comment;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Sentence splitting

namespace {

// Lower-case, without the trailing period.
constexpr std::string_view kAbbreviations[] = {
    "mr",  "mrs", "ms",   "dr",   "prof", "sr",   "jr",   "st",   "mt",   "ft",  "gen",  "gov",
    "sen", "rep", "pres", "lt",   "col",  "capt", "sgt",  "maj",  "adm",  "cmdr", "rev", "hon",
    "inc", "ltd", "co",   "corp", "bros", "dept", "univ", "assn", "vs",   "approx", "jan", "feb",
    "apr", "jun", "jul",  "aug",  "sep",  "sept", "oct",  "nov",  "dec",  "ave",
};

bool is_upper_ascii(char c) { return c >= 'A' && c <= 'Z'; }
bool is_alpha_ascii(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// Length in bytes of a closing quote/bracket at `pos`, 0 if none.
std::size_t closer_len(std::string_view t, std::size_t pos) {
  if (pos >= t.size()) return 0;
  const char c = t[pos];
  if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
  // U+2019 right single quote, U+201D right double quote.
  if (t.substr(pos, 3) == "\xE2\x80\x99" || t.substr(pos, 3) == "\xE2\x80\x9D") return 3;
  return 0;
}

std::size_t opener_len(std::string_view t, std::size_t pos) {
  if (pos >= t.size()) return 0;
  const char c = t[pos];
  if (c == '"' || c == '\'' || c == '(' || c == '[') return 1;
  // U+2018 left single quote, U+201C left double quote.
  if (t.substr(pos, 3) == "\xE2\x80\x98" || t.substr(pos, 3) == "\xE2\x80\x9C") return 3;
  return 0;
}

bool starts_sentence(std::string_view t, std::size_t pos) {
  if (pos >= t.size()) return false;
  if (is_upper_ascii(t[pos])) return true;
  const std::size_t ol = opener_len(t, pos);
  return ol > 0 && pos + ol < t.size() && is_upper_ascii(t[pos + ol]);
}

// Token ending right before the period at `dot`, stripped of opening punctuation.
std::string_view token_before(std::string_view t, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && !is_space(t[b - 1])) --b;
  std::string_view tok = t.substr(b, dot - b);
  while (!tok.empty() && (tok.front() == '(' || tok.front() == '"' || tok.front() == '\'' || tok.front() == '['))
    tok.remove_prefix(1);
  return tok;
}

bool suppresses_split(std::string_view tok) {
  if (tok.empty()) return false;
  if (tok.size() == 1 && is_alpha_ascii(tok[0])) return true;  // initial, "J. Smith"
  // Dotted forms such as "U.S" or "e.g".
  if (tok.find('.') != std::string_view::npos && std::all_of(tok.begin(), tok.end(), [](char c) {
        return c == '.' || is_alpha_ascii(c);
      }))
    return true;
  return is_abbreviation(tok);
}

}  // namespace

bool is_abbreviation(std::string_view token_without_period) {
  const std::string low = ascii_lower(token_without_period);
  return std::find(std::begin(kAbbreviations), std::end(kAbbreviations), low) != std::end(kAbbreviations);
}

std::vector<Sentence> split_sentences(std::string_view text) {
  std::vector<Sentence> out;
  auto emit = [&](std::size_t from, std::size_t to) {
    std::size_t b = from, e = to;
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    if (b == e) return;
    Sentence s;
    s.index = out.size();
    s.text = std::string(text.substr(b, e - b));
    s.word_count = word_count(s.text);
    s.begin = b;
    s.end = e;
    out.push_back(std::move(s));
  };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_terminal(text[i])) {
      ++i;
      continue;
    }
    const std::size_t punct_begin = i;
    while (i < text.size() && is_terminal(text[i])) ++i;
    const bool single_period = (i - punct_begin == 1) && text[punct_begin] == '.';
    while (std::size_t cl = closer_len(text, i)) i += cl;
    const std::size_t sentence_end = i;

    std::size_t j = i;
    while (j < text.size() && is_space(text[j])) ++j;
    const bool at_end = (j == text.size());
    if (!at_end && (j == i || !starts_sentence(text, j))) continue;
    if (!at_end && single_period && suppresses_split(token_before(text, punct_begin))) continue;

    emit(start, sentence_end);
    start = j;
    i = j;
  }
  if (start < text.size()) emit(start, text.size());
  return out;
}

// ---------------------------------------------------------------------------
// Loading

Document parse_document(const json& rec) {
  Document d;
  d.doc_id = require_string(rec, "doc_id");
  if (trim(d.doc_id).empty()) throw RecordFieldError("doc_id", "doc_id must be non-empty");
  const std::string kind = require_string(rec, "kind");
  const auto k = doc_kind_from_string(kind);
  if (!k) throw RecordFieldError("kind", "kind must be 'article' or 'comment', got '" + kind + "'");
  d.kind = *k;
  d.outlet = require_string(rec, "outlet");
  d.parent_id = optional_string(rec, "parent_id");
  if (d.kind == DocKind::comment && (!d.parent_id || d.parent_id->empty()))
    throw RecordFieldError("parent_id", "comment requires parent_id");
  if (d.kind == DocKind::article && d.parent_id)
    throw RecordFieldError("parent_id", "article must not have parent_id");
  d.text = require_string(rec, "text");

  auto it = rec.find("sentences");
  if (it != rec.end() && it->is_array()) {
    for (const auto& s : *it) {
      Sentence sent;
      sent.index = s.at("index").get<std::size_t>();
      sent.text = s.at("text").get<std::string>();
      sent.word_count = s.at("word_count").get<std::size_t>();
      sent.begin = s.at("begin").get<std::size_t>();
      sent.end = s.at("end").get<std::size_t>();
      d.sentences.push_back(std::move(sent));
    }
  } else {
    d.sentences = split_sentences(d.text);
  }
  return d;
}

json to_json(const Document& d, bool with_sentences) {
  json j{{"doc_id", d.doc_id}, {"kind", to_string(d.kind)}, {"outlet", d.outlet}};
  if (d.parent_id) j["parent_id"] = *d.parent_id;
  j["text"] = d.text;
  if (with_sentences) {
    json arr = json::array();
    for (const auto& s : d.sentences) {
      arr.push_back({{"index", s.index}, {"text", s.text}, {"word_count", s.word_count}, {"begin", s.begin},
                     {"end", s.end}});
    }
    j["sentences"] = std::move(arr);
  }
  return j;
}

LoadResult load_corpus(const std::filesystem::path& path, DocKind expected) {
  LoadResult result;
  std::unordered_set<std::string> seen;
  result.errors = read_jsonl(path, [&](const json& rec, std::size_t) {
    Document d = parse_document(rec);
    if (d.kind != expected)
      throw RecordFieldError("kind", "expected kind '" + std::string(to_string(expected)) + "', got '" +
                                         std::string(to_string(d.kind)) + "'");
    if (!seen.insert(d.doc_id).second) throw RecordFieldError("doc_id", "duplicate doc_id '" + d.doc_id + "'");
    result.documents.push_back(std::move(d));
  });
  return result;
}

// ---------------------------------------------------------------------------
// Filtering and linking

std::vector<Document> filter_comments(const std::vector<Document>& comments, std::size_t min_words,
                                      FilterReport* report) {
  FilterReport r;
  r.input = comments.size();
  std::vector<Document> out;
  std::unordered_set<std::string> seen;
  for (const auto& d : comments) {
    if (d.kind != DocKind::comment)
      throw std::invalid_argument("filter_comments: document '" + d.doc_id + "' is not a comment");
  }
  for (const auto& d : comments) {
    if (word_count(d.text) < min_words) {
      ++r.dropped_short;
      continue;
    }
    if (!seen.insert(normalize_for_dedup(d.text)).second) {
      ++r.dropped_duplicate;
      continue;
    }
    out.push_back(d);
  }
  if (report) *report = r;
  return out;
}

Links link(const std::vector<Document>& articles, const std::vector<Document>& comments) {
  Links links;
  for (const auto& a : articles) links.by_article[a.doc_id];
  for (const auto& c : comments) {
    auto it = c.parent_id ? links.by_article.find(*c.parent_id) : links.by_article.end();
    if (it == links.by_article.end())
      links.orphans.push_back(c.doc_id);
    else
      it->second.push_back(c.doc_id);
  }
  return links;
}

// ---------------------------------------------------------------------------
// Store

const Document* Store::find(std::string_view doc_id) const {
  for (const auto* v : {&articles, &comments}) {
    for (const auto& d : *v) {
      if (d.doc_id == doc_id) return &d;
    }
  }
  return nullptr;
}

void save_store(const std::filesystem::path& dir, const Store& store) {
  std::vector<json> recs;
  recs.reserve(store.articles.size() + store.comments.size());
  for (const auto& d : store.articles) recs.push_back(to_json(d, true));
  for (const auto& d : store.comments) recs.push_back(to_json(d, true));
  write_jsonl(dir / "documents.jsonl", recs);
}

Store load_store(const std::filesystem::path& dir) {
  Store store;
  const auto path = dir / "documents.jsonl";
  auto errors = read_jsonl(path, [&](const json& rec, std::size_t) {
    Document d = parse_document(rec);
    (d.kind == DocKind::article ? store.articles : store.comments).push_back(std::move(d));
  });
  if (!errors.empty()) {
    throw InputError(path.string() + ":" + std::to_string(errors.front().line) + ": " + errors.front().message);
  }
  return store;
}

std::vector<CorpusStatsRow> corpus_stats(const Store& store, const std::map<std::string, std::string>& topic_of) {
  std::map<std::pair<std::string, std::string>, CorpusStatsRow> rows;
  auto row_for = [&](const Document& d) -> CorpusStatsRow& {
    auto it = topic_of.find(d.doc_id);
    const std::string topic = it == topic_of.end() ? "unassigned" : it->second;
    auto& r = rows[{d.outlet, topic}];
    r.outlet = d.outlet;
    r.topic = topic;
    return r;
  };
  for (const auto& a : store.articles) ++row_for(a).article_count;
  for (const auto& c : store.comments) ++row_for(c).comment_count;
  std::vector<CorpusStatsRow> out;
  for (auto& [_, r] : rows) {
    r.avg_comments_per_article =
        r.article_count > 0 ? static_cast<double>(r.comment_count) / static_cast<double>(r.article_count) : 0.0;
    out.push_back(r);
  }
  return out;
}

}  // namespace framing
