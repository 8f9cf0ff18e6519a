#include "framing/topics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "framing/parallel.hpp"
#include "framing/text.hpp"

namespace framing {

const std::vector<std::string>& default_topic_set() {
  static const std::vector<std::string> topics = {
      "Gun Control",  "Russia-Ukraine", "Trump & Elections", "Healthcare",     "Immigration", "LGBT+ Rights",
      "Education",    "Abortion",       "Israel-Palestine",  "Climate Change", "Syria & IS",
  };
  return topics;
}

json to_json(const TopicAssignment& t) {
  json j{{"doc_id", t.doc_id}, {"topic", t.topic}};
  if (t.score) j["score"] = *t.score;
  return j;
}

TopicImportResult import_topics(const std::filesystem::path& path, const std::vector<std::string>& topic_set) {
  TopicImportResult r;
  const std::set<std::string> allowed(topic_set.begin(), topic_set.end());
  r.errors = read_jsonl(path, [&](const json& rec, std::size_t) {
    TopicAssignment t;
    t.doc_id = require_string(rec, "doc_id");
    t.topic = require_string(rec, "topic");
    if (t.topic != kUnassigned && !allowed.count(t.topic))
      throw RecordFieldError("topic", "topic '" + t.topic + "' is not in the configured topic set");
    if (auto it = rec.find("score"); it != rec.end() && !it->is_null()) {
      if (!it->is_number()) throw RecordFieldError("score", "score must be a number");
      t.score = it->get<double>();
    }
    if (r.assignments.count(t.doc_id)) throw RecordFieldError("doc_id", "duplicate doc_id '" + t.doc_id + "'");
    r.assignments[t.doc_id] = std::move(t);
  });
  return r;
}

void write_topics(const std::filesystem::path& path, const TopicMap& topics) {
  std::vector<json> recs;
  for (const auto& [_, t] : topics) recs.push_back(to_json(t));
  write_jsonl(path, recs);
}

// ---------------------------------------------------------------------------
// Terms

namespace {

const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "a",       "about",   "above",  "after",   "again",  "against", "all",     "also",   "am",     "an",
      "and",     "any",     "are",    "as",      "at",     "be",      "because", "been",   "before", "being",
      "below",   "between", "both",   "but",     "by",     "can",     "could",   "did",    "do",     "does",
      "doing",   "down",    "during", "each",    "even",   "few",     "for",     "from",   "further", "get",
      "got",     "had",     "has",    "have",    "having", "he",      "her",     "here",   "hers",   "herself",
      "him",     "himself", "his",    "how",     "i",      "if",      "in",      "into",   "is",     "it",
      "its",     "itself",  "just",   "like",    "many",   "may",     "me",      "might",  "more",   "most",
      "much",    "must",    "my",     "myself",  "no",     "nor",     "not",     "now",    "of",     "off",
      "on",      "once",    "one",    "only",    "or",     "other",   "our",     "ours",   "ourselves", "out",
      "over",    "own",     "really", "said",    "same",   "say",     "says",    "she",    "should", "so",
      "some",    "still",   "such",   "than",    "that",   "the",     "their",   "theirs", "them",   "themselves",
      "then",    "there",   "these",  "they",    "this",   "those",   "through", "to",     "too",    "under",
      "until",   "up",      "us",     "very",    "was",    "we",      "well",    "were",   "what",   "when",
      "where",   "which",   "while",  "who",     "whom",   "why",     "will",    "with",   "would",  "yes",
      "yet",     "you",     "your",   "yours",   "yourself", "yourselves", "don", "doesn", "didn", "isn",
      "wasn",    "aren",    "won",    "ll",      "ve",     "re",      "s",       "t",      "d",      "m",
  };
  return words;
}

bool is_term_byte(unsigned char c) {
  return c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

}  // namespace

bool is_stopword(std::string_view lower_token) { return stopwords().count(lower_token) > 0; }

std::vector<std::string> topic_terms(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_term_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && is_term_byte(static_cast<unsigned char>(text[j]))) ++j;
    if (j - i >= 2) {
      std::string tok = ascii_lower(text.substr(i, j - i));
      if (!is_stopword(tok)) out.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Centroids

namespace {

void normalize(TermVec& v) {
  double n = 0.0;
  for (const auto& [_, x] : v) n += x * x;
  if (n <= 0.0) return;
  n = std::sqrt(n);
  for (auto& [_, x] : v) x /= n;
}

double dot(const TermVec& a, const TermVec& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (b[j].first < a[i].first) {
      ++j;
    } else {
      s += a[i].second * b[j].second;
      ++i;
      ++j;
    }
  }
  return s;
}

}  // namespace

TermVec CentroidModel::vectorize(std::string_view text) const {
  std::map<std::size_t, double> tf;
  for (const auto& t : topic_terms(text)) {
    auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), t);
    if (it != vocabulary.end() && *it == t) tf[static_cast<std::size_t>(it - vocabulary.begin())] += 1.0;
  }
  TermVec v;
  for (const auto& [id, c] : tf) v.emplace_back(id, c * idf[id]);
  normalize(v);
  return v;
}

double cosine(const TermVec& a, const TermVec& b) {
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

CentroidModel fit_centroids(const std::map<std::string, std::vector<std::string>>& seed_texts, double tau) {
  if (seed_texts.empty()) throw std::invalid_argument("no topics to fit");
  CentroidModel m;
  m.tau = tau;
  std::set<std::string> vocab;
  std::map<std::string, std::size_t> df;
  std::size_t n_docs = 0;
  for (const auto& [topic, texts] : seed_texts) {
    if (texts.empty()) throw std::invalid_argument("topic '" + topic + "' has no seed documents");
    for (const auto& text : texts) {
      const auto terms = topic_terms(text);
      const std::set<std::string> uniq(terms.begin(), terms.end());
      for (const auto& t : uniq) ++df[t];
      vocab.insert(uniq.begin(), uniq.end());
      ++n_docs;
    }
  }
  m.vocabulary.assign(vocab.begin(), vocab.end());
  m.idf.resize(m.vocabulary.size());
  for (std::size_t i = 0; i < m.vocabulary.size(); ++i) {
    m.idf[i] = std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df[m.vocabulary[i]]))) + 1.0;
  }
  for (const auto& [topic, texts] : seed_texts) {
    std::map<std::size_t, double> sum;
    for (const auto& text : texts)
      for (const auto& [id, w] : m.vectorize(text)) sum[id] += w;
    TermVec c;
    for (const auto& [id, w] : sum) c.emplace_back(id, w / static_cast<double>(texts.size()));
    m.centroids[topic] = std::move(c);
  }
  return m;
}

TopicAssignment assign_topic(const CentroidModel& m, const std::string& doc_id, std::string_view text) {
  TopicAssignment a{doc_id, std::string(kUnassigned), std::nullopt};
  const TermVec v = m.vectorize(text);
  if (v.empty()) return a;
  double best = -1.0;
  std::string best_topic;
  for (const auto& [topic, c] : m.centroids) {  // map order: ties keep the smallest name
    const double s = cosine(v, c);
    if (s > best) {
      best = s;
      best_topic = topic;
    }
  }
  a.score = best;
  if (best >= m.tau) a.topic = best_topic;
  return a;
}

TopicMap assign_topics(const CentroidModel& m, const std::vector<Document>& docs) {
  std::vector<TopicAssignment> out(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) { out[i] = assign_topic(m, docs[i].doc_id, docs[i].text); });
  TopicMap r;
  for (auto& a : out) r[a.doc_id] = std::move(a);
  return r;
}

void save_centroids(const std::filesystem::path& path, const CentroidModel& m) {
  json centroids = json::object();
  for (const auto& [topic, c] : m.centroids) {
    json rows = json::array();
    for (const auto& [id, w] : c) rows.push_back(json::array({id, w}));
    centroids[topic] = rows;
  }
  write_json(path, json{{"format", "framing-centroids"},
                        {"version", 1},
                        {"tau", m.tau},
                        {"vocabulary", m.vocabulary},
                        {"idf", m.idf},
                        {"centroids", centroids}});
}

CentroidModel load_centroids(const std::filesystem::path& path) {
  const json doc = read_json(path);
  try {
    if (doc.at("format") != "framing-centroids" || doc.at("version") != 1)
      throw InputError(path.string() + ": not a version-1 centroid model");
    CentroidModel m;
    m.tau = doc.at("tau").get<double>();
    m.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
    m.idf = doc.at("idf").get<std::vector<double>>();
    if (m.idf.size() != m.vocabulary.size() || !std::is_sorted(m.vocabulary.begin(), m.vocabulary.end()))
      throw InputError(path.string() + ": vocabulary and idf disagree");
    for (const auto& [topic, rows] : doc.at("centroids").items()) {
      TermVec c;
      for (const auto& row : rows) {
        const auto id = row.at(0).get<std::size_t>();
        if (id >= m.vocabulary.size()) throw InputError(path.string() + ": term id out of range");
        c.emplace_back(id, row.at(1).get<double>());
      }
      m.centroids[topic] = std::move(c);
    }
    return m;
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": malformed centroid model: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Alignment

json to_json(const AlignedPair& p) {
  return json{{"article_id", p.article_id},
              {"comment_id", p.comment_id},
              {"topic", p.topic},
              {"article_frame", std::string(name(p.article_frame))},
              {"comment_frame", std::string(name(p.comment_frame))},
              {"outlet", p.outlet}};
}

AlignedPair parse_aligned_pair(const json& rec) {
  AlignedPair p;
  p.article_id = require_string(rec, "article_id");
  p.comment_id = require_string(rec, "comment_id");
  p.topic = require_string(rec, "topic");
  auto frame = [&](const char* field) {
    const auto f = parse_frame(require_string(rec, field));
    if (!f) throw RecordFieldError(field, "unknown frame label");
    return *f;
  };
  p.article_frame = frame("article_frame");
  p.comment_frame = frame("comment_frame");
  p.outlet = require_string(rec, "outlet");
  return p;
}

void write_pairs(const std::filesystem::path& path, const std::vector<AlignedPair>& pairs) {
  std::vector<json> recs;
  recs.reserve(pairs.size());
  for (const auto& p : pairs) recs.push_back(to_json(p));
  write_jsonl(path, recs);
}

std::vector<AlignedPair> read_pairs(const std::filesystem::path& path) {
  std::vector<AlignedPair> out;
  const auto errors = read_jsonl(path, [&](const json& rec, std::size_t) { out.push_back(parse_aligned_pair(rec)); });
  if (!errors.empty())
    throw InputError(path.string() + ":" + std::to_string(errors.front().line) + ": " + errors.front().message);
  return out;
}

AlignReport align(const Links& links, const TopicMap& topics, const std::map<std::string, DominantFrameResult>& dominants,
                  const std::map<std::string, std::string>& outlets) {
  AlignReport r;
  for (auto reason : {kTopicUnassigned, kTopicMismatch, kArticleNoDominant, kCommentNoDominant})
    r.excluded[std::string(reason)] = 0;

  auto topic_of = [&](const std::string& id) -> std::string {
    auto it = topics.find(id);
    return it == topics.end() ? std::string(kUnassigned) : it->second.topic;
  };
  auto dominant_of = [&](const std::string& id) -> std::optional<Frame> {
    auto it = dominants.find(id);
    return it == dominants.end() ? std::nullopt : it->second.dominant;
  };

  for (const auto& [article, comments] : links.by_article) {
    const std::string at = topic_of(article);
    const auto af = dominant_of(article);
    auto out_it = outlets.find(article);
    const std::string outlet = out_it == outlets.end() ? "" : out_it->second;
    std::vector<std::string> sorted = comments;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& comment : sorted) {
      const std::string ct = topic_of(comment);
      const auto cf = dominant_of(comment);
      std::string_view reason;
      if (at == kUnassigned || ct == kUnassigned)
        reason = kTopicUnassigned;
      else if (at != ct)
        reason = kTopicMismatch;
      else if (!af)
        reason = kArticleNoDominant;
      else if (!cf)
        reason = kCommentNoDominant;
      if (!reason.empty()) {
        ++r.excluded[std::string(reason)];
        continue;
      }
      r.pairs.push_back(AlignedPair{article, comment, at, *af, *cf, outlet});
    }
  }
  return r;
}

}  // namespace framing
