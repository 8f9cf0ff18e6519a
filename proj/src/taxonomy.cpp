#include "framing/taxonomy.hpp"

#include <algorithm>
#include <set>

#include "framing/text.hpp"

namespace framing {

namespace {

MergeTarget to(Frame f) { return MergeTarget{false, f}; }
constexpr MergeTarget kDropped{true, Frame::Other};

std::string label_key(std::string_view s) {
  std::string out;
  for (auto tok : whitespace_tokens(s)) {
    if (!out.empty()) out.push_back(' ');
    out += ascii_lower(tok);
  }
  return out;
}

std::string string_or_number(const json& rec, const char* field) {
  auto it = rec.find(field);
  if (it != rec.end() && it->is_number_integer()) return std::to_string(it->get<long long>());
  return require_string(rec, field);
}

using Interval = std::pair<std::size_t, std::size_t>;

std::vector<Interval> union_intervals(std::vector<Interval> v) {
  std::sort(v.begin(), v.end());
  std::vector<Interval> out;
  for (const auto& iv : v) {
    if (!out.empty() && iv.first <= out.back().second)
      out.back().second = std::max(out.back().second, iv.second);
    else
      out.push_back(iv);
  }
  return out;
}

std::optional<Interval> byte_range(std::string_view text, const SpanAnnotation& s) {
  if (s.start >= s.end) return std::nullopt;
  const auto b = utf8_byte_offset(text, s.start);
  const auto e = utf8_byte_offset(text, s.end);
  if (!b || !e) return std::nullopt;
  return Interval{*b, *e};
}

std::vector<Interval> regions_from_bytes(std::string_view text, const std::map<std::string, std::vector<Interval>>& by_annotator,
                                         std::size_t min_words, std::size_t min_annotators) {
  std::map<std::size_t, long> delta;
  for (const auto& [_, ivs] : by_annotator) {
    for (const auto& iv : union_intervals(ivs)) {
      ++delta[iv.first];
      --delta[iv.second];
    }
  }
  std::vector<Interval> out;
  long depth = 0;
  std::optional<std::size_t> open;
  for (const auto& [pos, d] : delta) {
    depth += d;
    const bool covered = depth >= static_cast<long>(min_annotators);
    if (covered && !open) {
      open = pos;
    } else if (!covered && open) {
      out.emplace_back(*open, pos);
      open.reset();
    }
  }
  std::erase_if(out, [&](const Interval& iv) {
    return word_count(text.substr(iv.first, iv.second - iv.first)) < min_words;
  });
  return out;
}

}  // namespace

const std::vector<std::pair<std::string, MergeTarget>>& legacy_merge_table() {
  static const std::vector<std::pair<std::string, MergeTarget>> table = {
      {"Economic", to(Frame::Economic)},
      {"Capacity and resources", kDropped},
      {"Morality", to(Frame::Morality)},
      {"Fairness and equality", to(Frame::FairnessAndEquality)},
      {"Legality, constitutionality and jurisprudence", to(Frame::LegalityAndCrime)},
      {"Policy prescription and evaluation", to(Frame::PoliticalAndPolicies)},
      {"Crime and punishment", to(Frame::LegalityAndCrime)},
      {"Security and defense", to(Frame::SecurityAndDefense)},
      {"Health and safety", to(Frame::HealthAndSafety)},
      {"Quality of life", to(Frame::Other)},
      {"Cultural identity", to(Frame::CulturalIdentity)},
      {"Public opinion", to(Frame::PublicOpinion)},
      {"Political", to(Frame::PoliticalAndPolicies)},
      {"External regulation and reputation", kDropped},
      {"Other", to(Frame::Other)},
  };
  return table;
}

std::optional<MergeTarget> merge_target(std::string_view label) {
  const std::string key = label_key(label);
  for (const auto& [legacy, target] : legacy_merge_table()) {
    if (label_key(legacy) == key) return target;
  }
  if (auto f = frame_from_name(label)) return to(*f);
  return std::nullopt;
}

SpanAnnotation parse_span(const json& rec) {
  SpanAnnotation s;
  s.doc_id = require_string(rec, "doc_id");
  s.annotator_id = string_or_number(rec, "annotator_id");
  const long long start = require_int(rec, "start");
  const long long end = require_int(rec, "end");
  if (start < 0) throw RecordFieldError("start", "start must be >= 0");
  if (end <= start) throw RecordFieldError("end", "end must be greater than start");
  s.start = static_cast<std::size_t>(start);
  s.end = static_cast<std::size_t>(end);
  s.label = require_string(rec, "label");
  s.topic = require_string(rec, "topic");
  return s;
}

json to_json(const SpanAnnotation& s) {
  return json{{"doc_id", s.doc_id}, {"annotator_id", s.annotator_id}, {"start", s.start},
              {"end", s.end},       {"label", s.label},               {"topic", s.topic}};
}

SpanLoadResult load_spans(const std::filesystem::path& path) {
  SpanLoadResult r;
  r.errors = read_jsonl(path, [&](const json& rec, std::size_t line) {
    SpanAnnotation s = parse_span(rec);
    s.line = line;
    r.spans.push_back(std::move(s));
  });
  return r;
}

MergeResult apply_merge_map(const std::vector<SpanAnnotation>& annotations) {
  MergeResult r;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    const auto target = merge_target(a.label);
    if (!target) {
      r.errors.push_back({a.line ? a.line : i + 1, "label", "unknown frame label '" + a.label + "'"});
      continue;
    }
    if (target->dropped) {
      ++r.dropped;
      continue;
    }
    SpanAnnotation out = a;
    out.label = std::string(name(target->frame));
    r.annotations.push_back(std::move(out));
  }
  return r;
}

std::vector<std::pair<std::size_t, std::size_t>> agreed_regions(const Document& doc,
                                                                const std::vector<SpanAnnotation>& annotations,
                                                                Frame label, std::size_t min_words,
                                                                std::size_t min_annotators) {
  std::map<std::string, std::vector<Interval>> by_annotator;
  for (const auto& a : annotations) {
    if (a.doc_id != doc.doc_id || frame_from_name(a.label) != label) continue;
    if (auto iv = byte_range(doc.text, a)) by_annotator[a.annotator_id].push_back(*iv);
  }
  return regions_from_bytes(doc.text, by_annotator, min_words, min_annotators);
}

ProjectionResult project_spans_to_sentences(const Document& doc, const std::vector<SpanAnnotation>& annotations,
                                            std::size_t min_words, std::size_t min_annotators) {
  ProjectionResult r;
  std::array<std::map<std::string, std::vector<Interval>>, kFrameCount> by_label;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    const std::size_t line = a.line ? a.line : i + 1;
    if (a.doc_id != doc.doc_id) {
      r.errors.push_back({line, "doc_id", "annotation belongs to '" + a.doc_id + "', not '" + doc.doc_id + "'"});
      continue;
    }
    const auto f = frame_from_name(a.label);
    if (!f) {
      r.errors.push_back({line, "label", "not a merged frame label: '" + a.label + "'"});
      continue;
    }
    const auto iv = byte_range(doc.text, a);
    if (!iv) {
      r.errors.push_back({line, "end", "span [" + std::to_string(a.start) + ", " + std::to_string(a.end) +
                                           ") outside document of length " + std::to_string(utf8_length(doc.text))});
      continue;
    }
    by_label[index(*f)][a.annotator_id].push_back(*iv);
  }

  std::array<std::vector<Interval>, kFrameCount> regions;
  for (std::size_t k = 0; k < kFrameCount; ++k) {
    if (!by_label[k].empty()) regions[k] = regions_from_bytes(doc.text, by_label[k], min_words, min_annotators);
  }
  for (const auto& s : doc.sentences) {
    for (std::size_t k = 0; k < kFrameCount; ++k) {
      const bool covered = std::any_of(regions[k].begin(), regions[k].end(), [&](const Interval& iv) {
        return iv.first <= s.begin && s.end <= iv.second;
      });
      if (covered) r.labels.push_back(SentenceLabel{doc.doc_id, s.index, frame_at(k), std::nullopt, LabelSource::gold});
    }
  }
  return r;
}

json to_json(const TrainingSentence& t) {
  json labels = json::array();
  for (Frame f : t.labels) labels.push_back(std::string(name(f)));
  return json{{"doc_id", t.doc_id}, {"sentence_index", t.sentence_index}, {"text", t.text},
              {"labels", labels},   {"topic", t.topic}};
}

TrainingSentence parse_training_sentence(const json& rec) {
  TrainingSentence t;
  t.doc_id = require_string(rec, "doc_id");
  const long long idx = require_int(rec, "sentence_index");
  if (idx < 0) throw RecordFieldError("sentence_index", "sentence_index must be >= 0");
  t.sentence_index = static_cast<std::size_t>(idx);
  t.text = require_string(rec, "text");
  auto it = rec.find("labels");
  if (it == rec.end() || !it->is_array()) throw RecordFieldError("labels", "labels must be an array");
  for (const auto& l : *it) {
    std::optional<Frame> f;
    if (l.is_number_integer()) f = frame_from_code(l.get<long long>());
    if (l.is_string()) f = parse_frame(l.get<std::string>());
    if (!f) throw RecordFieldError("labels", "unknown frame label " + l.dump());
    t.labels.push_back(*f);
  }
  std::sort(t.labels.begin(), t.labels.end());
  t.labels.erase(std::unique(t.labels.begin(), t.labels.end()), t.labels.end());
  t.topic = optional_string(rec, "topic").value_or("");
  return t;
}

TrainingSetResult build_training_set(const Store& store, const std::vector<SpanAnnotation>& spans) {
  TrainingSetResult r;
  MergeResult merged = apply_merge_map(spans);
  r.dropped_by_merge = merged.dropped;
  r.errors = std::move(merged.errors);

  std::map<std::string, std::vector<SpanAnnotation>> by_doc;
  for (auto& s : merged.annotations) by_doc[s.doc_id].push_back(std::move(s));

  for (const auto& [doc_id, doc_spans] : by_doc) {
    const Document* doc = store.find(doc_id);
    if (!doc) {
      ++r.unknown_docs;
      for (const auto& s : doc_spans) r.errors.push_back({s.line, "doc_id", "unknown document '" + doc_id + "'"});
      continue;
    }
    std::map<std::string, std::size_t> topic_votes;
    for (const auto& s : doc_spans) ++topic_votes[s.topic];
    std::string topic;
    std::size_t best = 0;
    for (const auto& [t, c] : topic_votes) {
      if (c > best) {
        best = c;
        topic = t;
      }
    }

    auto proj = project_spans_to_sentences(*doc, doc_spans);
    r.errors.insert(r.errors.end(), proj.errors.begin(), proj.errors.end());
    std::map<std::size_t, std::vector<Frame>> per_sentence;
    for (const auto& l : proj.labels) per_sentence[l.sentence_index].push_back(l.frame);
    for (auto& [idx, frames] : per_sentence) {
      r.sentences.push_back(TrainingSentence{doc_id, idx, doc->sentences[idx].text, std::move(frames), topic});
    }
  }
  std::sort(r.errors.begin(), r.errors.end(), [](const RecordError& a, const RecordError& b) { return a.line < b.line; });
  return r;
}

std::size_t ConfusionMatrix::at(const std::string& a, const std::string& b) const {
  auto it = cells.find(a);
  if (it == cells.end()) return 0;
  auto jt = it->second.find(b);
  return jt == it->second.end() ? 0 : jt->second;
}

std::size_t ConfusionMatrix::row_total(const std::string& a) const {
  auto it = cells.find(a);
  if (it == cells.end()) return 0;
  std::size_t t = 0;
  for (const auto& [_, c] : it->second) t += c;
  return t;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& [a, _] : cells) t += row_total(a);
  return t;
}

std::vector<std::string> ConfusionMatrix::labels() const {
  std::set<std::string> s;
  for (const auto& [a, row] : cells) {
    s.insert(a);
    for (const auto& [b, _] : row) s.insert(b);
  }
  return {s.begin(), s.end()};
}

void ConfusionMatrix::add(const std::string& a, const std::string& b) {
  ++cells[a][b];
  if (a != b) ++cells[b][a];
}

ConfusionResult confusion_matrix(const std::vector<SpanAnnotation>& annotations,
                                 const std::map<std::string, std::string>& doc_texts, bool by_topic,
                                 std::size_t min_words) {
  ConfusionResult r;
  struct Placed {
    const SpanAnnotation* span;
    Interval bytes;
  };
  std::map<std::string, std::vector<Placed>> by_doc;
  for (const auto& a : annotations) {
    auto it = doc_texts.find(a.doc_id);
    std::optional<Interval> iv;
    if (it != doc_texts.end()) iv = byte_range(it->second, a);
    if (!iv) {
      ++r.skipped;
      continue;
    }
    by_doc[a.doc_id].push_back({&a, *iv});
  }
  for (const auto& [doc_id, spans] : by_doc) {
    const std::string_view text = doc_texts.at(doc_id);
    for (std::size_t i = 0; i < spans.size(); ++i) {
      for (std::size_t j = i + 1; j < spans.size(); ++j) {
        const auto& a = spans[i];
        const auto& b = spans[j];
        if (a.span->annotator_id == b.span->annotator_id) continue;
        const std::size_t lo = std::max(a.bytes.first, b.bytes.first);
        const std::size_t hi = std::min(a.bytes.second, b.bytes.second);
        if (lo >= hi || word_count(text.substr(lo, hi - lo)) < min_words) continue;
        r.pooled.add(a.span->label, b.span->label);
        if (by_topic) r.by_topic[a.span->topic].add(a.span->label, b.span->label);
      }
    }
  }
  return r;
}

std::vector<std::pair<std::string, std::string>> propose_merges(
    const std::map<std::string, ConfusionMatrix>& per_topic, double theta) {
  std::vector<std::pair<std::string, std::string>> out;
  if (per_topic.empty()) return out;
  std::set<std::string> labels;
  for (const auto& [_, m] : per_topic) {
    for (auto& l : m.labels()) labels.insert(l);
  }
  for (auto a = labels.begin(); a != labels.end(); ++a) {
    for (auto b = std::next(a); b != labels.end(); ++b) {
      const bool everywhere = std::all_of(per_topic.begin(), per_topic.end(), [&](const auto& kv) {
        const auto& m = kv.second;
        const std::size_t denom = std::min(m.row_total(*a), m.row_total(*b));
        return denom > 0 && static_cast<double>(m.at(*a, *b)) / static_cast<double>(denom) > theta;
      });
      if (everywhere) out.emplace_back(*a, *b);
    }
  }
  return out;
}

}  // namespace framing
