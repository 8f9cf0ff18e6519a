#include "framing/dominant.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <stdexcept>

namespace framing {

DominantFrameResult dominant_frame(const std::vector<SentenceLabel>& labels, const DominantConfig& cfg) {
  if (labels.empty()) throw std::invalid_argument("dominant frame of an empty label set is undefined");
  DominantFrameResult r;
  r.doc_id = labels.front().doc_id;
  std::array<std::size_t, kFrameCount> counts{};
  std::set<std::size_t> sentences;
  for (const auto& l : labels) {
    if (l.doc_id != r.doc_id) throw std::invalid_argument("labels from several documents: " + r.doc_id + ", " + l.doc_id);
    if (!sentences.insert(l.sentence_index).second)
      throw std::invalid_argument("sentence " + std::to_string(l.sentence_index) + " of " + r.doc_id +
                                  " has more than one label");
    ++counts[index(l.frame)];
  }
  const std::size_t n = labels.size();
  const auto top = std::max_element(counts.begin(), counts.end());
  const std::size_t c = *top;
  const bool unique = std::count(counts.begin(), counts.end(), c) == 1;
  r.labeled = n;
  r.support = c;
  r.coverage = static_cast<double>(c) / static_cast<double>(n);
  const bool passes = c >= cfg.min_support && static_cast<double>(c) >= cfg.min_coverage * static_cast<double>(n) - 1e-9;
  if (n == 1 || (unique && passes)) r.dominant = frame_at(static_cast<std::size_t>(top - counts.begin()));
  return r;
}

DominantBatch dominant_batch(const std::vector<std::string>& doc_ids, const std::vector<SentenceLabel>& labels,
                             const DominantConfig& cfg) {
  DominantBatch b;
  std::map<std::string, std::vector<SentenceLabel>> by_doc;
  for (const auto& id : doc_ids) by_doc[id];
  std::set<std::string> unlisted;
  for (const auto& l : labels) {
    auto it = by_doc.find(l.doc_id);
    if (it == by_doc.end())
      unlisted.insert(l.doc_id);
    else
      it->second.push_back(l);
  }
  for (const auto& id : unlisted) b.warnings.push_back("labels for unknown document '" + id + "' ignored");
  for (const auto& [id, ls] : by_doc) {
    if (ls.empty()) {
      b.warnings.push_back("document '" + id + "' has no labels");
      DominantFrameResult r;
      r.doc_id = id;
      b.results[id] = r;
    } else {
      b.results[id] = dominant_frame(ls, cfg);
    }
  }
  return b;
}

json to_json(const DominantFrameResult& r) {
  return json{{"doc_id", r.doc_id},
              {"dominant", r.dominant ? json(std::string(name(*r.dominant))) : json(nullptr)},
              {"support", r.support},
              {"coverage", r.coverage},
              {"labeled", r.labeled}};
}

DominantFrameResult parse_dominant(const json& rec) {
  DominantFrameResult r;
  r.doc_id = require_string(rec, "doc_id");
  auto it = rec.find("dominant");
  if (it == rec.end()) throw RecordFieldError("dominant", "missing field 'dominant'");
  if (!it->is_null()) {
    std::optional<Frame> f;
    if (it->is_string()) f = parse_frame(it->get<std::string>());
    if (it->is_number_integer()) f = frame_from_code(it->get<long long>());
    if (!f) throw RecordFieldError("dominant", "unknown frame " + it->dump());
    r.dominant = f;
  }
  const long long support = require_int(rec, "support");
  if (support < 0) throw RecordFieldError("support", "support must be >= 0");
  r.support = static_cast<std::size_t>(support);
  auto cov = rec.find("coverage");
  if (cov == rec.end() || !cov->is_number()) throw RecordFieldError("coverage", "coverage must be a number");
  r.coverage = cov->get<double>();
  if (auto lab = rec.find("labeled"); lab != rec.end() && lab->is_number_unsigned()) r.labeled = lab->get<std::size_t>();
  return r;
}

void write_dominant(const std::filesystem::path& path, const std::map<std::string, DominantFrameResult>& results) {
  std::vector<json> recs;
  for (const auto& [_, r] : results) recs.push_back(to_json(r));
  write_jsonl(path, recs);
}

DominantLoadResult read_dominant(const std::filesystem::path& path) {
  DominantLoadResult out;
  out.errors = read_jsonl(path, [&](const json& rec, std::size_t) {
    auto r = parse_dominant(rec);
    if (out.results.count(r.doc_id)) throw RecordFieldError("doc_id", "duplicate doc_id '" + r.doc_id + "'");
    out.results[r.doc_id] = std::move(r);
  });
  return out;
}

}  // namespace framing
