#include "framing/agreement.hpp"

#include <algorithm>
#include <set>

namespace framing {

namespace {

std::optional<Frame> frame_from_json(const json& v) {
  if (v.is_number_integer()) return frame_from_code(v.get<long long>());
  if (v.is_string()) return parse_frame(v.get<std::string>());
  return std::nullopt;
}

std::string id_field(const json& rec, const char* field) {
  auto it = rec.find(field);
  if (it != rec.end() && it->is_number_integer()) return std::to_string(it->get<long long>());
  return require_string(rec, field);
}

std::map<std::string, std::vector<const AnnotationRecord*>> by_unit(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, std::vector<const AnnotationRecord*>> out;
  for (const auto& r : records) out[r.unit_id].push_back(&r);
  return out;
}

bool has(const std::vector<Frame>& v, Frame f) { return std::find(v.begin(), v.end(), f) != v.end(); }

}  // namespace

AnnotationLoadResult load_annotations(const std::filesystem::path& path) {
  AnnotationLoadResult r;
  std::set<std::pair<std::string, std::string>> seen;
  r.errors = read_jsonl(path, [&](const json& rec, std::size_t) {
    AnnotationRecord a;
    a.unit_id = id_field(rec, "unit_id");
    a.annotator_id = id_field(rec, "annotator_id");
    auto it = rec.find("labels");
    if (it == rec.end() || !it->is_array() || it->empty())
      throw RecordFieldError("labels", "labels must be a non-empty array");
    for (const auto& l : *it) {
      const auto f = frame_from_json(l);
      if (!f) throw RecordFieldError("labels", "label outside the 10-label set: " + l.dump());
      a.labels.push_back(*f);
    }
    std::sort(a.labels.begin(), a.labels.end());
    a.labels.erase(std::unique(a.labels.begin(), a.labels.end()), a.labels.end());
    if (!seen.emplace(a.unit_id, a.annotator_id).second)
      throw RecordFieldError("annotator_id", "second record for unit '" + a.unit_id + "' by '" + a.annotator_id + "'");
    r.records.push_back(std::move(a));
  });
  return r;
}

json to_json(const AnnotationRecord& a) {
  json labels = json::array();
  for (Frame f : a.labels) labels.push_back(std::string(name(f)));
  return json{{"unit_id", a.unit_id}, {"annotator_id", a.annotator_id}, {"labels", labels}};
}

AdjudicationLoadResult load_adjudications(const std::filesystem::path& path) {
  AdjudicationLoadResult r;
  r.errors = read_jsonl(path, [&](const json& rec, std::size_t) {
    Adjudication a;
    a.unit_id = id_field(rec, "unit_id");
    a.adjudicator_id = id_field(rec, "adjudicator_id");
    auto it = rec.find("label");
    if (it == rec.end()) throw RecordFieldError("label", "missing field 'label'");
    const auto f = frame_from_json(*it);
    if (!f) throw RecordFieldError("label", "label outside the 10-label set: " + it->dump());
    a.label = *f;
    r.adjudications.push_back(std::move(a));
  });
  return r;
}

std::map<Frame, std::optional<double>> krippendorff_alpha_per_label(const std::vector<AnnotationRecord>& records) {
  const auto units = by_unit(records);
  std::map<Frame, std::optional<double>> out;
  std::size_t pairable = 0;
  for (const auto& [_, rs] : units) pairable += rs.size() >= 2;
  if (pairable == 0) throw AgreementError("no unit has two or more annotations");

  for (Frame f : kAllFrames) {
    // Coincidence counts for the binarized label.
    double o01 = 0.0, n0 = 0.0, n1 = 0.0;
    for (const auto& [_, rs] : units) {
      const std::size_t m = rs.size();
      if (m < 2) continue;
      std::size_t ones = 0;
      for (const auto* r : rs) ones += has(r->labels, f);
      const std::size_t zeros = m - ones;
      o01 += static_cast<double>(ones * zeros) / static_cast<double>(m - 1);
      n0 += static_cast<double>(zeros);
      n1 += static_cast<double>(ones);
    }
    if (n1 == 0.0) {
      out[f] = std::nullopt;
    } else if (n0 == 0.0) {
      out[f] = 1.0;
    } else {
      const double n = n0 + n1;
      out[f] = 1.0 - (n - 1.0) * o01 / (n0 * n1);
    }
  }
  return out;
}

double jaccard_index(const std::vector<AnnotationRecord>& records) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (const auto& [_, rs] : by_unit(records)) {
    for (std::size_t i = 0; i < rs.size(); ++i) {
      for (std::size_t j = i + 1; j < rs.size(); ++j) {
        const auto& a = rs[i]->labels;
        const auto& b = rs[j]->labels;
        std::vector<Frame> inter, uni;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
        std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
        sum += uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
        ++pairs;
      }
    }
  }
  if (pairs == 0) throw AgreementError("no unit has two or more annotations");
  return sum / static_cast<double>(pairs);
}

AgreementReport agreement_report(const std::vector<AnnotationRecord>& records) {
  AgreementReport r;
  r.alpha = krippendorff_alpha_per_label(records);
  double sum = 0.0;
  for (const auto& [_, a] : r.alpha) {
    if (a) {
      sum += *a;
      ++r.defined_labels;
    }
  }
  r.mean_alpha = r.defined_labels ? sum / static_cast<double>(r.defined_labels) : 0.0;
  r.jaccard = jaccard_index(records);
  for (const auto& [_, rs] : by_unit(records)) {
    ++r.units;
    if (rs.size() >= 2) {
      ++r.multi_annotated_units;
      r.annotator_pairs += rs.size() * (rs.size() - 1) / 2;
    }
  }
  return r;
}

json to_json(const AgreementReport& r) {
  json alpha = json::object();
  for (const auto& [f, a] : r.alpha) alpha[std::string(name(f))] = a ? json(*a) : json(nullptr);
  return json{{"alpha", alpha},
              {"mean_alpha", r.mean_alpha},
              {"defined_labels", r.defined_labels},
              {"jaccard", r.jaccard},
              {"jaccard_averaging", "annotator pairs"},
              {"undefined_alpha_policy", "excluded from mean"},
              {"units", r.units},
              {"multi_annotated_units", r.multi_annotated_units},
              {"annotator_pairs", r.annotator_pairs}};
}

GoldResult majority_gold(const std::vector<AnnotationRecord>& records,
                         const std::optional<std::vector<Adjudication>>& adjudications) {
  const auto units = by_unit(records);
  GoldResult g;
  for (const auto& [unit, rs] : units) {
    if (rs.size() < 2) throw AgreementError("unit '" + unit + "' has fewer than two annotations");
    std::array<std::size_t, kFrameCount> counts{};
    for (const auto* r : rs)
      for (Frame f : r->labels) ++counts[index(f)];
    std::vector<Frame> labels;
    for (std::size_t k = 0; k < kFrameCount; ++k)
      if (counts[k] >= 2) labels.push_back(frame_at(k));
    if (labels.empty()) {
      g.contention.push_back(unit);
    } else {
      g.consensus.push_back(unit);
      g.gold[unit] = std::move(labels);
    }
  }
  if (!adjudications) {
    g.unresolved = g.contention;
    return g;
  }

  std::map<std::string, std::vector<Frame>> adj;
  for (const auto& a : *adjudications) {
    if (!units.count(a.unit_id)) throw AgreementError("adjudication for unknown unit '" + a.unit_id + "'");
    adj[a.unit_id].push_back(a.label);
  }
  for (const auto& unit : g.contention) {
    auto it = adj.find(unit);
    if (it == adj.end()) {
      g.unresolved.push_back(unit);
      continue;
    }
    const auto& votes = it->second;
    const bool agree = votes.size() >= 2 && std::all_of(votes.begin(), votes.end(), [&](Frame f) { return f == votes[0]; });
    bool original = false;
    for (const auto* r : units.at(unit)) original = original || has(r->labels, votes[0]);
    if (agree && original) {
      g.resolved.push_back(unit);
      g.gold[unit] = {votes[0]};
    } else {
      g.discarded.push_back(unit);
    }
  }
  return g;
}

json to_json(const GoldResult& g) {
  json gold = json::array();
  for (const auto& [unit, labels] : g.gold) {
    json ls = json::array();
    for (Frame f : labels) ls.push_back(std::string(name(f)));
    gold.push_back({{"unit_id", unit}, {"labels", ls}});
  }
  return json{{"gold", gold},
              {"counts",
               {{"consensus", g.consensus.size()},
                {"contention", g.contention.size()},
                {"resolved", g.resolved.size()},
                {"discarded", g.discarded.size()},
                {"unresolved", g.unresolved.size()},
                {"gold", g.gold.size()}}},
              {"contention", g.contention},
              {"discarded", g.discarded},
              {"unresolved", g.unresolved}};
}

}  // namespace framing
