#include "framing/effects.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "framing/text.hpp"

namespace framing {

GroupBy parse_group_by(std::string_view spec) {
  GroupBy by;
  std::size_t start = 0;
  while (start <= spec.size()) {
    std::size_t comma = spec.find(',', start);
    if (comma == std::string_view::npos) comma = spec.size();
    const auto part = ascii_lower(trim(spec.substr(start, comma - start)));
    if (part == "outlet") {
      by.outlet = true;
    } else if (part == "topic") {
      by.topic = true;
    } else if (part == "frame" || part == "article_frame") {
      by.frame = true;
    } else if (!part.empty()) {
      throw std::invalid_argument("unknown grouping dimension '" + part + "' (expected outlet, topic, frame)");
    }
    start = comma + 1;
  }
  return by;
}

bool SliceKey::contains(const AlignedPair& p) const {
  return (!outlet || *outlet == p.outlet) && (!topic || *topic == p.topic) &&
         (!article_frame || *article_frame == p.article_frame);
}

SliceKey slice_of(const AlignedPair& p, const GroupBy& by) {
  SliceKey k;
  if (by.outlet) k.outlet = p.outlet;
  if (by.topic) k.topic = p.topic;
  if (by.frame) k.article_frame = p.article_frame;
  return k;
}

std::vector<RetentionRecord> retention(const std::vector<AlignedPair>& pairs, const GroupBy& by) {
  std::map<SliceKey, RetentionRecord> groups;
  for (const auto& p : pairs) {
    auto& r = groups[slice_of(p, by)];
    ++r.pairs;
    r.retained += p.article_frame == p.comment_frame;
  }
  std::vector<RetentionRecord> out;
  out.reserve(groups.size());
  for (auto& [key, r] : groups) {
    r.key = key;
    r.rate = static_cast<double>(r.retained) / static_cast<double>(r.pairs);
    out.push_back(std::move(r));
  }
  return out;
}

// Series for P(a, x), valid for x < a + 1.
static double gamma_p_series(double a, double x) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a, x), valid for x >= a + 1.
static double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || std::isnan(x)) throw std::invalid_argument("gamma_q needs a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chi2_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return std::clamp(gamma_q(0.5 * df, 0.5 * x), 0.0, 1.0);
}

IndependenceTest chi2_from_table(const std::array<std::array<std::size_t, 2>, 2>& t, Frame frame) {
  IndependenceTest r;
  r.frame = frame;
  r.contingency = t;
  const std::size_t a = t[0][0], b = t[0][1], c = t[1][0], d = t[1][1];
  r.n = a + b + c + d;
  const std::size_t r1 = a + b, r2 = c + d, c1 = a + c, c2 = b + d;
  if (r.n == 0) {
    r.reason = "no pairs";
    return r;
  }
  if (r1 == 0 || r2 == 0) {
    r.reason = r1 == 0 ? "no article carries the frame" : "every article carries the frame";
    return r;
  }
  if (c1 == 0 || c2 == 0) {
    r.reason = c1 == 0 ? "no comment carries the frame" : "every comment carries the frame";
    return r;
  }
  r.defined = true;
  // Integer cross-product difference keeps the independent case exactly 0.
  const long double diff = static_cast<long double>(a) * d - static_cast<long double>(b) * c;
  if (diff == 0.0L) {
    r.chi2 = 0.0;
  } else {
    const long double denom = static_cast<long double>(r1) * r2 * c1 * c2;
    r.chi2 = static_cast<double>(static_cast<long double>(r.n) * diff * diff / denom);
  }
  r.p_value = chi2_sf(r.chi2, 1.0);
  r.cramers_v = std::min(1.0, std::sqrt(r.chi2 / static_cast<double>(r.n)));
  return r;
}

IndependenceTest chi2_independence(const std::vector<AlignedPair>& pairs, Frame frame, const SliceKey& slice) {
  std::array<std::array<std::size_t, 2>, 2> t{};
  std::size_t n = 0;
  for (const auto& p : pairs) {
    if (!slice.contains(p)) continue;
    ++t[p.article_frame == frame ? 0 : 1][p.comment_frame == frame ? 0 : 1];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("chi2_independence needs at least one pair");
  auto r = chi2_from_table(t, frame);
  r.key = slice;
  return r;
}

std::size_t TransitionMatrix::diagonal() const {
  std::size_t s = 0;
  for (std::size_t i = 0; i < kFrameCount; ++i) s += counts[i][i];
  return s;
}

TransitionMatrix transitions(const std::vector<AlignedPair>& pairs, const SliceKey& slice) {
  TransitionMatrix m;
  m.key = slice;
  for (const auto& p : pairs) {
    if (!slice.contains(p)) continue;
    const auto i = index(p.article_frame), j = index(p.comment_frame);
    ++m.counts[i][j];
    ++m.row[i];
    ++m.col[j];
    ++m.total;
  }
  return m;
}

std::vector<Reframing> top_reframings(const TransitionMatrix& m, std::size_t k) {
  std::vector<Reframing> cells;
  for (std::size_t i = 0; i < kFrameCount; ++i)
    for (std::size_t j = 0; j < kFrameCount; ++j)
      if (i != j && m.counts[i][j] > 0) cells.push_back({frame_at(i), frame_at(j), m.counts[i][j]});
  std::sort(cells.begin(), cells.end(), [](const Reframing& x, const Reframing& y) {
    if (x.count != y.count) return x.count > y.count;
    if (x.from != y.from) return code(x.from) < code(y.from);
    return code(x.to) < code(y.to);
  });
  if (cells.size() > k) cells.resize(k);
  return cells;
}

FlowData flow_export(const TransitionMatrix& m, bool standardize_rows) {
  FlowData f;
  f.standardized = standardize_rows;
  if (m.total == 0) return f;
  const double total = static_cast<double>(m.total);
  std::size_t nonempty = 0;
  for (auto r : m.row) nonempty += r > 0;
  const double row_mass = total / static_cast<double>(nonempty);

  std::array<double, kFrameCount> comment_mass{};
  for (std::size_t i = 0; i < kFrameCount; ++i) {
    for (std::size_t j = 0; j < kFrameCount; ++j) {
      const auto c = m.counts[i][j];
      if (c == 0) continue;
      const double w = standardize_rows ? static_cast<double>(c) / static_cast<double>(m.row[i]) * row_mass
                                        : static_cast<double>(c);
      f.links.push_back({frame_at(i), frame_at(j), w});
      comment_mass[j] += w;
    }
  }
  for (std::size_t i = 0; i < kFrameCount; ++i) {
    if (m.row[i] == 0) continue;
    const double raw = 100.0 * static_cast<double>(m.row[i]) / total;
    f.nodes.push_back({"article", frame_at(i), standardize_rows ? 100.0 / static_cast<double>(nonempty) : raw, raw});
  }
  for (std::size_t j = 0; j < kFrameCount; ++j) {
    if (m.col[j] == 0) continue;
    const double raw = 100.0 * static_cast<double>(m.col[j]) / total;
    f.nodes.push_back({"comment", frame_at(j), 100.0 * comment_mass[j] / total, raw});
  }
  return f;
}

json to_json(const SliceKey& k) {
  json j = json::object();
  j["outlet"] = k.outlet ? json(*k.outlet) : json(nullptr);
  j["topic"] = k.topic ? json(*k.topic) : json(nullptr);
  j["article_frame"] = k.article_frame ? json(std::string(name(*k.article_frame))) : json(nullptr);
  return j;
}

json to_json(const RetentionRecord& r) {
  return json{{"key", to_json(r.key)}, {"pairs", r.pairs}, {"retained", r.retained}, {"rate", r.rate}};
}

json to_json(const IndependenceTest& t) {
  json j{{"key", to_json(t.key)},
         {"frame", std::string(name(t.frame))},
         {"contingency", {{t.contingency[0][0], t.contingency[0][1]}, {t.contingency[1][0], t.contingency[1][1]}}},
         {"n", t.n},
         {"defined", t.defined}};
  if (t.defined) {
    j["chi2"] = t.chi2;
    j["p_value"] = t.p_value;
    j["cramers_v"] = t.cramers_v;
  } else {
    j["reason"] = t.reason;
  }
  return j;
}

json to_json(const TransitionMatrix& m) {
  json counts = json::array();
  for (std::size_t i = 0; i < kFrameCount; ++i)
    for (std::size_t j = 0; j < kFrameCount; ++j)
      if (m.counts[i][j])
        counts.push_back({{"from", std::string(name(frame_at(i)))},
                          {"to", std::string(name(frame_at(j)))},
                          {"count", m.counts[i][j]}});
  json row = json::object(), col = json::object();
  for (std::size_t i = 0; i < kFrameCount; ++i) {
    row[std::string(name(frame_at(i)))] = m.row[i];
    col[std::string(name(frame_at(i)))] = m.col[i];
  }
  return json{{"key", to_json(m.key)}, {"counts", counts}, {"row", row}, {"col", col}, {"total", m.total}};
}

json to_json(const FlowData& f) {
  json nodes = json::array(), links = json::array();
  for (const auto& n : f.nodes)
    nodes.push_back({{"side", n.side}, {"frame", std::string(name(n.frame))}, {"pct", n.pct}, {"raw_pct", n.raw_pct}});
  for (const auto& l : f.links)
    links.push_back({{"from", std::string(name(l.from))}, {"to", std::string(name(l.to))}, {"weight", l.weight}});
  return json{{"nodes", nodes}, {"links", links}, {"standardized", f.standardized}};
}

double ks_uniform_distance(std::vector<double> sample) {
  if (sample.empty()) throw std::invalid_argument("ks_uniform_distance needs a sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double x = std::clamp(sample[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - x, x - static_cast<double>(i) / n});
  }
  return d;
}

namespace {

std::string cell(const std::optional<std::string>& s) { return s ? *s : "*"; }
std::string cell(const std::optional<Frame>& f) { return f ? std::string(name(*f)) : "*"; }

}  // namespace

void write_retention_tsv(const std::filesystem::path& path, const std::vector<RetentionRecord>& records) {
  std::ostringstream os;
  os << "outlet\ttopic\tarticle_frame\tpairs\tretained\trate\n";
  for (const auto& r : records)
    os << cell(r.key.outlet) << '\t' << cell(r.key.topic) << '\t' << cell(r.key.article_frame) << '\t' << r.pairs
       << '\t' << r.retained << '\t' << format_fixed(r.rate, 6) << '\n';
  write_text(path, os.str());
}

void write_independence_tsv(const std::filesystem::path& path, const std::vector<IndependenceTest>& tests) {
  std::ostringstream os;
  os << "outlet\ttopic\tframe\ta\tb\tc\td\tn\tchi2\tp_value\tcramers_v\tnote\n";
  for (const auto& t : tests) {
    os << cell(t.key.outlet) << '\t' << cell(t.key.topic) << '\t' << name(t.frame) << '\t' << t.contingency[0][0] << '\t' << t.contingency[0][1] << '\t' << t.contingency[1][0]
       << '\t' << t.contingency[1][1] << '\t' << t.n << '\t';
    if (t.defined) {
      std::ostringstream p;
      p.precision(6);
      p << std::scientific << t.p_value;
      os << format_fixed(t.chi2, 6) << '\t' << p.str() << '\t' << format_fixed(t.cramers_v, 6) << "\t\n";
    } else {
      os << "NA\tNA\tNA\t" << t.reason << '\n';
    }
  }
  write_text(path, os.str());
}

}  // namespace framing
