#include "framing/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "framing/kernels.hpp"
#include "framing/parallel.hpp"
#include "framing/random.hpp"
#include "framing/text.hpp"

namespace framing {

namespace {

using Key = std::pair<std::string, std::size_t>;

std::optional<Frame> frame_from_json(const json& v) {
  if (v.is_number_integer()) return frame_from_code(v.get<long long>());
  if (v.is_string()) return parse_frame(v.get<std::string>());
  return std::nullopt;
}

std::string key_string(const Key& k) { return k.first + "#" + std::to_string(k.second); }

}  // namespace

// ---------------------------------------------------------------------------
// Label files

json to_json(const SentenceLabel& l) {
  json j{{"doc_id", l.doc_id}, {"sentence_index", l.sentence_index}, {"label", std::string(name(l.frame))}};
  if (l.score) j["score"] = *l.score;
  j["source"] = std::string(to_string(l.source));
  return j;
}

SentenceLabel parse_sentence_label(const json& rec, LabelSource default_source) {
  SentenceLabel l;
  l.doc_id = require_string(rec, "doc_id");
  const long long idx = require_int(rec, "sentence_index");
  if (idx < 0) throw RecordFieldError("sentence_index", "sentence_index must be >= 0");
  l.sentence_index = static_cast<std::size_t>(idx);
  auto it = rec.find("label");
  if (it == rec.end()) throw RecordFieldError("label", "missing field 'label'");
  const auto f = frame_from_json(*it);
  if (!f) throw RecordFieldError("label", "label outside the 10-label set: " + it->dump());
  l.frame = *f;
  l.source = default_source;
  if (auto s = optional_string(rec, "source")) {
    const auto src = label_source_from_string(*s);
    if (!src) throw RecordFieldError("source", "unknown source '" + *s + "'");
    l.source = *src;
  }
  auto sc = rec.find("score");
  if (sc != rec.end() && !sc->is_null()) {
    if (!sc->is_number()) throw RecordFieldError("score", "score must be a number");
    const double v = sc->get<double>();
    if (!(v >= 0.0 && v <= 1.0)) throw RecordFieldError("score", "score must lie in [0, 1]");
    l.score = v;
  }
  if (l.source != LabelSource::gold && !l.score) throw RecordFieldError("score", "score is required for predictions");
  if (l.source == LabelSource::gold && l.score) throw RecordFieldError("score", "gold labels carry no score");
  return l;
}

ImportResult read_labels(const std::filesystem::path& path, LabelSource default_source) {
  ImportResult r;
  std::set<std::tuple<std::string, std::size_t, LabelSource>> seen;
  r.errors = read_jsonl(path, [&](const json& rec, std::size_t) {
    SentenceLabel l = parse_sentence_label(rec, default_source);
    if (!seen.emplace(l.doc_id, l.sentence_index, l.source).second)
      throw RecordFieldError("sentence_index", "duplicate label for " + key_string({l.doc_id, l.sentence_index}));
    r.labels.push_back(std::move(l));
  });
  return r;
}

ImportResult import_predictions(const std::filesystem::path& path, const Store* store) {
  ImportResult r;
  std::set<Key> seen;
  r.errors = read_jsonl(path, [&](const json& rec, std::size_t) {
    SentenceLabel l = parse_sentence_label(rec, LabelSource::imported);
    l.source = LabelSource::imported;
    if (store) {
      const Document* d = store->find(l.doc_id);
      if (!d) throw RecordFieldError("doc_id", "unknown document '" + l.doc_id + "'");
      if (l.sentence_index >= d->sentences.size())
        throw RecordFieldError("sentence_index", "document '" + l.doc_id + "' has " +
                                                     std::to_string(d->sentences.size()) + " sentences");
    }
    if (!seen.emplace(l.doc_id, l.sentence_index).second)
      throw RecordFieldError("sentence_index", "duplicate prediction for " + key_string({l.doc_id, l.sentence_index}));
    r.labels.push_back(std::move(l));
  });
  return r;
}

void write_labels(const std::filesystem::path& path, const std::vector<SentenceLabel>& labels) {
  std::vector<json> recs;
  recs.reserve(labels.size());
  for (const auto& l : labels) recs.push_back(to_json(l));
  write_jsonl(path, recs);
}

// ---------------------------------------------------------------------------
// Splits

Split stratified_split(const Dataset& data, double train_ratio, double dev_ratio, double test_ratio,
                       std::uint64_t seed) {
  if (train_ratio < 0 || dev_ratio < 0 || test_ratio < 0 ||
      std::fabs(train_ratio + dev_ratio + test_ratio - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");
  std::map<std::pair<std::string, Frame>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].labels.empty())
      throw std::invalid_argument("item " + key_string({data[i].doc_id, data[i].sentence_index}) + " has no label");
    const Frame first = *std::min_element(data[i].labels.begin(), data[i].labels.end());
    strata[{data[i].topic, first}].push_back(i);
  }

  Split out;
  std::vector<int> part(data.size(), 0);  // 0 train, 1 dev, 2 test
  std::mt19937_64 rng(seed);
  for (auto& [key, idx] : strata) {
    const std::size_t n = idx.size();
    if (n < 3) {
      out.warnings.push_back("stratum (" + key.first + ", " + std::string(name(key.second)) + ") has " +
                             std::to_string(n) + " item(s); assigned to train");
      continue;
    }
    portable_shuffle(idx, rng);
    const std::size_t n_dev = std::min(n, static_cast<std::size_t>(std::llround(n * dev_ratio)));
    const std::size_t n_test = std::min(n - n_dev, static_cast<std::size_t>(std::llround(n * test_ratio)));
    for (std::size_t k = 0; k < n_dev; ++k) part[idx[k]] = 1;
    for (std::size_t k = n_dev; k < n_dev + n_test; ++k) part[idx[k]] = 2;
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    (part[i] == 0 ? out.train : part[i] == 1 ? out.dev : out.test).push_back(data[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Features

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

bool is_word_byte(unsigned char c) {
  return c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

std::vector<std::string> word_tokens(std::string_view text, bool fold) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(fold ? ascii_lower(text.substr(i, j - i)) : std::string(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

}  // namespace

SparseVec featurize(std::string_view text, const FeatureConfig& cfg) {
  if (cfg.hash_bits < 1 || cfg.hash_bits > 30) throw std::invalid_argument("hash_bits must be in [1, 30]");
  const auto toks = word_tokens(text, cfg.case_fold);
  const std::uint64_t mask = cfg.dim() - 1;
  std::map<std::uint32_t, double> counts;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    std::string gram = "1:" + toks[i];
    counts[static_cast<std::uint32_t>(fnv1a(gram) & mask)] += 1.0;
    for (int n = 2; n <= cfg.max_ngram && i + n <= toks.size(); ++n) {
      gram = std::to_string(n) + ":" + toks[i];
      for (int k = 1; k < n; ++k) gram += " " + toks[i + k];
      counts[static_cast<std::uint32_t>(fnv1a(gram) & mask)] += 1.0;
    }
  }
  double norm = 0.0;
  for (const auto& [_, v] : counts) norm += v * v;
  norm = std::sqrt(norm);
  SparseVec out(counts.begin(), counts.end());
  for (auto& [_, v] : out) v /= norm;
  return out;
}

// ---------------------------------------------------------------------------
// Model

namespace {

std::array<double, kFrameCount> scores(const std::vector<double>& w, const std::array<double, kFrameCount>& b,
                                       const SparseVec& x) {
  std::array<double, kFrameCount> s = b;
  for (const auto& [j, v] : x) {
    const double* row = &w[static_cast<std::size_t>(j) * kFrameCount];
    for (std::size_t k = 0; k < kFrameCount; ++k) s[k] += v * row[k];
  }
  return s;
}

// Softmax in place; returns log-sum-exp of the input.
double softmax(std::array<double, kFrameCount>& s) {
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (auto& v : s) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : s) v /= z;
  return mx + std::log(z);
}

std::size_t argmax_lowest(const std::array<double, kFrameCount>& p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kFrameCount; ++k)
    if (p[k] > p[best]) best = k;
  return best;
}

}  // namespace

std::array<double, kFrameCount> BaselineModel::probabilities(const SparseVec& x) const {
  auto s = scores(weights, bias, x);
  softmax(s);
  return s;
}

std::array<double, kFrameCount> BaselineModel::probabilities(std::string_view text) const {
  return probabilities(featurize(text, features));
}

double SoftmaxProblem::evaluate(const std::vector<double>& w, const std::array<double, kFrameCount>& b,
                                std::vector<double>* gw, std::array<double, kFrameCount>* gb) const {
  const double inv_n = 1.0 / static_cast<double>(x.size());
  if (gw) gw->assign(dim * kFrameCount, 0.0);
  if (gb) gb->fill(0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto s = scores(w, b, x[i]);
    const double sy = s[y[i]];
    loss += softmax(s) - sy;
    if (!gw && !gb) continue;
    s[y[i]] -= 1.0;  // now p - e_y
    if (gb)
      for (std::size_t k = 0; k < kFrameCount; ++k) (*gb)[k] += s[k] * inv_n;
    if (gw) {
      for (const auto& [j, v] : x[i]) {
        double* row = &(*gw)[static_cast<std::size_t>(j) * kFrameCount];
        for (std::size_t k = 0; k < kFrameCount; ++k) row[k] += v * s[k] * inv_n;
      }
    }
  }
  loss *= inv_n;
  loss += 0.5 * lambda * kernels::dot(w, w);
  if (gw) kernels::axpby(lambda, w, 1.0, *gw);
  return loss;
}

BaselineModel train_baseline(const Dataset& train, const Dataset& dev, const TrainConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  SoftmaxProblem prob;
  prob.dim = cfg.features.dim();
  prob.lambda = cfg.lambda;
  std::set<std::size_t> classes;
  for (const auto& item : train) {
    const SparseVec fx = featurize(item.text, cfg.features);
    for (Frame f : item.labels) {
      prob.x.push_back(fx);
      prob.y.push_back(index(f));
      classes.insert(index(f));
    }
  }
  if (classes.size() < 2) throw std::invalid_argument("training set has fewer than two classes");

  BaselineModel m;
  m.features = cfg.features;
  m.seed = cfg.seed;
  m.lambda = cfg.lambda;
  m.weights.assign(prob.dim * kFrameCount, 0.0);

  // With L2-normalized inputs the cross-entropy Hessian is bounded by 1/2 per
  // block, so these steps stay below 2/L and every step decreases the objective.
  const double lr_w = 1.3 / (1.0 + cfg.lambda);
  const double lr_b = 1.3;
  const std::size_t eval_every = std::max<std::size_t>(1, cfg.eval_every);

  std::vector<double> gw;
  std::array<double, kFrameCount> gb{};
  std::vector<double> best_w;
  std::array<double, kFrameCount> best_b{};
  double best_f1 = -1.0;
  std::size_t stale = 0;

  auto dev_f1 = [&]() { return evaluate(predict(m, dev), dev).macro_f1; };

  std::size_t it = 0;
  for (;; ++it) {
    const double loss = prob.evaluate(m.weights, m.bias, &gw, &gb);
    if (it % eval_every == 0 || it == cfg.max_iterations) {
      m.loss_history.push_back(loss);
      if (!dev.empty()) {
        const double f1 = dev_f1();
        m.dev_history.push_back(f1);
        if (f1 > best_f1 + 1e-12) {
          best_f1 = f1;
          best_w = m.weights;
          best_b = m.bias;
          stale = 0;
        } else if (++stale >= cfg.patience) {
          break;
        }
      }
    }
    if (it == cfg.max_iterations) break;
    kernels::axpby(-lr_w, gw, 1.0, m.weights);
    for (std::size_t k = 0; k < kFrameCount; ++k) m.bias[k] -= lr_b * gb[k];
  }
  m.iterations = it;
  if (!dev.empty() && !best_w.empty()) {
    m.weights = std::move(best_w);
    m.bias = best_b;
  }
  return m;
}

void save_model(const std::filesystem::path& path, const BaselineModel& m) {
  json rows = json::array();
  for (std::size_t j = 0; j < m.features.dim(); ++j) {
    const double* row = &m.weights[j * kFrameCount];
    if (std::all_of(row, row + kFrameCount, [](double v) { return v == 0.0; })) continue;
    rows.push_back(json::array({j, std::vector<double>(row, row + kFrameCount)}));
  }
  json doc{{"format", "framing-baseline"},
           {"version", 1},
           {"features",
            {{"max_ngram", m.features.max_ngram},
             {"hash_bits", m.features.hash_bits},
             {"case_fold", m.features.case_fold}}},
           {"training",
            {{"seed", m.seed},
             {"lambda", m.lambda},
             {"iterations", m.iterations},
             {"loss_history", m.loss_history},
             {"dev_history", m.dev_history}}},
           {"bias", std::vector<double>(m.bias.begin(), m.bias.end())},
           {"weights", rows}};
  write_json(path, doc);
}

BaselineModel load_model(const std::filesystem::path& path) {
  const json doc = read_json(path);
  try {
    if (doc.at("format") != "framing-baseline" || doc.at("version") != 1)
      throw InputError(path.string() + ": not a version-1 baseline model");
    BaselineModel m;
    const auto& f = doc.at("features");
    m.features.max_ngram = f.at("max_ngram").get<int>();
    m.features.hash_bits = f.at("hash_bits").get<int>();
    m.features.case_fold = f.at("case_fold").get<bool>();
    if (m.features.hash_bits < 1 || m.features.hash_bits > 30) throw InputError(path.string() + ": bad hash_bits");
    const auto& t = doc.at("training");
    m.seed = t.at("seed").get<std::uint64_t>();
    m.lambda = t.at("lambda").get<double>();
    m.iterations = t.at("iterations").get<std::size_t>();
    m.loss_history = t.at("loss_history").get<std::vector<double>>();
    m.dev_history = t.at("dev_history").get<std::vector<double>>();
    const auto bias = doc.at("bias").get<std::vector<double>>();
    if (bias.size() != kFrameCount) throw InputError(path.string() + ": bias must have 10 entries");
    std::copy(bias.begin(), bias.end(), m.bias.begin());
    m.weights.assign(m.features.dim() * kFrameCount, 0.0);
    for (const auto& row : doc.at("weights")) {
      const auto j = row.at(0).get<std::size_t>();
      const auto v = row.at(1).get<std::vector<double>>();
      if (j >= m.features.dim() || v.size() != kFrameCount) throw InputError(path.string() + ": bad weight row");
      std::copy(v.begin(), v.end(), m.weights.begin() + static_cast<std::ptrdiff_t>(j * kFrameCount));
    }
    return m;
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": malformed model file: " + e.what());
  }
}

SentenceLabel predict_one(const BaselineModel& m, const std::string& doc_id, std::size_t sentence_index,
                          std::string_view text) {
  const auto p = m.probabilities(text);
  const std::size_t k = argmax_lowest(p);
  return SentenceLabel{doc_id, sentence_index, frame_at(k), p[k], LabelSource::baseline};
}

std::vector<SentenceLabel> predict(const BaselineModel& m, const std::vector<Document>& docs) {
  std::vector<std::vector<SentenceLabel>> per_doc(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) {
    for (const auto& s : docs[i].sentences) per_doc[i].push_back(predict_one(m, docs[i].doc_id, s.index, s.text));
  });
  std::vector<SentenceLabel> out;
  for (auto& v : per_doc) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<SentenceLabel> predict(const BaselineModel& m, const Dataset& items) {
  std::vector<SentenceLabel> out(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    out[i] = predict_one(m, items[i].doc_id, items[i].sentence_index, items[i].text);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate(const std::vector<SentenceLabel>& predictions, const Dataset& gold,
                    const std::string& description) {
  std::map<Key, const TrainingSentence*> g;
  for (const auto& item : gold) {
    if (!g.emplace(Key{item.doc_id, item.sentence_index}, &item).second)
      throw EvaluationError("duplicate gold key " + key_string({item.doc_id, item.sentence_index}));
    if (item.labels.empty())
      throw EvaluationError("gold item " + key_string({item.doc_id, item.sentence_index}) + " has no label");
  }
  std::map<Key, Frame> p;
  for (const auto& l : predictions) {
    if (!p.emplace(Key{l.doc_id, l.sentence_index}, l.frame).second)
      throw EvaluationError("duplicate prediction key " + key_string({l.doc_id, l.sentence_index}));
  }
  std::vector<std::string> missing_pred, missing_gold;
  for (const auto& [k, _] : g)
    if (!p.count(k)) missing_pred.push_back(key_string(k));
  for (const auto& [k, _] : p)
    if (!g.count(k)) missing_gold.push_back(key_string(k));
  if (!missing_pred.empty() || !missing_gold.empty()) {
    std::ostringstream msg;
    msg << "prediction and gold keys differ";
    auto list = [&](const char* what, const std::vector<std::string>& v) {
      if (v.empty()) return;
      msg << "; " << v.size() << " missing " << what << ":";
      for (std::size_t i = 0; i < std::min<std::size_t>(v.size(), 10); ++i) msg << " " << v[i];
      if (v.size() > 10) msg << " ...";
    };
    list("predictions", missing_pred);
    list("gold", missing_gold);
    throw EvaluationError(msg.str());
  }

  EvalReport r;
  r.description = description;
  r.n = g.size();
  std::array<std::size_t, kFrameCount> tp{}, fp{}, fn{};
  for (const auto& [k, item] : g) {
    const Frame pred = p.at(k);
    const auto& labels = item->labels;
    const bool hit = std::find(labels.begin(), labels.end(), pred) != labels.end();
    const Frame eff = hit ? pred : *std::min_element(labels.begin(), labels.end());
    ++r.confusion[index(eff)][index(pred)];
    ++r.per_label[index(eff)].support;
    if (hit) {
      ++tp[index(pred)];
    } else {
      ++fp[index(pred)];
      ++fn[index(eff)];
    }
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < kFrameCount; ++k) {
    auto& s = r.per_label[k];
    s.precision = tp[k] + fp[k] ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fp[k]) : 0.0;
    s.recall = tp[k] + fn[k] ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fn[k]) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    if (s.support > 0) {
      sum += s.f1;
      ++present;
    }
  }
  r.macro_f1 = present ? sum / static_cast<double>(present) : 0.0;
  return r;
}

json to_json(const EvalReport& r) {
  json labels = json::object();
  for (std::size_t k = 0; k < kFrameCount; ++k) {
    const auto& s = r.per_label[k];
    labels[std::string(name(frame_at(k)))] = {
        {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  }
  json confusion = json::array();
  for (const auto& row : r.confusion) confusion.push_back(std::vector<std::size_t>(row.begin(), row.end()));
  return json{{"description", r.description}, {"n", r.n},     {"macro_f1", r.macro_f1},
              {"per_label", labels},          {"confusion", confusion}};
}

TopicFoldReport leave_one_topic_out(const Dataset& data, const TrainPredictFn& train_fn) {
  std::set<std::string> topics;
  for (const auto& item : data) topics.insert(item.topic);
  if (topics.size() < 2) throw std::invalid_argument("leave-one-topic-out needs at least two topics");
  TopicFoldReport r;
  for (const auto& t : topics) {
    Dataset train, test;
    for (const auto& item : data) (item.topic == t ? test : train).push_back(item);
    r.folds[t] = evaluate(train_fn(train, test), test, "held-out topic " + t);
    r.mean_macro_f1 += r.folds[t].macro_f1;
  }
  r.mean_macro_f1 /= static_cast<double>(r.folds.size());
  return r;
}

TrainPredictFn baseline_train_fn(const TrainConfig& cfg) {
  return [cfg](const Dataset& train, const Dataset& test) {
    const Split s = stratified_split(train, 0.9, 0.1, 0.0, cfg.seed);
    const BaselineModel m = train_baseline(s.train, s.dev, cfg);
    return predict(m, test);
  };
}

}  // namespace framing
