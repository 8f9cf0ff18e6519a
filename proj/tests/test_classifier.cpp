#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "framing/classifier.hpp"
#include "framing/random.hpp"
#include "framing/synthetic.hpp"
#include "test_util.hpp"

using namespace framing;

namespace {

TrainingSentence item(std::string doc, std::size_t idx, std::string text, std::vector<Frame> labels,
                      std::string topic = "T") {
  return TrainingSentence{std::move(doc), idx, std::move(text), std::move(labels), std::move(topic)};
}

Dataset synthetic(std::mt19937_64& rng, std::size_t n, const std::vector<Frame>& frames,
                  const std::vector<std::vector<std::string>>& vocab, const std::string& topic,
                  const std::string& prefix) {
  return vocabulary_sentences(rng, n, frames, vocab, topic, prefix);
}

std::vector<std::vector<std::string>> two_vocab() {
  return {{"tax", "budget", "jobs", "wages", "market", "price"},
          {"sin", "virtue", "moral", "ethics", "evil", "duty"}};
}

TrainConfig small_config() {
  TrainConfig c;
  c.features.hash_bits = 12;
  c.max_iterations = 200;
  c.eval_every = 10;
  return c;
}

}  // namespace

TEST_CASE("featurize produces sorted unit vectors") {
  FeatureConfig cfg;
  cfg.hash_bits = 10;
  const auto x = featurize("The cat, the CAT!", cfg);
  double norm = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    norm += x[i].second * x[i].second;
    if (i) CHECK(x[i - 1].first < x[i].first);
    CHECK(x[i].first < 1024u);
  }
  CHECK(norm == doctest::Approx(1.0));
  CHECK(featurize("the cat the cat", cfg) == x);
  CHECK(featurize("", cfg).empty());
}

TEST_CASE("objective gradient matches central differences") {
  std::mt19937_64 rng(1);
  SoftmaxProblem p;
  p.dim = 4;
  p.lambda = 0.3;
  for (int i = 0; i < 12; ++i) {
    SparseVec x;
    double norm = 0;
    for (std::uint32_t j = 0; j < 4; ++j) {
      if (rng() % 2) {
        x.emplace_back(j, uniform01(rng) + 0.1);
        norm += x.back().second * x.back().second;
      }
    }
    for (auto& [_, v] : x) v /= std::sqrt(norm);
    p.x.push_back(x);
    p.y.push_back(uniform_index(rng, 10));
  }
  std::vector<double> w(40);
  std::array<double, kFrameCount> b{};
  for (auto& v : w) v = standard_normal(rng);
  for (auto& v : b) v = standard_normal(rng);
  std::vector<double> gw;
  std::array<double, kFrameCount> gb{};
  p.evaluate(w, b, &gw, &gb);

  // Ten coordinates: six weights and four biases.
  const double h = 1e-5;
  for (std::size_t c : {0u, 7u, 13u, 21u, 33u, 39u}) {
    auto wp = w, wm = w;
    wp[c] += h;
    wm[c] -= h;
    const double fd = (p.evaluate(wp, b, nullptr, nullptr) - p.evaluate(wm, b, nullptr, nullptr)) / (2 * h);
    CHECK(std::fabs(fd - gw[c]) <= 1e-4 * std::max(1e-3, std::fabs(gw[c])));
  }
  for (std::size_t c : {0u, 3u, 5u, 9u}) {
    auto bp = b, bm = b;
    bp[c] += h;
    bm[c] -= h;
    const double fd = (p.evaluate(w, bp, nullptr, nullptr) - p.evaluate(w, bm, nullptr, nullptr)) / (2 * h);
    CHECK(std::fabs(fd - gb[c]) <= 1e-4 * std::max(1e-3, std::fabs(gb[c])));
  }
}

TEST_CASE("baseline separates a separable two-label set") {
  std::mt19937_64 rng(2);
  const std::vector<Frame> frames{Frame::Economic, Frame::Morality};
  const auto train = synthetic(rng, 400, frames, two_vocab(), "T", "tr");
  const auto dev = synthetic(rng, 100, frames, two_vocab(), "T", "dv");
  const auto m = train_baseline(train, dev, small_config());
  CHECK(evaluate(predict(m, dev), dev).macro_f1 >= 0.95);

  std::size_t agree = 0;
  const auto preds = predict(m, train);
  for (std::size_t i = 0; i < train.size(); ++i) agree += preds[i].frame == train[i].labels[0];
  CHECK(static_cast<double>(agree) / static_cast<double>(train.size()) >= 0.95);

  for (std::size_t i = 1; i < m.loss_history.size(); ++i) CHECK(m.loss_history[i] <= m.loss_history[i - 1] + 1e-8);
  for (const auto& p : preds) {
    CHECK(p.source == LabelSource::baseline);
    CHECK(*p.score >= 0.0);
    CHECK(*p.score <= 1.0);
  }
  const auto pr = m.probabilities("tax budget moral");
  double total = 0.0;
  for (double v : pr) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("training loss never increases between evaluations") {
  std::mt19937_64 rng(3);
  const std::vector<Frame> frames{Frame::Economic, Frame::Morality, Frame::Other};
  auto vocab = two_vocab();
  vocab.push_back({"tax", "sin", "weather", "sport", "music", "film"});
  auto cfg = small_config();
  cfg.eval_every = 1;
  cfg.max_iterations = 80;
  for (double lambda : {0.0, 1e-3, 1.0, 100.0}) {
    cfg.lambda = lambda;
    const auto m = train_baseline(synthetic(rng, 150, frames, vocab, "T", "x"), {}, cfg);
    REQUIRE(m.loss_history.size() == 81);
    for (std::size_t i = 1; i < m.loss_history.size(); ++i)
      CHECK(m.loss_history[i] <= m.loss_history[i - 1] + 1e-8);
  }
}

TEST_CASE("shuffled labels give chance-level macro-F1") {
  std::mt19937_64 rng(4);
  const std::vector<Frame> frames{Frame::Economic, Frame::Morality};
  const std::vector<std::vector<std::string>> shared(2, {"tax", "sin", "jobs", "duty", "price", "evil", "wages",
                                                         "moral", "market", "virtue", "budget", "ethics"});
  const auto train = synthetic(rng, 2000, frames, shared, "T", "tr");
  const auto test = synthetic(rng, 3000, frames, shared, "T", "te");
  auto cfg = small_config();
  cfg.max_iterations = 60;
  const auto m = train_baseline(train, {}, cfg);
  const double f1 = evaluate(predict(m, test), test).macro_f1;
  CHECK(std::fabs(f1 - 0.5) <= 0.05);
}

TEST_CASE("strong regularization collapses to the label prior") {
  std::mt19937_64 rng(5);
  const std::vector<Frame> frames{Frame::Economic, Frame::Morality};
  auto train = synthetic(rng, 200, frames, two_vocab(), "T", "tr");
  // Skew the prior towards Morality.
  for (std::size_t i = 0; i < 60; ++i) train[i].labels = {Frame::Morality};
  auto cfg = small_config();
  cfg.lambda = 1e9;
  cfg.max_iterations = 300;
  const auto m = train_baseline(train, {}, cfg);
  double wmax = 0.0;
  for (double v : m.weights) wmax = std::max(wmax, std::fabs(v));
  CHECK(wmax < 1e-8);
  for (const auto& p : predict(m, train)) CHECK(p.frame == Frame::Morality);
}

TEST_CASE("training rejects degenerate input and is deterministic") {
  CHECK_THROWS_AS(train_baseline({}, {}, small_config()), std::invalid_argument);
  CHECK_THROWS_AS(train_baseline({item("a", 0, "x y", {Frame::Other}), item("b", 0, "z", {Frame::Other})}, {},
                                 small_config()),
                  std::invalid_argument);

  std::mt19937_64 rng(6);
  const auto data = synthetic(rng, 120, {Frame::Economic, Frame::Morality}, two_vocab(), "T", "d");
  const auto m1 = train_baseline(data, {}, small_config());
  const auto m2 = train_baseline(data, {}, small_config());
  CHECK(m1.weights == m2.weights);
  CHECK(m1.bias == m2.bias);
}

TEST_CASE("predict is deterministic and permutation-equivariant") {
  std::mt19937_64 rng(7);
  const auto data = synthetic(rng, 100, {Frame::Economic, Frame::Morality}, two_vocab(), "T", "d");
  const auto m = train_baseline(data, {}, small_config());
  auto shuffled = data;
  portable_shuffle(shuffled, rng);
  const auto a = predict(m, data);
  const auto b = predict(m, shuffled);
  std::map<std::string, SentenceLabel> by_id;
  for (const auto& l : a) by_id[l.doc_id] = l;
  for (const auto& l : b) CHECK(by_id.at(l.doc_id) == l);
  CHECK(predict(m, Dataset{}).empty());
  CHECK(predict_one(m, "x", 0, "same text") == predict_one(m, "x", 0, "same text"));
}

TEST_CASE("model file round-trip") {
  testutil::TempDir dir("model");
  std::mt19937_64 rng(8);
  const auto data = synthetic(rng, 80, {Frame::Economic, Frame::Morality}, two_vocab(), "T", "d");
  const auto m = train_baseline(data, {}, small_config());
  save_model(dir / "m.json", m);
  const auto back = load_model(dir / "m.json");
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.features == m.features);
  CHECK(back.loss_history == m.loss_history);
  CHECK(predict(back, data) == predict(m, data));
}

TEST_CASE("evaluate examples") {
  Dataset gold{item("a", 0, "", {Frame::Economic}), item("a", 1, "", {Frame::Morality})};
  std::vector<SentenceLabel> pred{{"a", 0, Frame::Economic, 0.9, LabelSource::baseline},
                                  {"a", 1, Frame::Morality, 0.8, LabelSource::baseline}};
  CHECK(evaluate(pred, gold).macro_f1 == 1.0);

  pred[0].frame = Frame::Other;
  pred[1].frame = Frame::Other;
  CHECK(evaluate(pred, gold).macro_f1 == 0.0);

  // Hand-scored: effective gold E, E, M, O against predictions E, E, E, O.
  // Economic P=2/3 R=1 F1=0.8; Morality F1=0; Other F1=1; macro 0.6.
  Dataset g4{item("d", 0, "", {Frame::Economic}), item("d", 1, "", {Frame::Economic, Frame::Morality}),
             item("d", 2, "", {Frame::Morality}), item("d", 3, "", {Frame::Morality, Frame::Other})};
  std::vector<SentenceLabel> p4{{"d", 0, Frame::Economic, 1.0, LabelSource::imported},
                                {"d", 1, Frame::Economic, 1.0, LabelSource::imported},
                                {"d", 2, Frame::Economic, 1.0, LabelSource::imported},
                                {"d", 3, Frame::Other, 1.0, LabelSource::imported}};
  const auto r = evaluate(p4, g4);
  CHECK(r.per_label[index(Frame::Economic)].f1 == doctest::Approx(0.8));
  CHECK(r.per_label[index(Frame::Morality)].f1 == 0.0);
  CHECK(r.per_label[index(Frame::Other)].f1 == 1.0);
  CHECK(r.macro_f1 == doctest::Approx(0.6));
  CHECK(r.confusion[index(Frame::Morality)][index(Frame::Economic)] == 1);

  p4.pop_back();
  CHECK_THROWS_AS(evaluate(p4, g4), EvaluationError);
}

TEST_CASE("evaluate of predictions against themselves is perfect") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<SentenceLabel> p;
    Dataset g;
    const std::size_t n = 1 + rng() % 30;
    for (std::size_t i = 0; i < n; ++i) {
      const Frame f = frame_at(uniform_index(rng, kFrameCount));
      p.push_back({"d", i, f, 0.5, LabelSource::baseline});
      g.push_back(item("d", i, "", {f}));
    }
    CHECK(evaluate(p, g).macro_f1 == 1.0);
  }
}

TEST_CASE("stratified split") {
  Dataset one;
  for (std::size_t i = 0; i < 100; ++i) one.push_back(item("d" + std::to_string(i), 0, "", {Frame::Economic}));
  auto s = stratified_split(one, 0.8, 0.1, 0.1, 42);
  CHECK(s.train.size() == 80);
  CHECK(s.dev.size() == 10);
  CHECK(s.test.size() == 10);

  Dataset many;
  for (std::size_t t = 0; t < 10; ++t)
    for (std::size_t i = 0; i < 100; ++i)
      many.push_back(item("d" + std::to_string(t) + "_" + std::to_string(i), 0, "",
                          {frame_at(t % kFrameCount), Frame::Other}, "topic" + std::to_string(t / 5)));
  s = stratified_split(many, 0.8, 0.1, 0.1, 42);
  std::map<std::pair<std::string, Frame>, std::array<std::size_t, 3>> counts;
  for (const auto& x : s.train) ++counts[{x.topic, x.labels[0]}][0];
  for (const auto& x : s.dev) ++counts[{x.topic, x.labels[0]}][1];
  for (const auto& x : s.test) ++counts[{x.topic, x.labels[0]}][2];
  CHECK(counts.size() == 10);
  for (const auto& [_, c] : counts) CHECK(c == std::array<std::size_t, 3>{80, 10, 10});

  const auto again = stratified_split(many, 0.8, 0.1, 0.1, 42);
  CHECK(again.train == s.train);
  CHECK(again.dev == s.dev);
  CHECK(again.test == s.test);
  CHECK(stratified_split(many, 0.8, 0.1, 0.1, 43).dev != s.dev);

  Dataset tiny{item("x", 0, "", {Frame::Economic}), item("y", 0, "", {Frame::Economic})};
  s = stratified_split(tiny);
  CHECK(s.train.size() == 2);
  CHECK(s.warnings.size() == 1);
  CHECK_THROWS_AS(stratified_split({item("z", 0, "", {})}), std::invalid_argument);
}

TEST_CASE("stratified split is a partition within one item of the ratios") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 1000; ++trial) {
    Dataset d;
    const std::size_t n = rng() % 60;
    for (std::size_t i = 0; i < n; ++i)
      d.push_back(item("d" + std::to_string(i), 0, "", {frame_at(uniform_index(rng, 3))},
                       "t" + std::to_string(uniform_index(rng, 2))));
    const auto s = stratified_split(d, 0.8, 0.1, 0.1, rng());
    std::set<std::string> ids;
    for (const auto* part : {&s.train, &s.dev, &s.test})
      for (const auto& x : *part) CHECK(ids.insert(x.doc_id).second);
    CHECK(ids.size() == n);
    std::map<std::pair<std::string, Frame>, std::array<double, 4>> c;
    for (const auto& x : d) ++c[{x.topic, x.labels[0]}][3];
    for (const auto& x : s.train) ++c[{x.topic, x.labels[0]}][0];
    for (const auto& x : s.dev) ++c[{x.topic, x.labels[0]}][1];
    for (const auto& x : s.test) ++c[{x.topic, x.labels[0]}][2];
    for (const auto& [_, v] : c) {
      if (v[3] < 3) continue;
      CHECK(std::fabs(v[0] - 0.8 * v[3]) <= 1.0);
      CHECK(std::fabs(v[1] - 0.1 * v[3]) <= 1.0);
      CHECK(std::fabs(v[2] - 0.1 * v[3]) <= 1.0);
    }
  }
}

TEST_CASE("import predictions") {
  testutil::TempDir dir("pred");
  {
    std::ofstream f(dir / "p.jsonl");
    f << R"({"doc_id":"doc","sentence_index":0,"label":"Economic","score":0.91})" << "\n"
      << R"({"doc_id":"doc","sentence_index":1,"label":11,"score":0.5})" << "\n"
      << R"({"doc_id":"doc","sentence_index":2,"label":"4","score":0.5})" << "\n"
      << R"({"doc_id":"doc","sentence_index":3,"label":9,"score":1.5})" << "\n"
      << R"({"doc_id":"doc","sentence_index":0,"label":1,"score":0.5})" << "\n";
  }
  auto r = import_predictions(dir / "p.jsonl");
  REQUIRE(r.labels.size() == 2);
  CHECK(r.labels[0] == SentenceLabel{"doc", 0, Frame::Economic, 0.91, LabelSource::imported});
  CHECK(r.labels[1].frame == Frame::LegalityAndCrime);
  REQUIRE(r.errors.size() == 3);
  CHECK(r.errors[0].line == 2);
  CHECK(r.errors[0].field == "label");
  CHECK(r.errors[1].field == "score");
  CHECK(r.errors[2].field == "sentence_index");

  Store store;
  Document d;
  d.doc_id = "doc";
  d.text = "One. Two.";
  d.sentences = split_sentences(d.text);
  store.articles.push_back(d);
  r = import_predictions(dir / "p.jsonl", &store);
  CHECK(r.labels.size() == 1);

  // N valid records come back as the same set.
  std::mt19937_64 rng(11);
  std::vector<SentenceLabel> labels;
  for (std::size_t i = 0; i < 50; ++i)
    labels.push_back({"d" + std::to_string(i % 7), i, frame_at(uniform_index(rng, 10)), uniform01(rng),
                      LabelSource::imported});
  write_labels(dir / "q.jsonl", labels);
  r = import_predictions(dir / "q.jsonl");
  CHECK(r.errors.empty());
  CHECK(r.labels == labels);
}

TEST_CASE("leave one topic out") {
  std::mt19937_64 rng(12);
  const std::vector<Frame> frames{Frame::Economic, Frame::Morality};
  auto cfg = small_config();

  Dataset same = synthetic(rng, 300, frames, two_vocab(), "A", "a");
  auto b = synthetic(rng, 300, frames, two_vocab(), "B", "b");
  same.insert(same.end(), b.begin(), b.end());
  const auto r = leave_one_topic_out(same, baseline_train_fn(cfg));
  CHECK(r.folds.size() == 2);
  const auto in_domain = stratified_split(same, 0.8, 0.1, 0.1, 0);
  const auto m = train_baseline(in_domain.train, in_domain.dev, cfg);
  const double in_f1 = evaluate(predict(m, in_domain.test), in_domain.test).macro_f1;
  CHECK(std::fabs(r.mean_macro_f1 - in_f1) <= 0.05);

  Dataset disjoint = synthetic(rng, 300, frames, two_vocab(), "A", "a");
  auto c = synthetic(rng, 300, frames, {{"alpha", "beta", "gamma"}, {"delta", "omega", "sigma"}}, "C", "c");
  disjoint.insert(disjoint.end(), c.begin(), c.end());
  const auto r2 = leave_one_topic_out(disjoint, baseline_train_fn(cfg));
  CHECK(r2.folds.at("C").macro_f1 <= 0.7);
  CHECK_THROWS_AS(leave_one_topic_out(synthetic(rng, 10, frames, two_vocab(), "A", "a"), baseline_train_fn(cfg)),
                  std::invalid_argument);
}
