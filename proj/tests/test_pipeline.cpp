#include <doctest.h>

#include <random>
#include <set>

#include "framing/pipeline.hpp"
#include "framing/random.hpp"
#include "framing/synthetic.hpp"
#include "framing/text.hpp"
#include "test_util.hpp"

using namespace framing;
namespace fs = std::filesystem;

namespace {

const fs::path kFixture = FRAMING_FIXTURE_DIR;

RunConfig fixture_config(const fs::path& out) {
  RunConfig cfg = load_run_config(kFixture / "config.json");
  cfg.out_dir = out;
  return cfg;
}

std::size_t count_occurrences(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

// "<N> rows from `<file>`" as written by make_report, 0 when absent.
std::size_t reported_rows(const std::string& report, const std::string& file) {
  const std::string tail = " rows from `" + file + "`";
  const auto pos = report.find(tail);
  if (pos == std::string::npos) return 0;
  auto start = report.rfind('\n', pos);
  return std::stoul(report.substr(start + 1, pos - start - 1));
}

std::vector<AlignedPair> random_pairs(std::mt19937_64& rng, std::size_t n) {
  const std::vector<std::string> outlets{"NYT", "SOCC", "Globe"};
  const std::vector<std::string> topics{"Immigration", "Healthcare", "Education"};
  std::vector<AlignedPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    AlignedPair p;
    p.article_id = "a" + std::to_string(uniform_index(rng, 20));
    p.comment_id = "c" + std::to_string(i);
    p.outlet = outlets[uniform_index(rng, outlets.size())];
    p.topic = topics[uniform_index(rng, topics.size())];
    p.article_frame = frame_at(uniform_index(rng, 4));
    p.comment_frame = uniform01(rng) < 0.4 ? p.article_frame : frame_at(uniform_index(rng, kFrameCount));
    pairs.push_back(p);
  }
  return pairs;
}

}  // namespace

TEST_CASE("sha256 matches the standard test vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("slug keeps file names portable") {
  CHECK(slug("NYT") == "nyt");
  CHECK(slug("The Globe & Mail") == "the-globe-mail");
  CHECK(slug("--") == "unknown");
  CHECK(slug("") == "unknown");
}

TEST_CASE("config loading resolves paths and rejects unknown keys") {
  testutil::TempDir tmp("cfg");
  write_text(tmp / "a.jsonl", "");
  write_json(tmp / "c.json", json{{"articles", "a.jsonl"}, {"comments", "sub/../a.jsonl"}, {"min_support", 4},
                                  {"tau", 0.1}, {"out_dir", "out"}, {"glmm", false}});
  const auto cfg = load_run_config(tmp / "c.json");
  CHECK(cfg.articles == (tmp.path() / "a.jsonl").lexically_normal());
  CHECK(cfg.comments == (tmp.path() / "a.jsonl").lexically_normal());
  CHECK(cfg.out_dir == (tmp.path() / "out").lexically_normal());
  CHECK(cfg.dominant.min_support == 4);
  CHECK(cfg.tau == 0.1);
  CHECK_FALSE(cfg.glmm);
  CHECK_FALSE(cfg.labels);

  write_json(tmp / "bad.json", json{{"articles", "a.jsonl"}, {"colour", "blue"}});
  CHECK_THROWS_AS(load_run_config(tmp / "bad.json"), ConfigError);
  write_json(tmp / "bad2.json", json{{"min_support", -1}});
  CHECK_THROWS_AS(load_run_config(tmp / "bad2.json"), ConfigError);
  write_json(tmp / "bad3.json", json{{"tau", "high"}});
  CHECK_THROWS_AS(load_run_config(tmp / "bad3.json"), ConfigError);
  write_text(tmp / "bad4.json", "[1, 2]");
  CHECK_THROWS_AS(load_run_config(tmp / "bad4.json"), ConfigError);
}

TEST_CASE("missing labels and no model is a config error before any stage runs") {
  testutil::TempDir tmp("nolabels");
  RunConfig cfg = fixture_config(tmp / "out");
  cfg.training.reset();
  try {
    run_pipeline(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("missing labels and no model") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(tmp / "out"));
}

TEST_CASE("validation covers thresholds, sources and paths") {
  testutil::TempDir tmp("validate");
  const RunConfig good = fixture_config(tmp / "out");
  CHECK_NOTHROW(validate(good));
  auto bad = [&](auto mutate) {
    RunConfig c = good;
    mutate(c);
    CHECK_THROWS_AS(validate(c), ConfigError);
  };
  bad([](RunConfig& c) { c.dominant.min_support = 0; });
  bad([](RunConfig& c) { c.dominant.min_coverage = 0.0; });
  bad([](RunConfig& c) { c.dominant.min_coverage = 1.5; });
  bad([](RunConfig& c) { c.tau = -0.1; });
  bad([](RunConfig& c) { c.top_k = 0; });
  bad([](RunConfig& c) { c.topic_set.clear(); });
  bad([](RunConfig& c) { c.topic_set = {"A", "A"}; });
  bad([](RunConfig& c) { c.topic_set = {"A", "unassigned"}; });
  bad([](RunConfig& c) { c.labels = kFixture / "labels.jsonl"; });
  bad([](RunConfig& c) { c.topics = kFixture / "topics.jsonl"; });
  bad([](RunConfig& c) { c.seeds.reset(); });
  bad([](RunConfig& c) { c.articles = kFixture / "nope.jsonl"; });
  bad([](RunConfig& c) { c.annotations.reset(), c.adjudications = kFixture / "annotations.jsonl"; });
  bad([](RunConfig& c) { c.out_dir.clear(); });
  RunConfig c = good;
  c.dominant.min_coverage = 1.0;
  c.dominant.min_support = 1;
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("fixture run produces a complete, reproducible bundle") {
  testutil::TempDir tmp("fixture");
  const auto r1 = run_pipeline(fixture_config(tmp / "one"));
  REQUIRE(r1.ok());
  std::vector<std::string> names;
  for (const auto& s : r1.stages) {
    names.push_back(s.name);
    CHECK(s.status == "ok");
  }
  CHECK(names == std::vector<std::string>{"ingest", "label", "dominant", "topics", "align", "effects", "glmm",
                                          "agreement", "report"});
  for (const char* f : {"store/documents.jsonl", "labels/labels.jsonl", "labels/model.json", "dominant/dominant.jsonl",
                        "topics/topics.jsonl", "topics/centroids.json", "align/pairs.jsonl", "analysis/retention.tsv",
                        "analysis/independence.tsv", "analysis/transitions.json", "analysis/table3_corpus.tsv",
                        "analysis/fig2_retention_by_frame.tsv", "analysis/fig3_retention_by_topic.tsv",
                        "analysis/table4_top_reframings.tsv", "analysis/flow-nyt.json", "analysis/flow-socc.json",
                        "glmm/nyt.json", "glmm/socc.json", "agreement/agreement.json", "report.md", "manifest.json"}) {
    CHECK_MESSAGE(fs::exists(tmp / "one" / f), f);
  }

  const json m = read_json(r1.manifest);
  CHECK(m["failed_stage"].is_null());
  CHECK(m["config"]["training"] == "training.jsonl");
  std::vector<std::string> paths;
  for (const auto& o : m["outputs"]) {
    paths.push_back(o["path"]);
    CHECK(o["sha256"] == sha256_file(tmp / "one" / o["path"].get<std::string>()));
  }
  CHECK(std::is_sorted(paths.begin(), paths.end()));
  CHECK(m.dump().find(tmp.path().string()) == std::string::npos);

  const auto r2 = run_pipeline(fixture_config(tmp / "two"));
  CHECK(read_text(r1.manifest) == read_text(r2.manifest));

  const std::string report = read_text(tmp / "one" / "report.md");
  for (const char* h : {"## Corpus statistics", "## Retention by frame", "## Retention by topic",
                        "## Independence tests", "## Top reframings"}) {
    CHECK_MESSAGE(report.find(h) != std::string::npos, h);
  }
  CHECK(report.find("Gap:") == std::string::npos);
}

TEST_CASE("a failing stage halts the run and the manifest names it") {
  testutil::TempDir tmp("fail");
  // Every training sentence has the same label, so training cannot start.
  std::vector<json> recs;
  for (int i = 0; i < 20; ++i)
    recs.push_back(json{{"doc_id", "t" + std::to_string(i)}, {"sentence_index", 0}, {"text", "budget jobs wages"},
                        {"labels", {"Economic"}}, {"topic", "Immigration"}});
  write_jsonl(tmp / "train.jsonl", recs);
  RunConfig cfg = fixture_config(tmp / "out");
  cfg.training = tmp / "train.jsonl";
  const auto r = run_pipeline(cfg);
  CHECK_FALSE(r.ok());
  REQUIRE(r.failed_stage);
  CHECK(*r.failed_stage == "label");
  CHECK(r.stages[0].status == "ok");
  CHECK(r.stages[1].status == "failed");
  for (std::size_t i = 2; i < r.stages.size(); ++i) CHECK(r.stages[i].status == "skipped");
  const json m = read_json(r.manifest);
  CHECK(m["failed_stage"] == "label");
  CHECK_FALSE(fs::exists(tmp / "out" / "report.md"));
}

TEST_CASE("no aligned pairs gives an explicit notice") {
  testutil::TempDir tmp("empty");
  // Comments get a different topic from their article.
  TopicMap topics;
  for (const auto& f : {"articles.jsonl", "comments.jsonl"}) {
    read_jsonl(kFixture / f, [&](const json& rec, std::size_t) {
      const std::string id = rec["doc_id"];
      topics[id] = TopicAssignment{id, rec.contains("parent_id") ? "Healthcare" : "Immigration", std::nullopt};
    });
  }
  write_topics(tmp / "topics.jsonl", topics);
  RunConfig cfg = fixture_config(tmp / "out");
  cfg.seeds.reset();
  cfg.topics = tmp / "topics.jsonl";
  const auto r = run_pipeline(cfg);
  REQUIRE(r.ok());
  CHECK(read_pairs(tmp / "out" / "align" / "pairs.jsonl").empty());
  const std::string report = read_text(tmp / "out" / "report.md");
  CHECK(report.find("No aligned pairs") != std::string::npos);
  CHECK(count_occurrences(report, "_No rows._") == 4);  // the corpus table still has rows
  CHECK(read_json(tmp / "out" / "align" / "align.json")["excluded"]["topic mismatch"] == 40);
}

TEST_CASE("partial bundle gives a partial report with gaps marked") {
  testutil::TempDir tmp("partial");
  std::string report = make_report(tmp.path());
  CHECK(count_occurrences(report, "**Gap:**") == 6);
  write_text(tmp / "analysis" / "table3_corpus.tsv", "outlet\ttopic\tarticles\tcomments\tavg\nX\tT\t1\t2\t2.00\n");
  report = make_report(tmp.path());
  CHECK(count_occurrences(report, "**Gap:**") == 5);
  CHECK(reported_rows(report, "analysis/table3_corpus.tsv") == 1);
}

TEST_CASE("report section counts match the bundle slices") {
  std::mt19937_64 rng(41);
  testutil::TempDir tmp("sections");
  for (int rep = 0; rep < 1000; ++rep) {
    const auto pairs = random_pairs(rng, 1 + uniform_index(rng, 60));
    const std::size_t k = 1 + uniform_index(rng, 6);
    fs::remove_all(tmp / "b");
    write_pairs(tmp / "b" / "align" / "pairs.jsonl", pairs);
    write_analysis(pairs, GroupBy{true, true, true}, k, tmp / "b" / "analysis");
    const std::string report = make_report(tmp / "b");

    CHECK(reported_rows(report, "analysis/fig2_retention_by_frame.tsv") ==
          retention(pairs, GroupBy{true, false, true}).size());
    CHECK(reported_rows(report, "analysis/fig3_retention_by_topic.tsv") ==
          retention(pairs, GroupBy{true, true, false}).size());
    std::set<std::string> outlets;
    std::set<std::pair<std::string, std::string>> slices;
    for (const auto& p : pairs) {
      outlets.insert(p.outlet);
      slices.insert({p.outlet, p.topic});
    }
    const std::size_t test_slices = outlets.size() + (outlets.size() > 1 ? 1 : 0);
    CHECK(reported_rows(report, "analysis/independence.tsv") == test_slices * kFrameCount);
    std::size_t top = 0;
    for (const auto& [o, t] : slices) top += top_reframings(transitions(pairs, SliceKey{o, t, std::nullopt}), k).size();
    CHECK(reported_rows(report, "analysis/table4_top_reframings.tsv") == top);
    CHECK(count_occurrences(report, "- `analysis/flow-") == outlets.size());
  }
}

TEST_CASE("corpus table has a total row per outlet") {
  PlantedCorpusConfig pc;
  pc.outlets = {{"A", 7, 3, 0.3}, {"B", 4, 2, 0.3}};
  pc.topics = {"X", "Y"};
  const auto c = make_planted_corpus(pc);
  testutil::TempDir tmp("table3");
  write_corpus_table(tmp / "t.tsv", Store{c.articles, c.comments}, c.topics);
  const std::string t = read_text(tmp / "t.tsv");
  CHECK(t.find("A\tTotal\t7\t21\t3.00\n") != std::string::npos);
  CHECK(t.find("B\tTotal\t4\t8\t2.00\n") != std::string::npos);
}

TEST_CASE("planted corpora: dominant frames and pairs equal the plan") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 1000; ++rep) {
    PlantedCorpusConfig pc;
    pc.seed = rng();
    const std::size_t n_outlets = 1 + uniform_index(rng, 3);
    for (std::size_t o = 0; o < n_outlets; ++o)
      pc.outlets.push_back({"Outlet " + std::to_string(o), 1 + uniform_index(rng, 12), uniform_index(rng, 5),
                            0.05 + 0.5 * uniform01(rng)});
    pc.topics.assign(default_topic_set().begin(), default_topic_set().begin() + 1 + uniform_index(rng, 4));
    pc.article_sentences = 4 + uniform_index(rng, 3);
    pc.comment_sentences = 3 + uniform_index(rng, 2);
    const auto c = make_planted_corpus(pc);

    std::vector<std::string> ids;
    std::set<std::string> texts;
    std::map<std::string, std::size_t> sentences;
    for (const auto& d : c.articles) {
      ids.push_back(d.doc_id);
      sentences[d.doc_id] = split_sentences(d.text).size();
      CHECK(sentences[d.doc_id] == pc.article_sentences);
    }
    for (const auto& d : c.comments) {
      ids.push_back(d.doc_id);
      sentences[d.doc_id] = split_sentences(d.text).size();
      CHECK(sentences[d.doc_id] == pc.comment_sentences);
      CHECK(texts.insert(normalize_for_dedup(d.text)).second);
      CHECK(word_count(d.text) >= 5);
    }
    for (const auto& l : c.labels) CHECK(l.sentence_index < sentences.at(l.doc_id));

    const auto batch = dominant_batch(ids, c.labels);
    for (const auto& [id, r] : batch.results) {
      REQUIRE(r.dominant);
      CHECK(*r.dominant == c.planted_frame.at(id));
    }
    std::map<std::string, std::string> outlets;
    for (const auto& a : c.articles) outlets[a.doc_id] = a.outlet;
    const auto rep_ = align(link(c.articles, c.comments), c.topics, batch.results, outlets);
    CHECK(rep_.pairs.size() == c.comments.size());
    for (const auto& p : rep_.pairs) {
      CHECK(p.article_frame == c.planted_frame.at(p.article_id));
      CHECK(p.comment_frame == c.planted_frame.at(p.comment_id));
      CHECK(p.article_frame != Frame::Other);
    }
  }
}

TEST_CASE("retention profile scaling") {
  for (double target : {0.1, 0.37, 0.51}) {
    const auto r = scaled_retention(target);
    double mean = 0.0;
    for (std::size_t i = 0; i + 1 < kFrameCount; ++i) mean += r[i];
    CHECK(mean / 9.0 == doctest::Approx(target).epsilon(1e-12));
    CHECK(r[index(Frame::Other)] == 0.0);
    CHECK(r[index(Frame::PoliticalAndPolicies)] > r[index(Frame::Morality)]);
  }
  CHECK_THROWS_AS(scaled_retention(0.7), std::invalid_argument);
}

TEST_CASE("outlet mixed model skips infeasible data with a reason") {
  std::vector<AlignedPair> pairs;
  for (int i = 0; i < 40; ++i) {
    pairs.push_back(AlignedPair{"a" + std::to_string(i % 8), "c" + std::to_string(i), "T",
                                frame_at(static_cast<std::size_t>(i % 8) % 4), frame_at(static_cast<std::size_t>(i % 3)),
                                "X"});
  }
  auto g = fit_outlet_glmm(pairs, "X");
  CHECK_FALSE(g.fit);
  CHECK(g.skipped_reason == "fewer than two topics");
  CHECK(to_json(g)["status"] == "skipped");
  CHECK(fit_outlet_glmm(pairs, "Y").skipped_reason == "no aligned pairs for outlet");
  for (auto& p : pairs) {
    p.topic = p.article_id < "a4" ? "T" : "U";
    p.comment_frame = p.article_frame;
  }
  CHECK(fit_outlet_glmm(pairs, "X").skipped_reason == "retention outcome is constant");
}

TEST_CASE("planted retention is recovered through the pipeline") {
  testutil::TempDir tmp("planted");
  PlantedCorpusConfig pc;
  pc.outlets = {{"SOCC", 1000, 10, 0.37}, {"NYT", 1000, 10, 0.51}};
  pc.seed = 99;
  write_planted_corpus(tmp / "in", make_planted_corpus(pc));
  RunConfig cfg;
  cfg.articles = tmp / "in" / "articles.jsonl";
  cfg.comments = tmp / "in" / "comments.jsonl";
  cfg.labels = tmp / "in" / "labels.jsonl";
  cfg.topics = tmp / "in" / "topics.jsonl";
  cfg.out_dir = tmp / "out";
  cfg.glmm = false;
  const auto r = run_pipeline(cfg);
  REQUIRE(r.ok());
  const auto pairs = read_pairs(tmp / "out" / "align" / "pairs.jsonl");
  const auto rates = retention(pairs, GroupBy{true, false, false});
  REQUIRE(rates.size() == 2);
  CHECK(*rates[0].key.outlet == "NYT");
  CHECK(rates[0].pairs == 10000);
  CHECK(std::fabs(rates[0].rate - 0.51) <= 0.02);
  CHECK(std::fabs(rates[1].rate - 0.37) <= 0.02);
  CHECK(r.stages[6].status == "skipped");
}
