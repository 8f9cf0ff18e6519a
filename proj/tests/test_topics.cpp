#include <doctest.h>

#include <fstream>
#include <random>

#include "framing/random.hpp"
#include "framing/topics.hpp"
#include "test_util.hpp"

using namespace framing;

namespace {

std::map<std::string, std::vector<std::string>> disjoint_seeds() {
  return {{"Climate Change", {"carbon emissions warming glacier", "emissions carbon climate warming"}},
          {"Immigration", {"border asylum refugees visa", "asylum border migrants deportation"}}};
}

DominantFrameResult dom(const std::string& id, std::optional<Frame> f) {
  DominantFrameResult r;
  r.doc_id = id;
  r.dominant = f;
  r.support = f ? 3 : 0;
  r.labeled = 3;
  r.coverage = f ? 1.0 : 0.0;
  return r;
}

}  // namespace

TEST_CASE("import topics") {
  testutil::TempDir dir("topics");
  {
    std::ofstream f(dir / "t.jsonl");
    f << R"({"doc_id":"a","topic":"Immigration"})" << "\n"
      << R"({"doc_id":"b","topic":"Sports"})" << "\n"
      << R"({"doc_id":"a","topic":"Healthcare","score":0.3})" << "\n"
      << R"({"doc_id":"c","topic":"unassigned","score":0.01})" << "\n";
  }
  const auto r = import_topics(dir / "t.jsonl", default_topic_set());
  CHECK(r.assignments.size() == 2);
  CHECK(r.assignments.at("a").topic == "Immigration");
  REQUIRE(r.errors.size() == 2);
  CHECK(r.errors[0].line == 2);
  CHECK(r.errors[0].field == "topic");
  CHECK(r.errors[1].field == "doc_id");
  CHECK(default_topic_set().size() == 11);

  write_topics(dir / "u.jsonl", r.assignments);
  CHECK(import_topics(dir / "u.jsonl", default_topic_set()).assignments == r.assignments);
}

TEST_CASE("centroid fitting") {
  // One seed per topic: the centroid is that seed's normalized vector.
  const std::map<std::string, std::vector<std::string>> single{{"A", {"apples and pears grow"}},
                                                               {"B", {"cars trucks roads"}}};
  const auto m = fit_centroids(single);
  CHECK(m.centroids.at("A") == m.vectorize("apples and pears grow"));
  CHECK(cosine(m.centroids.at("A"), m.centroids.at("B")) == 0.0);

  const auto d = fit_centroids(disjoint_seeds());
  CHECK(cosine(d.centroids.at("Climate Change"), d.centroids.at("Immigration")) == 0.0);
  const auto again = fit_centroids(disjoint_seeds());
  CHECK(again.centroids == d.centroids);
  CHECK(again.idf == d.idf);

  CHECK_THROWS_AS(fit_centroids({}), std::invalid_argument);
  CHECK_THROWS_AS(fit_centroids({{"A", {}}}), std::invalid_argument);
}

TEST_CASE("topic assignment") {
  const auto m = fit_centroids(disjoint_seeds());
  for (const auto& [topic, texts] : disjoint_seeds())
    for (const auto& t : texts) CHECK(assign_topic(m, "x", t).topic == topic);
  const auto a = assign_topic(m, "c1", "The border needs more asylum judges");
  CHECK(a.topic == "Immigration");
  CHECK(*a.score > 0.05);
  CHECK(assign_topic(m, "c2", "and the of it is").topic == kUnassigned);
  CHECK(assign_topic(m, "c3", "").topic == kUnassigned);
  CHECK(assign_topic(m, "c4", "completely unrelated words").topic == kUnassigned);

  // Equal similarity to both centroids goes to the smaller name.
  const auto tie = fit_centroids({{"Beta", {"shared"}}, {"Alpha", {"shared"}}});
  CHECK(assign_topic(tie, "t", "shared").topic == "Alpha");

  testutil::TempDir dir("centroids");
  save_centroids(dir / "c.json", m);
  const auto back = load_centroids(dir / "c.json");
  CHECK(back.vocabulary == m.vocabulary);
  CHECK(back.idf == m.idf);
  CHECK(back.centroids == m.centroids);
}

TEST_CASE("align examples") {
  Links links;
  links.by_article["a1"] = {"c1", "c2", "c3"};
  links.by_article["a2"] = {"c4"};
  TopicMap topics{{"a1", {"a1", "Immigration", {}}}, {"c1", {"c1", "Immigration", {}}},
                  {"c2", {"c2", "Healthcare", {}}},  {"c3", {"c3", "Immigration", {}}},
                  {"a2", {"a2", "Healthcare", {}}},  {"c4", {"c4", "Healthcare", {}}}};
  std::map<std::string, DominantFrameResult> doms{{"a1", dom("a1", Frame::Economic)},
                                                  {"c1", dom("c1", Frame::Morality)},
                                                  {"c2", dom("c2", Frame::Morality)},
                                                  {"c3", dom("c3", std::nullopt)},
                                                  {"a2", dom("a2", std::nullopt)},
                                                  {"c4", dom("c4", Frame::Other)}};
  const auto r = align(links, topics, doms, {{"a1", "NYT"}, {"a2", "NYT"}});
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs[0] == AlignedPair{"a1", "c1", "Immigration", Frame::Economic, Frame::Morality, "NYT"});
  CHECK(r.excluded.at(std::string(kTopicMismatch)) == 1);
  CHECK(r.excluded.at(std::string(kCommentNoDominant)) == 1);
  CHECK(r.excluded.at(std::string(kArticleNoDominant)) == 1);
  CHECK(r.excluded.at(std::string(kTopicUnassigned)) == 0);
}

TEST_CASE("align partitions links and ignores input order") {
  std::mt19937_64 rng(41);
  const std::vector<std::string> tnames{"A", "B", std::string(kUnassigned)};
  for (int trial = 0; trial < 1000; ++trial) {
    Links links;
    TopicMap topics;
    std::map<std::string, DominantFrameResult> doms;
    std::map<std::string, std::string> outlets;
    std::vector<std::pair<std::string, std::string>> all_links;
    const std::size_t na = 1 + uniform_index(rng, 5);
    std::size_t cid = 0;
    for (std::size_t a = 0; a < na; ++a) {
      const std::string aid = "a" + std::to_string(a);
      links.by_article[aid];
      outlets[aid] = a % 2 ? "NYT" : "SOCC";
      if (uniform_index(rng, 10)) topics[aid] = {aid, tnames[uniform_index(rng, 3)], {}};
      if (uniform_index(rng, 10)) doms[aid] = dom(aid, uniform_index(rng, 3) ? std::optional(frame_at(uniform_index(rng, 10))) : std::nullopt);
      const std::size_t nc = uniform_index(rng, 6);
      for (std::size_t c = 0; c < nc; ++c) {
        const std::string id = "c" + std::to_string(cid++);
        links.by_article[aid].push_back(id);
        all_links.emplace_back(aid, id);
        if (uniform_index(rng, 10)) topics[id] = {id, tnames[uniform_index(rng, 3)], {}};
        if (uniform_index(rng, 10)) doms[id] = dom(id, uniform_index(rng, 3) ? std::optional(frame_at(uniform_index(rng, 10))) : std::nullopt);
      }
    }
    const auto r = align(links, topics, doms, outlets);
    std::size_t excluded = 0;
    for (const auto& [_, c] : r.excluded) excluded += c;
    CHECK(r.pairs.size() + excluded == all_links.size());
    for (const auto& p : r.pairs) {
      CHECK(topics.at(p.article_id).topic == p.topic);
      CHECK(topics.at(p.comment_id).topic == p.topic);
      CHECK(p.topic != kUnassigned);
      CHECK(doms.at(p.article_id).dominant == p.article_frame);
      CHECK(doms.at(p.comment_id).dominant == p.comment_frame);
      const auto& kids = links.by_article.at(p.article_id);
      CHECK(std::find(kids.begin(), kids.end(), p.comment_id) != kids.end());
    }
    for (std::size_t i = 1; i < r.pairs.size(); ++i)
      CHECK(std::tie(r.pairs[i - 1].article_id, r.pairs[i - 1].comment_id) <
            std::tie(r.pairs[i].article_id, r.pairs[i].comment_id));

    Links shuffled = links;
    for (auto& [_, v] : shuffled.by_article) portable_shuffle(v, rng);
    const auto r2 = align(shuffled, topics, doms, outlets);
    CHECK(r2.pairs == r.pairs);
    CHECK(r2.excluded == r.excluded);
  }
}

TEST_CASE("aligned pairs round-trip") {
  testutil::TempDir dir("pairs");
  std::vector<AlignedPair> pairs{{"a", "c", "Immigration", Frame::LegalityAndCrime, Frame::PoliticalAndPolicies, "NYT"},
                                 {"a", "d", "Immigration", Frame::Economic, Frame::Economic, "NYT"}};
  write_pairs(dir / "p.jsonl", pairs);
  CHECK(read_pairs(dir / "p.jsonl") == pairs);
}
