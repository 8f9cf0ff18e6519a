#include "framing/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "framing/agreement.hpp"
#include "framing/classifier.hpp"
#include "framing/text.hpp"

namespace framing {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

const std::set<std::string> kConfigKeys = {
    "articles",    "comments",    "labels",       "model",        "training", "topics",
    "seeds",       "annotations", "adjudications", "min_support", "min_coverage", "min_words",
    "tau",         "topic_set",   "seed",         "out_dir",      "glmm",     "top_k",
};

template <class T>
T config_value(const json& j, const std::string& key, const char* type_name) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' must be " + type_name);
  }
}

std::size_t config_count(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(v.get<long long>());
}

std::vector<std::string> split_tab(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, '\t')) out.push_back(cell);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

std::vector<std::string> outlets_of(const std::vector<AlignedPair>& pairs) {
  std::set<std::string> s;
  for (const auto& p : pairs) s.insert(p.outlet);
  return {s.begin(), s.end()};
}

// Outlet -> file-name slug, disambiguated when two outlets collapse together.
std::map<std::string, std::string> outlet_slugs(const std::vector<std::string>& outlets) {
  std::map<std::string, std::string> out;
  std::set<std::string> used;
  for (const auto& o : outlets) {
    std::string s = slug(o);
    for (int k = 2; used.count(s); ++k) s = slug(o) + "-" + std::to_string(k);
    used.insert(s);
    out[o] = s;
  }
  return out;
}

}  // namespace

std::string slug(std::string_view s) {
  std::string out;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      out.push_back(static_cast<char>(std::tolower(u)));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "unknown" : out;
}

// ---------------------------------------------------------------------------
// Configuration

RunConfig load_run_config(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!kConfigKeys.count(k)) throw ConfigError(path.string() + ": unknown config key '" + k + "'");
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& key) -> fs::path {
    fs::path p = config_value<std::string>(j, key, "a path string");
    if (p.empty()) throw ConfigError("config key '" + key + "' is empty");
    return (p.is_absolute() ? p : base / p).lexically_normal();
  };
  auto opt_path = [&](const std::string& key) -> std::optional<fs::path> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return resolve(key);
  };

  RunConfig cfg;
  if (j.contains("articles")) cfg.articles = resolve("articles");
  if (j.contains("comments")) cfg.comments = resolve("comments");
  cfg.labels = opt_path("labels");
  cfg.model = opt_path("model");
  cfg.training = opt_path("training");
  cfg.topics = opt_path("topics");
  cfg.seeds = opt_path("seeds");
  cfg.annotations = opt_path("annotations");
  cfg.adjudications = opt_path("adjudications");
  if (j.contains("min_support")) cfg.dominant.min_support = config_count(j, "min_support");
  if (j.contains("min_coverage")) cfg.dominant.min_coverage = config_value<double>(j, "min_coverage", "a number");
  if (j.contains("min_words")) cfg.min_words = config_count(j, "min_words");
  if (j.contains("tau")) cfg.tau = config_value<double>(j, "tau", "a number");
  if (j.contains("topic_set"))
    cfg.topic_set = config_value<std::vector<std::string>>(j, "topic_set", "an array of strings");
  if (j.contains("seed")) cfg.seed = config_count(j, "seed");
  if (j.contains("out_dir")) cfg.out_dir = resolve("out_dir");
  if (j.contains("glmm")) cfg.glmm = config_value<bool>(j, "glmm", "a boolean");
  if (j.contains("top_k")) cfg.top_k = config_count(j, "top_k");
  return cfg;
}

void validate(const RunConfig& cfg) {
  std::vector<std::string> problems;
  auto need_file = [&](const char* key, const fs::path& p) {
    if (p.empty()) {
      problems.push_back(std::string(key) + " is not set");
    } else if (!fs::is_regular_file(p)) {
      problems.push_back(std::string(key) + " does not exist: " + p.string());
    }
  };
  auto maybe_file = [&](const char* key, const std::optional<fs::path>& p) {
    if (p) need_file(key, *p);
  };
  need_file("articles", cfg.articles);
  need_file("comments", cfg.comments);

  const int label_sources = int(cfg.labels.has_value()) + int(cfg.model.has_value()) + int(cfg.training.has_value());
  if (label_sources == 0) problems.push_back("missing labels and no model: set one of labels, model, training");
  if (label_sources > 1) problems.push_back("labels, model and training are exclusive; set exactly one");
  maybe_file("labels", cfg.labels);
  maybe_file("model", cfg.model);
  maybe_file("training", cfg.training);

  const int topic_sources = int(cfg.topics.has_value()) + int(cfg.seeds.has_value());
  if (topic_sources == 0) problems.push_back("missing topics: set one of topics, seeds");
  if (topic_sources > 1) problems.push_back("topics and seeds are exclusive; set exactly one");
  maybe_file("topics", cfg.topics);
  maybe_file("seeds", cfg.seeds);
  maybe_file("annotations", cfg.annotations);
  maybe_file("adjudications", cfg.adjudications);
  if (cfg.adjudications && !cfg.annotations) problems.push_back("adjudications given without annotations");

  if (cfg.dominant.min_support < 1) problems.push_back("min_support must be >= 1");
  if (!(cfg.dominant.min_coverage > 0.0 && cfg.dominant.min_coverage <= 1.0))
    problems.push_back("min_coverage must lie in (0, 1]");
  if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) problems.push_back("tau must lie in [0, 1]");
  if (cfg.top_k < 1) problems.push_back("top_k must be >= 1");
  if (cfg.topic_set.empty()) problems.push_back("topic_set is empty");
  if (std::set<std::string>(cfg.topic_set.begin(), cfg.topic_set.end()).size() != cfg.topic_set.size())
    problems.push_back("topic_set has duplicates");
  for (const auto& t : cfg.topic_set) {
    if (t == kUnassigned) problems.push_back("topic_set must not contain the reserved topic 'unassigned'");
  }
  if (cfg.out_dir.empty()) problems.push_back("no output directory (set out_dir, --out or FRAMING_OUT_DIR)");

  if (!problems.empty()) {
    std::string msg = "invalid configuration: ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw ConfigError(msg);
  }
}

json manifest_config(const RunConfig& cfg) {
  auto file = [](const std::optional<fs::path>& p) -> json {
    return p ? json(p->filename().string()) : json(nullptr);
  };
  return json{{"articles", cfg.articles.filename().string()},
              {"comments", cfg.comments.filename().string()},
              {"labels", file(cfg.labels)},
              {"model", file(cfg.model)},
              {"training", file(cfg.training)},
              {"topics", file(cfg.topics)},
              {"seeds", file(cfg.seeds)},
              {"annotations", file(cfg.annotations)},
              {"adjudications", file(cfg.adjudications)},
              {"min_support", cfg.dominant.min_support},
              {"min_coverage", cfg.dominant.min_coverage},
              {"min_words", cfg.min_words},
              {"tau", cfg.tau},
              {"topic_set", cfg.topic_set},
              {"seed", cfg.seed},
              {"glmm", cfg.glmm},
              {"top_k", cfg.top_k}};
}

// ---------------------------------------------------------------------------
// Digests

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

// ---------------------------------------------------------------------------
// Analysis outputs

void write_corpus_table(const fs::path& path, const Store& store, const TopicMap& topics) {
  std::map<std::string, std::string> topic_of;
  for (const auto& [id, t] : topics) topic_of[id] = t.topic;
  const auto rows = corpus_stats(store, topic_of);
  std::string out = "outlet\ttopic\tarticles\tcomments\tavg_comments_per_article\n";
  std::map<std::string, std::pair<std::size_t, std::size_t>> totals;
  auto emit = [&](const std::string& outlet, const std::string& topic, std::size_t a, std::size_t c) {
    out += outlet + "\t" + topic + "\t" + std::to_string(a) + "\t" + std::to_string(c) + "\t" +
           (a ? format_fixed(static_cast<double>(c) / static_cast<double>(a), 2) : std::string("NA")) + "\n";
  };
  for (const auto& r : rows) {
    emit(r.outlet, r.topic, r.article_count, r.comment_count);
    totals[r.outlet].first += r.article_count;
    totals[r.outlet].second += r.comment_count;
  }
  for (const auto& [outlet, t] : totals) emit(outlet, "Total", t.first, t.second);
  write_text(path, out);
}

std::vector<std::string> write_analysis(const std::vector<AlignedPair>& pairs, const GroupBy& by, std::size_t top_k,
                                        const fs::path& dir) {
  std::vector<std::string> written;
  auto put = [&](const std::string& rel) {
    written.push_back(rel);
    return dir / rel;
  };
  const auto outlets = outlets_of(pairs);

  write_retention_tsv(put("retention.tsv"), retention(pairs, by));
  write_retention_tsv(put("fig2_retention_by_frame.tsv"), retention(pairs, GroupBy{true, false, true}));

  // Independence per outlet and pooled, for every frame.
  std::vector<IndependenceTest> tests;
  std::vector<SliceKey> slices;
  for (const auto& o : outlets) slices.push_back(SliceKey{o, std::nullopt, std::nullopt});
  if (outlets.size() > 1 || pairs.empty()) slices.push_back(SliceKey{});
  if (!pairs.empty()) {
    for (const auto& s : slices) {
      for (Frame f : kAllFrames) tests.push_back(chi2_independence(pairs, f, s));
    }
  }
  write_independence_tsv(put("independence.tsv"), tests);

  // Transitions: pooled, per outlet, per (outlet, topic).
  json trans{{"pooled", to_json(transitions(pairs))}, {"by_outlet", json::array()}, {"by_outlet_topic", json::array()}};
  for (const auto& o : outlets) trans["by_outlet"].push_back(to_json(transitions(pairs, SliceKey{o, {}, {}})));
  std::set<SliceKey> outlet_topics;
  for (const auto& p : pairs) outlet_topics.insert(SliceKey{p.outlet, p.topic, std::nullopt});
  std::string table4 = "outlet\ttopic\trank\tfrom\tto\tn\n";
  for (const auto& key : outlet_topics) {
    const auto m = transitions(pairs, key);
    trans["by_outlet_topic"].push_back(to_json(m));
    const auto top = top_reframings(m, top_k);
    for (std::size_t r = 0; r < top.size(); ++r) {
      table4 += *key.outlet + "\t" + *key.topic + "\t" + std::to_string(r + 1) + "\t" +
                std::string(name(top[r].from)) + "\t" + std::string(name(top[r].to)) + "\t" +
                std::to_string(top[r].count) + "\n";
    }
  }
  write_json(put("transitions.json"), trans);
  write_text(put("table4_top_reframings.tsv"), table4);

  const auto slugs = outlet_slugs(outlets);
  for (const auto& o : outlets) {
    json flow = to_json(flow_export(transitions(pairs, SliceKey{o, {}, {}}), true));
    flow["outlet"] = o;
    write_json(put("flow-" + slugs.at(o) + ".json"), flow);
  }

  write_topic_table(put("fig3_retention_by_topic.tsv"), pairs, {});
  return written;
}

// ---------------------------------------------------------------------------
// Mixed model per outlet

OutletGlmm fit_outlet_glmm(const std::vector<AlignedPair>& pairs, const std::string& outlet, const GlmmConfig& cfg) {
  OutletGlmm g;
  g.outlet = outlet;
  std::vector<AlignedPair> mine;
  for (const auto& p : pairs) {
    if (p.outlet == outlet) mine.push_back(p);
  }
  if (mine.empty()) {
    g.skipped_reason = "no aligned pairs for outlet";
    return g;
  }
  const auto obs = build_observations(mine);
  std::set<std::string> topics, frames;
  std::size_t ones = 0;
  for (const auto& o : obs) {
    topics.insert(o.topic);
    frames.insert(o.frame);
    ones += static_cast<std::size_t>(o.y);
  }
  if (topics.size() < 2) {
    g.skipped_reason = "fewer than two topics";
  } else if (frames.size() < 2) {
    g.skipped_reason = "fewer than two frame groups";
  } else if (ones == 0 || ones == obs.size()) {
    g.skipped_reason = "retention outcome is constant";
  }
  if (!g.skipped_reason.empty()) return g;
  try {
    g.fit = fit_glmm(obs, cfg);
  } catch (const InferenceError& e) {
    g.skipped_reason = e.what();
    return g;
  }
  if (g.fit->converged) g.marginals = marginal_effects(*g.fit);
  return g;
}

json to_json(const OutletGlmm& g) {
  json j;
  if (g.fit) {
    j = to_json(*g.fit, g.marginals);
    j["status"] = g.fit->converged ? "fitted" : "not converged";
  } else {
    j = json{{"status", "skipped"}, {"reason", g.skipped_reason}};
  }
  j["outlet"] = g.outlet;
  return j;
}

void write_topic_table(const fs::path& path, const std::vector<AlignedPair>& pairs,
                       const std::vector<OutletGlmm>& models) {
  std::map<std::pair<std::string, std::string>, const MarginalEffect*> model;
  for (const auto& g : models) {
    for (const auto& m : g.marginals) model[{g.outlet, m.topic}] = &m;
  }
  std::string out = "outlet\ttopic\tpairs\tretained\tobserved_rate\tmodel_p\tci_lo\tci_hi\n";
  for (const auto& r : retention(pairs, GroupBy{true, true, false})) {
    out += *r.key.outlet + "\t" + *r.key.topic + "\t" + std::to_string(r.pairs) + "\t" + std::to_string(r.retained) +
           "\t" + format_fixed(r.rate, 6);
    auto it = model.find({*r.key.outlet, *r.key.topic});
    if (it == model.end()) {
      out += "\tNA\tNA\tNA\n";
    } else {
      out += "\t" + format_fixed(it->second->probability, 6) + "\t" + format_fixed(it->second->ci_lo, 6) + "\t" +
             format_fixed(it->second->ci_hi, 6) + "\n";
    }
  }
  write_text(path, out);
}

// ---------------------------------------------------------------------------
// Report

namespace {

struct Section {
  const char* title;
  const char* file;
  const char* blurb;
};

constexpr Section kSections[] = {
    {"Corpus statistics", "analysis/table3_corpus.tsv", "Articles and comments per outlet and topic."},
    {"Retention by frame", "analysis/fig2_retention_by_frame.tsv",
     "Share of aligned pairs whose comment keeps the article's dominant frame."},
    {"Retention by topic", "analysis/fig3_retention_by_topic.tsv",
     "Observed retention with the mixed-model probability and 95% interval (NA when no model was fitted)."},
    {"Independence tests", "analysis/independence.tsv",
     "Pearson chi-squared on article-frame by comment-frame indicators, per outlet and frame."},
    {"Top reframings", "analysis/table4_top_reframings.tsv", "Most frequent article-to-comment frame changes."},
};

std::string markdown_table(const std::string& tsv, std::size_t* rows) {
  std::istringstream in(tsv);
  std::string line, out;
  bool header = true;
  *rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_tab(line);
    out += "|";
    for (const auto& c : cells) out += " " + (c.empty() ? std::string(" ") : c) + " |";
    out += "\n";
    if (header) {
      out += "|";
      for (std::size_t i = 0; i < cells.size(); ++i) out += " --- |";
      out += "\n";
      header = false;
    } else {
      ++*rows;
    }
  }
  return out;
}

}  // namespace

std::string make_report(const fs::path& bundle) {
  std::string md = "# Framing retention report\n\n";
  const fs::path pairs_file = bundle / "align" / "pairs.jsonl";
  if (fs::exists(pairs_file)) {
    const auto pairs = read_pairs(pairs_file);
    if (pairs.empty()) {
      md += "> **No aligned pairs.** No article and comment share a topic with both dominant frames defined, so the "
            "retention, independence and reframing sections are empty.\n\n";
    } else {
      md += "Aligned pairs: " + std::to_string(pairs.size()) + ".\n\n";
    }
  } else {
    md += "> **Gap:** align/pairs.jsonl is missing from the bundle.\n\n";
  }

  for (const auto& s : kSections) {
    md += "## " + std::string(s.title) + "\n\n" + s.blurb + "\n\n";
    const fs::path f = bundle / s.file;
    if (!fs::exists(f)) {
      md += "> **Gap:** `" + std::string(s.file) + "` is missing from the bundle.\n\n";
      continue;
    }
    std::size_t rows = 0;
    const std::string table = markdown_table(read_text(f), &rows);
    if (rows == 0) {
      md += "_No rows._\n\n";
    } else {
      md += table + "\n" + std::to_string(rows) + " rows from `" + s.file + "`.\n\n";
    }
  }

  std::vector<std::string> flows;
  if (fs::is_directory(bundle / "analysis")) {
    for (const auto& e : fs::directory_iterator(bundle / "analysis")) {
      const std::string n = e.path().filename().string();
      if (n.rfind("flow-", 0) == 0 && e.path().extension() == ".json") flows.push_back(n);
    }
  }
  std::sort(flows.begin(), flows.end());
  md += "## Flow diagrams\n\n";
  if (flows.empty()) {
    md += "_No flow files._\n";
  } else {
    md += "Row-standardized flow data for plotting:\n\n";
    for (const auto& f : flows) md += "- `analysis/" + f + "`\n";
  }
  return md;
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

struct Bundle {
  fs::path root;
  std::set<std::string> outputs;

  fs::path operator()(const std::string& rel) {
    outputs.insert(rel);
    return root / rel;
  }
};

json errors_json(const std::vector<RecordError>& errors, const std::string& file) {
  json out = json::array();
  for (const auto& e : errors) {
    json j = to_json(e);
    j["file"] = file;
    out.push_back(j);
  }
  return out;
}

void write_error_file(const fs::path& path, const std::vector<json>& errors) { write_jsonl(path, errors); }

std::vector<json> flatten(const json& arr) { return {arr.begin(), arr.end()}; }

Dataset read_training(const fs::path& path, std::vector<RecordError>* errors) {
  Dataset data;
  *errors = read_jsonl(path, [&](const json& rec, std::size_t) { data.push_back(parse_training_sentence(rec)); });
  return data;
}

std::map<std::string, std::vector<std::string>> read_seeds(const fs::path& path, const Store& store,
                                                          const std::vector<std::string>& topic_set) {
  std::map<std::string, std::vector<std::string>> seeds;
  const std::set<std::string> allowed(topic_set.begin(), topic_set.end());
  auto errors = read_jsonl(path, [&](const json& rec, std::size_t) {
    const std::string topic = require_string(rec, "topic");
    if (!allowed.count(topic)) throw RecordFieldError("topic", "seed topic '" + topic + "' is not in the topic set");
    if (auto text = optional_string(rec, "text")) {
      seeds[topic].push_back(*text);
      return;
    }
    const std::string id = require_string(rec, "doc_id");
    const Document* d = store.find(id);
    if (!d) throw RecordFieldError("doc_id", "seed document '" + id + "' is not in the store");
    seeds[topic].push_back(d->text);
  });
  if (!errors.empty())
    throw InputError(path.filename().string() + ":" + std::to_string(errors.front().line) + ": " +
                     errors.front().message);
  return seeds;
}

}  // namespace

RunResult run_pipeline(const RunConfig& cfg) {
  validate(cfg);
  Bundle out{cfg.out_dir, {}};
  fs::create_directories(out.root);

  RunResult result;
  Store store;
  std::vector<SentenceLabel> labels;
  std::map<std::string, DominantFrameResult> dominants;
  TopicMap topics;
  std::vector<AlignedPair> pairs;
  std::vector<OutletGlmm> models;

  auto stage = [&](const std::string& name, const std::function<std::string()>& body) {
    if (result.failed_stage) {
      result.stages.push_back({name, "skipped", "halted after failure in " + *result.failed_stage});
      return;
    }
    try {
      result.stages.push_back({name, "ok", body()});
    } catch (const std::exception& e) {
      result.stages.push_back({name, "failed", e.what()});
      result.failed_stage = name;
    }
  };
  auto optional_stage = [&](const std::string& name, bool enabled, const std::string& why,
                            const std::function<std::string()>& body) {
    if (!enabled && !result.failed_stage) {
      result.stages.push_back({name, "skipped", why});
      return;
    }
    stage(name, body);
  };

  stage("ingest", [&] {
    auto a = load_corpus(cfg.articles, DocKind::article);
    auto c = load_corpus(cfg.comments, DocKind::comment);
    std::vector<json> errors = flatten(errors_json(a.errors, cfg.articles.filename().string()));
    for (auto& e : flatten(errors_json(c.errors, cfg.comments.filename().string()))) errors.push_back(std::move(e));
    write_error_file(out("store/ingest_errors.jsonl"), errors);
    if (a.documents.empty()) throw std::runtime_error("no articles ingested");
    FilterReport fr;
    store.articles = std::move(a.documents);
    store.comments = filter_comments(c.documents, cfg.min_words, &fr);
    save_store(out.root / "store", store);
    out("store/documents.jsonl");
    const auto links = link(store.articles, store.comments);
    write_json(out("store/ingest.json"), json{{"articles", store.articles.size()},
                                             {"comments_read", fr.input},
                                             {"comments_kept", store.comments.size()},
                                             {"dropped_short", fr.dropped_short},
                                             {"dropped_duplicate", fr.dropped_duplicate},
                                             {"orphan_comments", links.orphans.size()},
                                             {"record_errors", errors.size()},
                                             {"min_words", cfg.min_words}});
    return std::to_string(store.articles.size()) + " articles, " + std::to_string(store.comments.size()) +
           " comments kept, " + std::to_string(errors.size()) + " record errors";
  });

  stage("label", [&] {
    std::vector<Document> docs = store.articles;
    docs.insert(docs.end(), store.comments.begin(), store.comments.end());
    std::vector<json> errors;
    std::string detail;
    if (cfg.labels) {
      auto r = import_predictions(*cfg.labels, &store);
      errors = flatten(errors_json(r.errors, cfg.labels->filename().string()));
      labels = std::move(r.labels);
      detail = "imported";
    } else {
      BaselineModel model;
      if (cfg.model) {
        model = load_model(*cfg.model);
        detail = "baseline model";
      } else {
        std::vector<RecordError> terr;
        const Dataset data = read_training(*cfg.training, &terr);
        errors = flatten(errors_json(terr, cfg.training->filename().string()));
        const Split split = stratified_split(data, 0.8, 0.1, 0.1, cfg.seed);
        TrainConfig tc;
        tc.seed = cfg.seed;
        model = train_baseline(split.train, split.dev, tc);
        save_model(out("labels/model.json"), model);
        json eval{{"train", split.train.size()}, {"dev", split.dev.size()}, {"test", split.test.size()},
                  {"warnings", split.warnings}};
        if (!split.test.empty()) eval["test_report"] = to_json(evaluate(predict(model, split.test), split.test, "test"));
        write_json(out("labels/eval.json"), eval);
        detail = "baseline trained on " + std::to_string(split.train.size()) + " sentences";
      }
      labels = predict(model, docs);
    }
    write_error_file(out("labels/errors.jsonl"), errors);
    write_labels(out("labels/labels.jsonl"), labels);
    return detail + ", " + std::to_string(labels.size()) + " sentence labels";
  });

  stage("dominant", [&] {
    std::vector<std::string> ids;
    for (const auto& d : store.articles) ids.push_back(d.doc_id);
    for (const auto& d : store.comments) ids.push_back(d.doc_id);
    auto batch = dominant_batch(ids, labels, cfg.dominant);
    dominants = std::move(batch.results);
    write_dominant(out("dominant/dominant.jsonl"), dominants);
    std::size_t with = 0;
    for (const auto& [id, r] : dominants) with += r.dominant.has_value();
    return std::to_string(with) + " of " + std::to_string(dominants.size()) + " documents have a dominant frame";
  });

  stage("topics", [&] {
    std::vector<json> errors;
    if (cfg.topics) {
      auto r = import_topics(*cfg.topics, cfg.topic_set);
      errors = flatten(errors_json(r.errors, cfg.topics->filename().string()));
      topics = std::move(r.assignments);
    } else {
      const auto model = fit_centroids(read_seeds(*cfg.seeds, store, cfg.topic_set), cfg.tau);
      save_centroids(out("topics/centroids.json"), model);
      std::vector<Document> docs = store.articles;
      docs.insert(docs.end(), store.comments.begin(), store.comments.end());
      topics = assign_topics(model, docs);
    }
    write_error_file(out("topics/errors.jsonl"), errors);
    write_topics(out("topics/topics.jsonl"), topics);
    return std::to_string(topics.size()) + " topic assignments";
  });

  stage("align", [&] {
    const auto links = link(store.articles, store.comments);
    std::map<std::string, std::string> outlets;
    for (const auto& a : store.articles) outlets[a.doc_id] = a.outlet;
    auto rep = align(links, topics, dominants, outlets);
    pairs = std::move(rep.pairs);
    write_pairs(out("align/pairs.jsonl"), pairs);
    std::size_t linked = 0;
    for (const auto& [a, cs] : links.by_article) linked += cs.size();
    write_json(out("align/align.json"),
               json{{"links", linked}, {"pairs", pairs.size()}, {"excluded", rep.excluded}, {"tau", cfg.tau}});
    return std::to_string(pairs.size()) + " aligned pairs of " + std::to_string(linked) + " links";
  });

  stage("effects", [&] {
    write_corpus_table(out("analysis/table3_corpus.tsv"), store, topics);
    for (const auto& rel : write_analysis(pairs, GroupBy{true, true, true}, cfg.top_k, out.root / "analysis"))
      out.outputs.insert("analysis/" + rel);
    return std::to_string(pairs.size()) + " pairs analysed";
  });

  optional_stage("glmm", cfg.glmm, "disabled in config", [&] {
    const auto outlets = outlets_of(pairs);
    const auto slugs = outlet_slugs(outlets);
    std::size_t fitted = 0;
    for (const auto& o : outlets) {
      std::vector<AlignedPair> mine;
      for (const auto& p : pairs) {
        if (p.outlet == o) mine.push_back(p);
      }
      write_observations(out("glmm/" + slugs.at(o) + ".observations.jsonl"), build_observations(mine));
      models.push_back(fit_outlet_glmm(pairs, o));
      write_json(out("glmm/" + slugs.at(o) + ".json"), to_json(models.back()));
      fitted += models.back().fit.has_value();
    }
    write_topic_table(out("analysis/fig3_retention_by_topic.tsv"), pairs, models);
    return std::to_string(fitted) + " of " + std::to_string(outlets.size()) + " outlets fitted";
  });

  optional_stage("agreement", cfg.annotations.has_value(), "no annotations configured", [&] {
    auto ann = load_annotations(*cfg.annotations);
    std::optional<std::vector<Adjudication>> adj;
    std::vector<json> errors = flatten(errors_json(ann.errors, cfg.annotations->filename().string()));
    if (cfg.adjudications) {
      auto a = load_adjudications(*cfg.adjudications);
      for (auto& e : flatten(errors_json(a.errors, cfg.adjudications->filename().string())))
        errors.push_back(std::move(e));
      adj = std::move(a.adjudications);
    }
    const auto rep = agreement_report(ann.records);
    write_json(out("agreement/agreement.json"),
               json{{"agreement", to_json(rep)}, {"gold", to_json(majority_gold(ann.records, adj))},
                    {"record_errors", errors}});
    return "mean alpha " + format_fixed(rep.mean_alpha, 4);
  });

  stage("report", [&] {
    write_text(out("report.md"), make_report(out.root));
    return std::string("report.md");
  });

  // The manifest is written whatever happened above.
  json inputs = json::array();
  auto add_input = [&](const char* role, const std::optional<fs::path>& p) {
    if (!p) return;
    inputs.push_back({{"role", role}, {"file", p->filename().string()}, {"sha256", sha256_file(*p)}});
  };
  add_input("articles", cfg.articles);
  add_input("comments", cfg.comments);
  add_input("labels", cfg.labels);
  add_input("model", cfg.model);
  add_input("training", cfg.training);
  add_input("topics", cfg.topics);
  add_input("seeds", cfg.seeds);
  add_input("annotations", cfg.annotations);
  add_input("adjudications", cfg.adjudications);

  json outputs = json::array();
  for (const auto& rel : out.outputs) {
    if (fs::exists(out.root / rel)) outputs.push_back({{"path", rel}, {"sha256", sha256_file(out.root / rel)}});
  }
  json stages = json::array();
  for (const auto& s : result.stages) stages.push_back({{"name", s.name}, {"status", s.status}, {"detail", s.detail}});

  const json manifest{{"format", "framing-run-manifest"},
                      {"version", 1},
                      {"modules",
                       {{"framing", kVersion},
                        {"abbreviation_list", std::string(kAbbreviationListVersion)},
                        {"baseline_model_format", 1},
                        {"manifest_format", 1}}},
                      {"config", manifest_config(cfg)},
                      {"inputs", inputs},
                      {"outputs", outputs},
                      {"stages", stages},
                      {"failed_stage", result.failed_stage ? json(*result.failed_stage) : json(nullptr)}};
  result.manifest = out.root / "manifest.json";
  write_json(result.manifest, manifest);
  return result;
}

}  // namespace framing
