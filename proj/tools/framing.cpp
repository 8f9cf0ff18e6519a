// Command-line front end. Every stage reads and writes the documented file
// formats, so stages can run in separate processes or be replaced by
// external tools.

#include <cstdlib>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "framing/agreement.hpp"
#include "framing/classifier.hpp"
#include "framing/corpus.hpp"
#include "framing/dominant.hpp"
#include "framing/effects.hpp"
#include "framing/inference.hpp"
#include "framing/pipeline.hpp"
#include "framing/synthetic.hpp"
#include "framing/taxonomy.hpp"
#include "framing/topics.hpp"

namespace fs = std::filesystem;
using namespace framing;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void report_errors(const std::string& what, const std::vector<RecordError>& errors) {
  if (errors.empty()) return;
  std::cerr << what << ": " << errors.size() << " record error(s)\n";
  for (std::size_t i = 0; i < errors.size() && i < 5; ++i)
    std::cerr << "  line " << errors[i].line << " [" << errors[i].field << "] " << errors[i].message << "\n";
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<Document> all_documents(const Store& store) {
  std::vector<Document> docs = store.articles;
  docs.insert(docs.end(), store.comments.begin(), store.comments.end());
  return docs;
}

// --- verbs -----------------------------------------------------------------

struct IngestArgs {
  std::string articles, comments, out;
  std::size_t min_words = 5;
};

int do_ingest(const IngestArgs& a) {
  auto arts = load_corpus(a.articles, DocKind::article);
  auto coms = load_corpus(a.comments, DocKind::comment);
  report_errors(a.articles, arts.errors);
  report_errors(a.comments, coms.errors);
  std::vector<json> errors;
  auto add = [&](const std::vector<RecordError>& es, const std::string& file) {
    for (const auto& e : es) {
      json j = to_json(e);
      j["file"] = fs::path(file).filename().string();
      errors.push_back(std::move(j));
    }
  };
  add(arts.errors, a.articles);
  add(coms.errors, a.comments);
  FilterReport fr;
  Store store{std::move(arts.documents), filter_comments(coms.documents, a.min_words, &fr)};
  save_store(a.out, store);
  write_jsonl(fs::path(a.out) / "ingest_errors.jsonl", errors);
  write_json(fs::path(a.out) / "ingest.json", json{{"articles", store.articles.size()},
                                                    {"comments_read", fr.input},
                                                    {"comments_kept", store.comments.size()},
                                                    {"dropped_short", fr.dropped_short},
                                                    {"dropped_duplicate", fr.dropped_duplicate},
                                                    {"record_errors", errors.size()},
                                                    {"min_words", a.min_words}});
  std::cout << store.articles.size() << " articles, " << store.comments.size() << " comments kept ("
            << fr.dropped_short << " short, " << fr.dropped_duplicate << " duplicate)\n";
  return 0;
}

struct ProjectArgs {
  std::string spans, docs, out;
};

int do_project(const ProjectArgs& a) {
  const Store store = load_store(a.docs);
  auto spans = load_spans(a.spans);
  report_errors(a.spans, spans.errors);
  const auto r = build_training_set(store, spans.spans);
  report_errors("projection", r.errors);
  std::vector<json> recs;
  for (const auto& t : r.sentences) recs.push_back(to_json(t));
  write_jsonl(a.out, recs);
  std::cout << r.sentences.size() << " labeled sentences, " << r.dropped_by_merge << " spans dropped by the merge map, "
            << r.unknown_docs << " spans on unknown documents\n";
  return 0;
}

struct TrainArgs {
  std::string data, out, report;
  std::uint64_t seed = 0;
  int hash_bits = 18;
  double lambda = 1e-4;
  std::size_t max_iterations = 300;
};

int do_train(const TrainArgs& a) {
  Dataset data;
  const auto errors = read_jsonl(a.data, [&](const json& rec, std::size_t) { data.push_back(parse_training_sentence(rec)); });
  report_errors(a.data, errors);
  const Split split = stratified_split(data, 0.8, 0.1, 0.1, a.seed);
  for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
  TrainConfig cfg;
  cfg.seed = a.seed;
  cfg.features.hash_bits = a.hash_bits;
  cfg.lambda = a.lambda;
  cfg.max_iterations = a.max_iterations;
  const auto model = train_baseline(split.train, split.dev, cfg);
  save_model(a.out, model);
  json rep{{"train", split.train.size()}, {"dev", split.dev.size()}, {"test", split.test.size()},
           {"iterations", model.iterations}, {"warnings", split.warnings}};
  if (!split.test.empty()) {
    const auto ev = evaluate(predict(model, split.test), split.test, "held-out test split");
    rep["test_report"] = to_json(ev);
    std::cout << "test macro-F1 " << format_fixed(ev.macro_f1, 4) << " on " << ev.n << " sentences\n";
  }
  if (!a.report.empty()) write_json(a.report, rep);
  return 0;
}

struct LabelArgs {
  std::string model, import, docs, out;
};

int do_label(const LabelArgs& a) {
  const Store store = load_store(a.docs);
  std::vector<SentenceLabel> labels;
  if (!a.import.empty()) {
    auto r = import_predictions(a.import, &store);
    report_errors(a.import, r.errors);
    labels = std::move(r.labels);
  } else {
    labels = predict(load_model(a.model), all_documents(store));
  }
  write_labels(a.out, labels);
  std::cout << labels.size() << " sentence labels\n";
  return 0;
}

struct DominantArgs {
  std::string labels, out, docs;
  std::size_t min_support = 3;
  double min_coverage = 0.40;
};

int do_dominant(const DominantArgs& a) {
  if (a.min_support < 1 || !(a.min_coverage > 0.0 && a.min_coverage <= 1.0))
    throw ConfigError("min-support must be >= 1 and min-coverage must lie in (0, 1]");
  auto r = read_labels(a.labels, LabelSource::imported);
  report_errors(a.labels, r.errors);
  std::vector<std::string> ids;
  if (!a.docs.empty()) {
    for (const auto& d : all_documents(load_store(a.docs))) ids.push_back(d.doc_id);
  } else {
    std::set<std::string> seen;
    for (const auto& l : r.labels) {
      if (seen.insert(l.doc_id).second) ids.push_back(l.doc_id);
    }
  }
  const auto batch = dominant_batch(ids, r.labels, DominantConfig{a.min_support, a.min_coverage});
  for (const auto& w : batch.warnings) std::cerr << "warning: " << w << "\n";
  write_dominant(a.out, batch.results);
  std::size_t with = 0;
  for (const auto& [id, d] : batch.results) with += d.dominant.has_value();
  std::cout << with << " of " << batch.results.size() << " documents have a dominant frame\n";
  return 0;
}

struct AlignArgs {
  std::string topics, seeds, dominants, docs, out, topics_out, centroids_out, summary;
  std::string topic_set;
  double tau = 0.05;
};

int do_align(const AlignArgs& a) {
  const auto topic_set = a.topic_set.empty() ? default_topic_set() : split_commas(a.topic_set);
  const Store store = load_store(a.docs);
  TopicMap topics;
  if (!a.topics.empty()) {
    auto r = import_topics(a.topics, topic_set);
    report_errors(a.topics, r.errors);
    topics = std::move(r.assignments);
  } else {
    std::map<std::string, std::vector<std::string>> seeds;
    const std::set<std::string> allowed(topic_set.begin(), topic_set.end());
    const auto errors = read_jsonl(a.seeds, [&](const json& rec, std::size_t) {
      const auto topic = require_string(rec, "topic");
      if (!allowed.count(topic)) throw RecordFieldError("topic", "seed topic '" + topic + "' is not in the topic set");
      if (auto text = optional_string(rec, "text")) {
        seeds[topic].push_back(*text);
      } else {
        const Document* d = store.find(require_string(rec, "doc_id"));
        if (!d) throw RecordFieldError("doc_id", "seed document is not in the store");
        seeds[topic].push_back(d->text);
      }
    });
    report_errors(a.seeds, errors);
    const auto model = fit_centroids(seeds, a.tau);
    if (!a.centroids_out.empty()) save_centroids(a.centroids_out, model);
    topics = assign_topics(model, all_documents(store));
  }
  if (!a.topics_out.empty()) write_topics(a.topics_out, topics);
  auto dom = read_dominant(a.dominants);
  report_errors(a.dominants, dom.errors);
  std::map<std::string, std::string> outlets;
  for (const auto& d : store.articles) outlets[d.doc_id] = d.outlet;
  const auto rep = align(link(store.articles, store.comments), topics, dom.results, outlets);
  write_pairs(a.out, rep.pairs);
  if (!a.summary.empty()) write_json(a.summary, json{{"pairs", rep.pairs.size()}, {"excluded", rep.excluded}});
  std::cout << rep.pairs.size() << " aligned pairs";
  for (const auto& [reason, n] : rep.excluded) std::cout << ", " << n << " " << reason;
  std::cout << "\n";
  return 0;
}

struct AgreementArgs {
  std::string annotations, adjudications, report;
};

int do_agreement(const AgreementArgs& a) {
  auto ann = load_annotations(a.annotations);
  report_errors(a.annotations, ann.errors);
  std::optional<std::vector<Adjudication>> adj;
  if (!a.adjudications.empty()) {
    auto r = load_adjudications(a.adjudications);
    report_errors(a.adjudications, r.errors);
    adj = std::move(r.adjudications);
  }
  const auto rep = agreement_report(ann.records);
  write_json(a.report, json{{"agreement", to_json(rep)}, {"gold", to_json(majority_gold(ann.records, adj))}});
  std::cout << "mean alpha " << format_fixed(rep.mean_alpha, 4) << " over " << rep.defined_labels
            << " labels, Jaccard " << format_fixed(rep.jaccard, 4) << "\n";
  return 0;
}

struct AnalyzeArgs {
  std::string pairs, by = "outlet,topic,frame", report;
  std::size_t top_k = 5;
};

int do_analyze(const AnalyzeArgs& a) {
  const GroupBy by = parse_group_by(a.by);
  const auto pairs = read_pairs(a.pairs);
  const auto files = write_analysis(pairs, by, a.top_k, a.report);
  std::cout << pairs.size() << " pairs, " << files.size() << " files written to " << a.report << "\n";
  return 0;
}

struct GlmmArgs {
  std::string pairs, outlet, report, observations;
};

int do_glmm(const GlmmArgs& a) {
  const auto pairs = read_pairs(a.pairs);
  if (!a.observations.empty()) {
    std::vector<AlignedPair> mine;
    for (const auto& p : pairs) {
      if (p.outlet == a.outlet) mine.push_back(p);
    }
    write_observations(a.observations, build_observations(mine));
  }
  const auto g = fit_outlet_glmm(pairs, a.outlet);
  write_json(a.report, to_json(g));
  if (!g.fit) {
    std::cout << "skipped: " << g.skipped_reason << "\n";
  } else {
    std::cout << (g.fit->converged ? "converged" : "not converged") << ", sigma_frame "
              << format_fixed(g.fit->sigma_frame, 4) << ", sigma_id " << format_fixed(g.fit->sigma_id, 4) << "\n";
  }
  return 0;
}

struct ReportArgs {
  std::string bundle, out;
};

int do_report(const ReportArgs& a) {
  write_text(a.out, make_report(a.bundle));
  return 0;
}

struct RunArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> min_support, min_words, top_k;
  std::optional<double> min_coverage, tau;
  bool no_glmm = false;
};

int do_run(const RunArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (!a.out.empty()) {
    cfg.out_dir = a.out;
  } else if (cfg.out_dir.empty()) {
    if (const char* env = std::getenv("FRAMING_OUT_DIR"); env && *env) cfg.out_dir = env;
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.min_support) cfg.dominant.min_support = *a.min_support;
  if (a.min_coverage) cfg.dominant.min_coverage = *a.min_coverage;
  if (a.min_words) cfg.min_words = *a.min_words;
  if (a.tau) cfg.tau = *a.tau;
  if (a.top_k) cfg.top_k = *a.top_k;
  if (a.no_glmm) cfg.glmm = false;
  const auto r = run_pipeline(cfg);
  for (const auto& s : r.stages) std::cout << s.name << ": " << s.status << (s.detail.empty() ? "" : " (" + s.detail + ")") << "\n";
  std::cout << "manifest: " << r.manifest.string() << "\n";
  return r.ok() ? 0 : kExitRuntime;
}

struct SynthArgs {
  std::string out;
  std::vector<std::string> outlets{"SOCC:1000:10:0.37", "NYT:1000:10:0.51"};
  std::string topics;
  std::uint64_t seed = 1;
  std::size_t training_per_frame = 0, seeds_per_topic = 0, annotation_units = 0;
};

int do_synth(const SynthArgs& a) {
  PlantedCorpusConfig cfg;
  cfg.seed = a.seed;
  if (!a.topics.empty()) cfg.topics = split_commas(a.topics);
  for (const auto& spec : a.outlets) {
    const auto parts = [&] {
      std::vector<std::string> p;
      std::stringstream in(spec);
      std::string s;
      while (std::getline(in, s, ':')) p.push_back(s);
      return p;
    }();
    if (parts.size() != 4) throw ConfigError("outlet spec must be NAME:ARTICLES:COMMENTS:RETENTION, got '" + spec + "'");
    try {
      cfg.outlets.push_back(PlantedOutlet{parts[0], std::stoul(parts[1]), std::stoul(parts[2]), std::stod(parts[3])});
    } catch (const std::logic_error&) {
      throw ConfigError("bad number in outlet spec '" + spec + "'");
    }
  }
  const auto corpus = make_planted_corpus(cfg);
  write_planted_corpus(a.out, corpus);
  std::mt19937_64 rng(a.seed ^ 0x5eedULL);
  if (a.training_per_frame) {
    std::vector<json> recs;
    for (const auto& t : cue_training_set(rng, a.training_per_frame, cfg.topics)) recs.push_back(to_json(t));
    write_jsonl(fs::path(a.out) / "training.jsonl", recs);
  }
  if (a.seeds_per_topic) write_jsonl(fs::path(a.out) / "seeds.jsonl", topic_seed_records(cfg.topics, a.seeds_per_topic));
  if (a.annotation_units) {
    std::vector<json> recs;
    for (const auto& r : simulate_annotations(rng, a.annotation_units, 3, 0.8)) recs.push_back(to_json(r));
    write_jsonl(fs::path(a.out) / "annotations.jsonl", recs);
  }
  std::cout << corpus.articles.size() << " articles, " << corpus.comments.size() << " comments written to " << a.out
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame retention analysis of news articles and reader comments"};
  app.require_subcommand(1);
  int code = 0;

  IngestArgs ingest;
  auto* c = app.add_subcommand("ingest", "Parse, split and filter documents into a store");
  c->add_option("--articles", ingest.articles, "Articles file (JSONL)")->required()->check(CLI::ExistingFile);
  c->add_option("--comments", ingest.comments, "Comments file (JSONL)")->required()->check(CLI::ExistingFile);
  c->add_option("--out", ingest.out, "Store directory")->required();
  c->add_option("--min-words", ingest.min_words, "Minimum comment length in words")->capture_default_str();
  c->callback([&] { code = do_ingest(ingest); });

  ProjectArgs project;
  c = app.add_subcommand("project", "Project span annotations onto sentences");
  c->add_option("--spans", project.spans)->required()->check(CLI::ExistingFile);
  c->add_option("--docs", project.docs, "Store directory")->required()->check(CLI::ExistingDirectory);
  c->add_option("--out", project.out, "Training sentences file")->required();
  c->callback([&] { code = do_project(project); });

  TrainArgs train;
  c = app.add_subcommand("train-baseline", "Train the hashed n-gram baseline classifier");
  c->add_option("--data", train.data, "Training sentences file")->required()->check(CLI::ExistingFile);
  c->add_option("--seed", train.seed)->capture_default_str();
  c->add_option("--out", train.out, "Model file")->required();
  c->add_option("--report", train.report, "Evaluation report (JSON)");
  c->add_option("--hash-bits", train.hash_bits)->capture_default_str()->check(CLI::Range(8, 24));
  c->add_option("--lambda", train.lambda)->capture_default_str()->check(CLI::NonNegativeNumber);
  c->add_option("--max-iterations", train.max_iterations)->capture_default_str();
  c->callback([&] { code = do_train(train); });

  LabelArgs label;
  c = app.add_subcommand("label", "Label every sentence in a store");
  auto* model_opt = c->add_option("--model", label.model, "Baseline model file")->check(CLI::ExistingFile);
  auto* import_opt = c->add_option("--import", label.import, "External predictions file")->check(CLI::ExistingFile);
  model_opt->excludes(import_opt);
  c->add_option("--docs", label.docs, "Store directory")->required()->check(CLI::ExistingDirectory);
  c->add_option("--out", label.out, "Labels file")->required();
  c->callback([&] {
    if (label.model.empty() && label.import.empty()) throw ConfigError("label needs --model or --import");
    code = do_label(label);
  });

  DominantArgs dominant;
  c = app.add_subcommand("dominant", "Reduce sentence labels to one dominant frame per document");
  c->add_option("--labels", dominant.labels)->required()->check(CLI::ExistingFile);
  c->add_option("--out", dominant.out)->required();
  c->add_option("--docs", dominant.docs, "Store directory; lists documents without labels too")
      ->check(CLI::ExistingDirectory);
  c->add_option("--min-support", dominant.min_support)->capture_default_str();
  c->add_option("--min-coverage", dominant.min_coverage)->capture_default_str();
  c->callback([&] { code = do_dominant(dominant); });

  AlignArgs al;
  c = app.add_subcommand("align", "Assign topics and align article/comment pairs");
  auto* topics_opt = c->add_option("--topics", al.topics, "Topic assignments file")->check(CLI::ExistingFile);
  auto* seeds_opt = c->add_option("--seeds", al.seeds, "Seed records {topic, text|doc_id}")->check(CLI::ExistingFile);
  topics_opt->excludes(seeds_opt);
  c->add_option("--dominants", al.dominants)->required()->check(CLI::ExistingFile);
  c->add_option("--docs", al.docs, "Store directory")->required()->check(CLI::ExistingDirectory);
  c->add_option("--out", al.out, "Aligned pairs file")->required();
  c->add_option("--tau", al.tau, "Minimum cosine for a topic")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  c->add_option("--topic-set", al.topic_set, "Comma-separated topic set (default: the eleven groups)");
  c->add_option("--topics-out", al.topics_out, "Write the topic assignments used");
  c->add_option("--centroids-out", al.centroids_out, "Write the fitted centroid model");
  c->add_option("--summary", al.summary, "Write pair and exclusion counts (JSON)");
  c->callback([&] {
    if (al.topics.empty() && al.seeds.empty()) throw ConfigError("align needs --topics or --seeds");
    code = do_align(al);
  });

  AgreementArgs agr;
  c = app.add_subcommand("agreement", "Inter-annotator agreement and majority gold");
  c->add_option("--annotations", agr.annotations)->required()->check(CLI::ExistingFile);
  c->add_option("--adjudications", agr.adjudications)->check(CLI::ExistingFile);
  c->add_option("--report", agr.report)->required();
  c->callback([&] { code = do_agreement(agr); });

  AnalyzeArgs an;
  c = app.add_subcommand("analyze", "Retention, independence tests and reframings");
  c->add_option("--pairs", an.pairs)->required()->check(CLI::ExistingFile);
  c->add_option("--by", an.by, "Grouping for retention.tsv")->capture_default_str();
  c->add_option("--report", an.report, "Output directory")->required();
  c->add_option("--top-k", an.top_k)->capture_default_str()->check(CLI::PositiveNumber);
  c->callback([&] { code = do_analyze(an); });

  GlmmArgs gl;
  c = app.add_subcommand("glmm", "Fit the retention mixed model for one outlet");
  c->add_option("--pairs", gl.pairs)->required()->check(CLI::ExistingFile);
  c->add_option("--outlet", gl.outlet)->required();
  c->add_option("--report", gl.report)->required();
  c->add_option("--observations", gl.observations, "Also write the observations file");
  c->callback([&] { code = do_glmm(gl); });

  ReportArgs rep;
  c = app.add_subcommand("report", "Markdown summary of a run bundle");
  c->add_option("--bundle", rep.bundle)->required()->check(CLI::ExistingDirectory);
  c->add_option("--out", rep.out)->required();
  c->callback([&] { code = do_report(rep); });

  RunArgs run;
  c = app.add_subcommand("run", "Run the full pipeline from a config file");
  c->add_option("--config", run.config)->required()->check(CLI::ExistingFile);
  c->add_option("--out", run.out, "Output directory (overrides the config and FRAMING_OUT_DIR)");
  c->add_option("--seed", run.seed);
  c->add_option("--min-support", run.min_support);
  c->add_option("--min-coverage", run.min_coverage);
  c->add_option("--min-words", run.min_words);
  c->add_option("--tau", run.tau);
  c->add_option("--top-k", run.top_k);
  c->add_flag("--no-glmm", run.no_glmm, "Skip the mixed model");
  c->callback([&] { code = do_run(run); });

  SynthArgs syn;
  c = app.add_subcommand("synth", "Write a planted-parameter corpus");
  c->add_option("--out", syn.out, "Output directory")->required();
  c->add_option("--outlet", syn.outlets, "NAME:ARTICLES:COMMENTS_PER_ARTICLE:RETENTION (repeatable)");
  c->add_option("--topics", syn.topics, "Comma-separated topics (default: the eleven groups)");
  c->add_option("--seed", syn.seed)->capture_default_str();
  c->add_option("--training", syn.training_per_frame, "Also write training.jsonl with N sentences per frame");
  c->add_option("--seeds", syn.seeds_per_topic, "Also write seeds.jsonl with N records per topic");
  c->add_option("--annotations", syn.annotation_units, "Also write annotations.jsonl with N units");
  c->callback([&] { code = do_synth(syn); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return code;
}
