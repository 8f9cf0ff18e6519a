#pragma once

// Sentence-level frame labels: import of external predictions, a hashed
// n-gram softmax baseline, and the evaluation protocol.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "framing/corpus.hpp"
#include "framing/frame.hpp"
#include "framing/jsonl.hpp"
#include "framing/taxonomy.hpp"

namespace framing {

using Dataset = std::vector<TrainingSentence>;

// ---------------------------------------------------------------------------
// Import

struct ImportResult {
  std::vector<SentenceLabel> labels;
  std::vector<RecordError> errors;
};

/// Reads {doc_id, sentence_index, label, score} records. Labels may be codes
/// (1-10, number or string) or canonical names; score must lie in [0, 1].
/// With a store, records naming an unknown document or sentence are errors.
ImportResult import_predictions(const std::filesystem::path& path, const Store* store = nullptr);

json to_json(const SentenceLabel& l);
SentenceLabel parse_sentence_label(const json& rec, LabelSource default_source);

void write_labels(const std::filesystem::path& path, const std::vector<SentenceLabel>& labels);
/// Reads a labels file written by write_labels (or a predictions file).
ImportResult read_labels(const std::filesystem::path& path, LabelSource default_source);

// ---------------------------------------------------------------------------
// Splits

struct Split {
  Dataset train, dev, test;
  std::vector<std::string> warnings;
};

/// Stratifies by (topic, lowest-code label). Within a stratum of n items,
/// dev and test get round(n * ratio) items each and train the rest; strata
/// with fewer than 3 items go to train with a warning. Item order inside
/// each part follows the input order.
Split stratified_split(const Dataset& data, double train_ratio = 0.8, double dev_ratio = 0.1,
                       double test_ratio = 0.1, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Baseline

struct FeatureConfig {
  int max_ngram = 2;  // 1 = unigrams, 2 = uni + bigrams
  int hash_bits = 18;
  bool case_fold = true;

  std::size_t dim() const { return std::size_t{1} << hash_bits; }
  bool operator==(const FeatureConfig&) const = default;
};

/// Sorted, de-duplicated, L2-normalized (feature, value) pairs.
using SparseVec = std::vector<std::pair<std::uint32_t, double>>;

SparseVec featurize(std::string_view text, const FeatureConfig& cfg);

struct TrainConfig {
  FeatureConfig features;
  double lambda = 1e-4;
  std::size_t max_iterations = 300;
  std::size_t eval_every = 10;
  std::size_t patience = 2;
  std::uint64_t seed = 0;
};

struct BaselineModel {
  FeatureConfig features;
  std::vector<double> weights;  // dim() x 10, feature-major
  std::array<double, kFrameCount> bias{};
  // Training metadata.
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::size_t iterations = 0;
  std::vector<double> loss_history;  // objective at each evaluation
  std::vector<double> dev_history;   // dev macro-F1 at each evaluation

  std::array<double, kFrameCount> probabilities(std::string_view text) const;
  std::array<double, kFrameCount> probabilities(const SparseVec& x) const;
};

/// Multinomial logistic regression problem over fixed sparse inputs:
/// mean cross-entropy plus (lambda / 2) * |W|^2 (bias unpenalized).
struct SoftmaxProblem {
  std::vector<SparseVec> x;
  std::vector<std::size_t> y;  // dense label index 0..9
  std::size_t dim = 0;
  double lambda = 0.0;

  /// Objective value; fills the gradients when the pointers are non-null.
  double evaluate(const std::vector<double>& w, const std::array<double, kFrameCount>& b, std::vector<double>* gw,
                  std::array<double, kFrameCount>* gb) const;
};

/// Full-batch gradient descent with a fixed step that guarantees a monotone
/// objective. Dev macro-F1 is checked every eval_every iterations; training
/// stops after `patience` evaluations without improvement and keeps the best
/// parameters. Throws std::invalid_argument for an empty or single-class
/// training set.
BaselineModel train_baseline(const Dataset& train, const Dataset& dev, const TrainConfig& cfg);

void save_model(const std::filesystem::path& path, const BaselineModel& m);
BaselineModel load_model(const std::filesystem::path& path);

/// Argmax of the softmax, ties to the lowest code; score is the probability.
SentenceLabel predict_one(const BaselineModel& m, const std::string& doc_id, std::size_t sentence_index,
                          std::string_view text);
std::vector<SentenceLabel> predict(const BaselineModel& m, const std::vector<Document>& docs);
std::vector<SentenceLabel> predict(const BaselineModel& m, const Dataset& items);

// ---------------------------------------------------------------------------
// Evaluation

struct LabelScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  std::array<LabelScores, kFrameCount> per_label{};
  double macro_f1 = 0.0;
  std::size_t n = 0;
  std::string description;
  // Rows: effective gold, columns: prediction.
  std::array<std::array<std::size_t, kFrameCount>, kFrameCount> confusion{};
};

class EvaluationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A prediction is correct when it is in the gold set. Each item's effective
/// gold label is the prediction when correct, otherwise the lowest-code gold
/// label; per-label scores are one-vs-rest on effective gold and macro-F1
/// averages the labels that occur in it. Throws EvaluationError when the key
/// sets differ.
EvalReport evaluate(const std::vector<SentenceLabel>& predictions, const Dataset& gold,
                    const std::string& description = "");

json to_json(const EvalReport& r);

/// Produces one prediction per test item from a training set.
using TrainPredictFn = std::function<std::vector<SentenceLabel>(const Dataset& train, const Dataset& test)>;

struct TopicFoldReport {
  std::map<std::string, EvalReport> folds;
  double mean_macro_f1 = 0.0;
};

/// Trains on all topics but one and evaluates on the held-out one, for every
/// topic. Throws std::invalid_argument with fewer than two topics.
TopicFoldReport leave_one_topic_out(const Dataset& data, const TrainPredictFn& train_fn);

/// train_fn backed by the baseline: 10% of the training part (stratified)
/// serves as dev data.
TrainPredictFn baseline_train_fn(const TrainConfig& cfg);

}  // namespace framing
