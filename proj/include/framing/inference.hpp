#pragma once

// Logistic regression by IRLS and a two-level nested random-intercept
// logistic mixed model fitted by the Laplace approximation:
//
//   logit P(y = 1) = X beta + s_frame * u_frame + s_id * u_id,  u ~ N(0, I)
//
// where every article (id) belongs to exactly one frame group.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "framing/jsonl.hpp"
#include "framing/topics.hpp"

namespace framing {

class InferenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Complete or quasi-complete separation: the likelihood has no finite maximum.
class SeparationError : public InferenceError {
 public:
  using InferenceError::InferenceError;
};

struct RetentionObservation {
  int y = 0;
  std::string topic;
  std::string frame;
  std::string article_id;
  std::string outlet;

  bool operator==(const RetentionObservation&) const = default;
};

/// One observation per pair. Throws InferenceError if an article appears
/// with two dominant frames or two topics.
std::vector<RetentionObservation> build_observations(const std::vector<AlignedPair>& pairs);

json to_json(const RetentionObservation& o);
RetentionObservation parse_observation(const json& rec);
void write_observations(const std::filesystem::path& path, const std::vector<RetentionObservation>& obs);
std::vector<RetentionObservation> read_observations(const std::filesystem::path& path);

/// Treatment-coded design with observations sorted by (frame, article, y,
/// topic, outlet). Articles and frames occupy contiguous ranges, which is
/// what the nested solver relies on, and the sort makes every fit
/// independent of input order.
struct GlmmDesign {
  std::vector<std::string> topics;    // sorted; topics[0] is the reference
  std::vector<std::string> frames;    // sorted
  std::vector<std::string> articles;  // in design order
  std::vector<std::string> coef_names;
  std::size_t n = 0;
  std::vector<std::vector<double>> X;  // column-major, p columns of n
  std::vector<double> y;
  std::vector<std::size_t> article_begin;  // A + 1 offsets into observations
  std::vector<std::size_t> frame_begin;    // F + 1 offsets into articles
  std::vector<std::size_t> article_topic;  // topic index per article

  std::size_t p() const { return X.size(); }
};

/// Throws InferenceError on an empty input or an article whose frame or
/// topic is inconsistent.
GlmmDesign make_design(const std::vector<RetentionObservation>& obs);

struct IrlsOptions {
  std::size_t max_iterations = 50;
  double deviance_tol = 1e-8;
  double separation_eta = 15.0;  // |eta| beyond this means a fitted 0 or 1 (p < 3.1e-7)
};

struct LogisticFit {
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;  // inverse Fisher information
  double deviance = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Maximum-likelihood logistic regression. `columns` holds the design
/// column by column (include the intercept yourself). Throws InferenceError
/// if y is constant or not 0/1, and SeparationError when a fitted linear
/// predictor runs off to infinity.
LogisticFit fit_logistic(const std::vector<std::vector<double>>& columns, const std::vector<double>& y,
                         const IrlsOptions& opts = {});
LogisticFit fit_logistic(const GlmmDesign& d, const IrlsOptions& opts = {});
LogisticFit fit_logistic(const std::vector<RetentionObservation>& obs, const IrlsOptions& opts = {});

/// Laplace deviance -2 sum log p(y | u) + |u|^2 + log det H with H = I +
/// Lambda Z' W Z Lambda, evaluated at the conditional mode of u.
struct LaplaceEval {
  double deviance = 0.0;
  Eigen::VectorXd grad_beta;
  double grad_s_frame = 0.0;  // dF / d s_frame
  double grad_s_id = 0.0;     // dF / d s_id
  std::vector<double> u_frame;
  std::vector<double> u_id;
  std::size_t inner_iterations = 0;
};

class LaplaceObjective {
 public:
  explicit LaplaceObjective(const GlmmDesign& d) : d_(d) {}
  /// Standard deviations must be >= 0.
  LaplaceEval evaluate(const Eigen::VectorXd& beta, double s_frame, double s_id) const;

 private:
  const GlmmDesign& d_;
};

struct GlmmConfig {
  std::size_t max_iterations = 200;
  double objective_tol = 1e-6;
  double gradient_tol = 1e-4;
  double sigma_floor = 1e-6;   // lower bound on each standard deviation
  double start_sigma2 = 0.5;
  double boundary_sigma2 = 1e-4;
  /// Hold (s_frame, s_id) fixed and optimize beta only. Zero is allowed.
  std::optional<std::pair<double, double>> fixed_sigma;
  /// Overrides the fixed-effects-only starting point.
  std::optional<std::vector<double>> start_beta;
};

struct GlmmFit {
  std::vector<std::string> names;
  std::vector<std::string> topics;
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;  // Wald covariance of beta
  double sigma_frame = 0.0;    // standard deviations
  double sigma_id = 0.0;
  std::map<std::string, double> frame_effects;  // s_frame * u_frame at the mode
  std::map<std::string, double> id_effects;
  double deviance = 0.0;
  double start_deviance = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  bool boundary_frame = false;
  bool boundary_id = false;
  std::size_t iterations = 0;
  std::size_t n = 0;
  std::string message;
};

/// Needs >= 2 topics, >= 2 frame groups and both outcomes present
/// (InferenceError otherwise). Never throws for non-convergence; check
/// `converged` and `message`.
GlmmFit fit_glmm(const GlmmDesign& d, const GlmmConfig& cfg = {});
GlmmFit fit_glmm(const std::vector<RetentionObservation>& obs, const GlmmConfig& cfg = {});

struct MarginalEffect {
  std::string topic;
  double probability = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// inverse-logit(beta0 + beta_topic) with random effects at zero, and a
/// 95% Wald interval on the logit scale. Throws InferenceError when the fit
/// did not converge.
std::vector<MarginalEffect> marginal_effects(const GlmmFit& fit);

json to_json(const GlmmFit& fit, const std::vector<MarginalEffect>& marginals);

double inv_logit(double x);
/// Standard normal quantile, p in (0, 1).
double normal_quantile(double p);

/// Nested planted-parameter generator: frames x articles_per_frame x
/// comments_per_article observations, topics assigned round robin within
/// each frame.
struct NestedSimulation {
  std::size_t frames = 8;
  std::size_t articles_per_frame = 50;
  std::size_t comments_per_article = 30;
  std::vector<double> beta = {-0.5, 0.8};  // intercept, then one contrast per extra topic
  double sigma_frame = 0.6;
  double sigma_id = 0.8;
  /// Use standardized normal quantiles (mean 0, mean square 1) in shuffled
  /// order instead of independent draws, so the realized effects have
  /// exactly the planted spread.
  bool moment_matched = true;
  std::uint64_t seed = 1;
  std::string outlet = "sim";
};

struct SimulatedData {
  std::vector<RetentionObservation> observations;
  std::vector<std::string> topics;  // index i carries beta[i] (0 = reference)
  std::map<std::string, double> frame_effects;
  std::map<std::string, double> id_effects;
};

SimulatedData simulate_nested(const NestedSimulation& sim);

}  // namespace framing
