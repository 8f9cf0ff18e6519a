#include "framing/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "framing/kernels.hpp"
#include "framing/random.hpp"

namespace framing {

namespace kn = kernels;

double inv_logit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile needs p in (0, 1)");
  // Rational approximation (Acklam) followed by one Halley step against erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - lo) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

// ---------------------------------------------------------------------------
// Observations

std::vector<RetentionObservation> build_observations(const std::vector<AlignedPair>& pairs) {
  std::map<std::string, std::pair<Frame, std::string>> seen;
  std::vector<RetentionObservation> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto [it, fresh] = seen.emplace(p.article_id, std::make_pair(p.article_frame, p.topic));
    if (!fresh) {
      if (it->second.first != p.article_frame)
        throw InferenceError("article '" + p.article_id + "' appears with two dominant frames");
      if (it->second.second != p.topic) throw InferenceError("article '" + p.article_id + "' appears with two topics");
    }
    out.push_back({p.article_frame == p.comment_frame ? 1 : 0, p.topic, std::string(name(p.article_frame)),
                   p.article_id, p.outlet});
  }
  return out;
}

json to_json(const RetentionObservation& o) {
  return json{{"y", o.y}, {"topic", o.topic}, {"frame", o.frame}, {"article_id", o.article_id}, {"outlet", o.outlet}};
}

RetentionObservation parse_observation(const json& rec) {
  RetentionObservation o;
  const auto y = require_int(rec, "y");
  if (y != 0 && y != 1) throw RecordFieldError("y", "y must be 0 or 1");
  o.y = static_cast<int>(y);
  o.topic = require_string(rec, "topic");
  o.frame = require_string(rec, "frame");
  o.article_id = require_string(rec, "article_id");
  o.outlet = optional_string(rec, "outlet").value_or("");
  return o;
}

void write_observations(const std::filesystem::path& path, const std::vector<RetentionObservation>& obs) {
  std::vector<json> recs;
  recs.reserve(obs.size());
  for (const auto& o : obs) recs.push_back(to_json(o));
  write_jsonl(path, recs);
}

std::vector<RetentionObservation> read_observations(const std::filesystem::path& path) {
  std::vector<RetentionObservation> out;
  auto errors = read_jsonl(path, [&](const json& rec, std::size_t) { out.push_back(parse_observation(rec)); });
  if (!errors.empty()) {
    const auto& e = errors.front();
    throw InputError(path.string() + ":" + std::to_string(e.line) + ": " + e.field + ": " + e.message);
  }
  return out;
}

GlmmDesign make_design(const std::vector<RetentionObservation>& input) {
  if (input.empty()) throw InferenceError("no observations");
  std::vector<const RetentionObservation*> obs;
  obs.reserve(input.size());
  for (const auto& o : input) obs.push_back(&o);
  std::sort(obs.begin(), obs.end(), [](const RetentionObservation* a, const RetentionObservation* b) {
    return std::tie(a->frame, a->article_id, a->y, a->topic, a->outlet) <
           std::tie(b->frame, b->article_id, b->y, b->topic, b->outlet);
  });

  GlmmDesign d;
  std::set<std::string> topics, frames;
  std::map<std::string, std::pair<std::string, std::string>> article_info;
  for (const auto* o : obs) {
    if (o->y != 0 && o->y != 1) throw InferenceError("outcome must be 0 or 1");
    auto [it, fresh] = article_info.emplace(o->article_id, std::make_pair(o->frame, o->topic));
    if (!fresh && it->second.first != o->frame)
      throw InferenceError("article '" + o->article_id + "' appears with two frames");
    if (!fresh && it->second.second != o->topic)
      throw InferenceError("article '" + o->article_id + "' appears with two topics");
    topics.insert(o->topic);
    frames.insert(o->frame);
  }
  d.topics.assign(topics.begin(), topics.end());
  d.frames.assign(frames.begin(), frames.end());
  d.n = obs.size();
  d.coef_names.push_back("(Intercept)");
  for (std::size_t t = 1; t < d.topics.size(); ++t) d.coef_names.push_back("topic[" + d.topics[t] + "]");
  d.X.assign(d.topics.size(), std::vector<double>(d.n, 0.0));
  d.y.resize(d.n);

  std::map<std::string, std::size_t> topic_index;
  for (std::size_t t = 0; t < d.topics.size(); ++t) topic_index[d.topics[t]] = t;
  const std::string* prev_frame = nullptr;
  for (std::size_t i = 0; i < d.n; ++i) {
    const auto* o = obs[i];
    const std::size_t t = topic_index.at(o->topic);
    d.X[0][i] = 1.0;
    if (t > 0) d.X[t][i] = 1.0;
    d.y[i] = o->y;
    if (d.articles.empty() || d.articles.back() != o->article_id) {
      if (!prev_frame || *prev_frame != o->frame) d.frame_begin.push_back(d.articles.size());
      prev_frame = &o->frame;
      d.articles.push_back(o->article_id);
      d.article_begin.push_back(i);
      d.article_topic.push_back(t);
    }
  }
  d.article_begin.push_back(d.n);
  d.frame_begin.push_back(d.articles.size());
  return d;
}

// ---------------------------------------------------------------------------
// IRLS

namespace {

void linear_predictor(const std::vector<std::vector<double>>& X, const Eigen::VectorXd& beta, std::vector<double>& eta) {
  std::fill(eta.begin(), eta.end(), 0.0);
  for (std::size_t j = 0; j < X.size(); ++j) kn::axpby(beta[static_cast<Eigen::Index>(j)], X[j], 1.0, eta);
}

Eigen::MatrixXd information(const std::vector<std::vector<double>>& X, const std::vector<double>& w) {
  const auto p = static_cast<Eigen::Index>(X.size());
  Eigen::MatrixXd I(p, p);
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) I(a, b) = I(b, a) = kn::weighted_dot(w, X[a], X[b]);
  return I;
}

void check_outcomes(const std::vector<double>& y) {
  bool zero = false, one = false;
  for (double v : y) {
    if (v == 0.0) {
      zero = true;
    } else if (v == 1.0) {
      one = true;
    } else {
      throw InferenceError("outcome must be 0 or 1");
    }
  }
  if (!zero || !one) throw InferenceError("both outcome classes must be present");
}

}  // namespace

LogisticFit fit_logistic(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                         const IrlsOptions& opts) {
  const std::size_t n = y.size();
  if (n == 0 || X.empty()) throw InferenceError("empty design");
  for (const auto& c : X)
    if (c.size() != n) throw InferenceError("design column length differs from the outcome length");
  check_outcomes(y);

  const auto p = static_cast<Eigen::Index>(X.size());
  std::vector<double> eta(n), mu(n), w(n), r(n);
  LogisticFit fit;
  fit.beta = Eigen::VectorXd::Zero(p);
  linear_predictor(X, fit.beta, eta);
  double dev = -2.0 * kn::logistic(eta, y, mu, w);

  for (fit.iterations = 1; fit.iterations <= opts.max_iterations; ++fit.iterations) {
    for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - mu[i];
    Eigen::VectorXd score(p);
    for (Eigen::Index j = 0; j < p; ++j) score[j] = kn::dot(X[j], r);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(information(X, w));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw InferenceError("information matrix is singular; the design is rank deficient");
    const Eigen::VectorXd step = ldlt.solve(score);

    double alpha = 1.0, next = dev;
    Eigen::VectorXd trial = fit.beta;
    for (int halving = 0; halving < 30; ++halving, alpha *= 0.5) {
      trial = fit.beta + alpha * step;
      linear_predictor(X, trial, eta);
      next = -2.0 * kn::logistic(eta, y, mu, w);
      if (next <= dev + 1e-12 * std::fabs(dev)) break;
    }
    fit.beta = trial;
    const double change = std::fabs(dev - next);
    dev = next;
    if (change < opts.deviance_tol) {
      fit.converged = true;
      break;
    }
  }
  fit.iterations = std::min(fit.iterations, opts.max_iterations);

  double max_eta = 0.0;
  for (double e : eta) max_eta = std::max(max_eta, std::fabs(e));
  if (max_eta > opts.separation_eta) {
    std::ostringstream os;
    os << "separation detected: fitted linear predictor reaches |eta| = " << max_eta
       << " (probabilities numerically 0 or 1); coefficients:";
    for (Eigen::Index j = 0; j < p; ++j) os << ' ' << fit.beta[j];
    throw SeparationError(os.str());
  }
  fit.deviance = dev;
  fit.covariance = information(X, w).inverse();
  return fit;
}

LogisticFit fit_logistic(const GlmmDesign& d, const IrlsOptions& opts) {
  auto fit = fit_logistic(d.X, d.y, opts);
  fit.names = d.coef_names;
  return fit;
}

LogisticFit fit_logistic(const std::vector<RetentionObservation>& obs, const IrlsOptions& opts) {
  return fit_logistic(make_design(obs), opts);
}

// ---------------------------------------------------------------------------
// Laplace objective

namespace {

// Per-article and per-frame pieces of H = I + Lambda Z' W Z Lambda for the
// nested design. Frames couple only to their own articles, so each frame's
// Schur complement is a scalar.
struct NestedSystem {
  const GlmmDesign& d;
  double sf, sa;
  std::vector<double> W;  // per article
  std::vector<double> A;  // 1 + sa^2 W_a
  std::vector<double> S;  // per frame Schur complement

  NestedSystem(const GlmmDesign& design, double s_frame, double s_id, const std::vector<double>& w)
      : d(design), sf(s_frame), sa(s_id), W(design.articles.size()), A(W.size()), S(design.frames.size()) {
    for (std::size_t a = 0; a < W.size(); ++a) {
      const auto b = d.article_begin[a], e = d.article_begin[a + 1];
      W[a] = kn::sum(std::span<const double>(w).subspan(b, e - b));
      A[a] = 1.0 + sa * sa * W[a];
    }
    for (std::size_t f = 0; f < S.size(); ++f) {
      double acc = 0.0;
      for (auto a = d.frame_begin[f]; a < d.frame_begin[f + 1]; ++a) acc += W[a] / A[a];
      S[f] = 1.0 + sf * sf * acc;
    }
  }

  double logdet() const {
    double s = 0.0;
    for (double a : A) s += std::log(a);
    for (double f : S) s += std::log(f);
    return s;
  }

  // Solves H [x_f; x_a] = [r_f; r_a] in place.
  void solve(std::vector<double>& rf, std::vector<double>& ra) const {
    for (std::size_t f = 0; f < S.size(); ++f) {
      double rhs = rf[f];
      for (auto a = d.frame_begin[f]; a < d.frame_begin[f + 1]; ++a) rhs -= sf * sa * W[a] * ra[a] / A[a];
      rf[f] = rhs / S[f];
      for (auto a = d.frame_begin[f]; a < d.frame_begin[f + 1]; ++a) ra[a] = (ra[a] - sf * sa * W[a] * rf[f]) / A[a];
    }
  }
};

double range_sum(const std::vector<double>& v, std::size_t b, std::size_t e) {
  return kn::sum(std::span<const double>(v).subspan(b, e - b));
}

}  // namespace

LaplaceEval LaplaceObjective::evaluate(const Eigen::VectorXd& beta, double sf, double sa) const {
  const auto& d = d_;
  if (sf < 0.0 || sa < 0.0) throw std::invalid_argument("standard deviations must be non-negative");
  const std::size_t n = d.n, A = d.articles.size(), F = d.frames.size();
  std::vector<double> eta_fixed(n), eta(n), mu(n), w(n), resid(n);
  linear_predictor(d.X, beta, eta_fixed);

  LaplaceEval out;
  out.u_frame.assign(F, 0.0);
  out.u_id.assign(A, 0.0);
  auto& uf = out.u_frame;
  auto& ua = out.u_id;

  auto penalized = [&](const std::vector<double>& f, const std::vector<double>& a) {
    for (std::size_t fi = 0; fi < F; ++fi)
      for (auto ai = d.frame_begin[fi]; ai < d.frame_begin[fi + 1]; ++ai) {
        const double shift = sf * f[fi] + sa * a[ai];
        for (auto i = d.article_begin[ai]; i < d.article_begin[ai + 1]; ++i) eta[i] = eta_fixed[i] + shift;
      }
    double s = -2.0 * kn::logistic(eta, d.y, mu, w);
    s += kn::dot(f, f) + kn::dot(a, a);
    return s;
  };

  // Penalized IRLS (Newton with step halving) for the conditional mode.
  double P = penalized(uf, ua);
  std::vector<double> rf(F), ra(A), tf(F), ta(A);
  for (out.inner_iterations = 0; out.inner_iterations < 200; ++out.inner_iterations) {
    for (std::size_t i = 0; i < n; ++i) resid[i] = d.y[i] - mu[i];
    for (std::size_t a = 0; a < A; ++a) ra[a] = sa * range_sum(resid, d.article_begin[a], d.article_begin[a + 1]) - ua[a];
    for (std::size_t f = 0; f < F; ++f) {
      double acc = 0.0;
      for (auto a = d.frame_begin[f]; a < d.frame_begin[f + 1]; ++a)
        acc += range_sum(resid, d.article_begin[a], d.article_begin[a + 1]);
      rf[f] = sf * acc - uf[f];
    }
    NestedSystem(d, sf, sa, w).solve(rf, ra);
    double max_step = 0.0;
    for (double v : rf) max_step = std::max(max_step, std::fabs(v));
    for (double v : ra) max_step = std::max(max_step, std::fabs(v));
    if (max_step < 1e-11) break;

    double alpha = 1.0, next = P;
    for (int halving = 0; halving < 40; ++halving, alpha *= 0.5) {
      for (std::size_t f = 0; f < F; ++f) tf[f] = uf[f] + alpha * rf[f];
      for (std::size_t a = 0; a < A; ++a) ta[a] = ua[a] + alpha * ra[a];
      next = penalized(tf, ta);
      if (next <= P + 1e-13 * std::fabs(P)) break;
    }
    uf.swap(tf);
    ua.swap(ta);
    P = next;
    if (alpha * max_step < 1e-11) break;
  }
  P = penalized(uf, ua);  // refresh mu and w at the mode

  const NestedSystem H(d, sf, sa, w);
  out.deviance = P + H.logdet();

  // Gradient. d_i = d logdet / d eta_i; v = H^-1 Lambda Z' d is the adjoint
  // that carries the dependence of the mode on the parameters.
  std::vector<double> dvec(n), tvec(n), e(n);
  for (std::size_t i = 0; i < n; ++i) {
    resid[i] = d.y[i] - mu[i];
    e[i] = w[i] * (1.0 - 2.0 * mu[i]);
  }
  std::vector<double> R(A), D(A), g(A);
  std::vector<double> vf(F, 0.0), va(A);
  for (std::size_t f = 0; f < F; ++f) {
    for (auto a = d.frame_begin[f]; a < d.frame_begin[f + 1]; ++a) {
      const auto b = d.article_begin[a], en = d.article_begin[a + 1];
      g[a] = sa * sa / H.A[a] + sf * sf / (H.A[a] * H.A[a] * H.S[f]);
      R[a] = range_sum(resid, b, en);
      D[a] = g[a] * range_sum(e, b, en);
      for (auto i = b; i < en; ++i) dvec[i] = g[a] * e[i];
      va[a] = sa * D[a];
      vf[f] += D[a];
    }
    vf[f] *= sf;
  }
  H.solve(vf, va);

  double gsf = 0.0, gsa = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    double Rf = 0.0, Df = 0.0, qwu = 0.0, explicit_f = 0.0, explicit_a = 0.0;
    for (auto a = d.frame_begin[f]; a < d.frame_begin[f + 1]; ++a) {
      const double q = sf * vf[f] + sa * va[a];
      for (auto i = d.article_begin[a]; i < d.article_begin[a + 1]; ++i) tvec[i] = -2.0 * resid[i] + dvec[i] - q * w[i];
      Rf += R[a];
      Df += D[a];
      qwu += q * H.W[a];
      explicit_f += H.W[a] / H.A[a];
      explicit_a += H.W[a] * H.W[a] / (H.A[a] * H.A[a]);
      // s_id terms that live on the article.
      gsa += -2.0 * ua[a] * R[a] + ua[a] * D[a] - q * H.W[a] * ua[a] + va[a] * R[a] + 2.0 * sa * H.W[a] / H.A[a];
    }
    gsf += -2.0 * uf[f] * Rf + uf[f] * Df - qwu * uf[f] + vf[f] * Rf + 2.0 * sf * explicit_f / H.S[f];
    gsa -= sf * sf / H.S[f] * 2.0 * sa * explicit_a;
  }
  out.grad_beta.resize(static_cast<Eigen::Index>(d.p()));
  for (std::size_t j = 0; j < d.p(); ++j) out.grad_beta[static_cast<Eigen::Index>(j)] = kn::dot(d.X[j], tvec);
  out.grad_s_frame = gsf;
  out.grad_s_id = gsa;
  return out;
}

// ---------------------------------------------------------------------------
// Outer optimization

namespace {

struct Problem {
  const LaplaceObjective& obj;
  std::size_t p;
  bool free_sigma;
  double fixed_sf = 0.0, fixed_sa = 0.0;
  double lo = 0.0;  // log floor

  std::pair<double, double> sigmas(const Eigen::VectorXd& x) const {
    if (!free_sigma) return {fixed_sf, fixed_sa};
    return {std::exp(x[static_cast<Eigen::Index>(p)]), std::exp(x[static_cast<Eigen::Index>(p) + 1])};
  }

  double eval(const Eigen::VectorXd& x, Eigen::VectorXd* grad, LaplaceEval* keep = nullptr) const {
    const auto [sf, sa] = sigmas(x);
    auto e = obj.evaluate(x.head(static_cast<Eigen::Index>(p)), sf, sa);
    if (grad) {
      grad->resize(x.size());
      grad->head(static_cast<Eigen::Index>(p)) = e.grad_beta;
      if (free_sigma) {
        (*grad)[static_cast<Eigen::Index>(p)] = sf * e.grad_s_frame;
        (*grad)[static_cast<Eigen::Index>(p) + 1] = sa * e.grad_s_id;
      }
    }
    const double f = e.deviance;
    if (keep) *keep = std::move(e);
    return f;
  }

  void project(Eigen::VectorXd& x) const {
    if (!free_sigma) return;
    for (Eigen::Index k = static_cast<Eigen::Index>(p); k < x.size(); ++k) x[k] = std::max(x[k], lo);
  }

  // Gradient with components pinned at the floor (and pushing outward) removed.
  Eigen::VectorXd projected(const Eigen::VectorXd& x, const Eigen::VectorXd& g) const {
    Eigen::VectorXd pg = g;
    if (free_sigma)
      for (Eigen::Index k = static_cast<Eigen::Index>(p); k < x.size(); ++k)
        if (x[k] <= lo + 1e-12 && g[k] > 0.0) pg[k] = 0.0;
    return pg;
  }
};

Eigen::MatrixXd fd_hessian(const Problem& prob, const Eigen::VectorXd& x) {
  const auto m = x.size();
  Eigen::MatrixXd H(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double h = 1e-4 * std::max(1.0, std::fabs(x[k]));
    Eigen::VectorXd xp = x, xm = x, gp, gm;
    xp[k] += h;
    xm[k] -= h;
    prob.eval(xp, &gp);
    prob.eval(xm, &gm);
    H.col(k) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace

GlmmFit fit_glmm(const GlmmDesign& d, const GlmmConfig& cfg) {
  if (d.topics.size() < 2) throw InferenceError("the mixed model needs at least two topics");
  if (d.frames.size() < 2) throw InferenceError("the mixed model needs at least two frame groups");
  check_outcomes(d.y);
  if (cfg.fixed_sigma && (cfg.fixed_sigma->first < 0.0 || cfg.fixed_sigma->second < 0.0))
    throw std::invalid_argument("fixed standard deviations must be non-negative");

  const std::size_t p = d.p();
  const auto P = static_cast<Eigen::Index>(p);
  const LogisticFit start = fit_logistic(d);
  const LaplaceObjective obj(d);
  Problem prob{obj, p, !cfg.fixed_sigma};
  if (cfg.fixed_sigma) std::tie(prob.fixed_sf, prob.fixed_sa) = *cfg.fixed_sigma;
  prob.lo = std::log(cfg.sigma_floor);

  const Eigen::Index m = prob.free_sigma ? P + 2 : P;
  Eigen::VectorXd x(m);
  if (cfg.start_beta) {
    if (cfg.start_beta->size() != p) throw std::invalid_argument("start_beta has the wrong length");
    for (std::size_t j = 0; j < p; ++j) x[static_cast<Eigen::Index>(j)] = (*cfg.start_beta)[j];
  } else {
    x.head(P) = start.beta;
  }
  if (prob.free_sigma) x.tail(2).setConstant(0.5 * std::log(cfg.start_sigma2));
  prob.project(x);

  // Initial inverse Hessian: the fixed-effects deviance curvature for beta.
  Eigen::MatrixXd H0 = Eigen::MatrixXd::Identity(m, m) * 0.05;
  H0.topLeftCorner(P, P) = 0.5 * start.covariance;
  Eigen::MatrixXd Hinv = H0;

  GlmmFit fit;
  Eigen::VectorXd g, gt;
  double F = prob.eval(x, &g);
  fit.start_deviance = F;
  Eigen::VectorXd pg = prob.projected(x, g);
  fit.message = "iteration limit reached";
  if (pg.norm() < cfg.gradient_tol) {
    fit.converged = true;
    fit.message = "converged";
  }

  while (!fit.converged && fit.iterations < cfg.max_iterations) {
    ++fit.iterations;
    auto direction = [&] {
      Eigen::VectorXd dir = -Hinv * pg;
      for (Eigen::Index k = 0; k < m; ++k)
        if (pg[k] == 0.0 && g[k] != 0.0) dir[k] = 0.0;
      return dir;
    };
    Eigen::VectorXd dir = direction();
    if (pg.dot(dir) >= 0.0) {
      Hinv = H0;
      dir = direction();
    }
    // Keep trial points in a sane region; exp of a huge log-sigma overflows.
    double cap = 1.0;
    for (Eigen::Index k = 0; k < m; ++k) cap = std::max(cap, std::fabs(dir[k]) / (k < P ? 5.0 : 2.0));
    dir /= cap;

    double alpha = 1.0, Ft = F;
    Eigen::VectorXd xt;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, alpha *= 0.5) {
      xt = x + alpha * dir;
      prob.project(xt);
      Ft = prob.eval(xt, &gt);
      if (std::isfinite(Ft) && Ft <= F + 1e-4 * g.dot(xt - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      fit.message = "line search failed";
      break;
    }
    const Eigen::VectorXd s = xt - x, yv = gt - g;
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd V = Eigen::MatrixXd::Identity(m, m) - rho * yv * s.transpose();
      Hinv = V.transpose() * Hinv * V + rho * s * s.transpose();
    }
    const double change = std::fabs(F - Ft);
    x = xt;
    F = Ft;
    g = gt;
    pg = prob.projected(x, g);
    if (change < cfg.objective_tol && pg.norm() < cfg.gradient_tol) {
      fit.converged = true;
      fit.message = "converged";
    }
  }

  LaplaceEval final_eval;
  fit.deviance = prob.eval(x, &g, &final_eval);
  fit.gradient_norm = prob.projected(x, g).norm();
  fit.names = d.coef_names;
  fit.topics = d.topics;
  fit.n = d.n;
  fit.beta = x.head(P);
  std::tie(fit.sigma_frame, fit.sigma_id) = prob.sigmas(x);
  if (prob.free_sigma) {
    fit.boundary_frame = fit.sigma_frame * fit.sigma_frame < cfg.boundary_sigma2;
    fit.boundary_id = fit.sigma_id * fit.sigma_id < cfg.boundary_sigma2;
  }
  for (std::size_t f = 0; f < d.frames.size(); ++f) fit.frame_effects[d.frames[f]] = fit.sigma_frame * final_eval.u_frame[f];
  for (std::size_t a = 0; a < d.articles.size(); ++a) fit.id_effects[d.articles[a]] = fit.sigma_id * final_eval.u_id[a];

  // Wald covariance from the curvature of the Laplace deviance. Variance
  // components at the boundary have no curvature and are left out.
  const Eigen::MatrixXd Hess = fd_hessian(prob, x);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < m; ++k) {
    const bool at_boundary = k == P ? fit.boundary_frame : k == P + 1 ? fit.boundary_id : false;
    if (!at_boundary) keep.push_back(k);
  }
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t a = 0; a < keep.size(); ++a)
    for (std::size_t b = 0; b < keep.size(); ++b)
      sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = Hess(keep[a], keep[b]);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sub);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    ldlt.compute(Hess.topLeftCorner(P, P));
    fit.message += "; covariance from the fixed-effect block only";
  }
  const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(ldlt.rows(), ldlt.rows()));
  fit.covariance = 2.0 * inv.topLeftCorner(P, P);
  return fit;
}

GlmmFit fit_glmm(const std::vector<RetentionObservation>& obs, const GlmmConfig& cfg) {
  return fit_glmm(make_design(obs), cfg);
}

std::vector<MarginalEffect> marginal_effects(const GlmmFit& fit) {
  if (!fit.converged) throw InferenceError("marginal effects need a converged fit (" + fit.message + ")");
  const double z = normal_quantile(0.975);
  std::vector<MarginalEffect> out;
  for (std::size_t t = 0; t < fit.topics.size(); ++t) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(fit.beta.size());
    c[0] = 1.0;
    if (t > 0) c[static_cast<Eigen::Index>(t)] = 1.0;
    const double eta = c.dot(fit.beta);
    const double se = std::sqrt(std::max(0.0, c.dot(fit.covariance * c)));
    out.push_back({fit.topics[t], inv_logit(eta), inv_logit(eta - z * se), inv_logit(eta + z * se)});
  }
  return out;
}

json to_json(const GlmmFit& fit, const std::vector<MarginalEffect>& marginals) {
  json beta = json::object(), se = json::object();
  for (std::size_t j = 0; j < fit.names.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    beta[fit.names[j]] = fit.beta[k];
    se[fit.names[j]] = std::sqrt(std::max(0.0, fit.covariance(k, k)));
  }
  json m = json::array();
  for (const auto& e : marginals)
    m.push_back({{"topic", e.topic}, {"p", e.probability}, {"ci_lo", e.ci_lo}, {"ci_hi", e.ci_hi}});
  return json{{"beta", beta},
              {"beta_se", se},
              {"reference_topic", fit.topics.empty() ? "" : fit.topics[0]},
              {"sigma_frame", fit.sigma_frame},
              {"sigma_id", fit.sigma_id},
              {"sigma2_frame", fit.sigma_frame * fit.sigma_frame},
              {"sigma2_id", fit.sigma_id * fit.sigma_id},
              {"boundary", {{"frame", fit.boundary_frame}, {"id", fit.boundary_id}}},
              {"deviance", fit.deviance},
              {"start_deviance", fit.start_deviance},
              {"gradient_norm", fit.gradient_norm},
              {"converged", fit.converged},
              {"iterations", fit.iterations},
              {"message", fit.message},
              {"n", fit.n},
              {"marginals", m}};
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

std::vector<double> planted_effects(std::size_t count, bool moment_matched, std::mt19937_64& rng) {
  std::vector<double> v(count);
  if (!moment_matched) {
    for (auto& x : v) x = standard_normal(rng);
    return v;
  }
  double ss = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    v[k] = normal_quantile((static_cast<double>(k) + 0.5) / static_cast<double>(count));
    ss += v[k] * v[k];
  }
  const double scale = ss > 0.0 ? std::sqrt(static_cast<double>(count) / ss) : 0.0;
  for (auto& x : v) x *= scale;
  portable_shuffle(v, rng);
  return v;
}

std::string padded(const char* prefix, std::size_t k, int width) {
  std::string s = std::to_string(k);
  return prefix + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

SimulatedData simulate_nested(const NestedSimulation& sim) {
  if (sim.beta.empty()) throw std::invalid_argument("simulation needs an intercept");
  if (sim.frames == 0 || sim.articles_per_frame == 0 || sim.comments_per_article == 0)
    throw std::invalid_argument("simulation sizes must be positive");
  std::mt19937_64 rng(sim.seed);
  SimulatedData out;
  for (std::size_t t = 0; t < sim.beta.size(); ++t) out.topics.push_back(padded("topic-", t, 2));
  std::vector<std::string> frame_names;
  for (std::size_t f = 0; f < sim.frames; ++f)
    frame_names.push_back(sim.frames <= kFrameCount ? std::string(name(frame_at(f))) : padded("frame-", f, 3));

  const auto uf = planted_effects(sim.frames, sim.moment_matched, rng);
  const auto ua = planted_effects(sim.frames * sim.articles_per_frame, sim.moment_matched, rng);
  for (std::size_t f = 0; f < sim.frames; ++f) {
    const double bf = sim.sigma_frame * uf[f];
    out.frame_effects[frame_names[f]] = bf;
    for (std::size_t k = 0; k < sim.articles_per_frame; ++k) {
      const std::size_t a = f * sim.articles_per_frame + k;
      const std::string id = padded("art-", a, 5);
      const std::size_t t = k % sim.beta.size();
      const double ba = sim.sigma_id * ua[a];
      out.id_effects[id] = ba;
      const double eta = sim.beta[0] + (t > 0 ? sim.beta[t] : 0.0) + bf + ba;
      const double prob = inv_logit(eta);
      for (std::size_t c = 0; c < sim.comments_per_article; ++c)
        out.observations.push_back({uniform01(rng) < prob ? 1 : 0, out.topics[t], frame_names[f], id, sim.outlet});
    }
  }
  return out;
}

}  // namespace framing
