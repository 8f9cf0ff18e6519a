#include <doctest.h>

#include <cmath>
#include <random>

#include "framing/inference.hpp"
#include "framing/kernels.hpp"
#include "framing/random.hpp"
#include "test_util.hpp"

using namespace framing;

namespace {

// Plain Newton-Raphson with Gauss-Jordan elimination, written without the
// library's kernels or Eigen.
std::vector<double> textbook_logistic(const std::vector<std::vector<double>>& rows, const std::vector<double>& y) {
  const std::size_t p = rows[0].size();
  std::vector<double> b(p, 0.0);
  for (int it = 0; it < 100; ++it) {
    std::vector<std::vector<double>> M(p, std::vector<double>(p + 1, 0.0));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double eta = 0.0;
      for (std::size_t j = 0; j < p; ++j) eta += rows[i][j] * b[j];
      const double mu = 1.0 / (1.0 + std::exp(-eta));
      for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = 0; k < p; ++k) M[j][k] += mu * (1.0 - mu) * rows[i][j] * rows[i][k];
        M[j][p] += (y[i] - mu) * rows[i][j];
      }
    }
    for (std::size_t c = 0; c < p; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < p; ++r)
        if (std::fabs(M[r][c]) > std::fabs(M[piv][c])) piv = r;
      std::swap(M[c], M[piv]);
      for (std::size_t r = 0; r < p; ++r) {
        if (r == c) continue;
        const double f = M[r][c] / M[c][c];
        for (std::size_t k = c; k <= p; ++k) M[r][k] -= f * M[c][k];
      }
    }
    double step = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double dj = M[j][p] / M[j][j];
      b[j] += dj;
      step = std::max(step, std::fabs(dj));
    }
    if (step < 1e-13) break;
  }
  return b;
}

std::vector<std::vector<double>> columns_of(const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<double>> cols(rows[0].size(), std::vector<double>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) cols[j][i] = rows[i][j];
  return cols;
}

// Dense Laplace deviance: generic Newton on the full random-effect vector
// and a dense log-determinant. Shares nothing with the nested solver.
double dense_laplace(const GlmmDesign& d, const Eigen::VectorXd& beta, double sf, double sa) {
  const auto F = static_cast<Eigen::Index>(d.frames.size()), A = static_cast<Eigen::Index>(d.articles.size());
  const auto q = F + A;
  const auto n = static_cast<Eigen::Index>(d.n);
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, q);
  for (Eigen::Index f = 0; f < F; ++f)
    for (auto a = d.frame_begin[f]; a < d.frame_begin[f + 1]; ++a)
      for (auto i = d.article_begin[a]; i < d.article_begin[a + 1]; ++i) {
        Z(static_cast<Eigen::Index>(i), f) = sf;
        Z(static_cast<Eigen::Index>(i), F + static_cast<Eigen::Index>(a)) = sa;
      }
  Eigen::VectorXd fixed(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    fixed[i] = 0.0;
    for (std::size_t j = 0; j < d.p(); ++j) fixed[i] += d.X[j][static_cast<std::size_t>(i)] * beta[static_cast<Eigen::Index>(j)];
    y[i] = d.y[static_cast<std::size_t>(i)];
  }
  Eigen::VectorXd u = Eigen::VectorXd::Zero(q), mu(n), w(n);
  auto refresh = [&] {
    const Eigen::VectorXd eta = fixed + Z * u;
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = mu[i] * (1.0 - mu[i]);
    }
    return eta;
  };
  for (int it = 0; it < 100; ++it) {
    refresh();
    const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(q, q) + Z.transpose() * w.asDiagonal() * Z;
    const Eigen::VectorXd g = Z.transpose() * (y - mu) - u;
    const Eigen::VectorXd step = H.ldlt().solve(g);
    u += step;
    if (step.cwiseAbs().maxCoeff() < 1e-13) break;
  }
  const Eigen::VectorXd eta = refresh();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) ll += y[i] * eta[i] - std::log1p(std::exp(eta[i]));
  const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(q, q) + Z.transpose() * w.asDiagonal() * Z;
  const Eigen::LLT<Eigen::MatrixXd> llt(H);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -2.0 * ll + u.squaredNorm() + logdet;
}

SimulatedData small_sim(std::uint64_t seed, double sf = 0.6, double sa = 0.8) {
  NestedSimulation s;
  s.frames = 4;
  s.articles_per_frame = 6;
  s.comments_per_article = 12;
  s.beta = {-0.3, 0.7, -0.4};
  s.sigma_frame = sf;
  s.sigma_id = sa;
  s.seed = seed;
  return simulate_nested(s);
}

}  // namespace

TEST_CASE("observations from aligned pairs") {
  std::vector<AlignedPair> pairs = {
      {"a1", "c1", "Abortion", Frame::Economic, Frame::Economic, "nyt"},
      {"a1", "c2", "Abortion", Frame::Economic, Frame::Morality, "nyt"},
      {"a1", "c3", "Abortion", Frame::Economic, Frame::Other, "nyt"},
  };
  auto obs = build_observations(pairs);
  REQUIRE(obs.size() == 3);
  for (const auto& o : obs) CHECK(o.article_id == "a1");
  CHECK(obs[0].y == 1);
  CHECK(obs[1].y == 0);
  CHECK(obs[0].frame == "Economic");

  pairs.push_back({"a1", "c4", "Abortion", Frame::Morality, Frame::Morality, "nyt"});
  CHECK_THROWS_AS(build_observations(pairs), InferenceError);
  pairs.back() = {"a1", "c4", "Education", Frame::Economic, Frame::Morality, "nyt"};
  CHECK_THROWS_AS(build_observations(pairs), InferenceError);

  testutil::TempDir dir("obs");
  write_observations(dir / "o.jsonl", obs);
  CHECK(read_observations(dir / "o.jsonl") == obs);
}

TEST_CASE("design layout") {
  auto sim = small_sim(3);
  auto d = make_design(sim.observations);
  CHECK(d.n == sim.observations.size());
  CHECK(d.topics.front() == "topic-00");
  CHECK(d.coef_names.size() == 3);
  CHECK(d.frames.size() == 4);
  CHECK(d.articles.size() == 24);
  CHECK(d.article_begin.size() == 25);
  CHECK(d.frame_begin.size() == 5);
  for (std::size_t a = 0; a < d.articles.size(); ++a) CHECK(d.article_begin[a + 1] - d.article_begin[a] == 12);

  std::mt19937_64 rng(1);
  auto shuffled = sim.observations;
  portable_shuffle(shuffled, rng);
  auto e = make_design(shuffled);
  CHECK(e.y == d.y);
  CHECK(e.X == d.X);
  CHECK(e.articles == d.articles);

  auto bad = sim.observations;
  bad[0].frame = "Other";
  CHECK_THROWS_AS(make_design(bad), InferenceError);
  CHECK_THROWS_AS(make_design({}), InferenceError);
}

TEST_CASE("logistic regression by IRLS") {
  // Intercept only: closed form logit(mean).
  std::vector<double> y;
  for (int i = 0; i < 300; ++i) y.push_back(i % 3 == 0 ? 1.0 : 0.0);
  auto f = fit_logistic({std::vector<double>(y.size(), 1.0)}, y);
  CHECK(f.converged);
  CHECK(f.beta[0] == doctest::Approx(std::log(1.0 / 2.0)).epsilon(1e-9));

  // Simulated beta = (-0.5, 1.0), n = 5000.
  std::mt19937_64 rng(5);
  std::vector<double> ones, x, ys;
  for (int i = 0; i < 5000; ++i) {
    const double xi = standard_normal(rng);
    ones.push_back(1.0);
    x.push_back(xi);
    ys.push_back(uniform01(rng) < inv_logit(-0.5 + xi) ? 1.0 : 0.0);
  }
  auto g = fit_logistic({ones, x}, ys);
  CHECK(std::fabs(g.beta[0] + 0.5) < 0.1);
  CHECK(std::fabs(g.beta[1] - 1.0) < 0.1);
}

TEST_CASE("IRLS agrees with a textbook implementation") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 20; ++i) {
      rows.push_back({1.0, standard_normal(rng), uniform01(rng) < 0.5 ? 1.0 : 0.0});
      y.push_back(uniform01(rng) < inv_logit(0.3 * rows.back()[1] - 0.2) ? 1.0 : 0.0);
    }
    // Make sure neither class is empty and the fit is not separated.
    y[0] = 1.0;
    y[1] = 0.0;
    std::vector<double> ref;
    try {
      auto fit = fit_logistic(columns_of(rows), y);
      ref = textbook_logistic(rows, y);
      for (std::size_t j = 0; j < ref.size(); ++j)
        CHECK(fit.beta[static_cast<Eigen::Index>(j)] == doctest::Approx(ref[j]).epsilon(1e-6));
    } catch (const SeparationError&) {
      // Tiny samples occasionally separate; nothing to compare.
    }
  }
}

TEST_CASE("IRLS diagnostics") {
  std::vector<double> one(6, 1.0), x = {0, 0, 0, 1, 1, 1};
  CHECK_THROWS_AS(fit_logistic({one}, std::vector<double>(6, 1.0)), InferenceError);
  // Complete separation on x.
  CHECK_THROWS_AS(fit_logistic({one, x}, {0, 0, 0, 1, 1, 1}), SeparationError);
  // Quasi-complete separation: one level is all ones.
  std::vector<double> x2 = {0, 0, 0, 0, 1, 1, 1, 1}, y2 = {0, 1, 0, 1, 1, 1, 1, 1};
  CHECK_THROWS_AS(fit_logistic({std::vector<double>(8, 1.0), x2}, y2), SeparationError);
  CHECK_THROWS_AS(fit_logistic({one}, {0, 1, 2, 0, 1, 0}), InferenceError);
}

TEST_CASE("normal quantile") {
  for (double p = 1e-12; p < 1.0; p = p < 0.01 ? p * 3.0 : p + 0.0137) {
    const double x = normal_quantile(p);
    CHECK(0.5 * std::erfc(-x / std::sqrt(2.0)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK_THROWS(normal_quantile(0.0));
}

TEST_CASE("Laplace deviance matches a dense computation") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto sim = small_sim(seed);
    auto d = make_design(sim.observations);
    LaplaceObjective obj(d);
    std::mt19937_64 rng(seed);
    Eigen::VectorXd beta(3);
    for (int j = 0; j < 3; ++j) beta[j] = standard_normal(rng) * 0.5;
    const double sf = 0.2 + uniform01(rng), sa = 0.2 + uniform01(rng);
    CHECK(obj.evaluate(beta, sf, sa).deviance == doctest::Approx(dense_laplace(d, beta, sf, sa)).epsilon(1e-10));
  }
}

TEST_CASE("Laplace deviance at zero variance is the logistic deviance") {
  auto sim = small_sim(9);
  auto d = make_design(sim.observations);
  auto lf = fit_logistic(d);
  auto e = LaplaceObjective(d).evaluate(lf.beta, 0.0, 0.0);
  CHECK(e.deviance == doctest::Approx(lf.deviance).epsilon(1e-12));
  CHECK(e.grad_beta.norm() < 1e-4);
  CHECK(e.grad_s_frame == 0.0);
  CHECK(e.grad_s_id == 0.0);
}

TEST_CASE("analytic gradient matches central differences") {
  // 3 fixed effects + 2 variance parameters per fixture; 40 random points.
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    auto sim = small_sim(seed, 0.5, 0.9);
    auto d = make_design(sim.observations);
    LaplaceObjective obj(d);
    std::mt19937_64 rng(seed * 31);
    Eigen::VectorXd beta(3);
    for (int j = 0; j < 3; ++j) beta[j] = 0.6 * standard_normal(rng);
    const double sf = 0.1 + 1.2 * uniform01(rng), sa = 0.1 + 1.2 * uniform01(rng);
    auto e = obj.evaluate(beta, sf, sa);

    Eigen::VectorXd analytic(5), numeric(5);
    analytic << e.grad_beta, e.grad_s_frame, e.grad_s_id;
    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd bp = beta, bm = beta;
      bp[j] += h;
      bm[j] -= h;
      numeric[j] = (obj.evaluate(bp, sf, sa).deviance - obj.evaluate(bm, sf, sa).deviance) / (2 * h);
    }
    numeric[3] = (obj.evaluate(beta, sf + h, sa).deviance - obj.evaluate(beta, sf - h, sa).deviance) / (2 * h);
    numeric[4] = (obj.evaluate(beta, sf, sa + h).deviance - obj.evaluate(beta, sf, sa - h).deviance) / (2 * h);
    CHECK((analytic - numeric).norm() / std::max(1.0, numeric.norm()) < 1e-3);
    for (int j = 0; j < 5; ++j)
      CHECK(std::fabs(analytic[j] - numeric[j]) <= 1e-3 * std::max(1.0, std::fabs(numeric[j])));
  }
}

TEST_CASE("fixed zero variance reproduces IRLS") {
  auto sim = small_sim(4);
  auto d = make_design(sim.observations);
  auto lf = fit_logistic(d);
  GlmmConfig cfg;
  cfg.fixed_sigma = std::make_pair(0.0, 0.0);
  cfg.start_beta = std::vector<double>{0.5, -0.5, 0.5};
  auto g = fit_glmm(d, cfg);
  CHECK(g.converged);
  CHECK(g.iterations > 0);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::fabs(g.beta[j] - lf.beta[j]) < 1e-6);
  CHECK(g.deviance == doctest::Approx(lf.deviance).epsilon(1e-9));
}

TEST_CASE("zero-variance data gives a near-logistic fit") {
  NestedSimulation s;
  s.frames = 6;
  s.articles_per_frame = 20;
  s.comments_per_article = 20;
  s.sigma_frame = 0.0;
  s.sigma_id = 0.0;
  s.seed = 12;
  auto d = make_design(simulate_nested(s).observations);
  auto lf = fit_logistic(d);
  auto g = fit_glmm(d);
  CHECK(g.converged);
  for (Eigen::Index j = 0; j < g.beta.size(); ++j) CHECK(std::fabs(g.beta[j] - lf.beta[j]) < 0.1);
  CHECK(g.sigma_frame * g.sigma_frame < 0.05);
  CHECK(g.sigma_id * g.sigma_id < 0.05);
  CHECK(g.deviance <= g.start_deviance);
}

TEST_CASE("planted nested design is recovered") {
  NestedSimulation s;  // 8 frames x 50 articles x 30 comments
  s.beta = {-0.5, 0.8};
  s.seed = 2026;
  auto sim = simulate_nested(s);
  REQUIRE(sim.observations.size() == 12000);
  auto fit = fit_glmm(sim.observations);
  CHECK(fit.converged);
  CHECK(fit.deviance <= fit.start_deviance);
  CHECK(std::fabs(fit.beta[0] - s.beta[0]) < 0.15);
  CHECK(std::fabs(fit.beta[1] - s.beta[1]) < 0.15);
  CHECK(std::fabs(fit.sigma_frame - s.sigma_frame) < 0.2);
  CHECK(std::fabs(fit.sigma_id - s.sigma_id) < 0.2);
  auto m = marginal_effects(fit);
  REQUIRE(m.size() == 2);
  CHECK(std::fabs(m[0].probability - inv_logit(-0.5)) < 0.03);
  CHECK(std::fabs(m[1].probability - inv_logit(0.3)) < 0.03);
  for (const auto& e : m) {
    CHECK(e.ci_lo < e.probability);
    CHECK(e.probability < e.ci_hi);
  }
  auto j = to_json(fit, m);
  CHECK(j["marginals"].size() == 2);
  CHECK(j.contains("sigma_frame"));
}

TEST_CASE("fit does not depend on observation order") {
  auto sim = small_sim(21);
  auto a = fit_glmm(sim.observations);
  std::mt19937_64 rng(8);
  auto shuffled = sim.observations;
  portable_shuffle(shuffled, rng);
  auto b = fit_glmm(shuffled);
  CHECK(a.converged == b.converged);
  for (Eigen::Index j = 0; j < a.beta.size(); ++j) CHECK(std::fabs(a.beta[j] - b.beta[j]) <= 1e-10);
  CHECK(std::fabs(a.sigma_frame - b.sigma_frame) <= 1e-10);
  CHECK(std::fabs(a.sigma_id - b.sigma_id) <= 1e-10);
  CHECK(std::fabs(a.deviance - b.deviance) <= 1e-10);
}

TEST_CASE("relabeling factor levels permutes coefficients only") {
  auto sim = small_sim(15);
  auto base = fit_glmm(sim.observations);
  REQUIRE(base.converged);
  // Reverse the topic order (new reference level) and rename frames/articles.
  auto relabeled = sim.observations;
  for (auto& o : relabeled) {
    o.topic = "z-" + std::string(1, static_cast<char>('c' - (o.topic.back() - '0')));
    o.frame = "g-" + o.frame;
    o.article_id = "x" + o.article_id;
  }
  auto other = fit_glmm(relabeled);
  REQUIRE(other.converged);
  CHECK(other.sigma_frame == doctest::Approx(base.sigma_frame).epsilon(1e-5));
  CHECK(other.sigma_id == doctest::Approx(base.sigma_id).epsilon(1e-5));
  CHECK(other.deviance == doctest::Approx(base.deviance).epsilon(1e-9));
  auto mb = marginal_effects(base), mo = marginal_effects(other);
  // topic-0k became z-(c-k); sorted order is reversed.
  for (std::size_t t = 0; t < mb.size(); ++t)
    CHECK(mo[mb.size() - 1 - t].probability == doctest::Approx(mb[t].probability).epsilon(1e-5));
}

TEST_CASE("marginal effects") {
  GlmmFit fit;
  fit.topics = {"a", "b", "c"};
  fit.beta = Eigen::VectorXd::Zero(3);
  fit.covariance = Eigen::MatrixXd::Identity(3, 3) * 0.01;
  fit.converged = true;
  for (const auto& m : marginal_effects(fit)) CHECK(m.probability == 0.5);
  fit.converged = false;
  CHECK_THROWS_AS(marginal_effects(fit), InferenceError);
}

TEST_CASE("preconditions") {
  auto sim = small_sim(2);
  auto one_topic = sim.observations;
  for (auto& o : one_topic) o.topic = "only";
  CHECK_THROWS_AS(fit_glmm(one_topic), InferenceError);
  auto one_frame = sim.observations;
  for (auto& o : one_frame) o.frame = "F";
  CHECK_THROWS_AS(fit_glmm(one_frame), InferenceError);
}

TEST_CASE("scalar and AVX2 kernels give the same fit") {
  if (!kernels::supported(kernels::Isa::avx2)) return;
  auto sim = small_sim(33);
  const auto before = kernels::active().isa;
  kernels::select(kernels::Isa::scalar);
  auto a = fit_glmm(sim.observations);
  kernels::select(kernels::Isa::avx2);
  auto b = fit_glmm(sim.observations);
  kernels::select(before);
  for (Eigen::Index j = 0; j < a.beta.size(); ++j) CHECK(a.beta[j] == doctest::Approx(b.beta[j]).epsilon(1e-6));
  CHECK(a.sigma_id == doctest::Approx(b.sigma_id).epsilon(1e-5));
}
