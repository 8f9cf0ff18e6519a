#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "framing/kernels.hpp"

using namespace framing::kernels;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

bool close(double a, double b, double rel, double abs_tol = 1e-300) {
  return std::fabs(a - b) <= std::max(abs_tol, rel * std::max(std::fabs(a), std::fabs(b)));
}

}  // namespace

TEST_CASE("scalar kernels match direct formulas") {
  const auto& k = table(Isa::scalar);
  std::vector<double> a{1, 2, 3}, b{4, 5, 6}, w{0.5, 1, 2};
  CHECK(k.dot(a.data(), b.data(), 3) == 32.0);
  CHECK(k.weighted_dot(w.data(), a.data(), b.data(), 3) == 2.0 + 10.0 + 36.0);
  CHECK(k.sum(a.data(), 3) == 6.0);
  k.axpby(2.0, a.data(), -1.0, b.data(), 3);
  CHECK(b == std::vector<double>{-2, -1, 0});

  std::vector<double> eta{-3.0, 0.0, 2.5}, y{0, 1, 1}, mu(3), ww(3);
  const double ll = k.logistic(eta.data(), y.data(), mu.data(), ww.data(), 3);
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double m = 1.0 / (1.0 + std::exp(-eta[i]));
    CHECK(mu[i] == doctest::Approx(m).epsilon(1e-15));
    CHECK(ww[i] == doctest::Approx(m * (1 - m)).epsilon(1e-14));
    expect += y[i] * std::log(m) + (1 - y[i]) * std::log(1 - m);
  }
  CHECK(ll == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("logistic kernel is stable at extreme linear predictors") {
  const auto& k = table(Isa::scalar);
  std::vector<double> eta{-800.0, 800.0}, y{0, 1}, mu(2), w(2);
  const double ll = k.logistic(eta.data(), y.data(), mu.data(), w.data(), 2);
  CHECK(std::isfinite(ll));
  CHECK(ll == doctest::Approx(0.0));
  CHECK(mu[0] == 0.0);
  CHECK(mu[1] == 1.0);
}

TEST_CASE("SIMD kernels are equivalent to the scalar reference") {
  if (!supported(Isa::avx2)) {
    MESSAGE("AVX2 not available; equivalence test skipped");
    return;
  }
  const auto& ref = table(Isa::scalar);
  const auto& vec = table(Isa::avx2);
  std::mt19937_64 rng(7);

  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 17u, 33u, 64u, 67u, 1000u, 4099u}) {
    CAPTURE(n);
    auto a = random_vec(rng, n, -2.0, 2.0);
    auto b = random_vec(rng, n, -2.0, 2.0);
    auto w = random_vec(rng, n, 0.0, 1.0);
    // Sums of mixed-sign terms: compare against the magnitude scale.
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale += std::fabs(a[i] * b[i]);
    CHECK(std::fabs(ref.dot(a.data(), b.data(), n) - vec.dot(a.data(), b.data(), n)) <= 1e-14 * (scale + 1));
    CHECK(std::fabs(ref.weighted_dot(w.data(), a.data(), b.data(), n) -
                    vec.weighted_dot(w.data(), a.data(), b.data(), n)) <= 1e-14 * (scale + 1));
    double abs_sum = 0.0;
    for (double x : a) abs_sum += std::fabs(x);
    CHECK(std::fabs(ref.sum(a.data(), n) - vec.sum(a.data(), n)) <= 1e-14 * (abs_sum + 1));

    auto y1 = b, y2 = b;
    ref.axpby(0.75, a.data(), -1.25, y1.data(), n);
    vec.axpby(0.75, a.data(), -1.25, y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(close(y1[i], y2[i], 1e-15, 1e-15));
  }
}

TEST_CASE("SIMD logistic matches scalar across the full predictor range") {
  if (!supported(Isa::avx2)) return;
  const auto& ref = table(Isa::scalar);
  const auto& vec = table(Isa::avx2);
  std::mt19937_64 rng(11);

  std::vector<double> eta = random_vec(rng, 5000, -40.0, 40.0);
  for (double x : {0.0, -0.0, 1e-300, -1e-300, 1e-17, -1e-17, 1e-9, 0.34657359, -0.34657359, 0.6931471805599453,
                   -36.7, 36.7, -700.0, -709.5, -745.0, -800.0, 800.0, 1e6, -1e6}) {
    eta.push_back(x);
  }
  std::vector<double> y(eta.size());
  std::bernoulli_distribution coin(0.5);
  for (auto& v : y) v = coin(rng) ? 1.0 : 0.0;

  const std::size_t n = eta.size();
  std::vector<double> mu1(n), w1(n), mu2(n), w2(n);
  const double ll1 = ref.logistic(eta.data(), y.data(), mu1.data(), w1.data(), n);
  const double ll2 = vec.logistic(eta.data(), y.data(), mu2.data(), w2.data(), n);
  for (std::size_t i = 0; i < n; ++i) {
    CAPTURE(eta[i]);
    CHECK(close(mu1[i], mu2[i], 4e-16, 1e-300));
    // w underflows to the denormal range near |eta| = 700; compare absolutely there.
    CHECK(close(w1[i], w2[i], 1e-15, 1e-300));
  }
  CHECK(close(ll1, ll2, 1e-13));

  // Per-element softplus agreement, isolated from summation order.
  for (std::size_t i = 0; i < n; ++i) {
    double m, ww;
    const double zero = 0.0;
    const double a = ref.logistic(&eta[i], &zero, &m, &ww, 1);
    std::vector<double> e4(4, eta[i]), y4(4, 0.0), mu4(4), w4(4);
    const double b = vec.logistic(e4.data(), y4.data(), mu4.data(), w4.data(), 4) / 4.0;
    CAPTURE(eta[i]);
    CHECK(close(a, b, 1e-15, 1e-300));
  }
}

TEST_CASE("active table can be switched") {
  const Isa before = active().isa;
  select(Isa::scalar);
  CHECK(active().isa == Isa::scalar);
  std::vector<double> a{1, 2}, b{3, 4};
  CHECK(dot(a, b) == 11.0);
  if (supported(Isa::avx2)) {
    select(Isa::avx2);
    CHECK(active().isa == Isa::avx2);
    CHECK(dot(a, b) == 11.0);
  }
  select(before);
  CHECK(name(Isa::avx2) == "avx2");
}
