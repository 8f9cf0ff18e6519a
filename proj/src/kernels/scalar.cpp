#include <cmath>

#include "framing/kernels.hpp"

namespace framing::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_dot_scalar(const double* w, const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * a[i] * b[i];
  return s;
}

double sum_scalar(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

void axpby_scalar(double alpha, const double* x, double beta, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

double logistic_scalar(const double* eta, const double* y, double* mu, double* w, std::size_t n) {
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(-std::fabs(eta[i]));
    const double inv = 1.0 / (1.0 + e);
    mu[i] = eta[i] >= 0.0 ? inv : e * inv;
    w[i] = e * inv * inv;
    const double softplus = std::fmax(eta[i], 0.0) + std::log1p(e);
    ll += y[i] * eta[i] - softplus;
  }
  return ll;
}

}  // namespace

namespace detail {
const KernelTable kScalarTable = {
    Isa::scalar, dot_scalar, weighted_dot_scalar, sum_scalar, axpby_scalar, logistic_scalar,
};
}  // namespace detail

}  // namespace framing::kernels
