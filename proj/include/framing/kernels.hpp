#pragma once

// Data-parallel inner loops shared by the statistical modules.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active table is chosen once at startup from the CPU
// features; FRAMING_SIMD=scalar|avx2|auto overrides the choice. Variants agree
// to within a few ulps per element; summation order differs between variants
// but is fixed within each, so results are deterministic for a given ISA.

#include <cstddef>
#include <span>
#include <string_view>

namespace framing::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i w[i] * a[i] * b[i]
  double (*weighted_dot)(const double* w, const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  // y[i] = alpha * x[i] + beta * y[i]
  void (*axpby)(double alpha, const double* x, double beta, double* y, std::size_t n);
  // Logistic link over linear predictors: mu = 1/(1+exp(-eta)),
  // w = mu*(1-mu). Returns sum_i y[i]*eta[i] - log(1+exp(eta[i])).
  double (*logistic)(const double* eta, const double* y, double* mu, double* w, std::size_t n);
};

bool supported(Isa isa);
std::string_view name(Isa isa);

/// Table for a specific ISA. Throws std::invalid_argument if unsupported.
const KernelTable& table(Isa isa);

const KernelTable& active();

/// Overrides the active table (tests and benchmarks). Not thread-safe with
/// concurrent kernel calls.
void select(Isa isa);

// Span conveniences over the active table.
double dot(std::span<const double> a, std::span<const double> b);
double weighted_dot(std::span<const double> w, std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> a);
void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y);
double logistic(std::span<const double> eta, std::span<const double> y, std::span<double> mu,
                std::span<double> w);

namespace detail {
extern const KernelTable kScalarTable;
#if defined(__x86_64__) || defined(_M_X64)
extern const KernelTable kAvx2Table;
#endif
}  // namespace detail

}  // namespace framing::kernels
