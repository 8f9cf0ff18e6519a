#include <atomic>
#include <cassert>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "framing/kernels.hpp"

namespace framing::kernels {

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

std::string_view name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) throw std::invalid_argument("ISA not supported on this CPU: " + std::string(name(isa)));
  switch (isa) {
    case Isa::scalar:
      return detail::kScalarTable;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return detail::kAvx2Table;
#else
      break;
#endif
  }
  return detail::kScalarTable;
}

namespace {

const KernelTable* initial_table() {
  const char* env = std::getenv("FRAMING_SIMD");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return &detail::kScalarTable;
  if (supported(Isa::avx2)) return &table(Isa::avx2);
  return &detail::kScalarTable;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> t{initial_table()};
  return t;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_release); }

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().dot(a.data(), b.data(), a.size());
}

double weighted_dot(std::span<const double> w, std::span<const double> a, std::span<const double> b) {
  assert(w.size() == a.size() && a.size() == b.size());
  return active().weighted_dot(w.data(), a.data(), b.data(), w.size());
}

double sum(std::span<const double> a) { return active().sum(a.data(), a.size()); }

void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpby(alpha, x.data(), beta, y.data(), y.size());
}

double logistic(std::span<const double> eta, std::span<const double> y, std::span<double> mu,
                std::span<double> w) {
  assert(eta.size() == y.size() && mu.size() == eta.size() && w.size() == eta.size());
  return active().logistic(eta.data(), y.data(), mu.data(), w.data(), eta.size());
}

}  // namespace framing::kernels
