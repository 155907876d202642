#include <atomic>
#include <cstdlib>
#include <string>

#include "ldpf/core.hpp"
#include "ldpf/kernels.hpp"

namespace ldpf::kernels {

namespace {

constexpr Table kScalar{&base::dot, &base::squared_distance, &base::axpy};
constexpr Table kAvx2{&avx2::dot, &avx2::squared_distance, &avx2::axpy};
constexpr Table kNeon{&neon::dot, &neon::squared_distance, &neon::axpy};

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  if (const char* forced = std::getenv("LDPF_ISA")) {
    const Isa isa = parse_isa(forced);
    if (supported(isa)) return isa;
  }
  if (supported(Isa::avx2)) return Isa::avx2;
  if (supported(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: return avx2::compiled() && cpu_has_avx2();
    case Isa::neon: return neon::compiled();
  }
  return false;
}

const Table& table(Isa isa) {
  switch (isa) {
    case Isa::avx2: return kAvx2;
    case Isa::neon: return kNeon;
    case Isa::scalar: break;
  }
  return kScalar;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

const Table& active() { return table(active_isa()); }

void select(Isa isa) {
  if (!supported(isa)) throw Error("kernel variant not supported on this CPU: " + std::string(name(isa)));
  current().store(isa, std::memory_order_relaxed);
}

std::string_view name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view text) {
  if (text == "scalar") return Isa::scalar;
  if (text == "avx2") return Isa::avx2;
  if (text == "neon") return Isa::neon;
  throw Error("unknown kernel variant: " + std::string(text));
}

void matvec(const Matrix& w, std::span<const double> x, std::span<const double> bias,
            std::span<double> y) {
  const Table& k = active();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double b = bias.empty() ? 0.0 : bias[r];
    y[r] = b + k.dot(w.row(r).data(), x.data(), w.cols());
  }
}

void matvec_transposed_accumulate(const Matrix& w, std::span<const double> g, std::span<double> out) {
  const Table& k = active();
  for (std::size_t r = 0; r < w.rows(); ++r)
    if (g[r] != 0.0) k.axpy(g[r], w.row(r).data(), out.data(), w.cols());
}

void outer_accumulate(std::span<const double> g, std::span<const double> x, Matrix& grad_w) {
  const Table& k = active();
  for (std::size_t r = 0; r < grad_w.rows(); ++r)
    if (g[r] != 0.0) k.axpy(g[r], x.data(), grad_w.row(r).data(), grad_w.cols());
}

}  // namespace ldpf::kernels
