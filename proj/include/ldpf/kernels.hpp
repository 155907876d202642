#pragma once

// Inner-loop arithmetic used by the encoders, the domain-feature MLP, k-means
// and fusion. Every kernel has a scalar reference in `base` and vectorized
// variants (AVX2+FMA on x86-64, NEON on AArch64). The variant is chosen once at
// startup from the CPU features and can be pinned with LDPF_ISA=scalar|avx2|neon.
//
// Variants agree with the scalar reference to rounding, not bitwise: summation
// order differs. Results are replay-identical for a fixed variant.

#include <cstddef>
#include <span>
#include <string_view>

namespace ldpf {
class Matrix;
}

namespace ldpf::kernels {

enum class Isa { scalar, avx2, neon };

struct Table {
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

namespace base {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace base

namespace avx2 {
bool compiled();
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

namespace neon {
bool compiled();
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace neon

bool supported(Isa isa);
const Table& table(Isa isa);

/// Currently dispatched variant.
Isa active_isa();
const Table& active();

/// Pins the dispatched variant; throws ldpf::Error if the CPU lacks it.
void select(Isa isa);

std::string_view name(Isa isa);
Isa parse_isa(std::string_view text);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

/// y = W x + bias (bias may be empty).
void matvec(const Matrix& w, std::span<const double> x, std::span<const double> bias,
            std::span<double> y);

/// out += W^T g
void matvec_transposed_accumulate(const Matrix& w, std::span<const double> g, std::span<double> out);

/// grad_w += g x^T
void outer_accumulate(std::span<const double> g, std::span<const double> x, Matrix& grad_w);

}  // namespace ldpf::kernels
