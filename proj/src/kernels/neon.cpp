#include "ldpf/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#define LDPF_NEON 1
#include <arm_neon.h>
#else
#define LDPF_NEON 0
#endif

namespace ldpf::kernels::neon {

#if LDPF_NEON

bool compiled() { return true; }

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc = vfmaq_f64(acc, d, d);
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

#else

bool compiled() { return false; }
double dot(const double* a, const double* b, std::size_t n) { return base::dot(a, b, n); }
double squared_distance(const double* a, const double* b, std::size_t n) {
  return base::squared_distance(a, b, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) { base::axpy(alpha, x, y, n); }

#endif

}  // namespace ldpf::kernels::neon
