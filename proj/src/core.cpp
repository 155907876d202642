#include "ldpf/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

#include "ldpf/kernels.hpp"

namespace ldpf {

Temperature::Temperature(double tau) : tau_(tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error("temperature must be positive and finite");
}

SimplexWeights SimplexWeights::from(Vector weights) {
  if (weights.empty()) throw Error("simplex weights must be nonempty");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("simplex weight negative or non-finite");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw Error("simplex weights do not sum to one");
  return SimplexWeights(std::move(weights));
}

SimplexWeights SimplexWeights::uniform(std::size_t n) {
  if (n == 0) throw Error("simplex weights must be nonempty");
  return SimplexWeights(Vector(n, 1.0 / static_cast<double>(n)));
}

SimplexWeights SimplexWeights::one_hot(std::size_t n, std::size_t index) {
  if (index >= n) throw Error("one-hot index out of range");
  Vector w(n, 0.0);
  w[index] = 1.0;
  return SimplexWeights(std::move(w));
}

std::size_t SimplexWeights::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < w_.size(); ++i)
    if (w_[i] > w_[best]) best = i;
  return best;
}

RngSeed derive_seed(RngSeed parent, std::uint64_t stream) {
  // splitmix64 over (parent, stream)
  std::uint64_t z = parent.value + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return RngSeed{z ^ (z >> 31)};
}

Rng::Rng(RngSeed seed) : engine_(seed.value) {}

std::uint64_t Rng::next() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw Error("Rng::below(0)");
  // rejection sampling keeps the result unbiased
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return static_cast<std::size_t>(x % n);
}

double norm(std::span<const double> v) { return std::sqrt(kernels::dot(v, v)); }

FeatureVector normalized(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw Error("degenerate feature vector");
  FeatureVector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("cosine_similarity: dimension mismatch");
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw Error("degenerate feature vector");
  const double c = kernels::dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

SimplexWeights temperature_softmax(std::span<const double> logits, Temperature tau) {
  if (logits.empty()) throw Error("softmax of empty logits");
  double peak = -INFINITY;
  for (double l : logits) {
    if (!std::isfinite(l)) throw Error("softmax: non-finite logit");
    peak = std::max(peak, l);
  }
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - peak) / tau.value());
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return SimplexWeights::from(std::move(p));
}

std::uint64_t checksum(std::span<const double> values, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace ldpf
