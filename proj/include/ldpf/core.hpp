#pragma once

// Shared domain types, seeded randomness and the numeric primitives
// (cosine similarity, temperature softmax) every other module builds on.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldpf {

using Vector = std::vector<double>;

/// Embedding coordinates in the shared image/text feature space.
using FeatureVector = std::vector<double>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix. Rows are exposed as spans.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class Temperature {
 public:
  explicit Temperature(double tau);
  double value() const { return tau_; }

 private:
  double tau_;
};

/// Probability vector over latent domains or classes.
class SimplexWeights {
 public:
  /// Validates non-negativity and unit sum (1e-6).
  static SimplexWeights from(Vector weights);
  static SimplexWeights uniform(std::size_t n);
  static SimplexWeights one_hot(std::size_t n, std::size_t index);

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> values() const { return w_; }

  /// Index of the largest weight; ties resolve to the lowest index.
  std::size_t argmax() const;

 private:
  explicit SimplexWeights(Vector w) : w_(std::move(w)) {}
  Vector w_;
};

struct RngSeed {
  std::uint64_t value = 0;
  friend bool operator==(RngSeed, RngSeed) = default;
};

/// Child seed for an independent stream (worker, epoch, component...).
RngSeed derive_seed(RngSeed parent, std::uint64_t stream);

/// Seeded generator whose output depends only on the seed. The engine output is
/// fixed by the standard; the real-valued conversions live here because the std
/// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(RngSeed seed);

  std::uint64_t next();
  double uniform();                           // [0, 1)
  double uniform(double lo, double hi);
  double normal();                            // N(0, 1), Box-Muller
  double normal(double mean, double stddev);
  std::size_t below(std::size_t n);           // uniform integer in [0, n)

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

double norm(std::span<const double> v);

/// Returns v / ||v||; throws on a zero vector.
FeatureVector normalized(std::span<const double> v);

/// dot(a,b) / (||a|| ||b||). Throws "degenerate feature vector" on zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// exp(l_i / tau) / sum_j exp(l_j / tau) with max subtraction.
SimplexWeights temperature_softmax(std::span<const double> logits, Temperature tau);

/// FNV-1a over the raw bytes of a sequence of doubles.
std::uint64_t checksum(std::span<const double> values, std::uint64_t basis = 1469598103934665603ULL);

std::string to_hex(std::uint64_t value);

}  // namespace ldpf
