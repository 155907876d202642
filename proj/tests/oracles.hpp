#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library beyond plain containers: exhaustive search, textbook
// loops and finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline double dot(const Vec& a, const Vec& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const Vec& a, const Vec& b) { return dot(a, b) / (norm(a) * norm(b)); }

/// Softmax without the max-shift, in long double. Fine for moderate logits.
inline Vec softmax(const Vec& logits, double tau) {
  std::vector<long double> e(logits.size());
  long double z = 0.0L;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<long double>(logits[i]) / tau);
    z += e[i];
  }
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(e[i] / z);
  return out;
}

inline double lambda_schedule(double p) { return 2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0; }

/// Minimum k-means inertia over every assignment of n points to k non-empty
/// clusters (k^n enumeration).
inline double exhaustive_kmeans_inertia(const Mat& points, std::size_t k) {
  const std::size_t n = points.size();
  const std::size_t d = points.front().size();
  std::vector<std::size_t> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    Mat sum(k, Vec(d, 0.0));
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[label[i]];
      for (std::size_t j = 0; j < d; ++j) sum[label[i]][j] += points[i][j];
    }
    if (std::all_of(count.begin(), count.end(), [](std::size_t c) { return c > 0; })) {
      double inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = points[i][j] - sum[label[i]][j] / static_cast<double>(count[label[i]]);
          inertia += diff * diff;
        }
      best = std::min(best, inertia);
    }
    std::size_t pos = 0;
    while (pos < n && ++label[pos] == k) label[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

/// Minimum-cost injective row -> column assignment by trying every ordered
/// choice of columns.
inline double brute_force_assignment_cost(const Mat& cost) {
  const std::size_t n = cost.size();
  const std::size_t m = cost.front().size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> used(m, false);
  std::function<void(std::size_t, double)> go = [&](std::size_t row, double acc) {
    if (row == n) {
      best = std::min(best, acc);
      return;
    }
    for (std::size_t c = 0; c < m; ++c) {
      if (used[c]) continue;
      used[c] = true;
      go(row + 1, acc + cost[row][c]);
      used[c] = false;
    }
  };
  go(0, 0.0);
  return best;
}

/// Selection oracle by a plain row scan: a row counts when the set of
/// per-domain predictions contains the true class.
inline double row_scan_selection(const std::vector<std::size_t>& truth,
                                 const std::vector<std::vector<std::size_t>>& per_domain) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::set<std::size_t> preds(per_domain[i].begin(), per_domain[i].end());
    hits += preds.count(truth[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Best agreement between two labelings over every bijection of cluster ids
/// onto reference ids (k! enumeration, k = max label count).
inline double brute_force_agreement(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t k = 0;
  for (std::size_t x : a) k = std::max(k, x + 1);
  for (std::size_t x : b) k = std::max(k, x + 1);
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < a.size(); ++i) hits += perm[a[i]] == b[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(a.size());
}

/// Central difference of f along every coordinate of x.
inline Vec central_difference(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-4) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Vec& a, const Vec& b) {
  Vec d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double scale = std::max(norm(a), norm(b));
  return scale == 0.0 ? 0.0 : norm(d) / scale;
}

}  // namespace oracle
