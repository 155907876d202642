#include "ldpf/latent_domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ldpf/kernels.hpp"

namespace ldpf {

DomainFeatureExtractor::DomainFeatureExtractor(Matrix w1, Vector b1, Matrix w2, Vector b2)
    : w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2)), b2_(std::move(b2)) {
  if (b1_.size() != w1_.rows() || w2_.cols() != w1_.rows() || b2_.size() != w2_.rows())
    throw Error("domain feature extractor: inconsistent layer shapes");
}

DomainFeatureExtractor DomainFeatureExtractor::initialize(std::size_t input_dim, std::size_t hidden_dim,
                                                          std::size_t output_dim, RngSeed seed) {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0)
    throw Error("domain feature extractor: dimensions must be positive");
  Rng rng(derive_seed(seed, 0xE47));
  Matrix w1(hidden_dim, input_dim);
  Matrix w2(output_dim, hidden_dim);
  const double s1 = std::sqrt(2.0 / static_cast<double>(input_dim));
  const double s2 = std::sqrt(1.0 / static_cast<double>(hidden_dim));
  for (double& x : w1.data()) x = rng.normal(0.0, s1);
  for (double& x : w2.data()) x = rng.normal(0.0, s2);
  return {std::move(w1), Vector(hidden_dim, 0.0), std::move(w2), Vector(output_dim, 0.0)};
}

DomainFeatureExtractor::Forward DomainFeatureExtractor::forward(std::span<const double> x) const {
  if (x.size() != input_dim())
    throw Error("domain feature extractor expects dimension " + std::to_string(input_dim()) + ", got " +
                std::to_string(x.size()));
  Forward f;
  f.hidden_pre.resize(hidden_dim());
  kernels::matvec(w1_, x, b1_, f.hidden_pre);
  f.hidden.resize(hidden_dim());
  for (std::size_t i = 0; i < hidden_dim(); ++i) f.hidden[i] = std::max(0.0, f.hidden_pre[i]);
  f.output.resize(output_dim());
  kernels::matvec(w2_, f.hidden, b2_, f.output);
  return f;
}

void DomainFeatureExtractor::backward(std::span<const double> x, const Forward& fwd,
                                      std::span<const double> grad_output, Gradients& grads) const {
  kernels::outer_accumulate(grad_output, fwd.hidden, grads.w2);
  for (std::size_t i = 0; i < output_dim(); ++i) grads.b2[i] += grad_output[i];
  Vector grad_hidden(hidden_dim(), 0.0);
  kernels::matvec_transposed_accumulate(w2_, grad_output, grad_hidden);
  for (std::size_t i = 0; i < hidden_dim(); ++i)
    if (fwd.hidden_pre[i] <= 0.0) grad_hidden[i] = 0.0;
  kernels::outer_accumulate(grad_hidden, x, grads.w1);
  for (std::size_t i = 0; i < hidden_dim(); ++i) grads.b1[i] += grad_hidden[i];
}

DomainFeatureExtractor::Gradients DomainFeatureExtractor::zero_gradients() const {
  return {Matrix(w1_.rows(), w1_.cols()), Vector(b1_.size(), 0.0), Matrix(w2_.rows(), w2_.cols()),
          Vector(b2_.size(), 0.0)};
}

std::uint64_t DomainFeatureExtractor::parameter_checksum() const {
  std::uint64_t h = checksum(w1_.data());
  h = checksum(b1_, h);
  h = checksum(w2_.data(), h);
  return checksum(b2_, h);
}

AuxiliaryClassifier::AuxiliaryClassifier(Matrix w, Vector b) : w_(std::move(w)), b_(std::move(b)) {
  if (b_.size() != w_.rows()) throw Error("auxiliary classifier: bias size differs from class count");
}

AuxiliaryClassifier AuxiliaryClassifier::initialize(std::size_t input_dim, std::size_t classes, RngSeed seed) {
  if (input_dim == 0 || classes == 0) throw Error("auxiliary classifier: dimensions must be positive");
  Rng rng(derive_seed(seed, 0xA0C));
  Matrix w(classes, input_dim);
  const double s = std::sqrt(1.0 / static_cast<double>(input_dim));
  for (double& x : w.data()) x = rng.normal(0.0, s);
  return {std::move(w), Vector(classes, 0.0)};
}

Vector AuxiliaryClassifier::logits(std::span<const double> domain_feature) const {
  if (domain_feature.size() != input_dim()) throw Error("auxiliary classifier: feature dimension mismatch");
  Vector out(class_count());
  kernels::matvec(w_, domain_feature, b_, out);
  return out;
}

AuxiliaryClassifier::Gradients AuxiliaryClassifier::zero_gradients() const {
  return {Matrix(w_.rows(), w_.cols()), Vector(b_.size(), 0.0)};
}

std::uint64_t AuxiliaryClassifier::parameter_checksum() const { return checksum(b_, checksum(w_.data())); }

namespace {

// Stable log-softmax probabilities and the cross-entropy of `label`.
double softmax_cross_entropy(const Vector& logits, std::size_t label, Vector& probs) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  probs.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - peak);
    sum += probs[k];
  }
  for (double& p : probs) p /= sum;
  return -(logits[label] - peak - std::log(sum));
}

void check_batch(std::span<const FeatureVector> features, std::span<const std::size_t> labels, std::size_t classes) {
  if (features.empty()) throw Error("adversarial loss: empty batch");
  if (features.size() != labels.size()) throw Error("adversarial loss: feature and label counts differ");
  for (std::size_t y : labels)
    if (y >= classes) throw Error("adversarial loss: class label out of range");
}

}  // namespace

double adversarial_loss(const AuxiliaryClassifier& aux, std::span<const FeatureVector> domain_features,
                        std::span<const std::size_t> class_labels) {
  check_batch(domain_features, class_labels, aux.class_count());
  double total = 0.0;
  Vector probs;
  for (std::size_t i = 0; i < domain_features.size(); ++i)
    total += softmax_cross_entropy(aux.logits(domain_features[i]), class_labels[i], probs);
  return total / static_cast<double>(domain_features.size());
}

AdversarialGradients adversarial_gradients(const AuxiliaryClassifier& aux,
                                           std::span<const FeatureVector> domain_features,
                                           std::span<const std::size_t> class_labels) {
  check_batch(domain_features, class_labels, aux.class_count());
  const double inv_n = 1.0 / static_cast<double>(domain_features.size());
  AdversarialGradients g;
  g.aux = aux.zero_gradients();
  g.feature_gradients.reserve(domain_features.size());
  Vector probs;
  for (std::size_t i = 0; i < domain_features.size(); ++i) {
    g.loss += softmax_cross_entropy(aux.logits(domain_features[i]), class_labels[i], probs);
    Vector grad_logits = probs;
    grad_logits[class_labels[i]] -= 1.0;
    for (double& x : grad_logits) x *= inv_n;
    kernels::outer_accumulate(grad_logits, domain_features[i], g.aux.w);
    for (std::size_t k = 0; k < grad_logits.size(); ++k) g.aux.b[k] += grad_logits[k];
    Vector grad_feature(aux.input_dim(), 0.0);
    kernels::matvec_transposed_accumulate(aux.w(), grad_logits, grad_feature);
    g.feature_gradients.push_back(std::move(grad_feature));
  }
  g.loss *= inv_n;
  return g;
}

GradientReversal::GradientReversal(double lambda) : lambda_(lambda) {
  if (!std::isfinite(lambda)) throw Error("gradient reversal: lambda must be finite");
}

std::vector<Vector> GradientReversal::backward(std::span<const Vector> grads) const {
  std::vector<Vector> out(grads.begin(), grads.end());
  for (Vector& g : out)
    for (double& x : g) x *= -lambda_;
  return out;
}

std::size_t assign_latent_domain(const Matrix& centroids, std::span<const double> domain_feature) {
  if (centroids.rows() == 0) throw Error("no centroids to assign against");
  if (domain_feature.size() != centroids.cols()) throw Error("domain feature dimension differs from centroids");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < centroids.rows(); ++s) {
    const double d = kernels::squared_distance(centroids.row(s), domain_feature);
    if (d < best_d) {
      best_d = d;
      best = s;
    }
  }
  return best;
}

Matrix stack_rows(std::span<const FeatureVector> rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw Error("stack_rows: ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

Matrix group_means(const Matrix& points, std::span<const std::size_t> labels, std::size_t k) {
  Matrix sums(k, points.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    kernels::axpy(1.0, points.row(i), sums.row(labels[i]));
    ++counts[labels[i]];
  }
  for (std::size_t s = 0; s < k; ++s)
    if (counts[s] > 0)
      for (double& x : sums.row(s)) x /= static_cast<double>(counts[s]);
  return sums;
}

namespace {

double assign_all(const Matrix& points, const Matrix& centroids, std::vector<std::size_t>& labels) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    labels[i] = assign_latent_domain(centroids, points.row(i));
    inertia += kernels::squared_distance(points.row(i), centroids.row(labels[i]));
  }
  return inertia;
}

Matrix kmeans_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::size_t first = rng.below(n);
  std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());
  Vector d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = kernels::squared_distance(points.row(i), centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i)
        if (d2[i] > 0.0) pick = i;  // fallback when rounding exhausts the scan
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], kernels::squared_distance(points.row(i), centroids.row(c)));
  }
  return centroids;
}

// Moves the point farthest from its centroid into each empty cluster.
void repair_empty_clusters(const Matrix& points, Matrix& centroids, std::vector<std::size_t>& labels) {
  const std::size_t k = centroids.rows();
  for (std::size_t s = 0; s < k; ++s) {
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t l : labels) ++counts[l];
    if (counts[s] > 0) continue;
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (counts[labels[i]] <= 1) continue;
      const double d = kernels::squared_distance(points.row(i), centroids.row(labels[i]));
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    labels[far] = s;
    std::copy(points.row(far).begin(), points.row(far).end(), centroids.row(s).begin());
  }
}

}  // namespace

namespace {

// Single-point transfers after Lloyd converges: moving x from cluster a to b
// changes the inertia by n_b/(n_b+1)|x-c_b|^2 - n_a/(n_a-1)|x-c_a|^2, so any
// negative change is taken. Escapes Lloyd fixpoints that are not optimal.
void hartigan_refine(const Matrix& points, KMeansResult& r, std::size_t max_sweeps) {
  const std::size_t n = points.rows();
  const std::size_t k = r.centroids.rows();
  const std::size_t d = points.cols();
  std::vector<std::size_t> count(k, 0);
  for (std::size_t a : r.assignments) ++count[a];
  bool moved = true;
  for (std::size_t sweep = 0; moved && sweep < max_sweeps; ++sweep) {
    moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = r.assignments[i];
      if (count[a] < 2) continue;
      const auto x = points.row(i);
      const double na = static_cast<double>(count[a]);
      const double remove = na / (na - 1.0) * kernels::squared_distance(x, r.centroids.row(a));
      std::size_t target = a;
      double add = remove;
      for (std::size_t b = 0; b < k; ++b) {
        if (b == a) continue;
        const double nb = static_cast<double>(count[b]);
        const double cost = nb / (nb + 1.0) * kernels::squared_distance(x, r.centroids.row(b));
        if (cost < add) {
          add = cost;
          target = b;
        }
      }
      if (target == a || add >= remove - 1e-12 * std::max(1.0, remove)) continue;
      const double nb = static_cast<double>(count[target]);
      for (std::size_t j = 0; j < d; ++j) {
        r.centroids(a, j) = (r.centroids(a, j) * na - x[j]) / (na - 1.0);
        r.centroids(target, j) = (r.centroids(target, j) * nb + x[j]) / (nb + 1.0);
      }
      --count[a];
      ++count[target];
      r.assignments[i] = target;
      moved = true;
    }
  }
  r.centroids = group_means(points, r.assignments, k);
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    inertia += kernels::squared_distance(points.row(i), r.centroids.row(r.assignments[i]));
  const double previous = r.inertia_history.back();
  if (inertia > previous + 1e-9 * std::max(1.0, previous))
    throw Error("k-means: inertia increased during refinement");
  r.inertia_history.push_back(inertia);
}

KMeansResult lloyd(const Matrix& points, std::size_t k, RngSeed seed, std::size_t max_iterations) {
  const std::size_t n = points.rows();
  Rng rng(seed);
  KMeansResult r;
  r.centroids = kmeans_plus_plus(points, k, rng);
  r.assignments.assign(n, 0);
  double inertia = assign_all(points, r.centroids, r.assignments);
  r.inertia_history.push_back(inertia);

  std::vector<std::size_t> next(n);
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    repair_empty_clusters(points, r.centroids, r.assignments);
    r.centroids = group_means(points, r.assignments, k);
    inertia = assign_all(points, r.centroids, next);
    // Lloyd steps never increase the objective; allow only rounding noise.
    const double previous = r.inertia_history.back();
    if (inertia > previous + 1e-9 * std::max(1.0, previous))
      throw Error("k-means: inertia increased between iterations");
    r.inertia_history.push_back(inertia);
    if (next == r.assignments) break;
    r.assignments = next;
  }
  repair_empty_clusters(points, r.centroids, r.assignments);
  r.centroids = group_means(points, r.assignments, k);
  hartigan_refine(points, r, max_iterations);
  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    r.inertia += kernels::squared_distance(points.row(i), r.centroids.row(r.assignments[i]));
  return r;
}

}  // namespace

KMeansResult kmeans_cluster(const Matrix& points, std::size_t k, RngSeed seed, std::size_t max_iterations,
                            std::size_t restarts) {
  const std::size_t n = points.rows();
  if (k == 0) throw Error("k-means: k must be at least 1");
  if (n < k) throw Error("k-means: " + std::to_string(n) + " points cannot form " + std::to_string(k) + " clusters");
  if (restarts == 0) throw Error("k-means: restarts must be at least 1");
  KMeansResult best = lloyd(points, k, derive_seed(seed, 0), max_iterations);
  for (std::size_t r = 1; r < restarts; ++r) {
    KMeansResult candidate = lloyd(points, k, derive_seed(seed, r), max_iterations);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

std::vector<std::size_t> solve_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();
  if (n == 0) return {};
  if (n > m) throw Error("assignment: more rows than columns");
  // Potentials form of the Hungarian method, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  Vector u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    Vector minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

std::vector<std::size_t> stabilize_assignment(const Matrix& prev_centroids, const Matrix& new_centroids) {
  if (prev_centroids.rows() != new_centroids.rows() || prev_centroids.cols() != new_centroids.cols())
    throw Error("stabilize_assignment: centroid matrices differ in shape");
  const std::size_t k = prev_centroids.rows();
  Matrix cost(k, k);
  for (std::size_t s = 0; s < k; ++s)
    for (std::size_t t = 0; t < k; ++t)
      cost(s, t) = kernels::squared_distance(prev_centroids.row(s), new_centroids.row(t));
  return solve_assignment(cost);
}

void relabel(KMeansResult& result, std::span<const std::size_t> pi) {
  const std::size_t k = result.centroids.rows();
  if (pi.size() != k) throw Error("relabel: permutation size differs from cluster count");
  Matrix centroids(k, result.centroids.cols());
  std::vector<std::size_t> inverse(k);
  for (std::size_t s = 0; s < k; ++s) {
    std::copy(result.centroids.row(pi[s]).begin(), result.centroids.row(pi[s]).end(), centroids.row(s).begin());
    inverse[pi[s]] = s;
  }
  result.centroids = std::move(centroids);
  for (std::size_t& a : result.assignments) a = inverse[a];
}

std::vector<std::size_t> LatentDomainState::cluster_sizes() const {
  std::vector<std::size_t> sizes(centroids.rows(), 0);
  for (std::size_t a : assignments) ++sizes[a];
  return sizes;
}

std::vector<std::vector<std::size_t>> contingency(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw Error("contingency: label sequences differ in length");
  std::size_t na = 0, nb = 0;
  for (std::size_t x : a) na = std::max(na, x + 1);
  for (std::size_t x : b) nb = std::max(nb, x + 1);
  std::vector<std::vector<std::size_t>> t(na, std::vector<std::size_t>(nb, 0));
  for (std::size_t i = 0; i < a.size(); ++i) ++t[a[i]][b[i]];
  return t;
}

double best_permutation_agreement(std::span<const std::size_t> clusters, std::span<const std::size_t> reference) {
  if (clusters.empty()) throw Error("agreement of empty labelings");
  const auto table = contingency(clusters, reference);
  const std::size_t rows = table.size();
  const std::size_t cols = table.empty() ? 0 : table[0].size();
  const std::size_t side = std::max(rows, cols);
  Matrix cost(side, side, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) cost(i, j) = -static_cast<double>(table[i][j]);
  const auto match = solve_assignment(cost);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows; ++i)
    if (match[i] < cols) hits += table[i][match[i]];
  return static_cast<double>(hits) / static_cast<double>(clusters.size());
}

double mutual_information(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  const auto table = contingency(a, b);
  const double n = static_cast<double>(a.size());
  if (a.empty()) return 0.0;
  Vector pa(table.size(), 0.0), pb(table.empty() ? 0 : table[0].size(), 0.0);
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < pb.size(); ++j) {
      pa[i] += static_cast<double>(table[i][j]) / n;
      pb[j] += static_cast<double>(table[i][j]) / n;
    }
  double mi = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < pb.size(); ++j) {
      if (table[i][j] == 0) continue;
      const double pij = static_cast<double>(table[i][j]) / n;
      mi += pij * std::log(pij / (pa[i] * pb[j]));
    }
  return mi;
}

}  // namespace ldpf
