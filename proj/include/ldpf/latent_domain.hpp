#pragma once

// Latent domain discovery. A two-layer perceptron e(.) maps frozen image
// features to domain features; an auxiliary linear classifier a(.) is trained
// on a(e(f(x))) against class labels while a gradient reversal layer makes the
// extractor ascend the same loss, squeezing class information out of the domain
// features. Domain features are clustered with k-means, and successive
// clustering rounds are aligned with the Kuhn-Munkres algorithm so each latent
// domain keeps its identity (and its prompt) across rounds.

#include <cstdint>
#include <span>
#include <vector>

#include "ldpf/core.hpp"

namespace ldpf {

class DomainFeatureExtractor {
 public:
  struct Forward {
    Vector hidden_pre;
    Vector hidden;
    FeatureVector output;
  };

  struct Gradients {
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;
  };

  DomainFeatureExtractor() = default;
  DomainFeatureExtractor(Matrix w1, Vector b1, Matrix w2, Vector b2);

  /// He-style init for the rectifier layer, zero biases.
  static DomainFeatureExtractor initialize(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                                           RngSeed seed);

  std::size_t input_dim() const { return w1_.cols(); }
  std::size_t hidden_dim() const { return w1_.rows(); }
  std::size_t output_dim() const { return w2_.rows(); }

  /// W2 relu(W1 x + b1) + b2
  Forward forward(std::span<const double> x) const;
  FeatureVector operator()(std::span<const double> x) const { return forward(x).output; }

  /// Accumulates parameter gradients for one sample into `grads`.
  void backward(std::span<const double> x, const Forward& fwd, std::span<const double> grad_output,
                Gradients& grads) const;

  Gradients zero_gradients() const;

  Matrix& w1() { return w1_; }
  Vector& b1() { return b1_; }
  Matrix& w2() { return w2_; }
  Vector& b2() { return b2_; }
  const Matrix& w1() const { return w1_; }
  const Vector& b1() const { return b1_; }
  const Matrix& w2() const { return w2_; }
  const Vector& b2() const { return b2_; }

  std::uint64_t parameter_checksum() const;

  friend bool operator==(const DomainFeatureExtractor&, const DomainFeatureExtractor&) = default;

 private:
  Matrix w1_;
  Vector b1_;
  Matrix w2_;
  Vector b2_;
};

class AuxiliaryClassifier {
 public:
  struct Gradients {
    Matrix w;
    Vector b;
  };

  AuxiliaryClassifier() = default;
  AuxiliaryClassifier(Matrix w, Vector b);
  static AuxiliaryClassifier initialize(std::size_t input_dim, std::size_t classes, RngSeed seed);

  std::size_t input_dim() const { return w_.cols(); }
  std::size_t class_count() const { return w_.rows(); }

  Vector logits(std::span<const double> domain_feature) const;
  Gradients zero_gradients() const;

  Matrix& w() { return w_; }
  Vector& b() { return b_; }
  const Matrix& w() const { return w_; }
  const Vector& b() const { return b_; }

  std::uint64_t parameter_checksum() const;

  friend bool operator==(const AuxiliaryClassifier&, const AuxiliaryClassifier&) = default;

 private:
  Matrix w_;
  Vector b_;
};

/// Mean cross-entropy of a(features) against class labels.
double adversarial_loss(const AuxiliaryClassifier& aux, std::span<const FeatureVector> domain_features,
                        std::span<const std::size_t> class_labels);

struct AdversarialGradients {
  double loss = 0.0;
  AuxiliaryClassifier::Gradients aux;       // dL/d(aux params)
  std::vector<Vector> feature_gradients;    // dL/d(domain feature), one per sample
};

AdversarialGradients adversarial_gradients(const AuxiliaryClassifier& aux,
                                           std::span<const FeatureVector> domain_features,
                                           std::span<const std::size_t> class_labels);

/// Identity forward; backward scales incoming gradients by -lambda.
class GradientReversal {
 public:
  explicit GradientReversal(double lambda);
  double lambda() const { return lambda_; }

  std::span<const FeatureVector> forward(std::span<const FeatureVector> batch) const { return batch; }
  std::vector<Vector> backward(std::span<const Vector> grads) const;

 private:
  double lambda_;
};

struct KMeansResult {
  Matrix centroids;
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::vector<double> inertia_history;  // one entry per assignment step
};

/// k-means++ seeding, Lloyd iterations to an assignment fixpoint (at most
/// `max_iterations`). An empty cluster is reseeded at the point farthest from
/// its assigned centroid. Each run ends with single-point transfer sweeps that
/// take any move lowering the inertia. Returned centroids are the means of the
/// returned assignments. The best of `restarts` independently seeded runs is kept.
KMeansResult kmeans_cluster(const Matrix& points, std::size_t k, RngSeed seed, std::size_t max_iterations = 300,
                            std::size_t restarts = 20);

/// Kuhn-Munkres: minimum-cost assignment for an n x m cost matrix, n <= m.
/// Returns the column chosen for each row.
std::vector<std::size_t> solve_assignment(const Matrix& cost);

/// Permutation pi minimizing sum_s ||prev_s - next_pi(s)||^2.
std::vector<std::size_t> stabilize_assignment(const Matrix& prev_centroids, const Matrix& new_centroids);

/// Applies pi from stabilize_assignment: new cluster pi(s) becomes label s.
void relabel(KMeansResult& result, std::span<const std::size_t> pi);

/// Nearest centroid in Euclidean distance; ties go to the lowest index.
std::size_t assign_latent_domain(const Matrix& centroids, std::span<const double> domain_feature);

struct LatentDomainState {
  Matrix centroids;                      // N_s x Dd
  std::vector<std::size_t> assignments;  // per training sample
  std::size_t round = 0;
  double inertia = 0.0;

  std::size_t domain_count() const { return centroids.rows(); }
  std::vector<std::size_t> cluster_sizes() const;

  friend bool operator==(const LatentDomainState&, const LatentDomainState&) = default;
};

Matrix stack_rows(std::span<const FeatureVector> rows);

/// Means of `points` grouped by `labels` (k groups); empty groups stay zero.
Matrix group_means(const Matrix& points, std::span<const std::size_t> labels, std::size_t k);

// Diagnostics

/// Best-permutation accuracy between cluster labels and reference labels: the
/// fraction of samples on the diagonal after the optimal one-to-one matching of
/// clusters to reference labels.
double best_permutation_agreement(std::span<const std::size_t> clusters, std::span<const std::size_t> reference);

/// Mutual information (nats) between two label sequences.
double mutual_information(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// counts[i][j] = #{n : a_n = i, b_n = j}
std::vector<std::vector<std::size_t>> contingency(std::span<const std::size_t> a, std::span<const std::size_t> b);

}  // namespace ldpf
