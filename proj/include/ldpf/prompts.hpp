#pragma once

// Dual-part soft prompts: one domain-agnostic block shared by every latent
// domain and one domain-specific block per latent domain, followed by the class
// token. The prompt for (domain s, class k) is
//
//   [v]_1 .. [v]_M1  [d^s]_1 .. [d^s]_M2  [CLASS]_k
//
// In dsp-only mode the agnostic block is dropped.

#include <cstdint>
#include <span>
#include <vector>

#include "ldpf/core.hpp"
#include "ldpf/encoders.hpp"

namespace ldpf {

enum class PromptMode { dsp_only, full };

class PromptBank {
 public:
  PromptBank() = default;
  /// Tokens are drawn from N(0, init_std^2) with the given seed.
  PromptBank(std::size_t m1, std::size_t m2, std::size_t n_domains, std::size_t n_classes,
             std::size_t embed_dim, RngSeed seed, double init_std = 0.02);

  std::size_t agnostic_length() const { return agnostic_.rows(); }
  std::size_t specific_length() const { return m2_; }
  std::size_t domain_count() const { return specific_.size(); }
  std::size_t class_count() const { return n_classes_; }
  std::size_t embed_dim() const { return embed_dim_; }

  const Matrix& agnostic() const { return agnostic_; }
  Matrix& agnostic() { return agnostic_; }
  const Matrix& specific(std::size_t s) const;
  Matrix& specific(std::size_t s);

  TokenSequence assemble(std::size_t domain, std::size_t class_id, PromptMode mode,
                         const EncoderPair& enc) const;

  std::uint64_t agnostic_checksum() const;
  std::uint64_t specific_checksum() const;

  friend bool operator==(const PromptBank&, const PromptBank&) = default;

 private:
  std::size_t m2_ = 0;
  std::size_t n_classes_ = 0;
  std::size_t embed_dim_ = 0;
  Matrix agnostic_;
  std::vector<Matrix> specific_;
};

/// Per-domain per-class text features f_k^s, with the activations kept for
/// backpropagation.
struct TextFeatureTable {
  std::size_t domains = 0;
  std::size_t classes = 0;
  PromptMode mode = PromptMode::full;
  std::vector<TextEncoding> entries;  // row-major [domain][class]

  const FeatureVector& feature(std::size_t s, std::size_t k) const { return entries[s * classes + k].feature; }
  const TextEncoding& encoding(std::size_t s, std::size_t k) const { return entries[s * classes + k]; }
  /// The K class features of domain s.
  std::vector<FeatureVector> domain_features(std::size_t s) const;
};

TextFeatureTable compute_text_features(const PromptBank& bank, const EncoderPair& enc, PromptMode mode);

/// Same as compute_text_features restricted to one domain row.
std::vector<TextEncoding> compute_domain_features(const PromptBank& bank, const EncoderPair& enc,
                                                  std::size_t domain, PromptMode mode);

struct PromptGradients {
  Matrix agnostic;
  std::vector<Matrix> specific;

  static PromptGradients zeros_like(const PromptBank& bank);
};

/// Backpropagates dL/df for entry (s, k) of `table` into `grads`.
void accumulate_prompt_gradient(const PromptBank& bank, const EncoderPair& enc, const TextFeatureTable& table,
                                std::size_t s, std::size_t k, std::span<const double> grad_feature,
                                PromptGradients& grads);

/// P(y = k | x) = softmax_k(cos(class_k, image) / tau). Class features need not
/// be unit norm.
SimplexWeights classify(std::span<const double> image_feature, std::span<const FeatureVector> class_features,
                        Temperature tau);

}  // namespace ldpf
