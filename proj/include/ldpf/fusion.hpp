#pragma once

// Inference-time prompt fusion. The image's domain feature is compared with
// every latent-domain centroid; the resulting simplex weights mix the
// per-domain class text features, and the image is classified against the
// mixed features.

#include <span>
#include <string>
#include <vector>

#include "ldpf/core.hpp"
#include "ldpf/encoders.hpp"
#include "ldpf/latent_domain.hpp"
#include "ldpf/prompts.hpp"
#include "ldpf/training.hpp"

namespace ldpf {

enum class FusionMode { similarity, greedy, average, single };

struct FusionConfig {
  double tau_fusion = 0.1;
  FusionMode mode = FusionMode::similarity;
  std::size_t single_domain = 0;  // used by FusionMode::single

  /// Checks mode=single against the domain count.
  void validate(std::size_t n_domains) const;

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

std::string to_string(FusionMode mode);
/// Accepts similarity | greedy | average | single:<s>; sets cfg.mode (and
/// cfg.single_domain).
void parse_fusion_mode(std::string_view text, FusionConfig& cfg);

/// similarity: softmax_s(cos(domain_feature, c_s) / tau); greedy: one-hot at the
/// most cosine-similar centroid (ties to the lowest index); average: uniform;
/// single: one-hot at cfg.single_domain.
SimplexWeights fusion_weights(std::span<const double> domain_feature, const Matrix& centroids,
                              const FusionConfig& cfg);

/// f~_k = sum_s alpha_s f_k^s, not renormalized.
std::vector<FeatureVector> fuse_text_features(const TextFeatureTable& table, const SimplexWeights& alpha);

struct Prediction {
  SimplexWeights probabilities;
  SimplexWeights alpha;
  std::size_t predicted_class = 0;
};

/// Frozen text side of a trained model, computed once per evaluation.
struct InferenceContext {
  const LdpfModel& model;
  TextFeatureTable table;

  InferenceContext(const LdpfModel& model, const EncoderPair& enc);
};

/// f(x) -> e(f(x)) -> alpha -> fused class features -> class probabilities.
Prediction predict_from_feature(std::span<const double> image_feature, const InferenceContext& ctx,
                                const FusionConfig& cfg, Temperature tau_cls);

Prediction predict(std::span<const double> payload, const LdpfModel& model, const EncoderPair& enc,
                   const FusionConfig& cfg, Temperature tau_cls);

/// Class predicted by each domain's prompt alone.
std::vector<std::size_t> per_domain_predictions(std::span<const double> image_feature, const InferenceContext& ctx,
                                                Temperature tau_cls);

}  // namespace ldpf
