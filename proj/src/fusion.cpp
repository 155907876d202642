#include "ldpf/fusion.hpp"

#include <charconv>

#include "ldpf/kernels.hpp"

namespace ldpf {

void FusionConfig::validate(std::size_t n_domains) const {
  if (!(tau_fusion > 0.0)) throw Error("tau_fusion must be positive");
  if (mode == FusionMode::single && single_domain >= n_domains)
    throw Error("fusion mode single:" + std::to_string(single_domain) + " needs a domain index below " +
                std::to_string(n_domains));
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::similarity: return "similarity";
    case FusionMode::greedy: return "greedy";
    case FusionMode::average: return "average";
    case FusionMode::single: return "single";
  }
  return "unknown";
}

void parse_fusion_mode(std::string_view text, FusionConfig& cfg) {
  if (text == "similarity") {
    cfg.mode = FusionMode::similarity;
  } else if (text == "greedy") {
    cfg.mode = FusionMode::greedy;
  } else if (text == "average") {
    cfg.mode = FusionMode::average;
  } else if (text.starts_with("single")) {
    cfg.mode = FusionMode::single;
    cfg.single_domain = 0;
    if (text.size() > 6) {
      if (text[6] != ':') throw Error("unknown fusion mode '" + std::string(text) + "'");
      const auto digits = text.substr(7);
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), cfg.single_domain);
      if (ec != std::errc() || ptr != digits.data() + digits.size())
        throw Error("bad domain index in fusion mode '" + std::string(text) + "'");
    }
  } else {
    throw Error("unknown fusion mode '" + std::string(text) + "' (similarity|greedy|average|single:<s>)");
  }
}

SimplexWeights fusion_weights(std::span<const double> domain_feature, const Matrix& centroids,
                              const FusionConfig& cfg) {
  const std::size_t n = centroids.rows();
  if (n == 0) throw Error("fusion weights: no centroids");
  cfg.validate(n);
  switch (cfg.mode) {
    case FusionMode::average: return SimplexWeights::uniform(n);
    case FusionMode::single: return SimplexWeights::one_hot(n, cfg.single_domain);
    case FusionMode::similarity:
    case FusionMode::greedy: break;
  }
  Vector cosines(n);
  for (std::size_t s = 0; s < n; ++s) cosines[s] = cosine_similarity(domain_feature, centroids.row(s));
  if (cfg.mode == FusionMode::greedy) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < n; ++s)
      if (cosines[s] > cosines[best]) best = s;
    return SimplexWeights::one_hot(n, best);
  }
  return temperature_softmax(cosines, Temperature(cfg.tau_fusion));
}

std::vector<FeatureVector> fuse_text_features(const TextFeatureTable& table, const SimplexWeights& alpha) {
  if (alpha.size() != table.domains) throw Error("fusion weights do not match the latent domain count");
  std::vector<FeatureVector> fused;
  fused.reserve(table.classes);
  for (std::size_t k = 0; k < table.classes; ++k) {
    FeatureVector f(table.feature(0, k).size(), 0.0);
    for (std::size_t s = 0; s < table.domains; ++s)
      if (alpha[s] != 0.0) kernels::axpy(alpha[s], table.feature(s, k), f);
    if (!(norm(f) > 0.0)) throw Error("degenerate fusion: fused class feature " + std::to_string(k) + " is zero");
    fused.push_back(std::move(f));
  }
  return fused;
}

InferenceContext::InferenceContext(const LdpfModel& m, const EncoderPair& enc)
    : model(m), table(compute_text_features(m.prompts, enc, PromptMode::full)) {
  if (m.latent.centroids.rows() != m.prompts.domain_count())
    throw Error("latent domain state does not match the prompt bank (" + std::to_string(m.latent.centroids.rows()) +
                " centroids, " + std::to_string(m.prompts.domain_count()) + " prompt domains)");
}

Prediction predict_from_feature(std::span<const double> image_feature, const InferenceContext& ctx,
                                const FusionConfig& cfg, Temperature tau_cls) {
  const FeatureVector domain_feature = ctx.model.extractor(image_feature);
  SimplexWeights alpha = fusion_weights(domain_feature, ctx.model.latent.centroids, cfg);
  const std::vector<FeatureVector> fused = fuse_text_features(ctx.table, alpha);
  SimplexWeights probs = classify(image_feature, fused, tau_cls);
  const std::size_t predicted = probs.argmax();
  return {std::move(probs), std::move(alpha), predicted};
}

Prediction predict(std::span<const double> payload, const LdpfModel& model, const EncoderPair& enc,
                   const FusionConfig& cfg, Temperature tau_cls) {
  const InferenceContext ctx(model, enc);
  return predict_from_feature(enc.encode_image(payload), ctx, cfg, tau_cls);
}

std::vector<std::size_t> per_domain_predictions(std::span<const double> image_feature, const InferenceContext& ctx,
                                                Temperature tau_cls) {
  std::vector<std::size_t> out;
  out.reserve(ctx.table.domains);
  for (std::size_t s = 0; s < ctx.table.domains; ++s) {
    const auto features = ctx.table.domain_features(s);
    out.push_back(classify(image_feature, features, tau_cls).argmax());
  }
  return out;
}

}  // namespace ldpf
