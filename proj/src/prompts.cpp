#include "ldpf/prompts.hpp"

#include <string>

namespace ldpf {

PromptBank::PromptBank(std::size_t m1, std::size_t m2, std::size_t n_domains, std::size_t n_classes,
                       std::size_t embed_dim, RngSeed seed, double init_std)
    : m2_(m2), n_classes_(n_classes), embed_dim_(embed_dim), agnostic_(m1, embed_dim) {
  if (n_domains == 0) throw Error("prompt bank needs at least one latent domain");
  if (n_classes == 0) throw Error("prompt bank needs at least one class");
  if (embed_dim == 0) throw Error("prompt bank needs a positive embedding dimension");
  Rng rng(derive_seed(seed, 0x9409));
  for (double& x : agnostic_.data()) x = rng.normal(0.0, init_std);
  specific_.reserve(n_domains);
  for (std::size_t s = 0; s < n_domains; ++s) {
    Matrix block(m2, embed_dim);
    for (double& x : block.data()) x = rng.normal(0.0, init_std);
    specific_.push_back(std::move(block));
  }
}

const Matrix& PromptBank::specific(std::size_t s) const {
  if (s >= specific_.size()) throw Error("latent domain index " + std::to_string(s) + " out of range");
  return specific_[s];
}

Matrix& PromptBank::specific(std::size_t s) {
  if (s >= specific_.size()) throw Error("latent domain index " + std::to_string(s) + " out of range");
  return specific_[s];
}

TokenSequence PromptBank::assemble(std::size_t domain, std::size_t class_id, PromptMode mode,
                                   const EncoderPair& enc) const {
  if (domain >= domain_count()) throw Error("latent domain index " + std::to_string(domain) + " out of range");
  if (class_id >= n_classes_) throw Error("class index " + std::to_string(class_id) + " out of range");
  if (enc.embed_dim() != embed_dim_) throw Error("prompt embedding dimension differs from the encoder's");
  TokenSequence seq;
  if (mode == PromptMode::full)
    for (std::size_t i = 0; i < agnostic_.rows(); ++i) seq.tokens.push_back(agnostic_.row(i));
  const Matrix& block = specific_[domain];
  for (std::size_t i = 0; i < block.rows(); ++i) seq.tokens.push_back(block.row(i));
  seq.tokens.push_back(enc.class_token(class_id));
  if (seq.size() > enc.max_context_length()) throw Error("prompt exceeds the encoder context length");
  return seq;
}

std::uint64_t PromptBank::agnostic_checksum() const { return checksum(agnostic_.data()); }

std::uint64_t PromptBank::specific_checksum() const {
  std::uint64_t h = checksum({});
  for (const Matrix& m : specific_) h = checksum(m.data(), h);
  return h;
}

std::vector<FeatureVector> TextFeatureTable::domain_features(std::size_t s) const {
  std::vector<FeatureVector> out;
  out.reserve(classes);
  for (std::size_t k = 0; k < classes; ++k) out.push_back(feature(s, k));
  return out;
}

std::vector<TextEncoding> compute_domain_features(const PromptBank& bank, const EncoderPair& enc,
                                                  std::size_t domain, PromptMode mode) {
  std::vector<TextEncoding> out;
  out.reserve(bank.class_count());
  for (std::size_t k = 0; k < bank.class_count(); ++k)
    out.push_back(enc.encode_text(bank.assemble(domain, k, mode, enc)));
  return out;
}

TextFeatureTable compute_text_features(const PromptBank& bank, const EncoderPair& enc, PromptMode mode) {
  TextFeatureTable t;
  t.domains = bank.domain_count();
  t.classes = bank.class_count();
  t.mode = mode;
  t.entries.reserve(t.domains * t.classes);
  for (std::size_t s = 0; s < t.domains; ++s)
    for (TextEncoding& e : compute_domain_features(bank, enc, s, mode)) t.entries.push_back(std::move(e));
  return t;
}

PromptGradients PromptGradients::zeros_like(const PromptBank& bank) {
  PromptGradients g;
  g.agnostic = Matrix(bank.agnostic_length(), bank.embed_dim());
  for (std::size_t s = 0; s < bank.domain_count(); ++s)
    g.specific.emplace_back(bank.specific_length(), bank.embed_dim());
  return g;
}

void accumulate_prompt_gradient(const PromptBank& bank, const EncoderPair& enc, const TextFeatureTable& table,
                                std::size_t s, std::size_t k, std::span<const double> grad_feature,
                                PromptGradients& grads) {
  const TokenSequence seq = bank.assemble(s, k, table.mode, enc);
  const std::vector<Vector> per_token = enc.text_backward(seq, table.encoding(s, k), grad_feature);
  std::size_t pos = 0;
  if (table.mode == PromptMode::full) {
    for (std::size_t i = 0; i < bank.agnostic_length(); ++i, ++pos)
      for (std::size_t c = 0; c < bank.embed_dim(); ++c) grads.agnostic(i, c) += per_token[pos][c];
  }
  for (std::size_t i = 0; i < bank.specific_length(); ++i, ++pos)
    for (std::size_t c = 0; c < bank.embed_dim(); ++c) grads.specific[s](i, c) += per_token[pos][c];
  // the class token is frozen
}

SimplexWeights classify(std::span<const double> image_feature, std::span<const FeatureVector> class_features,
                        Temperature tau) {
  if (class_features.empty()) throw Error("classify: no class features");
  Vector logits(class_features.size());
  for (std::size_t k = 0; k < class_features.size(); ++k)
    logits[k] = cosine_similarity(class_features[k], image_feature);
  return temperature_softmax(logits, tau);
}

}  // namespace ldpf
