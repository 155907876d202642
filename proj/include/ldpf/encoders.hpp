#pragma once

// Frozen image/text encoder pair. Both encoders map into the same D-dimensional
// feature space and return unit-norm features. Nothing outside this module can
// reach the parameters: every member is const after construction.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ldpf/core.hpp"

namespace ldpf {

/// Prompt token stream fed to the text encoder. Tokens are views into the
/// owning storage (prompt bank or encoder vocabulary), so identity is
/// observable through the data pointer.
struct TokenSequence {
  std::vector<std::span<const double>> tokens;
  std::size_t size() const { return tokens.size(); }
};

struct TextEncoding {
  FeatureVector feature;    // unit norm
  Vector activation;        // pre-normalization activation
  double activation_norm = 0.0;
};

struct BackboneDescriptor {
  std::string kind = "toy";  // toy | external
  std::string weights_path;
  std::size_t image_dim = 256;  // D, shared feature dimension
  std::size_t embed_dim = 64;   // E, token embedding dimension
  std::size_t payload_dim = 16;
  std::size_t concept_dims = 8;  // leading payload coordinates tied to class tokens
  std::size_t max_context_length = 77;
  std::uint64_t seed = 0;

  friend bool operator==(const BackboneDescriptor&, const BackboneDescriptor&) = default;
};

class EncoderPair {
 public:
  virtual ~EncoderPair() = default;

  virtual std::size_t feature_dim() const = 0;
  virtual std::size_t embed_dim() const = 0;
  virtual std::size_t payload_dim() const = 0;
  virtual std::size_t max_context_length() const = 0;
  virtual std::size_t vocabulary_size() const = 0;

  virtual FeatureVector encode_image(std::span<const double> payload) const = 0;

  /// Fixed embedding of the class-name token for `class_id`.
  virtual std::span<const double> class_token(std::size_t class_id) const = 0;

  virtual TextEncoding encode_text(const TokenSequence& seq) const = 0;

  /// Vector-Jacobian product: given dL/dfeature for `enc = encode_text(seq)`,
  /// returns dL/dtoken for every position of `seq`.
  virtual std::vector<Vector> text_backward(const TokenSequence& seq, const TextEncoding& enc,
                                            std::span<const double> grad_feature) const = 0;

  /// Checksum over every parameter; used for the frozen contract and for
  /// checkpoint fingerprints.
  virtual std::uint64_t parameter_checksum() const = 0;
};

/// Parameters of the projection encoder architecture:
///   image:  normalize(tanh(Wi x + bi))
///   text:   normalize(tanh(Wt sum_j w_j t_j + bt))
struct ProjectionWeights {
  Matrix image_weight;   // D x P
  Vector image_bias;     // D
  Matrix text_weight;    // D x E
  Vector text_bias;      // D
  Vector position_weights;  // max_context_length, pairwise distinct
  Matrix class_tokens;   // vocabulary x E
};

class ProjectionEncoderPair final : public EncoderPair {
 public:
  explicit ProjectionEncoderPair(ProjectionWeights weights);

  std::size_t feature_dim() const override { return w_.image_weight.rows(); }
  std::size_t embed_dim() const override { return w_.text_weight.cols(); }
  std::size_t payload_dim() const override { return w_.image_weight.cols(); }
  std::size_t max_context_length() const override { return w_.position_weights.size(); }
  std::size_t vocabulary_size() const override { return w_.class_tokens.rows(); }

  FeatureVector encode_image(std::span<const double> payload) const override;
  std::span<const double> class_token(std::size_t class_id) const override;
  TextEncoding encode_text(const TokenSequence& seq) const override;
  std::vector<Vector> text_backward(const TokenSequence& seq, const TextEncoding& enc,
                                    std::span<const double> grad_feature) const override;
  std::uint64_t parameter_checksum() const override;

  const ProjectionWeights& weights() const { return w_; }

 private:
  const ProjectionWeights w_;
};

/// Seeded toy pair with a built-in image/text alignment: the payload's leading
/// `concept_dims` coordinates map onto the text-side image of the matching class
/// token, the remaining coordinates ("style") map through independent random
/// directions.
std::unique_ptr<EncoderPair> make_toy_encoder(const BackboneDescriptor& desc);

/// Loads projection weights exported to `desc.weights_path` (JSON, see
/// docs/formats.md) and checks them against the descriptor dimensions. A zero
/// dimension in the descriptor accepts whatever the file holds.
std::unique_ptr<EncoderPair> external_encoder_adapter(const BackboneDescriptor& desc);

/// Dispatches on `desc.kind`.
std::unique_ptr<EncoderPair> make_encoder_pair(const BackboneDescriptor& desc);

/// Writes weights in the format read by external_encoder_adapter.
void save_projection_weights(const ProjectionWeights& w, const std::string& path);

}  // namespace ldpf
