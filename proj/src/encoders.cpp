#include "ldpf/encoders.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ldpf/json_util.hpp"
#include "ldpf/kernels.hpp"

namespace ldpf {

namespace {

constexpr std::string_view kWeightsFormat = "ldpf-projection-encoder/1";

void check_shapes(const ProjectionWeights& w) {
  const std::size_t d = w.image_weight.rows();
  if (d == 0 || w.image_weight.cols() == 0) throw Error("encoder: empty image projection");
  if (w.image_bias.size() != d || w.text_weight.rows() != d || w.text_bias.size() != d)
    throw Error("encoder: image and text features must share one dimension");
  if (w.text_weight.cols() == 0) throw Error("encoder: empty text projection");
  if (w.class_tokens.cols() != w.text_weight.cols())
    throw Error("encoder: class token width differs from embedding dimension");
  if (w.position_weights.empty()) throw Error("encoder: no position weights");
}

}  // namespace

ProjectionEncoderPair::ProjectionEncoderPair(ProjectionWeights weights) : w_(std::move(weights)) {
  check_shapes(w_);
}

FeatureVector ProjectionEncoderPair::encode_image(std::span<const double> payload) const {
  if (payload.size() != payload_dim())
    throw Error("image payload has dimension " + std::to_string(payload.size()) + ", encoder expects " +
                std::to_string(payload_dim()));
  Vector pre(feature_dim());
  kernels::matvec(w_.image_weight, payload, w_.image_bias, pre);
  for (double& x : pre) x = std::tanh(x);
  return normalized(pre);
}

std::span<const double> ProjectionEncoderPair::class_token(std::size_t class_id) const {
  if (class_id >= vocabulary_size())
    throw Error("class id " + std::to_string(class_id) + " outside encoder vocabulary");
  return w_.class_tokens.row(class_id);
}

TextEncoding ProjectionEncoderPair::encode_text(const TokenSequence& seq) const {
  if (seq.size() == 0) throw Error("text encoder: empty token sequence");
  if (seq.size() > max_context_length()) throw Error("text encoder: sequence exceeds context length");
  const std::size_t e = embed_dim();
  Vector pooled(e, 0.0);
  for (std::size_t j = 0; j < seq.size(); ++j) {
    if (seq.tokens[j].size() != e) throw Error("text encoder: token width mismatch");
    kernels::axpy(w_.position_weights[j], seq.tokens[j], pooled);
  }
  TextEncoding out;
  out.activation.resize(feature_dim());
  kernels::matvec(w_.text_weight, pooled, w_.text_bias, out.activation);
  for (double& x : out.activation) x = std::tanh(x);
  out.activation_norm = norm(out.activation);
  out.feature = normalized(out.activation);
  return out;
}

std::vector<Vector> ProjectionEncoderPair::text_backward(const TokenSequence& seq, const TextEncoding& enc,
                                                         std::span<const double> grad_feature) const {
  const std::size_t d = feature_dim();
  if (grad_feature.size() != d) throw Error("text_backward: gradient dimension mismatch");
  // through normalization: (g - f (f.g)) / ||a||
  const double fg = kernels::dot(enc.feature, grad_feature);
  Vector grad_pre(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double g_act = (grad_feature[i] - enc.feature[i] * fg) / enc.activation_norm;
    grad_pre[i] = g_act * (1.0 - enc.activation[i] * enc.activation[i]);
  }
  Vector grad_pooled(embed_dim(), 0.0);
  kernels::matvec_transposed_accumulate(w_.text_weight, grad_pre, grad_pooled);
  std::vector<Vector> out(seq.size(), Vector(embed_dim()));
  for (std::size_t j = 0; j < seq.size(); ++j)
    for (std::size_t i = 0; i < embed_dim(); ++i) out[j][i] = w_.position_weights[j] * grad_pooled[i];
  return out;
}

std::uint64_t ProjectionEncoderPair::parameter_checksum() const {
  std::uint64_t h = checksum(w_.image_weight.data());
  h = checksum(w_.image_bias, h);
  h = checksum(w_.text_weight.data(), h);
  h = checksum(w_.text_bias, h);
  h = checksum(w_.position_weights, h);
  return checksum(w_.class_tokens.data(), h);
}

std::unique_ptr<EncoderPair> make_toy_encoder(const BackboneDescriptor& desc) {
  const std::size_t d = desc.image_dim;
  const std::size_t e = desc.embed_dim;
  const std::size_t p = desc.payload_dim;
  if (d == 0 || e == 0 || p == 0) throw Error("toy encoder: dimensions must be positive");
  if (desc.concept_dims == 0 || desc.concept_dims > p)
    throw Error("toy encoder: concept_dims must lie in [1, payload_dim]");
  if (desc.max_context_length == 0) throw Error("toy encoder: max_context_length must be positive");

  Rng rng(derive_seed(RngSeed{desc.seed}, 0xE4C0DE));
  ProjectionWeights w;

  w.class_tokens = Matrix(desc.concept_dims, e);
  for (double& x : w.class_tokens.data()) x = rng.normal();

  w.text_weight = Matrix(d, e);
  const double text_scale = 1.0 / std::sqrt(static_cast<double>(e));
  for (double& x : w.text_weight.data()) x = rng.normal(0.0, text_scale);

  w.text_bias.resize(d);
  for (double& x : w.text_bias) x = rng.normal(0.0, 0.1);
  w.image_bias = w.text_bias;

  // Concept columns reproduce the text-side projection of the class tokens, so
  // a clean concept-k payload lands near the class-k text feature.
  w.image_weight = Matrix(d, p);
  for (std::size_t c = 0; c < desc.concept_dims; ++c) {
    Vector col(d, 0.0);
    kernels::matvec(w.text_weight, w.class_tokens.row(c), {}, col);
    for (std::size_t r = 0; r < d; ++r) w.image_weight(r, c) = col[r];
  }
  for (std::size_t c = desc.concept_dims; c < p; ++c)
    for (std::size_t r = 0; r < d; ++r) w.image_weight(r, c) = rng.normal();

  w.position_weights.resize(desc.max_context_length);
  for (std::size_t j = 0; j < desc.max_context_length; ++j)
    w.position_weights[j] = 1.0 / (1.0 + 0.1 * static_cast<double>(j));

  return std::make_unique<ProjectionEncoderPair>(std::move(w));
}

std::unique_ptr<EncoderPair> external_encoder_adapter(const BackboneDescriptor& desc) {
  namespace fs = std::filesystem;
  if (desc.weights_path.empty() || !fs::exists(desc.weights_path))
    throw Error("missing weights: '" + desc.weights_path +
                "' not found; export the backbone projection weights to this path "
                "(format " + std::string(kWeightsFormat) + ") or set backbone.kind to \"toy\"");
  std::ifstream in(desc.weights_path);
  if (!in) throw Error("missing weights: cannot open '" + desc.weights_path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& ex) {
    throw Error("unreadable weights file '" + desc.weights_path + "': " + ex.what());
  }
  if (j.value("format", "") != kWeightsFormat)
    throw Error("weights file '" + desc.weights_path + "' is not in format " + std::string(kWeightsFormat));
  ProjectionWeights w;
  w.image_weight = matrix_from_json(j.at("image_weight"));
  w.image_bias = j.at("image_bias").get<Vector>();
  w.text_weight = matrix_from_json(j.at("text_weight"));
  w.text_bias = j.at("text_bias").get<Vector>();
  w.position_weights = j.at("position_weights").get<Vector>();
  w.class_tokens = matrix_from_json(j.at("class_tokens"));
  if (desc.image_dim != 0 && w.image_weight.rows() != desc.image_dim)
    throw Error("dimension mismatch: weights have feature dim " + std::to_string(w.image_weight.rows()) +
                ", descriptor says " + std::to_string(desc.image_dim));
  if (desc.embed_dim != 0 && w.text_weight.cols() != desc.embed_dim)
    throw Error("dimension mismatch: weights have embed dim " + std::to_string(w.text_weight.cols()) +
                ", descriptor says " + std::to_string(desc.embed_dim));
  return std::make_unique<ProjectionEncoderPair>(std::move(w));
}

std::unique_ptr<EncoderPair> make_encoder_pair(const BackboneDescriptor& desc) {
  if (desc.kind == "toy") return make_toy_encoder(desc);
  if (desc.kind == "external") return external_encoder_adapter(desc);
  throw Error("unknown backbone kind '" + desc.kind + "' (expected toy or external)");
}

void save_projection_weights(const ProjectionWeights& w, const std::string& path) {
  Json j;
  j["format"] = kWeightsFormat;
  j["image_weight"] = matrix_to_json(w.image_weight);
  j["image_bias"] = w.image_bias;
  j["text_weight"] = matrix_to_json(w.text_weight);
  j["text_bias"] = w.text_bias;
  j["position_weights"] = w.position_weights;
  j["class_tokens"] = matrix_to_json(w.class_tokens);
  std::ofstream out(path);
  if (!out) throw Error("cannot write weights to '" + path + "'");
  out << j.dump() << '\n';
}

}  // namespace ldpf
