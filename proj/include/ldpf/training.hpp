#pragma once

// Two-stage prompt optimization interleaved per epoch:
//   (a) re-cluster domain features and align labels with the previous round,
//   (b) stage 1: domain-specific prompts minimize L_dsp while the auxiliary
//       classifier and extractor play the adversarial game through the GRL,
//   (c) stage 2: the domain-agnostic prompt minimizes lambda * L_dap.
// The logged objective is L = L_dsp + lambda (L_dap - L_adv) with
// lambda(p) = 2 / (1 + exp(-10 p)) - 1.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ldpf/core.hpp"
#include "ldpf/data.hpp"
#include "ldpf/encoders.hpp"
#include "ldpf/latent_domain.hpp"
#include "ldpf/prompts.hpp"

namespace ldpf {

struct OptimizerConfig {
  double learning_rate = 0.002;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t warmup_epochs = 1;
  double warmup_learning_rate = 1e-5;
  /// Base rate for the extractor and auxiliary classifier; 0 reuses
  /// learning_rate. Follows the same warmup and cosine schedule, scaled.
  double latent_learning_rate = 0.0;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct AblationSwitches {
  bool no_dap = false;         // drop the agnostic block (M1 = 0), skip stage 2
  bool no_dsp = false;         // drop the specific blocks (M2 = 0): one shared prompt
  bool no_adv = false;         // extractor receives no adversarial gradient
  bool no_clustering = false;  // latent domains = annotated domains

  friend bool operator==(const AblationSwitches&, const AblationSwitches&) = default;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
  std::size_t m1 = 4;
  std::size_t m2 = 8;
  std::size_t n_domains = 3;
  double tau_cls = 0.01;
  double prompt_init_std = 0.02;
  std::size_t extractor_hidden = 0;     // 0: feature_dim / 2
  std::size_t domain_feature_dim = 0;   // 0: feature_dim / 4
  std::uint64_t seed = 0;
  AblationSwitches ablation;

  /// Throws on inconsistent settings.
  void validate() const;

  std::size_t effective_m1() const { return ablation.no_dap ? 0 : m1; }
  std::size_t effective_m2() const { return ablation.no_dsp ? 0 : m2; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// lambda = 2 / (1 + exp(-10 p)) - 1
double lambda_schedule(double p);

struct TrainProgress {
  double p = 0.0;  // fraction of training completed, in [0,1]

  static TrainProgress at(std::size_t completed_epochs, std::size_t total_epochs);
  double lambda() const { return lambda_schedule(p); }
};

struct LdpfModel {
  PromptBank prompts;
  DomainFeatureExtractor extractor;
  AuxiliaryClassifier aux;
  LatentDomainState latent;

  friend bool operator==(const LdpfModel&, const LdpfModel&) = default;
};

/// Samples of one mini-batch: frozen image features, class labels and the
/// latent-domain label of each sample.
struct Batch {
  std::vector<FeatureVector> image_features;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> domains;

  std::size_t size() const { return labels.size(); }
};

struct PromptLoss {
  double value = 0.0;
  PromptGradients gradients;
};

/// Cross-entropy of classify(f(x), text features of the sample's domain) summed
/// over the batch and divided by the batch size. Gradients flow to the tokens
/// used in `mode`.
PromptLoss prompt_cross_entropy(const Batch& batch, const PromptBank& bank, const EncoderPair& enc,
                                PromptMode mode, Temperature tau);

/// L_dsp: dsp-only prompts.
double loss_dsp(const Batch& batch, const PromptBank& bank, const EncoderPair& enc, Temperature tau);
PromptLoss loss_dsp_with_gradients(const Batch& batch, const PromptBank& bank, const EncoderPair& enc,
                                   Temperature tau);

/// L_dap: full prompts; gradients reach the agnostic block only.
double loss_dap(const Batch& batch, const PromptBank& bank, const EncoderPair& enc, Temperature tau);
PromptLoss loss_dap_with_gradients(const Batch& batch, const PromptBank& bank, const EncoderPair& enc,
                                   Temperature tau);

struct TotalLoss {
  double dsp = 0.0;
  double dap = 0.0;
  double adv = 0.0;
  double lambda = 0.0;
  double total = 0.0;  // dsp + lambda (dap - adv); dsp + lambda dap under no_adv
  PromptGradients prompts;                     // grad L_dsp + lambda grad L_dap
  AuxiliaryClassifier::Gradients aux;          // +grad L_adv
  DomainFeatureExtractor::Gradients extractor; // -lambda grad L_adv (through the GRL)
};

TotalLoss total_loss(const Batch& batch, const LdpfModel& model, const EncoderPair& enc, TrainProgress progress,
                     const TrainConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  double loss_dsp = 0.0;
  double loss_dap = 0.0;
  double loss_adv = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  double inertia = 0.0;
  std::vector<std::size_t> cluster_sizes;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainResult {
  LdpfModel model;
  std::vector<EpochLog> log;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Momentum buffers for every trainable block; empty until first use.
struct OptimizerState {
  std::vector<double> agnostic;
  std::vector<std::vector<double>> specific;
  std::vector<double> w1, b1, w2, b2, aux_w, aux_b;
};

struct StageOneStats {
  double loss_dsp = 0.0;
  double loss_adv = 0.0;
};

/// One stage-1 mini-batch update: specific prompts descend L_dsp, the
/// auxiliary classifier descends L_adv and the extractor receives the
/// GRL-reversed gradient scaled by grl_lambda. The agnostic block is untouched.
StageOneStats stage_one_step(LdpfModel& model, const Batch& batch, const EncoderPair& enc, const TrainConfig& config,
                             double lr, double latent_lr, double grl_lambda, OptimizerState& state);

/// One stage-2 mini-batch update of the agnostic block along lambda * grad L_dap.
/// Returns L_dap on the batch.
double stage_two_step(LdpfModel& model, const Batch& batch, const EncoderPair& enc, const TrainConfig& config,
                      double lr, double lambda, OptimizerState& state);

/// Fresh model for `config` (prompts, extractor, aux; no clustering yet).
LdpfModel initialize_model(const TrainConfig& config, const EncoderPair& enc, std::size_t class_count);

/// One clustering round on the current extractor's domain features, aligned to
/// the previous centroids when present.
void recluster(LdpfModel& model, const TrainingSet& data, const TrainConfig& config);

TrainResult train(const TrainingSet& data, const TrainConfig& config, const EncoderPair& enc);

/// Momentum SGD with decoupled buffers: v = mu v + (g + wd theta); theta -= lr v.
void sgd_step(std::span<double> params, std::span<const double> grad, std::vector<double>& velocity, double lr,
              const OptimizerConfig& cfg);

/// Learning rate of `epoch` (0-based): constant warmup, then cosine decay.
double learning_rate_at(std::size_t epoch, std::size_t total_epochs, const OptimizerConfig& cfg);

}  // namespace ldpf
