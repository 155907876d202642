#include "ldpf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <string>

#include "ldpf/kernels.hpp"

namespace ldpf {

void TrainConfig::validate() const {
  if (batch_size == 0) throw Error("batch_size must be at least 1");
  if (n_domains == 0) throw Error("n_domains must be at least 1");
  if (!(tau_cls > 0.0)) throw Error("tau_cls must be positive");
  if (!(optimizer.learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) throw Error("momentum must lie in [0,1)");
  if (optimizer.latent_learning_rate < 0.0) throw Error("latent_learning_rate must be non-negative");
  if (optimizer.weight_decay < 0.0) throw Error("weight_decay must be non-negative");
  if (ablation.no_dap && ablation.no_dsp) throw Error("no_dap and no_dsp together leave no trainable prompt");
}

double lambda_schedule(double p) { return 2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0; }

TrainProgress TrainProgress::at(std::size_t completed_epochs, std::size_t total_epochs) {
  if (total_epochs == 0) return {1.0};
  return {std::min(1.0, static_cast<double>(completed_epochs) / static_cast<double>(total_epochs))};
}

namespace {

void check_batch(const Batch& batch, const PromptBank& bank) {
  if (batch.size() == 0) throw Error("empty batch");
  if (batch.image_features.size() != batch.size() || batch.domains.size() != batch.size())
    throw Error("batch: unassigned sample (domain labels missing)");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.domains[i] >= bank.domain_count()) throw Error("batch: unassigned sample (latent domain out of range)");
    if (batch.labels[i] >= bank.class_count()) throw Error("batch: class label out of range");
  }
}

}  // namespace

PromptLoss prompt_cross_entropy(const Batch& batch, const PromptBank& bank, const EncoderPair& enc,
                                PromptMode mode, Temperature tau) {
  check_batch(batch, bank);
  const TextFeatureTable table = compute_text_features(bank, enc, mode);
  const std::size_t k_count = bank.class_count();
  const std::size_t d = enc.feature_dim();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  PromptLoss out;
  out.gradients = PromptGradients::zeros_like(bank);
  std::vector<Vector> grad_features(table.domains * k_count);
  Vector logits(k_count);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t s = batch.domains[i];
    const FeatureVector& v = batch.image_features[i];
    const double v_norm = norm(v);
    for (std::size_t k = 0; k < k_count; ++k) logits[k] = cosine_similarity(table.feature(s, k), v) / tau.value();
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - peak);
    const double log_sum = std::log(sum);
    out.value -= logits[batch.labels[i]] - peak - log_sum;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double p = std::exp(logits[k] - peak - log_sum);
      const double g = (p - (k == batch.labels[i] ? 1.0 : 0.0)) * inv_n / tau.value();
      Vector& acc = grad_features[s * k_count + k];
      if (acc.empty()) acc.assign(d, 0.0);
      kernels::axpy(g / v_norm, v, acc);
    }
  }
  out.value *= inv_n;
  for (std::size_t s = 0; s < table.domains; ++s)
    for (std::size_t k = 0; k < k_count; ++k) {
      const Vector& g = grad_features[s * k_count + k];
      if (!g.empty()) accumulate_prompt_gradient(bank, enc, table, s, k, g, out.gradients);
    }
  return out;
}

PromptLoss loss_dsp_with_gradients(const Batch& batch, const PromptBank& bank, const EncoderPair& enc,
                                   Temperature tau) {
  return prompt_cross_entropy(batch, bank, enc, PromptMode::dsp_only, tau);
}

double loss_dsp(const Batch& batch, const PromptBank& bank, const EncoderPair& enc, Temperature tau) {
  return loss_dsp_with_gradients(batch, bank, enc, tau).value;
}

PromptLoss loss_dap_with_gradients(const Batch& batch, const PromptBank& bank, const EncoderPair& enc,
                                   Temperature tau) {
  PromptLoss out = prompt_cross_entropy(batch, bank, enc, PromptMode::full, tau);
  // stage 2 updates the agnostic block only
  for (Matrix& m : out.gradients.specific) std::fill(m.data().begin(), m.data().end(), 0.0);
  return out;
}

double loss_dap(const Batch& batch, const PromptBank& bank, const EncoderPair& enc, Temperature tau) {
  return prompt_cross_entropy(batch, bank, enc, PromptMode::full, tau).value;
}

namespace {

struct AdversarialStep {
  double loss = 0.0;
  AuxiliaryClassifier::Gradients aux;
  DomainFeatureExtractor::Gradients extractor;
};

AdversarialStep adversarial_step(const Batch& batch, const LdpfModel& model, double grl_lambda) {
  std::vector<DomainFeatureExtractor::Forward> fwd;
  std::vector<FeatureVector> features;
  fwd.reserve(batch.size());
  for (const FeatureVector& v : batch.image_features) {
    fwd.push_back(model.extractor.forward(v));
    features.push_back(fwd.back().output);
  }
  const GradientReversal grl(grl_lambda);
  AdversarialGradients adv = adversarial_gradients(model.aux, grl.forward(features), batch.labels);
  const std::vector<Vector> reversed = grl.backward(adv.feature_gradients);
  AdversarialStep out;
  out.loss = adv.loss;
  out.aux = std::move(adv.aux);
  out.extractor = model.extractor.zero_gradients();
  for (std::size_t i = 0; i < batch.size(); ++i)
    model.extractor.backward(batch.image_features[i], fwd[i], reversed[i], out.extractor);
  return out;
}

}  // namespace

TotalLoss total_loss(const Batch& batch, const LdpfModel& model, const EncoderPair& enc, TrainProgress progress,
                     const TrainConfig& config) {
  const Temperature tau(config.tau_cls);
  TotalLoss out;
  out.lambda = progress.lambda();
  PromptLoss dsp = loss_dsp_with_gradients(batch, model.prompts, enc, tau);
  PromptLoss dap = loss_dap_with_gradients(batch, model.prompts, enc, tau);
  AdversarialStep adv = adversarial_step(batch, model, config.ablation.no_adv ? 0.0 : out.lambda);
  out.dsp = dsp.value;
  out.dap = dap.value;
  out.adv = adv.loss;
  out.total = config.ablation.no_adv ? out.dsp + out.lambda * out.dap : out.dsp + out.lambda * (out.dap - out.adv);
  out.prompts = std::move(dsp.gradients);
  kernels::axpy(out.lambda, dap.gradients.agnostic.data(), out.prompts.agnostic.data());
  out.aux = std::move(adv.aux);
  out.extractor = std::move(adv.extractor);
  return out;
}

double learning_rate_at(std::size_t epoch, std::size_t total_epochs, const OptimizerConfig& cfg) {
  if (epoch < cfg.warmup_epochs) return cfg.warmup_learning_rate;
  if (total_epochs == 0) return cfg.learning_rate;
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return 0.5 * cfg.learning_rate * (1.0 + std::cos(std::numbers::pi * t));
}

void sgd_step(std::span<double> params, std::span<const double> grad, std::vector<double>& velocity, double lr,
              const OptimizerConfig& cfg) {
  if (velocity.size() != params.size()) velocity.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + grad[i] + cfg.weight_decay * params[i];
    params[i] -= lr * velocity[i];
  }
}

LdpfModel initialize_model(const TrainConfig& config, const EncoderPair& enc, std::size_t class_count) {
  const std::size_t d = enc.feature_dim();
  const std::size_t hidden = config.extractor_hidden ? config.extractor_hidden : std::max<std::size_t>(1, d / 2);
  const std::size_t out_dim = config.domain_feature_dim ? config.domain_feature_dim : std::max<std::size_t>(1, d / 4);
  const RngSeed seed{config.seed};
  LdpfModel m;
  m.prompts = PromptBank(config.effective_m1(), config.effective_m2(), config.n_domains, class_count,
                         enc.embed_dim(), derive_seed(seed, 1), config.prompt_init_std);
  m.extractor = DomainFeatureExtractor::initialize(d, hidden, out_dim, derive_seed(seed, 2));
  m.aux = AuxiliaryClassifier::initialize(out_dim, class_count, derive_seed(seed, 3));
  return m;
}

void recluster(LdpfModel& model, const TrainingSet& data, const TrainConfig& config) {
  std::vector<FeatureVector> features;
  features.reserve(data.size());
  for (const FeatureVector& v : data.features()) features.push_back(model.extractor(v));
  const Matrix points = stack_rows(features);
  LatentDomainState& state = model.latent;
  const std::size_t k = config.n_domains;

  if (config.ablation.no_clustering) {
    state.assignments = data.annotated_domains();
    state.centroids = group_means(points, state.assignments, k);
    state.inertia = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i)
      state.inertia += kernels::squared_distance(points.row(i), state.centroids.row(state.assignments[i]));
  } else {
    KMeansResult km = kmeans_cluster(points, k, derive_seed(RngSeed{config.seed}, 1000 + state.round));
    if (state.centroids.rows() == k && state.centroids.cols() == points.cols())
      relabel(km, stabilize_assignment(state.centroids, km.centroids));
    state.centroids = std::move(km.centroids);
    state.assignments = std::move(km.assignments);
    state.inertia = km.inertia;
  }
  ++state.round;
}

namespace {

Batch make_batch(const TrainingSet& data, const LatentDomainState& state, std::span<const std::size_t> order,
                 std::size_t begin, std::size_t end) {
  Batch b;
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t idx = order[i];
    b.image_features.push_back(data.feature(idx));
    b.labels.push_back(data.label(idx));
    b.domains.push_back(state.assignments[idx]);
  }
  return b;
}

void require_finite(double value, const char* what, std::size_t epoch) {
  if (!std::isfinite(value))
    throw DivergenceError(std::string("non-finite ") + what + " at epoch " + std::to_string(epoch) +
                          "; training aborted");
}


}  // namespace

StageOneStats stage_one_step(LdpfModel& model, const Batch& batch, const EncoderPair& enc, const TrainConfig& config,
                             double lr, double latent_lr, double grl_lambda, OptimizerState& state) {
  const Temperature tau(config.tau_cls);
  const PromptLoss dsp = loss_dsp_with_gradients(batch, model.prompts, enc, tau);
  const AdversarialStep adv = adversarial_step(batch, model, grl_lambda);
  state.specific.resize(model.prompts.domain_count());
  for (std::size_t s = 0; s < model.prompts.domain_count(); ++s)
    sgd_step(model.prompts.specific(s).data(), dsp.gradients.specific[s].data(), state.specific[s], lr,
             config.optimizer);
  sgd_step(model.aux.w().data(), adv.aux.w.data(), state.aux_w, latent_lr, config.optimizer);
  sgd_step(model.aux.b(), adv.aux.b, state.aux_b, latent_lr, config.optimizer);
  sgd_step(model.extractor.w1().data(), adv.extractor.w1.data(), state.w1, latent_lr, config.optimizer);
  sgd_step(model.extractor.b1(), adv.extractor.b1, state.b1, latent_lr, config.optimizer);
  sgd_step(model.extractor.w2().data(), adv.extractor.w2.data(), state.w2, latent_lr, config.optimizer);
  sgd_step(model.extractor.b2(), adv.extractor.b2, state.b2, latent_lr, config.optimizer);
  return {dsp.value, adv.loss};
}

double stage_two_step(LdpfModel& model, const Batch& batch, const EncoderPair& enc, const TrainConfig& config,
                      double lr, double lambda, OptimizerState& state) {
  PromptLoss dap = loss_dap_with_gradients(batch, model.prompts, enc, Temperature(config.tau_cls));
  if (model.prompts.agnostic_length() == 0) return dap.value;
  for (double& g : dap.gradients.agnostic.data()) g *= lambda;
  sgd_step(model.prompts.agnostic().data(), dap.gradients.agnostic.data(), state.agnostic, lr, config.optimizer);
  return dap.value;
}

TrainResult train(const TrainingSet& data, const TrainConfig& config, const EncoderPair& enc) {
  config.validate();
  if (data.size() < config.n_domains)
    throw Error("degenerate dataset: " + std::to_string(data.size()) + " samples for " +
                std::to_string(config.n_domains) + " latent domains");
  if (std::set<std::size_t>(data.labels().begin(), data.labels().end()).size() < 2)
    throw Error("degenerate dataset: fewer than two classes present");
  if (config.ablation.no_clustering && data.annotated_domain_count() != config.n_domains)
    throw Error("no_clustering needs n_domains equal to the number of annotated training domains (" +
                std::to_string(data.annotated_domain_count()) + ")");

  const std::uint64_t encoder_checksum = enc.parameter_checksum();
  const RngSeed seed{config.seed};

  TrainResult result;
  LdpfModel& model = result.model;
  model = initialize_model(config, enc, data.class_count());
  recluster(model, data, config);

  OptimizerState vel;
  std::vector<std::size_t> order(data.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0) recluster(model, data, config);
    const TrainProgress progress = TrainProgress::at(epoch, config.epochs);
    const double lambda = progress.lambda();
    const double lr = learning_rate_at(epoch, config.epochs, config.optimizer);
    const double grl_lambda = config.ablation.no_adv ? 0.0 : lambda;
    const double latent_lr = config.optimizer.latent_learning_rate > 0.0
                                 ? lr * config.optimizer.latent_learning_rate / config.optimizer.learning_rate
                                 : lr;

    EpochLog entry;
    entry.epoch = epoch;
    entry.lambda = lambda;
    entry.inertia = model.latent.inertia;
    entry.cluster_sizes = model.latent.cluster_sizes();

    // stage 1: domain-specific prompts + adversarial latent-domain model
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle1(derive_seed(seed, 2000 + epoch));
    shuffle1.shuffle(order);
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batches) {
      const Batch batch = make_batch(data, model.latent, order, begin, std::min(order.size(), begin + config.batch_size));
      const StageOneStats st = stage_one_step(model, batch, enc, config, lr, latent_lr, grl_lambda, vel);
      require_finite(st.loss_dsp, "L_dsp", epoch);
      require_finite(st.loss_adv, "L_adv", epoch);
      entry.loss_dsp += st.loss_dsp;
      entry.loss_adv += st.loss_adv;
    }
    entry.loss_dsp /= static_cast<double>(batches);
    entry.loss_adv /= static_cast<double>(batches);

    // stage 2: domain-agnostic prompt, weighted by lambda
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle2(derive_seed(seed, 3000 + epoch));
    shuffle2.shuffle(order);
    batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batches) {
      const Batch batch = make_batch(data, model.latent, order, begin, std::min(order.size(), begin + config.batch_size));
      const double dap = stage_two_step(model, batch, enc, config, lr, lambda, vel);
      require_finite(dap, "L_dap", epoch);
      entry.loss_dap += dap;
    }
    entry.loss_dap /= static_cast<double>(batches);

    entry.total = config.ablation.no_adv ? entry.loss_dsp + lambda * entry.loss_dap
                                         : entry.loss_dsp + lambda * (entry.loss_dap - entry.loss_adv);
    require_finite(entry.total, "total loss", epoch);
    result.log.push_back(std::move(entry));
  }

  // final full pass so the stored centroids match the trained extractor
  if (config.epochs > 0) recluster(model, data, config);

  if (enc.parameter_checksum() != encoder_checksum) throw Error("frozen encoder parameters changed during training");
  return result;
}

}  // namespace ldpf
