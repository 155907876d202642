#include "ldpf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ldpf/serialization.hpp"

namespace ldpf {

void ExperimentConfig::validate() const {
  if (dataset.kind == "synthetic") {
    dataset.synthetic.validate();
  } else if (dataset.kind == "directory" || dataset.kind == "manifest") {
    if (dataset.root.empty()) throw Error("dataset.root is required for a " + dataset.kind + " dataset");
  } else {
    throw Error("unknown dataset kind '" + dataset.kind + "' (expected synthetic, directory or manifest)");
  }
  train.validate();
  fusion.validate(train.n_domains);
  if (seeds.empty()) throw Error("at least one seed is required");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw Error("val_fraction must lie in [0, 1)");
}

ExperimentConfig synthetic_experiment_config() {
  ExperimentConfig c;
  c.dataset.kind = "synthetic";
  c.backbone.kind = "toy";
  c.backbone.payload_dim = c.dataset.synthetic.payload_dim();
  c.backbone.concept_dims = c.dataset.synthetic.concept_dims;
  c.train.epochs = 30;
  // Leave-one-style-out over three styles leaves two source styles.
  c.train.n_domains = c.dataset.synthetic.n_styles - 1;
  c.seeds = {0, 1, 2};
  return c;
}

DatasetManifest load_dataset(const DatasetDescriptor& desc) {
  if (desc.kind == "synthetic") return generate_synthetic(desc.synthetic);
  if (desc.kind == "directory") return load_directory_dataset(desc.root);
  if (desc.kind == "manifest") {
    try {
      return manifest_from_json(Json::parse(read_text_file(desc.root)));
    } catch (const Json::exception& ex) {
      throw Error("malformed manifest '" + desc.root + "': " + ex.what());
    }
  }
  throw Error("unknown dataset kind '" + desc.kind + "'");
}

std::vector<DomainSplit> resolve_splits(const DatasetManifest& manifest, const ExperimentConfig& config) {
  std::vector<DomainSplit> splits = leave_one_domain_out_splits(manifest);
  if (config.split) {
    if (*config.split >= splits.size())
      throw Error("split " + std::to_string(*config.split) + " out of range (dataset has " +
                  std::to_string(splits.size()) + " domains)");
    splits = {splits[*config.split]};
  }
  for (DomainSplit& s : splits) hold_out_validation(s, config.val_fraction, RngSeed{config.dataset.synthetic.seed});
  return splits;
}

EncoderFingerprint EncoderFingerprint::of(const EncoderPair& enc) {
  return {enc.feature_dim(), enc.embed_dim(), enc.payload_dim(), enc.parameter_checksum()};
}

void check_fingerprint(const Checkpoint& ckpt, const EncoderPair& enc) {
  const EncoderFingerprint now = EncoderFingerprint::of(enc);
  if (now.feature_dim != ckpt.encoder.feature_dim || now.embed_dim != ckpt.encoder.embed_dim ||
      now.payload_dim != ckpt.encoder.payload_dim)
    throw Error("checkpoint was trained with a backbone of different dimensions");
  if (now.checksum != ckpt.encoder.checksum)
    throw Error("checkpoint backbone fingerprint " + to_hex(ckpt.encoder.checksum) +
                " does not match the loaded backbone " + to_hex(now.checksum));
}

TrainResult train_split(const DatasetManifest& manifest, const DomainSplit& split, const TrainConfig& config,
                        const EncoderPair& enc) {
  const TrainingSet data = make_training_set(manifest, split.train_indices, enc, config.ablation.no_clustering);
  return train(data, config, enc);
}

EvalResult evaluate(const LdpfModel& model, const EncoderPair& enc, const DatasetManifest& manifest,
                    std::span<const std::size_t> indices, const FusionConfig& fusion, Temperature tau_cls) {
  if (indices.empty()) throw Error("evaluation set is empty");
  fusion.validate(model.prompts.domain_count());
  const InferenceContext ctx(model, enc);
  const std::vector<FeatureVector> features = encode_images(manifest, indices, enc);
  EvalResult result;
  result.fusion = fusion;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Sample& sample = manifest.samples[indices[i]];
    const Prediction p = predict_from_feature(features[i], ctx, fusion, tau_cls);
    PredictionRow row;
    row.sample_id = sample.id;
    row.true_class = sample.class_id;
    row.alpha.assign(p.alpha.values().begin(), p.alpha.values().end());
    row.per_domain_predicted = per_domain_predictions(features[i], ctx, tau_cls);
    row.fused_probabilities.assign(p.probabilities.values().begin(), p.probabilities.values().end());
    row.fused_predicted = p.predicted_class;
    if (row.fused_predicted == row.true_class) ++hits;
    result.dump.rows.push_back(std::move(row));
  }
  result.accuracy = static_cast<double>(hits) / static_cast<double>(indices.size());
  return result;
}

ClusterReport inspect_clusters(const LdpfModel& model, const DatasetManifest& manifest, const DomainSplit& split) {
  if (manifest.domain_count() == 0) throw Error("dataset has no domain annotations to compare against");
  std::map<std::size_t, std::size_t> dense;
  for (std::size_t d : split.train_domains) dense.emplace(d, dense.size());

  std::vector<std::size_t> annotated;
  std::vector<std::size_t> classes;
  for (std::size_t idx : split.train_indices) {
    const Sample& s = manifest.samples[idx];
    if (!s.domain) throw Error("sample '" + s.id + "' has no domain annotation");
    annotated.push_back(dense.at(*s.domain));
    classes.push_back(s.class_id);
  }

  const LatentDomainState& latent = model.latent;
  if (latent.assignments.size() != split.train_indices.size())
    throw Error("checkpoint holds " + std::to_string(latent.assignments.size()) +
                " assignments but the split has " + std::to_string(split.train_indices.size()) +
                " training samples");

  ClusterReport r;
  r.sizes = latent.cluster_sizes();
  r.inertia = latent.inertia;
  std::vector<std::vector<std::size_t>> table = contingency(latent.assignments, annotated);
  r.confusion.assign(latent.domain_count(), std::vector<std::size_t>(dense.size(), 0));
  for (std::size_t i = 0; i < table.size() && i < r.confusion.size(); ++i)
    for (std::size_t j = 0; j < table[i].size() && j < dense.size(); ++j) r.confusion[i][j] = table[i][j];
  r.agreement = best_permutation_agreement(latent.assignments, annotated);
  r.class_mutual_information = mutual_information(latent.assignments, classes);
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw Error("mean of an empty set");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> names{"full", "no_dap", "no_dsp", "no_adv", "no_clustering", "greedy",
                                              "average"};
  return names;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& config, const DatasetManifest& manifest,
                                      const EncoderPair& enc) {
  config.validate();
  const std::vector<DomainSplit> splits = resolve_splits(manifest, config);
  const Temperature tau(config.train.tau_cls);
  const std::vector<std::string>& names = ablation_variants();
  std::vector<AblationRow> rows(names.size());
  for (std::size_t v = 0; v < names.size(); ++v) rows[v].variant = names[v];

  auto variant_config = [&](const std::string& name, std::uint64_t seed) {
    TrainConfig c = config.train;
    c.seed = seed;
    c.ablation = {};
    if (name == "no_dap") c.ablation.no_dap = true;
    if (name == "no_dsp") c.ablation.no_dsp = true;
    if (name == "no_adv") c.ablation.no_adv = true;
    if (name == "no_clustering") c.ablation.no_clustering = true;
    return c;
  };

  for (std::uint64_t seed : config.seeds) {
    std::vector<double> sums(names.size(), 0.0);
    for (const DomainSplit& split : splits) {
      const TrainResult full = train_split(manifest, split, variant_config("full", seed), enc);
      for (std::size_t v = 0; v < names.size(); ++v) {
        const std::string& name = names[v];
        FusionConfig fusion = config.fusion;
        fusion.mode = FusionMode::similarity;
        double acc = 0.0;
        if (name == "full" || name == "greedy" || name == "average") {
          if (name == "greedy") fusion.mode = FusionMode::greedy;
          if (name == "average") fusion.mode = FusionMode::average;
          acc = evaluate(full.model, enc, manifest, split.test_indices, fusion, tau).accuracy;
        } else {
          const TrainResult r = train_split(manifest, split, variant_config(name, seed), enc);
          if (name == "no_dsp") {
            fusion.mode = FusionMode::single;
            fusion.single_domain = 0;
          }
          acc = evaluate(r.model, enc, manifest, split.test_indices, fusion, tau).accuracy;
        }
        sums[v] += acc;
      }
    }
    for (std::size_t v = 0; v < names.size(); ++v)
      rows[v].per_seed.push_back(sums[v] / static_cast<double>(splits.size()));
  }
  for (AblationRow& row : rows) row.accuracy = mean_std(row.per_seed);
  return rows;
}

}  // namespace ldpf
