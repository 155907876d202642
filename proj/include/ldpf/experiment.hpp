#pragma once

// Experiment orchestration shared by the CLI and the acceptance suite:
// configuration, leave-one-domain-out training runs, evaluation with
// prediction dumps, checkpoints and the ablation matrix.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ldpf/data.hpp"
#include "ldpf/encoders.hpp"
#include "ldpf/fusion.hpp"
#include "ldpf/oracle.hpp"
#include "ldpf/training.hpp"

namespace ldpf {

struct DatasetDescriptor {
  std::string kind = "synthetic";  // synthetic | directory | manifest
  SyntheticSpec synthetic;
  std::string root;  // dataset directory, or the manifest file for kind manifest

  friend bool operator==(const DatasetDescriptor&, const DatasetDescriptor&) = default;
};

struct ExperimentConfig {
  DatasetDescriptor dataset;
  BackboneDescriptor backbone;
  TrainConfig train;
  FusionConfig fusion;
  std::string output_dir = "runs";
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::size_t> split;  // target domain; all splits when unset
  double val_fraction = 0.0;          // share of source samples held out for validation

  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// The synthetic desk-scale setup: default SyntheticSpec, toy backbone, 30
/// epochs, seeds {0,1,2}, and one latent domain per training style.
ExperimentConfig synthetic_experiment_config();

DatasetManifest load_dataset(const DatasetDescriptor& desc);

/// Leave-one-domain-out splits selected by config.split, with validation
/// samples carved out per config.val_fraction.
std::vector<DomainSplit> resolve_splits(const DatasetManifest& manifest, const ExperimentConfig& config);

struct EncoderFingerprint {
  std::size_t feature_dim = 0;
  std::size_t embed_dim = 0;
  std::size_t payload_dim = 0;
  std::uint64_t checksum = 0;

  static EncoderFingerprint of(const EncoderPair& enc);
  friend bool operator==(const EncoderFingerprint&, const EncoderFingerprint&) = default;
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;
  int format_version = kFormatVersion;
  ExperimentConfig config;  // effective config of the run
  std::uint64_t seed = 0;
  std::size_t target_domain = 0;
  EncoderFingerprint encoder;
  LdpfModel model;
};

/// Throws if `enc` does not match the fingerprint stored in `ckpt`.
void check_fingerprint(const Checkpoint& ckpt, const EncoderPair& enc);

/// Trains on the split's source domains. Training sees annotations only under
/// the no_clustering ablation.
TrainResult train_split(const DatasetManifest& manifest, const DomainSplit& split, const TrainConfig& config,
                        const EncoderPair& enc);

struct EvalResult {
  FusionConfig fusion;
  double accuracy = 0.0;
  PredictionDump dump;
};

/// Predicts every sample at `indices` and records per-domain predictions for
/// the selection oracle.
EvalResult evaluate(const LdpfModel& model, const EncoderPair& enc, const DatasetManifest& manifest,
                    std::span<const std::size_t> indices, const FusionConfig& fusion, Temperature tau_cls);

/// Clustering diagnostics for a split's training samples. Reads domain
/// annotations for inspection only.
struct ClusterReport {
  std::vector<std::size_t> sizes;
  double inertia = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [latent][annotated training domain]
  double agreement = 0.0;                           // best-permutation accuracy vs annotations
  double class_mutual_information = 0.0;            // MI(latent assignment; class label), nats
};

ClusterReport inspect_clusters(const LdpfModel& model, const DatasetManifest& manifest, const DomainSplit& split);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};
MeanStd mean_std(std::span<const double> values);

struct AblationRow {
  std::string variant;
  std::vector<double> per_seed;  // mean target accuracy over splits, per seed
  MeanStd accuracy;
};

/// Variants: full, no_dap, no_dsp, no_adv, no_clustering, greedy, average.
std::vector<AblationRow> run_ablation(const ExperimentConfig& config, const DatasetManifest& manifest,
                                      const EncoderPair& enc);

const std::vector<std::string>& ablation_variants();

}  // namespace ldpf
