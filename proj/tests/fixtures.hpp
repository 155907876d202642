#pragma once

// Small synthetic setup shared by the model-level tests.

#include <memory>

#include "ldpf/experiment.hpp"

namespace fixtures {

struct Toy {
  ldpf::SyntheticSpec spec;
  ldpf::BackboneDescriptor backbone;
  ldpf::DatasetManifest manifest;
  std::unique_ptr<ldpf::EncoderPair> enc;
  std::vector<ldpf::DomainSplit> splits;

  explicit Toy(std::size_t samples_per_cell = 12) {
    spec.samples_per_cell = samples_per_cell;
    backbone.image_dim = 64;
    backbone.embed_dim = 16;
    manifest = ldpf::generate_synthetic(spec);
    enc = ldpf::make_toy_encoder(backbone);
    splits = ldpf::leave_one_domain_out_splits(manifest);
  }

  ldpf::TrainingSet training_set(bool annotations = false) const {
    return ldpf::make_training_set(manifest, splits[0].train_indices, *enc, annotations);
  }

  /// Initialized model with one clustering round on split 0.
  ldpf::LdpfModel clustered_model(std::size_t n_domains, std::uint64_t seed = 0) const {
    ldpf::TrainConfig cfg;
    cfg.n_domains = n_domains;
    cfg.seed = seed;
    cfg.prompt_init_std = 0.3;
    ldpf::LdpfModel m = ldpf::initialize_model(cfg, *enc, manifest.class_count());
    ldpf::recluster(m, training_set(), cfg);
    return m;
  }
};

}  // namespace fixtures
