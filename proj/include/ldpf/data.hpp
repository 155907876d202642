#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ldpf/core.hpp"
#include "ldpf/encoders.hpp"

namespace ldpf {

struct Sample {
  std::string id;
  Vector payload;      // toy "pixels"; empty for samples known only by path
  std::string path;
  std::size_t class_id = 0;
  std::optional<std::size_t> domain;  // annotated domain (style id for synthetic data)

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetManifest {
  std::string name;
  std::vector<std::string> classes;
  std::vector<std::string> domains;  // empty when the dataset has no annotations
  std::vector<Sample> samples;

  std::size_t class_count() const { return classes.size(); }
  std::size_t domain_count() const { return domains.size(); }

  /// Class ids dense in [0,K); domain ids dense in [0,L) when annotated.
  void validate() const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Desk-scale multi-style dataset. Payload layout: `concept_dims` class
/// coordinates followed by `style_dims` style coordinates, so class and style
/// signals live in orthogonal subspaces.
struct SyntheticSpec {
  std::size_t n_styles = 3;
  std::size_t n_classes = 5;
  std::size_t samples_per_cell = 40;
  std::size_t concept_dims = 8;
  std::size_t style_dims = 8;
  double noise_std = 0.1;
  /// Class centers are scaled basis vectors placed so that the midpoint
  /// between any two centers is this many noise deviations from either one.
  double separation_sigmas = 5.0;
  /// Same convention for style offsets.
  double style_separation_sigmas = 10.0;
  std::uint64_t seed = 0;

  std::size_t payload_dim() const { return concept_dims + style_dims; }
  void validate() const;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// payload = class_center(class) + style_offset(style) + N(0, noise_std^2 I)
DatasetManifest generate_synthetic(const SyntheticSpec& spec);

/// Reads root/<domain>/<class>/<file>. Files ending in .vec or .txt hold a
/// whitespace-separated payload; any other file is recorded by path only.
DatasetManifest load_directory_dataset(const std::string& root);

struct DomainSplit {
  std::size_t target_domain = 0;
  std::vector<std::size_t> train_domains;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::vector<std::size_t> validation_indices;  // carved from the source domains; empty by default
};

std::vector<DomainSplit> leave_one_domain_out_splits(const DatasetManifest& manifest);

/// Moves round(fraction * |train|) seeded-random training indices into
/// validation_indices. Both lists stay sorted.
void hold_out_validation(DomainSplit& split, double fraction, RngSeed seed);

class AnnotationAccessError : public Error {
 public:
  AnnotationAccessError()
      : Error("domain annotations are not visible to training (only the no_clustering ablation may read them)") {}
};

/// Training-side view of a split: encoded image features and class labels.
/// Domain annotations sit behind a guard that trips unless the view was built
/// for the no_clustering ablation.
class TrainingSet {
 public:
  TrainingSet(std::vector<FeatureVector> features, std::vector<std::size_t> labels, std::size_t class_count,
              std::vector<std::size_t> annotations, bool annotations_visible);

  std::size_t size() const { return features_.size(); }
  std::size_t class_count() const { return class_count_; }
  const std::vector<FeatureVector>& features() const { return features_; }
  const FeatureVector& feature(std::size_t i) const { return features_[i]; }
  const std::vector<std::size_t>& labels() const { return labels_; }
  std::size_t label(std::size_t i) const { return labels_[i]; }

  bool annotations_visible() const { return annotations_visible_; }
  /// Dense annotated-domain ids over the training domains. Guarded.
  const std::vector<std::size_t>& annotated_domains() const;
  std::size_t annotated_domain_count() const;

 private:
  std::vector<FeatureVector> features_;
  std::vector<std::size_t> labels_;
  std::size_t class_count_;
  std::vector<std::size_t> annotations_;
  bool annotations_visible_;
};

/// Encodes the samples at `indices`. `expose_annotations` is set only for the
/// no_clustering ablation.
TrainingSet make_training_set(const DatasetManifest& manifest, std::span<const std::size_t> indices,
                              const EncoderPair& enc, bool expose_annotations);

/// Frozen image features for the samples at `indices`.
std::vector<FeatureVector> encode_images(const DatasetManifest& manifest, std::span<const std::size_t> indices,
                                         const EncoderPair& enc);

}  // namespace ldpf
