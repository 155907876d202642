#include "ldpf/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace ldpf {

namespace fs = std::filesystem;

void DatasetManifest::validate() const {
  if (classes.empty()) throw Error("dataset '" + name + "' has no classes");
  for (const Sample& s : samples) {
    if (s.class_id >= classes.size()) throw Error("sample '" + s.id + "' has class id out of range");
    if (!domains.empty()) {
      if (!s.domain) throw Error("sample '" + s.id + "' lacks a domain annotation");
      if (*s.domain >= domains.size()) throw Error("sample '" + s.id + "' has domain id out of range");
    }
  }
}

void SyntheticSpec::validate() const {
  if (n_styles == 0 || n_classes == 0 || samples_per_cell == 0)
    throw Error("synthetic spec: styles, classes and samples per cell must be positive");
  if (n_classes > concept_dims) throw Error("synthetic spec: more classes than class-subspace dimensions");
  if (n_styles > style_dims) throw Error("synthetic spec: more styles than style-subspace dimensions");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw Error("synthetic spec: noise_std must be >= 0");
  if (!(separation_sigmas > 0.0) || !(style_separation_sigmas >= 0.0))
    throw Error("synthetic spec: separations must be positive");
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  DatasetManifest m;
  m.name = "synthetic";
  for (std::size_t k = 0; k < spec.n_classes; ++k) m.classes.push_back("class_" + std::to_string(k));
  for (std::size_t s = 0; s < spec.n_styles; ++s) m.domains.push_back("style_" + std::to_string(s));

  // Orthogonal centers a*e_i, a*e_j are a*sqrt(2) apart; the midpoint sits
  // a/sqrt(2) from each, which we set to separation * sigma.
  const double sigma = spec.noise_std > 0.0 ? spec.noise_std : 0.1;
  const double class_radius = spec.separation_sigmas * sigma * std::sqrt(2.0);
  const double style_radius = spec.style_separation_sigmas * sigma * std::sqrt(2.0);

  Rng rng(derive_seed(RngSeed{spec.seed}, 0xDA7A));
  for (std::size_t s = 0; s < spec.n_styles; ++s) {
    for (std::size_t k = 0; k < spec.n_classes; ++k) {
      for (std::size_t i = 0; i < spec.samples_per_cell; ++i) {
        Sample smp;
        smp.id = "s" + std::to_string(s) + "_c" + std::to_string(k) + "_" + std::to_string(i);
        smp.class_id = k;
        smp.domain = s;
        smp.payload.assign(spec.payload_dim(), 0.0);
        smp.payload[k] += class_radius;
        smp.payload[spec.concept_dims + s] += style_radius;
        for (double& x : smp.payload) x += rng.normal(0.0, spec.noise_std);
        m.samples.push_back(std::move(smp));
      }
    }
  }
  return m;
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (directories ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

Vector read_payload(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("unreadable file: " + file.string());
  Vector payload;
  std::string token;
  while (in >> token) {
    try {
      std::size_t used = 0;
      payload.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw Error("unreadable file: " + file.string() + " (non-numeric token '" + token + "')");
    }
  }
  return payload;
}

}  // namespace

DatasetManifest load_directory_dataset(const std::string& root) {
  const fs::path base(root);
  if (!fs::exists(base) || !fs::is_directory(base)) throw Error("missing root: dataset directory '" + root + "'");
  const auto domain_dirs = sorted_entries(base, true);
  if (domain_dirs.empty()) throw Error("dataset root '" + root + "' has no domain directories");

  std::map<std::string, std::set<std::string>> classes_by_domain;
  std::set<std::string> all_classes;
  for (const auto& d : domain_dirs) {
    auto& set = classes_by_domain[d.filename().string()];
    for (const auto& c : sorted_entries(d, true)) {
      set.insert(c.filename().string());
      all_classes.insert(c.filename().string());
    }
    if (set.empty()) throw Error("domain '" + d.filename().string() + "' has no class directories");
  }
  for (const auto& [domain, set] : classes_by_domain)
    if (set != all_classes)
      throw Error("inconsistent label set: domain '" + domain + "' does not contain every class");

  DatasetManifest m;
  m.name = base.filename().string();
  m.classes.assign(all_classes.begin(), all_classes.end());
  std::map<std::string, std::size_t> class_ids;
  for (std::size_t k = 0; k < m.classes.size(); ++k) class_ids[m.classes[k]] = k;

  for (std::size_t l = 0; l < domain_dirs.size(); ++l) {
    const std::string domain = domain_dirs[l].filename().string();
    m.domains.push_back(domain);
    for (const auto& class_dir : sorted_entries(domain_dirs[l], true)) {
      const std::string cls = class_dir.filename().string();
      for (const auto& file : sorted_entries(class_dir, false)) {
        Sample s;
        s.id = domain + "/" + cls + "/" + file.filename().string();
        s.path = file.string();
        s.class_id = class_ids.at(cls);
        s.domain = l;
        const std::string ext = file.extension().string();
        if (ext == ".vec" || ext == ".txt") {
          s.payload = read_payload(file);
        } else {
          std::ifstream probe(file, std::ios::binary);
          if (!probe) throw Error("unreadable file: " + file.string());
        }
        m.samples.push_back(std::move(s));
      }
    }
  }
  m.validate();
  return m;
}

std::vector<DomainSplit> leave_one_domain_out_splits(const DatasetManifest& manifest) {
  const std::size_t l = manifest.domain_count();
  if (l < 2) throw Error("leave-one-domain-out needs at least two annotated domains");
  std::vector<DomainSplit> splits(l);
  for (std::size_t t = 0; t < l; ++t) {
    DomainSplit& split = splits[t];
    split.target_domain = t;
    for (std::size_t d = 0; d < l; ++d)
      if (d != t) split.train_domains.push_back(d);
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
      const auto& dom = manifest.samples[i].domain;
      if (!dom) throw Error("sample '" + manifest.samples[i].id + "' lacks a domain annotation");
      (*dom == t ? split.test_indices : split.train_indices).push_back(i);
    }
  }
  return splits;
}

void hold_out_validation(DomainSplit& split, double fraction, RngSeed seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw Error("validation fraction must lie in [0, 1)");
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(split.train_indices.size())));
  if (count == 0) return;
  std::vector<std::size_t> order = split.train_indices;
  Rng rng(derive_seed(seed, 0x7A1 + split.target_domain));
  rng.shuffle(order);
  split.validation_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(split.validation_indices.begin(), split.validation_indices.end());
  std::vector<std::size_t> rest;
  std::set_difference(split.train_indices.begin(), split.train_indices.end(), split.validation_indices.begin(),
                      split.validation_indices.end(), std::back_inserter(rest));
  split.train_indices = std::move(rest);
}

TrainingSet::TrainingSet(std::vector<FeatureVector> features, std::vector<std::size_t> labels,
                         std::size_t class_count, std::vector<std::size_t> annotations, bool annotations_visible)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      class_count_(class_count),
      annotations_(std::move(annotations)),
      annotations_visible_(annotations_visible) {
  if (features_.size() != labels_.size()) throw Error("training set: feature and label counts differ");
  for (std::size_t y : labels_)
    if (y >= class_count_) throw Error("training set: class label out of range");
}

const std::vector<std::size_t>& TrainingSet::annotated_domains() const {
  if (!annotations_visible_) throw AnnotationAccessError();
  return annotations_;
}

std::size_t TrainingSet::annotated_domain_count() const {
  const auto& a = annotated_domains();
  std::size_t n = 0;
  for (std::size_t d : a) n = std::max(n, d + 1);
  return n;
}

std::vector<FeatureVector> encode_images(const DatasetManifest& manifest, std::span<const std::size_t> indices,
                                         const EncoderPair& enc) {
  std::vector<FeatureVector> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const Sample& s = manifest.samples.at(i);
    if (s.payload.empty())
      throw Error("sample '" + s.id + "' has no decoded payload; image decoding requires an external backbone");
    out.push_back(enc.encode_image(s.payload));
  }
  return out;
}

TrainingSet make_training_set(const DatasetManifest& manifest, std::span<const std::size_t> indices,
                              const EncoderPair& enc, bool expose_annotations) {
  std::vector<std::size_t> labels;
  std::vector<std::size_t> annotations;
  std::map<std::size_t, std::size_t> dense;
  for (std::size_t i : indices) {
    const Sample& s = manifest.samples.at(i);
    labels.push_back(s.class_id);
    if (expose_annotations) {
      if (!s.domain) throw Error("sample '" + s.id + "' lacks a domain annotation");
      dense.emplace(*s.domain, 0);
    }
  }
  if (expose_annotations) {
    std::size_t next = 0;
    for (auto& [domain, id] : dense) id = next++;
    for (std::size_t i : indices) annotations.push_back(dense.at(*manifest.samples[i].domain));
  }
  return TrainingSet(encode_images(manifest, indices, enc), std::move(labels), manifest.class_count(),
                     std::move(annotations), expose_annotations);
}

}  // namespace ldpf
