#include "ldpf/serialization.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace ldpf {

namespace {

void reject_unknown(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& section) {
  if (!j.is_object()) throw Error("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || key == a;
    if (!ok) throw Error("unknown key '" + key + "' in config section '" + section + "'");
  }
}

template <class T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<std::size_t> sizes_from_json(const Json& j) { return j.get<std::vector<std::size_t>>(); }

}  // namespace

Json to_json(const SyntheticSpec& s) {
  Json j;
  j["n_styles"] = s.n_styles;
  j["n_classes"] = s.n_classes;
  j["samples_per_cell"] = s.samples_per_cell;
  j["concept_dims"] = s.concept_dims;
  j["style_dims"] = s.style_dims;
  j["noise_std"] = s.noise_std;
  j["separation_sigmas"] = s.separation_sigmas;
  j["style_separation_sigmas"] = s.style_separation_sigmas;
  j["seed"] = s.seed;
  return j;
}

SyntheticSpec synthetic_spec_from_json(const Json& j, SyntheticSpec base) {
  reject_unknown(j, {"n_styles", "n_classes", "samples_per_cell", "concept_dims", "style_dims", "noise_std",
                     "separation_sigmas", "style_separation_sigmas", "seed"},
                 "dataset.synthetic");
  SyntheticSpec s = std::move(base);
  read_if(j, "n_styles", s.n_styles);
  read_if(j, "n_classes", s.n_classes);
  read_if(j, "samples_per_cell", s.samples_per_cell);
  read_if(j, "concept_dims", s.concept_dims);
  read_if(j, "style_dims", s.style_dims);
  read_if(j, "noise_std", s.noise_std);
  read_if(j, "separation_sigmas", s.separation_sigmas);
  read_if(j, "style_separation_sigmas", s.style_separation_sigmas);
  read_if(j, "seed", s.seed);
  return s;
}

Json to_json(const BackboneDescriptor& d) {
  Json j;
  j["kind"] = d.kind;
  j["weights_path"] = d.weights_path;
  j["image_dim"] = d.image_dim;
  j["embed_dim"] = d.embed_dim;
  j["payload_dim"] = d.payload_dim;
  j["concept_dims"] = d.concept_dims;
  j["max_context_length"] = d.max_context_length;
  j["seed"] = d.seed;
  return j;
}

BackboneDescriptor backbone_from_json(const Json& j, BackboneDescriptor base) {
  reject_unknown(j, {"kind", "weights_path", "image_dim", "embed_dim", "payload_dim", "concept_dims",
                     "max_context_length", "seed"},
                 "backbone");
  BackboneDescriptor d = std::move(base);
  read_if(j, "kind", d.kind);
  read_if(j, "weights_path", d.weights_path);
  read_if(j, "image_dim", d.image_dim);
  read_if(j, "embed_dim", d.embed_dim);
  read_if(j, "payload_dim", d.payload_dim);
  read_if(j, "concept_dims", d.concept_dims);
  read_if(j, "max_context_length", d.max_context_length);
  read_if(j, "seed", d.seed);
  return d;
}

Json to_json(const TrainConfig& c) {
  Json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.optimizer.learning_rate;
  j["momentum"] = c.optimizer.momentum;
  j["weight_decay"] = c.optimizer.weight_decay;
  j["warmup_epochs"] = c.optimizer.warmup_epochs;
  j["warmup_learning_rate"] = c.optimizer.warmup_learning_rate;
  j["latent_learning_rate"] = c.optimizer.latent_learning_rate;
  j["m1"] = c.m1;
  j["m2"] = c.m2;
  j["n_domains"] = c.n_domains;
  j["tau_cls"] = c.tau_cls;
  j["prompt_init_std"] = c.prompt_init_std;
  j["extractor_hidden"] = c.extractor_hidden;
  j["domain_feature_dim"] = c.domain_feature_dim;
  j["seed"] = c.seed;
  j["no_dap"] = c.ablation.no_dap;
  j["no_dsp"] = c.ablation.no_dsp;
  j["no_adv"] = c.ablation.no_adv;
  j["no_clustering"] = c.ablation.no_clustering;
  return j;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig base) {
  reject_unknown(j, {"epochs", "batch_size", "learning_rate", "momentum", "weight_decay", "warmup_epochs",
                     "warmup_learning_rate", "latent_learning_rate", "m1", "m2", "n_domains", "tau_cls", "prompt_init_std",
                     "extractor_hidden", "domain_feature_dim", "seed", "no_dap", "no_dsp", "no_adv",
                     "no_clustering"},
                 "train");
  TrainConfig c = std::move(base);
  read_if(j, "epochs", c.epochs);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "learning_rate", c.optimizer.learning_rate);
  read_if(j, "momentum", c.optimizer.momentum);
  read_if(j, "weight_decay", c.optimizer.weight_decay);
  read_if(j, "warmup_epochs", c.optimizer.warmup_epochs);
  read_if(j, "warmup_learning_rate", c.optimizer.warmup_learning_rate);
  read_if(j, "latent_learning_rate", c.optimizer.latent_learning_rate);
  read_if(j, "m1", c.m1);
  read_if(j, "m2", c.m2);
  read_if(j, "n_domains", c.n_domains);
  read_if(j, "tau_cls", c.tau_cls);
  read_if(j, "prompt_init_std", c.prompt_init_std);
  read_if(j, "extractor_hidden", c.extractor_hidden);
  read_if(j, "domain_feature_dim", c.domain_feature_dim);
  read_if(j, "seed", c.seed);
  read_if(j, "no_dap", c.ablation.no_dap);
  read_if(j, "no_dsp", c.ablation.no_dsp);
  read_if(j, "no_adv", c.ablation.no_adv);
  read_if(j, "no_clustering", c.ablation.no_clustering);
  return c;
}

Json to_json(const FusionConfig& c) {
  Json j;
  j["tau_fusion"] = c.tau_fusion;
  j["mode"] = c.mode == FusionMode::single ? "single:" + std::to_string(c.single_domain) : to_string(c.mode);
  return j;
}

FusionConfig fusion_config_from_json(const Json& j, FusionConfig base) {
  reject_unknown(j, {"tau_fusion", "mode"}, "fusion");
  FusionConfig c = std::move(base);
  read_if(j, "tau_fusion", c.tau_fusion);
  if (j.contains("mode")) parse_fusion_mode(j.at("mode").get<std::string>(), c);
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  Json dataset;
  dataset["kind"] = c.dataset.kind;
  dataset["root"] = c.dataset.root;
  dataset["synthetic"] = to_json(c.dataset.synthetic);
  j["dataset"] = std::move(dataset);
  j["backbone"] = to_json(c.backbone);
  j["train"] = to_json(c.train);
  j["fusion"] = to_json(c.fusion);
  j["output_dir"] = c.output_dir;
  j["seeds"] = c.seeds;
  j["split"] = c.split ? Json(*c.split) : Json(nullptr);
  j["val_fraction"] = c.val_fraction;
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig base) {
  reject_unknown(j, {"dataset", "backbone", "train", "fusion", "output_dir", "seeds", "split", "val_fraction"}, "root");
  ExperimentConfig c = std::move(base);
  if (j.contains("dataset")) {
    const Json& d = j.at("dataset");
    reject_unknown(d, {"kind", "root", "synthetic"}, "dataset");
    read_if(d, "kind", c.dataset.kind);
    read_if(d, "root", c.dataset.root);
    if (d.contains("synthetic")) c.dataset.synthetic = synthetic_spec_from_json(d.at("synthetic"), c.dataset.synthetic);
  }
  if (j.contains("backbone")) c.backbone = backbone_from_json(j.at("backbone"), c.backbone);
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("fusion")) c.fusion = fusion_config_from_json(j.at("fusion"), c.fusion);
  read_if(j, "output_dir", c.output_dir);
  read_if(j, "seeds", c.seeds);
  if (j.contains("split") && !j.at("split").is_null()) c.split = j.at("split").get<std::size_t>();
  read_if(j, "val_fraction", c.val_fraction);
  return c;
}

Json to_json(const LdpfModel& m) {
  Json prompts;
  prompts["m1"] = m.prompts.agnostic_length();
  prompts["m2"] = m.prompts.specific_length();
  prompts["n_domains"] = m.prompts.domain_count();
  prompts["n_classes"] = m.prompts.class_count();
  prompts["embed_dim"] = m.prompts.embed_dim();
  prompts["agnostic"] = matrix_to_json(m.prompts.agnostic());
  Json specific = Json::array();
  for (std::size_t s = 0; s < m.prompts.domain_count(); ++s) specific.push_back(matrix_to_json(m.prompts.specific(s)));
  prompts["specific"] = std::move(specific);

  Json latent;
  latent["n_domains"] = m.latent.centroids.rows();
  latent["domain_feature_dim"] = m.extractor.output_dim();
  latent["hidden_dim"] = m.extractor.hidden_dim();
  latent["extractor"] = {{"w1", matrix_to_json(m.extractor.w1())},
                         {"b1", m.extractor.b1()},
                         {"w2", matrix_to_json(m.extractor.w2())},
                         {"b2", m.extractor.b2()}};
  latent["aux"] = {{"w", matrix_to_json(m.aux.w())}, {"b", m.aux.b()}};
  latent["centroids"] = matrix_to_json(m.latent.centroids);
  latent["assignments"] = m.latent.assignments;
  latent["round"] = m.latent.round;
  latent["inertia"] = m.latent.inertia;

  Json j;
  j["prompts"] = std::move(prompts);
  j["latent_domain"] = std::move(latent);
  return j;
}

LdpfModel model_from_json(const Json& j) {
  const Json& p = j.at("prompts");
  const std::size_t m1 = p.at("m1").get<std::size_t>();
  const std::size_t m2 = p.at("m2").get<std::size_t>();
  const std::size_t n_domains = p.at("n_domains").get<std::size_t>();
  const std::size_t n_classes = p.at("n_classes").get<std::size_t>();
  const std::size_t e = p.at("embed_dim").get<std::size_t>();
  LdpfModel m;
  m.prompts = PromptBank(m1, m2, n_domains, n_classes, e, RngSeed{0});
  m.prompts.agnostic() = matrix_from_json(p.at("agnostic"), e);
  if (m.prompts.agnostic().rows() != m1) throw Error("checkpoint: agnostic block length differs from m1");
  if (p.at("specific").size() != n_domains) throw Error("checkpoint: specific block count differs from n_domains");
  for (std::size_t s = 0; s < n_domains; ++s) {
    m.prompts.specific(s) = matrix_from_json(p.at("specific")[s], e);
    if (m.prompts.specific(s).rows() != m2) throw Error("checkpoint: specific block length differs from m2");
  }

  const Json& l = j.at("latent_domain");
  const Json& ex = l.at("extractor");
  m.extractor = DomainFeatureExtractor(matrix_from_json(ex.at("w1")), ex.at("b1").get<Vector>(),
                                       matrix_from_json(ex.at("w2")), ex.at("b2").get<Vector>());
  const Json& aux = l.at("aux");
  m.aux = AuxiliaryClassifier(matrix_from_json(aux.at("w")), aux.at("b").get<Vector>());
  m.latent.centroids = matrix_from_json(l.at("centroids"), m.extractor.output_dim());
  m.latent.assignments = sizes_from_json(l.at("assignments"));
  m.latent.round = l.at("round").get<std::size_t>();
  m.latent.inertia = l.at("inertia").get<double>();
  return m;
}

Json to_json(const Checkpoint& c) {
  Json j;
  j["format"] = "ldpf-checkpoint";
  j["format_version"] = c.format_version;
  j["seed"] = c.seed;
  j["target_domain"] = c.target_domain;
  j["encoder"] = {{"feature_dim", c.encoder.feature_dim},
                  {"embed_dim", c.encoder.embed_dim},
                  {"payload_dim", c.encoder.payload_dim},
                  {"checksum", to_hex(c.encoder.checksum)}};
  Json model = to_json(c.model);
  j["prompts"] = std::move(model["prompts"]);
  j["latent_domain"] = std::move(model["latent_domain"]);
  j["config"] = to_json(c.config);
  return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
  if (j.value("format", "") != "ldpf-checkpoint") throw Error("not an ldpf checkpoint");
  Checkpoint c;
  c.format_version = j.at("format_version").get<int>();
  if (c.format_version != Checkpoint::kFormatVersion)
    throw Error("unsupported checkpoint format version " + std::to_string(c.format_version));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.target_domain = j.at("target_domain").get<std::size_t>();
  const Json& e = j.at("encoder");
  c.encoder.feature_dim = e.at("feature_dim").get<std::size_t>();
  c.encoder.embed_dim = e.at("embed_dim").get<std::size_t>();
  c.encoder.payload_dim = e.at("payload_dim").get<std::size_t>();
  c.encoder.checksum = std::stoull(e.at("checksum").get<std::string>(), nullptr, 16);
  c.model = model_from_json(j);
  c.config = experiment_config_from_json(j.at("config"));
  return c;
}

Json to_json(const EpochLog& e) {
  Json j;
  j["epoch"] = e.epoch;
  j["L_dsp"] = e.loss_dsp;
  j["L_dap"] = e.loss_dap;
  j["L_adv"] = e.loss_adv;
  j["total"] = e.total;
  j["lambda"] = e.lambda;
  j["inertia"] = e.inertia;
  j["cluster_sizes"] = e.cluster_sizes;
  return j;
}

Json to_json(const PredictionRow& r) {
  Json j;
  j["sample_id"] = r.sample_id;
  j["true_class"] = r.true_class;
  j["alpha"] = r.alpha;
  j["per_domain_predicted_class"] = r.per_domain_predicted;
  j["fused_probabilities"] = r.fused_probabilities;
  j["fused_predicted_class"] = r.fused_predicted;
  return j;
}

PredictionRow prediction_row_from_json(const Json& j, std::size_t line) {
  const std::string where = "prediction dump line " + std::to_string(line);
  static constexpr const char* required[] = {"sample_id", "true_class", "alpha", "per_domain_predicted_class",
                                             "fused_probabilities", "fused_predicted_class"};
  if (!j.is_object()) throw Error(where + ": not a JSON object");
  for (const char* key : required)
    if (!j.contains(key)) throw Error(where + ": missing field '" + key + "'");
  try {
    PredictionRow r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.true_class = j.at("true_class").get<std::size_t>();
    r.alpha = j.at("alpha").get<std::vector<double>>();
    r.per_domain_predicted = j.at("per_domain_predicted_class").get<std::vector<std::size_t>>();
    r.fused_probabilities = j.at("fused_probabilities").get<std::vector<double>>();
    r.fused_predicted = j.at("fused_predicted_class").get<std::size_t>();
    if (r.per_domain_predicted.empty()) throw Error("no per-domain predictions");
    if (r.alpha.size() != r.per_domain_predicted.size())
      throw Error("alpha has " + std::to_string(r.alpha.size()) + " entries but there are " +
                  std::to_string(r.per_domain_predicted.size()) + " per-domain predictions");
    const std::size_t k = r.fused_probabilities.size();
    if (k > 0) {
      if (r.true_class >= k || r.fused_predicted >= k) throw Error("class id out of range");
      for (std::size_t c : r.per_domain_predicted)
        if (c >= k) throw Error("per-domain class id out of range");
    }
    return r;
  } catch (const Json::exception& ex) {
    throw Error(where + ": " + ex.what());
  } catch (const Error& ex) {
    throw Error(where + ": " + ex.what());
  }
}

Json to_json(const BoundReport& r) {
  Json j;
  j["samples"] = r.samples;
  j["U_sel"] = r.selection_bound;
  j["fused_accuracy"] = r.fused_accuracy;
  j["per_prompt_accuracy"] = r.per_prompt_accuracy;
  j["gap"] = r.gap;
  j["fusion_exceeded_selection_oracle"] = r.fusion_exceeded_selection();
  return j;
}

Json to_json(const ClusterReport& r) {
  Json j;
  j["cluster_sizes"] = r.sizes;
  j["inertia"] = r.inertia;
  j["confusion_latent_vs_annotated"] = r.confusion;
  j["agreement"] = r.agreement;
  j["class_mutual_information"] = r.class_mutual_information;
  return j;
}

Json to_json(const DatasetManifest& m) {
  Json j;
  j["format"] = "ldpf-manifest";
  j["name"] = m.name;
  j["classes"] = m.classes;
  j["domains"] = m.domains;
  Json samples = Json::array();
  for (const Sample& s : m.samples) {
    Json js;
    js["id"] = s.id;
    js["class_id"] = s.class_id;
    js["domain"] = s.domain ? Json(*s.domain) : Json(nullptr);
    if (!s.path.empty()) js["path"] = s.path;
    if (!s.payload.empty()) js["payload"] = s.payload;
    samples.push_back(std::move(js));
  }
  j["samples"] = std::move(samples);
  return j;
}

DatasetManifest manifest_from_json(const Json& j) {
  if (j.value("format", "") != "ldpf-manifest") throw Error("not an ldpf manifest");
  DatasetManifest m;
  m.name = j.at("name").get<std::string>();
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.domains = j.at("domains").get<std::vector<std::string>>();
  for (const Json& js : j.at("samples")) {
    Sample s;
    s.id = js.at("id").get<std::string>();
    s.class_id = js.at("class_id").get<std::size_t>();
    if (!js.at("domain").is_null()) s.domain = js.at("domain").get<std::size_t>();
    if (js.contains("path")) s.path = js.at("path").get<std::string>();
    if (js.contains("payload")) s.payload = js.at("payload").get<Vector>();
    m.samples.push_back(std::move(s));
  }
  m.validate();
  return m;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& contents) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << contents;
}

std::string dump_document(const Json& j) { return j.dump(2) + "\n"; }

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_text_file(path, dump_document(to_json(ckpt)));
}

Checkpoint load_checkpoint(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::exception& ex) {
    throw Error("malformed checkpoint '" + path + "': " + ex.what());
  }
  try {
    return checkpoint_from_json(j);
  } catch (const Json::exception& ex) {
    throw Error("malformed checkpoint '" + path + "': " + ex.what());
  }
}

std::string training_log_ndjson(const std::vector<EpochLog>& log) {
  std::string out;
  for (const EpochLog& e : log) out += to_json(e).dump() + "\n";
  return out;
}

std::string prediction_dump_ndjson(const PredictionDump& dump) {
  std::string out;
  for (const PredictionRow& r : dump.rows) out += to_json(r).dump() + "\n";
  return out;
}

PredictionDump parse_prediction_dump(const std::string& text) {
  PredictionDump dump;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& ex) {
      throw Error("prediction dump line " + std::to_string(number) + ": " + ex.what());
    }
    PredictionRow row = prediction_row_from_json(j, number);
    if (!dump.rows.empty() && row.per_domain_predicted.size() != dump.rows.front().per_domain_predicted.size())
      throw Error("prediction dump line " + std::to_string(number) + " ('" + row.sample_id + "'): expected " +
                  std::to_string(dump.rows.front().per_domain_predicted.size()) + " per-domain predictions, found " +
                  std::to_string(row.per_domain_predicted.size()));
    dump.rows.push_back(std::move(row));
  }
  dump.validate();
  return dump;
}

}  // namespace ldpf
