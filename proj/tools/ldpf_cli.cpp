// ldpf command-line entry point: train, eval, oracle, ablate, inspect-clusters.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ldpf/experiment.hpp"
#include "ldpf/kernels.hpp"
#include "ldpf/serialization.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using namespace ldpf;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Options {
  std::string config_path;
  std::string dataset;
  std::string backbone;
  std::optional<std::size_t> epochs;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> fusion_modes;
  std::string out;
  bool plot = false;
  std::optional<std::size_t> split;
  std::optional<double> val_fraction;
  std::vector<std::string> inputs;  // checkpoints or dumps
};

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Defaults, then the config file, then flags.
/// --dataset: "synthetic", a manifest file (*.json) or a dataset directory.
void apply_dataset_flag(const std::string& value, DatasetDescriptor& d) {
  if (value == "synthetic") {
    d.kind = "synthetic";
  } else {
    d.kind = fs::path(value).extension() == ".json" ? "manifest" : "directory";
    d.root = value;
  }
}

ExperimentConfig build_config(const Options& o, bool* seeds_given = nullptr) {
  ExperimentConfig cfg = synthetic_experiment_config();
  bool has_seeds = false;
  if (!o.config_path.empty()) {
    Json j;
    try {
      j = Json::parse(read_text_file(o.config_path));
      has_seeds = j.contains("seeds");
      cfg = experiment_config_from_json(j, cfg);
    } catch (const Json::exception& ex) {
      throw UsageError("config '" + o.config_path + "': " + ex.what());
    } catch (const Error& ex) {
      throw UsageError("config '" + o.config_path + "': " + ex.what());
    }
  }
  if (!o.dataset.empty()) apply_dataset_flag(o.dataset, cfg.dataset);
  if (!o.backbone.empty()) {
    if (o.backbone == "toy") {
      cfg.backbone.kind = "toy";
    } else {
      cfg.backbone.kind = "external";
      cfg.backbone.weights_path = o.backbone;
      cfg.backbone.image_dim = 0;
      cfg.backbone.embed_dim = 0;
    }
  }
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (!o.seeds.empty()) {
    cfg.seeds = o.seeds;
    has_seeds = true;
  }
  if (!o.fusion_modes.empty()) {
    try {
      parse_fusion_mode(o.fusion_modes.front(), cfg.fusion);
    } catch (const Error& ex) {
      throw UsageError(ex.what());
    }
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.split) cfg.split = *o.split;
  if (o.val_fraction) cfg.val_fraction = *o.val_fraction;
  try {
    cfg.validate();
  } catch (const Error& ex) {
    throw UsageError(std::string("invalid config: ") + ex.what());
  }
  if (seeds_given) *seeds_given = has_seeds;
  return cfg;
}

std::string run_dir(std::uint64_t seed, std::size_t target) {
  return "seed_" + std::to_string(seed) + "/split_" + std::to_string(target);
}

int cmd_train(const Options& o) {
  const ExperimentConfig cfg = build_config(o);
  const fs::path out(cfg.output_dir);
  write_text_file((out / "config.json").string(), dump_document(to_json(cfg)));

  const DatasetManifest manifest = load_dataset(cfg.dataset);
  write_text_file((out / "manifest.json").string(), to_json(manifest).dump() + "\n");
  const auto enc = make_encoder_pair(cfg.backbone);
  const std::vector<DomainSplit> splits = resolve_splits(manifest, cfg);
  const Temperature tau(cfg.train.tau_cls);

  Json runs = Json::array();
  for (std::uint64_t seed : cfg.seeds) {
    for (const DomainSplit& split : splits) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      std::cerr << "training seed " << seed << ", target domain " << manifest.domains[split.target_domain] << "\n";
      const TrainResult result = train_split(manifest, split, tc, *enc);

      Checkpoint ckpt;
      ckpt.config = cfg;
      ckpt.seed = seed;
      ckpt.target_domain = split.target_domain;
      ckpt.encoder = EncoderFingerprint::of(*enc);
      ckpt.model = result.model;
      const std::string rel = run_dir(seed, split.target_domain);
      save_checkpoint(ckpt, (out / rel / "checkpoint.json").string());
      write_text_file((out / rel / "log.jsonl").string(), training_log_ndjson(result.log));

      Json run;
      run["seed"] = seed;
      run["target_domain"] = split.target_domain;
      run["target_domain_name"] = manifest.domains[split.target_domain];
      run["checkpoint"] = rel + "/checkpoint.json";
      run["epochs"] = result.log.size();
      run["final"] = result.log.empty() ? Json(nullptr) : to_json(result.log.back());
      run["train_accuracy"] =
          evaluate(result.model, *enc, manifest, split.train_indices, cfg.fusion, tau).accuracy;
      run["validation_accuracy"] =
          split.validation_indices.empty()
              ? Json(nullptr)
              : Json(evaluate(result.model, *enc, manifest, split.validation_indices, cfg.fusion, tau).accuracy);
      runs.push_back(std::move(run));

      if (o.plot && !result.log.empty()) {
        plot::Series dsp{"L_dsp", {}}, dap{"L_dap", {}}, adv{"L_adv", {}}, total{"total", {}};
        for (const EpochLog& e : result.log) {
          dsp.values.push_back(e.loss_dsp);
          dap.values.push_back(e.loss_dap);
          adv.values.push_back(e.loss_adv);
          total.values.push_back(e.total);
        }
        write_text_file((out / rel / "losses.svg").string(),
                        plot::line_chart("training losses, " + rel, {dsp, dap, adv, total}));
      }
    }
  }
  Json report;
  report["command"] = "train";
  report["isa"] = kernels::name(kernels::active_isa());
  report["runs"] = std::move(runs);
  write_text_file((out / "train_report.json").string(), dump_document(report));
  std::cout << "wrote " << (out / "train_report.json").string() << "\n";
  return 0;
}

std::vector<FusionConfig> fusion_sweep(const Options& o, const FusionConfig& base) {
  std::vector<std::string> names;
  for (const std::string& m : o.fusion_modes) {
    if (m == "sweep") {
      names.insert(names.end(), {"similarity", "greedy", "average"});
    } else {
      names.push_back(m);
    }
  }
  if (names.empty()) return {base};
  std::vector<FusionConfig> out;
  for (const std::string& n : names) {
    FusionConfig f = base;
    try {
      parse_fusion_mode(n, f);
    } catch (const Error& ex) {
      throw UsageError(ex.what());
    }
    out.push_back(f);
  }
  return out;
}

std::string mode_label(const FusionConfig& f) {
  return f.mode == FusionMode::single ? "single:" + std::to_string(f.single_domain) : to_string(f.mode);
}

int cmd_eval(const Options& o) {
  if (o.inputs.empty()) throw UsageError("eval needs at least one checkpoint");
  const fs::path out(o.out.empty() ? "eval" : o.out);

  struct Loaded {
    std::string path;
    Checkpoint ckpt;
  };
  std::vector<Loaded> ckpts;
  for (const std::string& p : o.inputs) ckpts.push_back({p, load_checkpoint(p)});

  std::vector<FusionConfig> modes = fusion_sweep(o, ckpts.front().ckpt.config.fusion);
  std::map<std::string, std::vector<double>> per_mode;
  Json runs = Json::array();
  for (std::size_t c = 0; c < ckpts.size(); ++c) {
    const Checkpoint& ck = ckpts[c].ckpt;
    ExperimentConfig cfg = ck.config;
    if (!o.dataset.empty()) apply_dataset_flag(o.dataset, cfg.dataset);
    if (!o.backbone.empty() && o.backbone != "toy") {
      cfg.backbone.kind = "external";
      cfg.backbone.weights_path = o.backbone;
    }
    const auto enc = make_encoder_pair(cfg.backbone);
    check_fingerprint(ck, *enc);
    const DatasetManifest manifest = load_dataset(cfg.dataset);
    cfg.split = ck.target_domain;
    const DomainSplit split = resolve_splits(manifest, cfg).front();
    const Temperature tau(cfg.train.tau_cls);

    Json run;
    run["checkpoint"] = ckpts[c].path;
    run["seed"] = ck.seed;
    run["target_domain"] = ck.target_domain;
    run["target_domain_name"] = manifest.domains[ck.target_domain];
    Json results = Json::array();
    for (const FusionConfig& f : modes) {
      const EvalResult ev = evaluate(ck.model, *enc, manifest, split.test_indices, f, tau);
      const BoundReport bound = bound_report(ev.dump);
      const std::string label = mode_label(f);
      std::string dump_name = "predictions_" + std::to_string(c) + "_" + label + ".jsonl";
      for (char& ch : dump_name)
        if (ch == ':') ch = '_';
      write_text_file((out / dump_name).string(), prediction_dump_ndjson(ev.dump));
      Json r;
      r["fusion_mode"] = label;
      r["accuracy"] = ev.accuracy;
      r["per_prompt_accuracy"] = bound.per_prompt_accuracy;
      r["U_sel"] = bound.selection_bound;
      r["predictions"] = dump_name;
      results.push_back(std::move(r));
      per_mode[label].push_back(ev.accuracy);
    }
    run["results"] = std::move(results);
    runs.push_back(std::move(run));
  }

  Json summary = Json::array();
  for (const FusionConfig& f : modes) {
    const std::string label = mode_label(f);
    const MeanStd ms = mean_std(per_mode[label]);
    summary.push_back({{"fusion_mode", label},
                       {"runs", per_mode[label].size()},
                       {"accuracy_mean", ms.mean},
                       {"accuracy_std", ms.stddev}});
    std::cout << label << ": " << fixed(ms.mean) << " +- " << fixed(ms.stddev) << " over " << per_mode[label].size()
              << " run(s)\n";
  }
  Json report;
  report["command"] = "eval";
  report["summary"] = std::move(summary);
  report["runs"] = std::move(runs);
  write_text_file((out / "eval_report.json").string(), dump_document(report));
  return 0;
}

int cmd_oracle(const Options& o) {
  if (o.inputs.size() != 1) throw UsageError("oracle needs exactly one prediction dump");
  const fs::path out(o.out.empty() ? "oracle" : o.out);
  const PredictionDump dump = parse_prediction_dump(read_text_file(o.inputs.front()));
  const BoundReport r = bound_report(dump);
  Json report = to_json(r);
  report["dump"] = o.inputs.front();
  report["status"] = r.fusion_exceeded_selection() ? "fusion exceeded selection oracle" : "ok";
  write_text_file((out / "oracle_report.json").string(), dump_document(report));
  std::cout << "U_sel " << fixed(r.selection_bound) << "  fused " << fixed(r.fused_accuracy) << "  gap "
            << fixed(r.gap) << "\n";
  if (r.fusion_exceeded_selection()) std::cout << "note: fusion exceeded selection oracle\n";
  if (o.plot) {
    std::vector<plot::Bar> bars;
    for (std::size_t s = 0; s < r.per_prompt_accuracy.size(); ++s)
      bars.push_back({"prompt " + std::to_string(s), r.per_prompt_accuracy[s]});
    bars.push_back({"fused", r.fused_accuracy});
    bars.push_back({"U_sel", r.selection_bound});
    write_text_file((out / "oracle.svg").string(), plot::bar_chart("selection oracle", bars));
  }
  return 0;
}

int cmd_ablate(const Options& o) {
  bool seeds_given = false;
  ExperimentConfig cfg = build_config(o, &seeds_given);
  if (!seeds_given) cfg.seeds = {0, 1, 2, 3, 4};
  const fs::path out(cfg.output_dir);
  write_text_file((out / "config.json").string(), dump_document(to_json(cfg)));
  const DatasetManifest manifest = load_dataset(cfg.dataset);
  const auto enc = make_encoder_pair(cfg.backbone);
  const std::vector<AblationRow> rows = run_ablation(cfg, manifest, *enc);

  const double full = rows.front().accuracy.mean;
  Json table = Json::array();
  for (const AblationRow& row : rows) {
    table.push_back({{"variant", row.variant},
                     {"accuracy_mean", row.accuracy.mean},
                     {"accuracy_std", row.accuracy.stddev},
                     {"delta_vs_full", row.accuracy.mean - full},
                     {"per_seed", row.per_seed}});
    std::printf("%-14s %.4f +- %.4f\n", row.variant.c_str(), row.accuracy.mean, row.accuracy.stddev);
  }
  Json report;
  report["command"] = "ablate";
  report["seeds"] = cfg.seeds;
  report["variants"] = std::move(table);
  write_text_file((out / "ablation_report.json").string(), dump_document(report));
  if (o.plot) {
    std::vector<plot::Bar> bars;
    for (const AblationRow& row : rows) bars.push_back({row.variant, row.accuracy.mean});
    write_text_file((out / "ablation.svg").string(), plot::bar_chart("ablation, mean target accuracy", bars));
  }
  return 0;
}

int cmd_inspect(const Options& o) {
  if (o.inputs.size() != 1) throw UsageError("inspect-clusters needs exactly one checkpoint");
  const Checkpoint ck = load_checkpoint(o.inputs.front());
  ExperimentConfig cfg = ck.config;
  if (!o.dataset.empty()) apply_dataset_flag(o.dataset, cfg.dataset);
  const auto enc = make_encoder_pair(cfg.backbone);
  check_fingerprint(ck, *enc);
  const DatasetManifest manifest = load_dataset(cfg.dataset);
  cfg.split = ck.target_domain;
  const DomainSplit split = resolve_splits(manifest, cfg).front();
  const ClusterReport r = inspect_clusters(ck.model, manifest, split);

  Json report = to_json(r);
  report["checkpoint"] = o.inputs.front();
  Json names = Json::array();
  for (std::size_t d : split.train_domains) names.push_back(manifest.domains[d]);
  report["annotated_domains"] = std::move(names);
  const fs::path out(o.out.empty() ? "inspect" : o.out);
  write_text_file((out / "cluster_report.json").string(), dump_document(report));
  std::cout << "agreement " << fixed(r.agreement) << "  class MI " << fixed(r.class_mutual_information) << "\n";
  if (o.plot) {
    std::vector<plot::Bar> bars;
    std::size_t total = 0;
    for (std::size_t n : r.sizes) total += n;
    for (std::size_t s = 0; s < r.sizes.size(); ++s)
      bars.push_back({"cluster " + std::to_string(s),
                      total ? static_cast<double>(r.sizes[s]) / static_cast<double>(total) : 0.0});
    write_text_file((out / "clusters.svg").string(), plot::bar_chart("cluster share", bars));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent domain prompt fusion: training, evaluation and diagnostics"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "experiment config (JSON)");
    sub->add_option("--dataset", o.dataset, "'synthetic', a manifest .json or a root/domain/class directory");
    sub->add_option("--backbone", o.backbone, "'toy' or a projection-weights JSON file");
    sub->add_option("--epochs", o.epochs, "training epochs");
    sub->add_option("--seed", o.seeds, "seed (repeatable)");
    sub->add_option("--fusion-mode", o.fusion_modes,
                    "similarity | greedy | average | single:<s> | sweep (repeatable)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_flag("--plot", o.plot, "also write SVG plots");
  };

  CLI::App* train = app.add_subcommand("train", "train one model per seed and split");
  common(train);
  train->add_option("--split", o.split, "target domain index (default: all)");
  train->add_option("--val-fraction", o.val_fraction, "share of source samples held out for validation");

  CLI::App* eval = app.add_subcommand("eval", "evaluate checkpoints on their target domain");
  common(eval);
  eval->add_option("checkpoints", o.inputs, "checkpoint files")->required();

  CLI::App* oracle = app.add_subcommand("oracle", "selection-oracle bound from a prediction dump");
  oracle->add_option("dump", o.inputs, "prediction dump (JSONL)")->required();
  oracle->add_option("--out", o.out, "output directory");
  oracle->add_flag("--plot", o.plot, "also write an SVG bar chart");

  CLI::App* ablate = app.add_subcommand("ablate", "run the ablation variant matrix");
  common(ablate);
  ablate->add_option("--split", o.split, "target domain index (default: all)");

  CLI::App* inspect = app.add_subcommand("inspect-clusters", "compare latent clusters with annotations");
  inspect->add_option("checkpoint", o.inputs, "checkpoint file")->required();
  inspect->add_option("--dataset", o.dataset, "dataset override");
  inspect->add_option("--out", o.out, "output directory");
  inspect->add_flag("--plot", o.plot, "also write an SVG chart");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (oracle->parsed()) return cmd_oracle(o);
    if (ablate->parsed()) return cmd_ablate(o);
    if (inspect->parsed()) return cmd_inspect(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
