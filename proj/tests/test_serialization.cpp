#include <doctest.h>

#include <filesystem>

#include <unistd.h>

#include "fixtures.hpp"
#include "ldpf/serialization.hpp"

using namespace ldpf;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("ldpf_ser_" + std::to_string(::getpid()) + "_" + name)).string();
}

Checkpoint small_checkpoint(const fixtures::Toy& toy) {
  ExperimentConfig cfg = synthetic_experiment_config();
  cfg.backbone = toy.backbone;
  cfg.dataset.synthetic = toy.spec;
  cfg.train.epochs = 2;
  cfg.train.seed = 3;
  Checkpoint c;
  c.config = cfg;
  c.seed = 3;
  c.target_domain = 0;
  c.encoder = EncoderFingerprint::of(*toy.enc);
  c.model = train_split(toy.manifest, toy.splits[0], cfg.train, *toy.enc).model;
  return c;
}

}  // namespace

TEST_SUITE("serialization") {
  TEST_CASE("experiment config round-trips") {
    ExperimentConfig c = synthetic_experiment_config();
    c.train.ablation.no_adv = true;
    c.train.optimizer.latent_learning_rate = 0.01;
    c.fusion.mode = FusionMode::single;
    c.fusion.single_domain = 1;
    c.split = 2;
    c.val_fraction = 0.1;
    c.seeds = {4, 5};
    c.backbone.kind = "external";
    c.backbone.weights_path = "w.json";
    CHECK(experiment_config_from_json(to_json(c)) == c);

    c.split.reset();
    const Json j = to_json(c);
    CHECK(j.at("split").is_null());
    CHECK(experiment_config_from_json(j) == c);
  }

  TEST_CASE("partial documents override a base") {
    const ExperimentConfig base = synthetic_experiment_config();
    const Json j = Json::parse(R"({"train": {"epochs": 5}, "fusion": {"mode": "greedy"}})");
    const ExperimentConfig c = experiment_config_from_json(j, base);
    CHECK(c.train.epochs == 5);
    CHECK(c.train.n_domains == base.train.n_domains);
    CHECK(c.fusion.mode == FusionMode::greedy);
    CHECK(c.seeds == base.seeds);
  }

  TEST_CASE("unknown keys and bad shapes are rejected") {
    CHECK_THROWS_WITH_AS(experiment_config_from_json(Json::parse(R"({"trian": {}})")),
                         doctest::Contains("unknown key 'trian'"), Error);
    CHECK_THROWS_WITH_AS(experiment_config_from_json(Json::parse(R"({"train": {"epoch": 3}})")),
                         doctest::Contains("unknown key 'epoch'"), Error);
    CHECK_THROWS_AS(experiment_config_from_json(Json::parse(R"({"train": 3})")), Error);
    CHECK_THROWS_AS(experiment_config_from_json(Json::parse(R"({"fusion": {"mode": "best"}})")), Error);
  }

  TEST_CASE("checkpoint save, load, save is byte-identical") {
    const fixtures::Toy toy;
    const Checkpoint c = small_checkpoint(toy);
    const std::string a = temp_path("a.json"), b = temp_path("b.json");
    save_checkpoint(c, a);
    const Checkpoint loaded = load_checkpoint(a);
    CHECK(loaded.model == c.model);
    CHECK(loaded.config == c.config);
    CHECK(loaded.encoder == c.encoder);
    CHECK(loaded.seed == c.seed);
    save_checkpoint(loaded, b);
    CHECK(read_text_file(a) == read_text_file(b));
    CHECK_NOTHROW(check_fingerprint(loaded, *toy.enc));
    fs::remove(a);
    fs::remove(b);
  }

  TEST_CASE("malformed checkpoints name the file") {
    const std::string p = temp_path("bad.json");
    write_text_file(p, "{not json");
    CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("malformed checkpoint"), Error);
    write_text_file(p, R"({"format": "something-else"})");
    CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("not an ldpf checkpoint"), Error);
    fs::remove(p);
    CHECK_THROWS_AS(load_checkpoint(p), Error);
  }

  TEST_CASE("manifest round-trips") {
    const fixtures::Toy toy(3);
    CHECK(manifest_from_json(to_json(toy.manifest)) == toy.manifest);
  }

  TEST_CASE("prediction dumps round-trip and report bad lines") {
    PredictionDump d;
    for (std::size_t i = 0; i < 3; ++i) {
      PredictionRow r;
      r.sample_id = "x" + std::to_string(i);
      r.true_class = i;
      r.alpha = {0.25, 0.75};
      r.per_domain_predicted = {i, 0};
      r.fused_probabilities = {0.2, 0.3, 0.5};
      r.fused_predicted = 2;
      d.rows.push_back(r);
    }
    const std::string text = prediction_dump_ndjson(d);
    CHECK(parse_prediction_dump(text).rows == d.rows);

    CHECK_THROWS_WITH_AS(parse_prediction_dump(text + "{oops\n"), doctest::Contains("line 4"), Error);
    std::string ragged = text;
    ragged += R"({"sample_id":"y","true_class":0,"alpha":[1.0],"per_domain_predicted_class":[0],)"
              R"("fused_probabilities":[1.0,0.0,0.0],"fused_predicted_class":0})"
              "\n";
    CHECK_THROWS_WITH_AS(parse_prediction_dump(ragged), doctest::Contains("line 4 ('y'): expected 2"), Error);
    CHECK_THROWS_WITH_AS(parse_prediction_dump(R"({"sample_id":"y"})"), doctest::Contains("line 1"), Error);
    CHECK_THROWS_AS(parse_prediction_dump(""), Error);
  }

  TEST_CASE("training log lines carry the documented keys") {
    EpochLog e;
    e.epoch = 2;
    e.cluster_sizes = {3, 4};
    const std::string line = training_log_ndjson({e});
    const Json j = Json::parse(line);
    for (const char* key : {"epoch", "L_dsp", "L_adv", "L_dap", "total", "lambda", "inertia", "cluster_sizes"})
      CHECK(j.contains(key));
  }
}
