#include <doctest.h>

#include <cmath>

#include "ldpf/experiment.hpp"
#include "ldpf/training.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ldpf;

namespace {

using Fixture = fixtures::Toy;

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 3;
  c.n_domains = 2;
  c.m1 = 2;
  c.m2 = 3;
  return c;
}

Batch batch_from(const TrainingSet& data, std::size_t n, std::size_t domains) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.image_features.push_back(data.feature(i * 7 % data.size()));
    b.labels.push_back(data.label(i * 7 % data.size()));
    b.domains.push_back(i % domains);
  }
  return b;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("lambda schedule endpoints and shape") {
    CHECK(lambda_schedule(0.0) == 0.0);
    CHECK(std::abs(lambda_schedule(1.0) - 0.99991) < 1e-5);
    CHECK(lambda_schedule(0.5) == doctest::Approx(oracle::lambda_schedule(0.5)));
    for (double p = 0.0; p < 1.0; p += 0.05) CHECK(lambda_schedule(p + 0.05) > lambda_schedule(p));
    CHECK(TrainProgress::at(0, 30).lambda() == 0.0);
    CHECK(TrainProgress::at(30, 30).p == 1.0);
    CHECK(TrainProgress::at(29, 30).lambda() == doctest::Approx(oracle::lambda_schedule(29.0 / 30.0)));
  }

  TEST_CASE("learning rate: constant warmup then cosine decay") {
    const OptimizerConfig cfg;
    CHECK(learning_rate_at(0, 30, cfg) == 1e-5);
    CHECK(learning_rate_at(1, 30, cfg) == doctest::Approx(0.001 * (1.0 + std::cos(M_PI / 30.0))));
    CHECK(learning_rate_at(15, 30, cfg) == doctest::Approx(0.001));
    for (std::size_t e = 1; e + 1 < 30; ++e) CHECK(learning_rate_at(e + 1, 30, cfg) < learning_rate_at(e, 30, cfg));
  }

  TEST_CASE("sgd step with momentum and weight decay") {
    OptimizerConfig cfg;
    std::vector<double> p{1.0}, g{0.5}, v;
    sgd_step(p, g, v, 0.1, cfg);
    CHECK(v[0] == doctest::Approx(0.5 + 5e-4));
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * (0.5 + 5e-4)));
    const double p1 = p[0];
    sgd_step(p, g, v, 0.1, cfg);
    CHECK(v[0] == doctest::Approx(0.9 * (0.5 + 5e-4) + 0.5 + 5e-4 * p1));
  }

  TEST_CASE("config validation") {
    TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = TrainConfig{};
    c.ablation.no_dap = c.ablation.no_dsp = true;
    CHECK_THROWS_AS(c.validate(), Error);
    c = TrainConfig{};
    c.optimizer.momentum = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("uniform predictions give ln K") {
    const Fixture fx;
    const PromptBank bank(2, 2, 2, 5, 16, RngSeed{1});
    const TrainingSet data = fx.training_set();
    const Batch b = batch_from(data, 6, 2);
    const Temperature tau(1e6);  // flattens any cosine pattern
    CHECK(loss_dsp(b, bank, *fx.enc, tau) == doctest::Approx(std::log(5.0)).epsilon(1e-5));
    CHECK(loss_dap(b, bank, *fx.enc, tau) == doctest::Approx(std::log(5.0)).epsilon(1e-5));
  }

  TEST_CASE("single-sample batch equals the plain cross-entropy of its domain") {
    const Fixture fx;
    const PromptBank bank(2, 3, 2, 5, 16, RngSeed{2}, 0.3);
    const TrainingSet data = fx.training_set();
    Batch b;
    b.image_features = {data.feature(3)};
    b.labels = {data.label(3)};
    b.domains = {1};
    const Temperature tau(0.01);
    const TextFeatureTable t = compute_text_features(bank, *fx.enc, PromptMode::dsp_only);
    const std::vector<FeatureVector> classes = t.domain_features(1);
    const SimplexWeights p = classify(b.image_features[0], classes, tau);
    CHECK(loss_dsp(b, bank, *fx.enc, tau) == doctest::Approx(-std::log(p[b.labels[0]])).epsilon(1e-9));
  }

  TEST_CASE("empty agnostic block: L_dap equals L_dsp") {
    const Fixture fx;
    const PromptBank bank(0, 3, 2, 5, 16, RngSeed{3}, 0.2);
    const Batch b = batch_from(fx.training_set(), 10, 2);
    const Temperature tau(0.01);
    CHECK(loss_dap(b, bank, *fx.enc, tau) == loss_dsp(b, bank, *fx.enc, tau));
  }

  TEST_CASE("L_dap gradients never reach the specific tokens") {
    const Fixture fx;
    const PromptBank bank(2, 3, 2, 5, 16, RngSeed{3}, 0.2);
    const PromptLoss l = loss_dap_with_gradients(batch_from(fx.training_set(), 10, 2), bank, *fx.enc, Temperature(0.01));
    for (const Matrix& m : l.gradients.specific)
      for (double x : m.data()) CHECK(x == 0.0);
    double mag = 0.0;
    for (double x : l.gradients.agnostic.data()) mag += std::abs(x);
    CHECK(mag > 0.0);
  }

  TEST_CASE("L_dsp gradient matches central differences") {
    const Fixture fx;
    PromptBank bank(2, 2, 2, 5, 16, RngSeed{4}, 0.3);
    const Batch b = batch_from(fx.training_set(), 8, 2);
    const Temperature tau(0.1);
    const PromptLoss l = loss_dsp_with_gradients(b, bank, *fx.enc, tau);
    Matrix& block = bank.specific(1);
    const auto numeric = oracle::central_difference(
        [&](const Vector& flat) {
          const Vector keep = block.data();
          block.data() = flat;
          const double v = loss_dsp(b, bank, *fx.enc, tau);
          block.data() = keep;
          return v;
        },
        block.data());
    CHECK(oracle::relative_error(l.gradients.specific[1].data(), numeric) < 1e-3);
  }

  TEST_CASE("batch errors name the problem") {
    const Fixture fx;
    const PromptBank bank(2, 3, 2, 5, 16, RngSeed{3});
    Batch b = batch_from(fx.training_set(), 4, 2);
    b.domains.pop_back();
    CHECK_THROWS_WITH_AS(loss_dsp(b, bank, *fx.enc, Temperature(0.01)), doctest::Contains("unassigned sample"), Error);
    b = batch_from(fx.training_set(), 4, 2);
    b.domains[0] = 7;
    CHECK_THROWS_WITH_AS(loss_dsp(b, bank, *fx.enc, Temperature(0.01)), doctest::Contains("unassigned sample"), Error);
  }

  TEST_CASE("total loss composition") {
    const Fixture fx;
    const TrainingSet data = fx.training_set();
    TrainConfig cfg = small_config();
    LdpfModel model = initialize_model(cfg, *fx.enc, 5);
    const Batch b = batch_from(data, 8, 2);

    const TotalLoss start = total_loss(b, model, *fx.enc, TrainProgress::at(0, 10), cfg);
    CHECK(start.lambda == 0.0);
    CHECK(start.total == start.dsp);

    const TotalLoss end = total_loss(b, model, *fx.enc, TrainProgress{1.0}, cfg);
    CHECK(end.lambda == doctest::Approx(0.99991).epsilon(1e-5));
    CHECK(end.total == doctest::Approx(end.dsp + end.lambda * (end.dap - end.adv)));

    cfg.ablation.no_adv = true;
    const TotalLoss no_adv = total_loss(b, model, *fx.enc, TrainProgress{0.5}, cfg);
    CHECK(no_adv.total == doctest::Approx(no_adv.dsp + no_adv.lambda * no_adv.dap));
    for (double x : no_adv.extractor.w1.data()) CHECK(x == 0.0);
  }

  TEST_CASE("stage isolation: each stage touches only its own blocks") {
    const Fixture fx;
    const TrainingSet data = fx.training_set();
    const TrainConfig cfg = small_config();
    LdpfModel model = initialize_model(cfg, *fx.enc, 5);
    recluster(model, data, cfg);
    OptimizerState state;
    const Batch b = batch_from(data, 16, 2);
    const std::uint64_t enc_sum = fx.enc->parameter_checksum();

    const auto agn = model.prompts.agnostic_checksum();
    const auto spec = model.prompts.specific_checksum();
    const auto ext = model.extractor.parameter_checksum();
    const auto aux = model.aux.parameter_checksum();
    stage_one_step(model, b, *fx.enc, cfg, 0.01, 0.01, 0.5, state);
    CHECK(model.prompts.agnostic_checksum() == agn);
    CHECK(model.prompts.specific_checksum() != spec);
    CHECK(model.extractor.parameter_checksum() != ext);
    CHECK(model.aux.parameter_checksum() != aux);

    const auto spec2 = model.prompts.specific_checksum();
    const auto ext2 = model.extractor.parameter_checksum();
    const auto aux2 = model.aux.parameter_checksum();
    stage_two_step(model, b, *fx.enc, cfg, 0.01, 0.5, state);
    CHECK(model.prompts.agnostic_checksum() != agn);
    CHECK(model.prompts.specific_checksum() == spec2);
    CHECK(model.extractor.parameter_checksum() == ext2);
    CHECK(model.aux.parameter_checksum() == aux2);
    CHECK(fx.enc->parameter_checksum() == enc_sum);
  }

  TEST_CASE("zero epochs returns the initialized prompts and an empty log") {
    const Fixture fx;
    TrainConfig cfg = small_config();
    cfg.epochs = 0;
    const TrainResult r = train(fx.training_set(), cfg, *fx.enc);
    CHECK(r.log.empty());
    const LdpfModel init = initialize_model(cfg, *fx.enc, 5);
    CHECK(r.model.prompts == init.prompts);
    CHECK(r.model.extractor == init.extractor);
    CHECK(r.model.latent.domain_count() == 2);
  }

  TEST_CASE("training is deterministic and leaves the encoder untouched") {
    const Fixture fx;
    const TrainConfig cfg = small_config();
    const auto before = fx.enc->parameter_checksum();
    const TrainResult a = train(fx.training_set(), cfg, *fx.enc);
    const TrainResult b = train(fx.training_set(), cfg, *fx.enc);
    CHECK(a.model == b.model);
    CHECK(a.log == b.log);
    CHECK(fx.enc->parameter_checksum() == before);
    REQUIRE(a.log.size() == 3);
    CHECK(a.log[0].lambda == 0.0);
    std::size_t total = 0;
    for (std::size_t n : a.log.back().cluster_sizes) total += n;
    CHECK(total == fx.training_set().size());
  }

  TEST_CASE("no_clustering uses the annotated domains every round") {
    const Fixture fx;
    TrainConfig cfg = small_config();
    cfg.ablation.no_clustering = true;
    const TrainingSet data = fx.training_set(true);
    const TrainResult r = train(data, cfg, *fx.enc);
    CHECK(r.model.latent.assignments == data.annotated_domains());
    cfg.n_domains = 3;
    CHECK_THROWS_AS(train(data, cfg, *fx.enc), Error);
  }

  TEST_CASE("the training path cannot read annotations without the ablation switch") {
    const Fixture fx;
    TrainConfig cfg = small_config();
    cfg.ablation.no_clustering = true;
    CHECK_THROWS_AS(train(fx.training_set(false), cfg, *fx.enc), AnnotationAccessError);
  }

  TEST_CASE("degenerate inputs are rejected") {
    const Fixture fx;
    TrainConfig cfg = small_config();
    cfg.n_domains = 1000;
    CHECK_THROWS_WITH_AS(train(fx.training_set(), cfg, *fx.enc), doctest::Contains("degenerate"), Error);
  }

  TEST_CASE("divergence aborts with a named error") {
    const Fixture fx;
    TrainConfig cfg = small_config();
    cfg.optimizer.warmup_epochs = 0;
    cfg.optimizer.latent_learning_rate = 1e150;
    CHECK_THROWS_AS(train(fx.training_set(), cfg, *fx.enc), DivergenceError);
  }

  TEST_CASE("30 epochs on the synthetic data fit the training set") {
    const Fixture fx;
    TrainConfig cfg = small_config();
    cfg.epochs = 30;
    cfg.m1 = 4;
    cfg.m2 = 8;
    const TrainResult r = train(fx.training_set(), cfg, *fx.enc);
    const EvalResult ev =
        evaluate(r.model, *fx.enc, fx.manifest, fx.splits[0].train_indices, FusionConfig{}, Temperature(0.01));
    CHECK(ev.accuracy >= 0.95);
  }
}
