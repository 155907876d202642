#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ldpf/data.hpp"
#include "ldpf/encoders.hpp"
#include "oracles.hpp"

using namespace ldpf;

namespace {

BackboneDescriptor small_descriptor(std::uint64_t seed = 0) {
  BackboneDescriptor d;
  d.image_dim = 24;
  d.embed_dim = 12;
  d.payload_dim = 10;
  d.concept_dims = 5;
  d.seed = seed;
  return d;
}

std::vector<Vector> random_tokens(Rng& rng, std::size_t count, std::size_t e) {
  std::vector<Vector> tokens(count, Vector(e));
  for (Vector& t : tokens)
    for (double& x : t) x = rng.normal(0.0, 0.5);
  return tokens;
}

TokenSequence view(const std::vector<Vector>& tokens) {
  TokenSequence seq;
  for (const Vector& t : tokens) seq.tokens.emplace_back(t);
  return seq;
}

}  // namespace

TEST_SUITE("encoders") {
  TEST_CASE("toy descriptor builds a toy pair with the requested shape") {
    const auto enc = make_encoder_pair(small_descriptor());
    CHECK(enc->feature_dim() == 24);
    CHECK(enc->embed_dim() == 12);
    CHECK(enc->payload_dim() == 10);
    CHECK(enc->vocabulary_size() == 5);
    CHECK(enc->max_context_length() == 77);
  }

  TEST_CASE("image features are unit norm and deterministic") {
    const auto enc = make_toy_encoder(small_descriptor());
    Rng rng(RngSeed{1});
    Vector x(10);
    for (double& v : x) v = rng.normal();
    const FeatureVector a = enc->encode_image(x);
    CHECK(norm(a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a == enc->encode_image(x));
    CHECK_THROWS_AS(enc->encode_image(Vector(3, 0.0)), Error);
  }

  TEST_CASE("zero payload encodes the normalized bias") {
    const auto enc = make_toy_encoder(small_descriptor());
    const auto& w = dynamic_cast<const ProjectionEncoderPair&>(*enc).weights();
    Vector expected(w.image_bias.size());
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = std::tanh(w.image_bias[i]);
    const FeatureVector f = enc->encode_image(Vector(10, 0.0));
    const FeatureVector e = normalized(expected);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == doctest::Approx(e[i]).epsilon(1e-12));
  }

  TEST_CASE("images differing only in style coordinates are distinguishable") {
    SyntheticSpec spec;
    const auto manifest = generate_synthetic(spec);
    BackboneDescriptor desc;
    desc.payload_dim = spec.payload_dim();
    desc.concept_dims = spec.concept_dims;
    const auto enc = make_toy_encoder(desc);
    Rng rng(RngSeed{4});
    for (int trial = 0; trial < 50; ++trial) {
      const Sample& s = manifest.samples[rng.below(manifest.samples.size())];
      Vector other = s.payload;
      const std::size_t from = spec.concept_dims + *s.domain;
      const std::size_t to = spec.concept_dims + (*s.domain + 1) % spec.n_styles;
      std::swap(other[from], other[to]);
      CHECK(cosine_similarity(enc->encode_image(s.payload), enc->encode_image(other)) < 0.99);
    }
  }

  TEST_CASE("text features are unit norm, deterministic and order sensitive") {
    const auto enc = make_toy_encoder(small_descriptor());
    Rng rng(RngSeed{2});
    auto tokens = random_tokens(rng, 4, 12);
    const TextEncoding a = enc->encode_text(view(tokens));
    CHECK(norm(a.feature) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.feature == enc->encode_text(view(tokens)).feature);
    std::swap(tokens[0], tokens[2]);
    CHECK(cosine_similarity(a.feature, enc->encode_text(view(tokens)).feature) < 1.0);
  }

  TEST_CASE("text encoder rejects empty and over-long sequences") {
    const auto enc = make_toy_encoder(small_descriptor());
    CHECK_THROWS_AS(enc->encode_text(TokenSequence{}), Error);
    Rng rng(RngSeed{3});
    const auto tokens = random_tokens(rng, 78, 12);
    CHECK_THROWS_AS(enc->encode_text(view(tokens)), Error);
  }

  TEST_CASE("token gradients match central differences") {
    Rng rng(RngSeed{77});
    for (int config = 0; config < 10; ++config) {
      BackboneDescriptor d = small_descriptor(config);
      d.image_dim = 8 + rng.below(24);
      d.embed_dim = 4 + rng.below(12);
      const auto enc = make_toy_encoder(d);
      auto tokens = random_tokens(rng, 1 + rng.below(10), d.embed_dim);
      Vector g(d.image_dim);
      for (double& x : g) x = rng.normal();
      const TextEncoding base = enc->encode_text(view(tokens));
      const auto analytic = enc->text_backward(view(tokens), base, g);
      REQUIRE(analytic.size() == tokens.size());
      for (std::size_t j = 0; j < tokens.size(); ++j) {
        const auto numeric = oracle::central_difference(
            [&](const Vector& t) {
              auto copy = tokens;
              copy[j] = t;
              return oracle::dot(enc->encode_text(view(copy)).feature, g);
            },
            tokens[j]);
        CHECK(oracle::relative_error(analytic[j], numeric) < 1e-3);
      }
    }
  }

  TEST_CASE("parameter checksum is stable across encoding calls") {
    const auto enc = make_toy_encoder(small_descriptor());
    const auto before = enc->parameter_checksum();
    Rng rng(RngSeed{6});
    const auto tokens = random_tokens(rng, 5, 12);
    for (int i = 0; i < 20; ++i) {
      (void)enc->encode_text(view(tokens));
      (void)enc->encode_image(Vector(10, 0.3));
    }
    CHECK(enc->parameter_checksum() == before);
    CHECK(make_toy_encoder(small_descriptor(1))->parameter_checksum() != before);
  }

  TEST_CASE("external adapter: missing weights explain how to fix it") {
    BackboneDescriptor d = small_descriptor();
    d.kind = "external";
    d.weights_path = "/nonexistent/weights.json";
    CHECK_THROWS_WITH_AS(make_encoder_pair(d), doctest::Contains("missing weights"), Error);
    d.kind = "vit-huge";
    CHECK_THROWS_WITH_AS(make_encoder_pair(d), doctest::Contains("unknown backbone kind"), Error);
  }

  TEST_CASE("external adapter loads exported weights and checks dimensions") {
    const auto toy = make_toy_encoder(small_descriptor());
    const auto& w = dynamic_cast<const ProjectionEncoderPair&>(*toy).weights();
    const std::string path = (std::filesystem::temp_directory_path() / "ldpf_test_weights.json").string();
    save_projection_weights(w, path);

    BackboneDescriptor d = small_descriptor();
    d.kind = "external";
    d.weights_path = path;
    const auto ext = make_encoder_pair(d);
    CHECK(ext->parameter_checksum() == toy->parameter_checksum());
    Rng rng(RngSeed{8});
    for (int i = 0; i < 10; ++i) {
      Vector x(10);
      for (double& v : x) v = rng.normal();
      CHECK(norm(ext->encode_image(x)) == doctest::Approx(1.0).epsilon(1e-4));
    }

    d.image_dim = 25;
    CHECK_THROWS_WITH_AS(make_encoder_pair(d), doctest::Contains("dimension mismatch"), Error);
    d.image_dim = 0;
    d.embed_dim = 0;
    CHECK_NOTHROW(make_encoder_pair(d));

    { std::ofstream(path) << "{\"format\": \"something-else\"}"; }
    d.image_dim = 24;
    d.embed_dim = 12;
    CHECK_THROWS_AS(make_encoder_pair(d), Error);
    { std::ofstream(path) << "not json"; }
    CHECK_THROWS_WITH_AS(make_encoder_pair(d), doctest::Contains("unreadable"), Error);
    std::filesystem::remove(path);
  }
}
