#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "rwfn/groundings.hpp"
#include "test_support.hpp"

using namespace rwfn;

namespace {

Signature small_signature(std::size_t unary, std::size_t binary) {
  std::vector<std::string> u, b;
  for (std::size_t i = 0; i < unary; ++i) u.push_back("c" + std::to_string(i));
  for (std::size_t i = 0; i < binary; ++i) b.push_back("r" + std::to_string(i));
  return Signature(u, b);
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("rwfn score with mn = 2 and B = 2 matches a hand computation") {
  auto encoder = std::make_shared<const RandomEncoder>(2, 2, 1, 21);
  RwfnGrounding g(encoder, 1);
  CHECK(g.params().size() == 4);
  // Fresh groundings start at beta = 0, i.e. score 0.5 everywhere.
  CHECK(g.score(Vector{0.3, 0.7}) == 0.5);

  const Vector beta{0.5, -1.0, 2.0, 0.25};
  std::copy(beta.begin(), beta.end(), g.params().begin());
  const Vector v{0.3, 0.7};

  // Insect half from the support lists, Fourier half from the raw weights.
  const auto& ins = encoder->insect();
  const double s0 = v[ins.support(0)[0]];
  const double s1 = v[ins.support(1)[0]];
  const double mean = (s0 + s1) / 2.0;
  const auto& f = encoder->fourier();
  double h[4];
  h[0] = std::tanh(std::max(0.0, s0 - mean));
  h[1] = std::tanh(std::max(0.0, s1 - mean));
  for (std::size_t j = 0; j < 2; ++j) {
    const double arg = f.weights()(0, j) * v[0] + f.weights()(1, j) * v[1] + f.phases()[j];
    h[2 + j] = std::tanh(std::cos(arg));  // sqrt(2 / B) = 1 for B = 2
  }
  double z = 0;
  for (std::size_t i = 0; i < 4; ++i) z += beta[i] * h[i];
  CHECK(g.score(v) == doctest::Approx(logistic(z)).epsilon(1e-12));
  CHECK_ERROR_KIND(g.score(Vector{1.0}), ErrorKind::invalid_argument);
}

TEST_CASE("ntn score with k = 1 and mn = 2 matches a hand computation") {
  NtnGrounding g(2, 1, 2);
  CHECK(g.params().size() == 1 + 4 + 2 + 1);
  g.u()[0] = 2.0;
  const double w[] = {1.0, 0.0, 0.0, -1.0};
  std::copy(std::begin(w), std::end(w), g.tensor_slice(0).begin());
  g.linear()[0] = 0.5;
  g.linear()[1] = 0.5;
  g.bias()[0] = 0.1;
  // v = [1, 2]: v^T W v = 1 - 4 = -3, V v = 1.5, s = -1.4
  const double expected = logistic(2.0 * std::tanh(-1.4));
  CHECK(g.score(Vector{1.0, 2.0}) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(g.score(Vector{1.0, 2.0}) == doctest::Approx(0.14548).epsilon(1e-4));
}

TEST_CASE("ntn gradient matches finite differences") {
  Rng rng(3);
  const NtnGrounding g = NtnGrounding::random(rng, 4, 3, 2);
  const Vector v{0.3, -0.2, 0.9, 0.1};
  const Vector theta(g.params().begin(), g.params().end());
  Vector grad(theta.size());
  NtnGrounding::forward(theta, 4, 3, v, grad);
  const ScalarFunction f = [&](std::span<const double> p) { return NtnGrounding::forward(p, 4, 3, v); };
  CHECK(grad_check(f, grad, theta) < 1e-6);
}

TEST_CASE("rwfn gradient matches finite differences") {
  const RandomEncoder enc(5, 6, 3, 8);
  const Vector h = enc.encode(Vector{0.1, 0.2, -0.3, 0.4, 0.0});
  Rng rng(4);
  const Vector beta = sample_uniform(rng, h.size(), -1.0, 1.0);
  Vector grad(beta.size());
  RwfnGrounding::score_encoded(beta, h, grad);
  const ScalarFunction f = [&](std::span<const double> b) { return RwfnGrounding::score_encoded(b, h); };
  CHECK(grad_check(f, grad, beta) < 1e-7);
}

TEST_CASE("parameter counts follow the closed forms") {
  CHECK(ntn_param_counts(105, 5) == ParamCounts{55660, 55660});
  CHECK(rwfn_param_counts(105, 500) == ParamCounts{106500, 1000});
  const GroundingShape ws{ModelKind::rwfn, 105, 500, 100};
  CHECK(theory_space(std::span(&ws, 1), true) == 205500);
  CHECK(theory_space(std::span(&ws, 1), false) == 106500 * 100);
  const GroundingShape ntn{ModelKind::ntn, 105, 5, 100};
  CHECK(theory_space(std::span(&ntn, 1), false) == 5566000);
  CHECK_ERROR_KIND(ntn_param_counts(0, 5), ErrorKind::invalid_argument);
  CHECK_ERROR_KIND(rwfn_param_counts(3, 0), ErrorKind::invalid_argument);
}

TEST_CASE("weight sharing reuses one encoder per arity") {
  const Signature sig = small_signature(3, 2);
  const FeatureSchema schema{3};
  ModelConfig model;
  model.hidden_unary = 6;
  model.hidden_binary = 10;

  model.kind = ModelKind::rwfn_ws;
  const GroundedTheory shared = GroundedTheory::create(sig, schema, model, 1);
  CHECK(shared.distinct_encoders().size() == 2);
  CHECK(&std::get<RwfnGrounding>(shared.grounding(0)).encoder() ==
        &std::get<RwfnGrounding>(shared.grounding(2)).encoder());
  CHECK(shared.learnable_size() == 3 * 12 + 2 * 20);
  // (2 mn B + B) per arity plus 2B per predicate.
  const std::size_t unary_space = 2 * 8 * 6 + 6 + 3 * 12;
  const std::size_t binary_space = 2 * 24 * 10 + 10 + 2 * 20;
  CHECK(theory_space(shared, true) == unary_space + binary_space);

  model.kind = ModelKind::rwfn;
  const GroundedTheory own = GroundedTheory::create(sig, schema, model, 1);
  CHECK(own.distinct_encoders().size() == 5);
  CHECK(theory_space(own, false) == 3 * (2 * 8 + 3) * 6 + 2 * (2 * 24 + 3) * 10);

  model.kind = ModelKind::ntn;
  model.slices = 2;
  const GroundedTheory ntn = GroundedTheory::create(sig, schema, model, 1);
  CHECK(ntn.distinct_encoders().empty());
  CHECK(ntn.learnable_size() == 3 * (64 + 8 + 2) * 2 + 2 * (576 + 24 + 2) * 2);
  CHECK(ntn.param_offset(3) == 3 * (64 + 8 + 2) * 2);
}

TEST_CASE("fan_in is capped at the input dimension") {
  const Signature sig = small_signature(1, 0);
  ModelConfig model;
  model.kind = ModelKind::rwfn;
  model.hidden_unary = 4;
  model.fan_in = 50;
  const GroundedTheory t = GroundedTheory::create(sig, FeatureSchema{1}, model, 2);
  CHECK(std::get<RwfnGrounding>(t.grounding(0)).encoder().fan_in() == 6);
}

TEST_CASE("gather and scatter round trip and leave encoders untouched") {
  const Signature sig = small_signature(2, 1);
  ModelConfig model;
  model.hidden_unary = 3;
  model.hidden_binary = 4;
  GroundedTheory t = GroundedTheory::create(sig, FeatureSchema{2}, model, 5);
  const RandomEncoder before = std::get<RwfnGrounding>(t.grounding(0)).encoder();
  Vector theta(t.learnable_size());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = 0.01 * static_cast<double>(i);
  t.scatter_params(theta);
  CHECK(t.gather_params() == theta);
  CHECK(std::get<RwfnGrounding>(t.grounding(0)).encoder() == before);
  CHECK_ERROR_KIND(t.scatter_params(Vector{1.0}), ErrorKind::invalid_argument);
}

TEST_CASE("checkpoints round trip for every model kind") {
  const Signature sig = small_signature(2, 2);
  const FeatureSchema schema{2};
  const Vector v1{1, 0, 0.1, 0.2, 0.5, 0.6, 0.12};
  for (ModelKind kind : {ModelKind::rwfn, ModelKind::rwfn_ws, ModelKind::ntn}) {
    ModelConfig model;
    model.kind = kind;
    model.hidden_unary = 5;
    model.hidden_binary = 7;
    model.slices = 2;
    GroundedTheory t = GroundedTheory::create(sig, schema, model, 9);
    Rng rng(1);
    t.scatter_params(sample_uniform(rng, t.learnable_size(), -1.0, 1.0));
    t.set_config_hash("abc123");
    t.mark_trained();
    const std::string text = serialize_checkpoint(t);
    const GroundedTheory back = parse_checkpoint(text);
    CHECK(back.gather_params() == t.gather_params());
    CHECK(back.trained());
    CHECK(back.config_hash() == "abc123");
    CHECK(back.model().kind == kind);
    CHECK(back.distinct_encoders().size() == t.distinct_encoders().size());
    CHECK(back.score(1, v1) == t.score(1, v1));
    CHECK(serialize_checkpoint(back) == text);
  }
}

TEST_CASE("checkpoint files on disk and malformed input") {
  const Signature sig = small_signature(1, 1);
  ModelConfig model;
  model.hidden_unary = 2;
  model.hidden_binary = 2;
  const GroundedTheory t = GroundedTheory::create(sig, FeatureSchema{1}, model, 4);
  const auto path = std::filesystem::temp_directory_path() / "rwfn_test_checkpoint.json";
  save_checkpoint(t, path);
  CHECK(load_checkpoint(path).gather_params() == t.gather_params());
  std::filesystem::remove(path);
  CHECK_ERROR_KIND(load_checkpoint(path), ErrorKind::io);
  CHECK_ERROR_KIND(parse_checkpoint("{"), ErrorKind::parse);
  CHECK_ERROR_KIND(parse_checkpoint(R"({"format":"other","version":1})"), ErrorKind::parse);
  std::string text = serialize_checkpoint(t);
  const auto at = text.find("\"hidden_unary\"");
  REQUIRE(at != std::string::npos);
  text.erase(at, text.find(',', at) - at + 1);
  CHECK_ERROR_KIND(parse_checkpoint(text), ErrorKind::parse);
}
