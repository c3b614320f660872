#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "rwfn/training.hpp"
#include "test_support.hpp"

using namespace rwfn;

namespace {

struct Fixture {
  Dataset dataset = testing::tiny_dataset();
  Signature signature = Signature::from_dataset(dataset);
  KnowledgeBase kb;
  FeatureProvider features{signature, dataset.scenes};

  explicit Fixture(KbMode mode = KbMode::prior) {
    Rng rng(2);
    const auto examples = build_examples(dataset.scenes, signature, 1.0, rng);
    const auto constraints =
        parse_constraints("forall x,y: above(x,y) -> below(y,x)\nforall x: cat(x) | dog(x)", signature);
    kb = assemble_kb(signature, examples, constraints, mode);
  }

  GroundedTheory theory(ModelKind kind, std::uint64_t seed = 3) const {
    ModelConfig model;
    model.kind = kind;
    model.hidden_unary = 16;
    model.hidden_binary = 24;
    model.slices = 2;
    return GroundedTheory::create(signature, FeatureSchema{dataset.classes.size()}, model, seed);
  }
};

TrainingConfig quick_config(std::size_t epochs) {
  TrainingConfig cfg;
  cfg.epochs = epochs;
  cfg.ftrl.learning_rate = 0.5;
  cfg.log_every = 10;
  return cfg;
}

}  // namespace

TEST_CASE("ftrl two-step trace matches a hand computation") {
  FtrlConfig cfg;  // alpha = 1, beta = 1, l1 = l2 = 0
  FtrlState state(1);
  Vector w{0.0};
  ftrl_step(state, w, Vector{2.0}, cfg);
  // n = 4, sigma = 2, z = 2, w = -2 / (1 + 2)
  CHECK(state.n[0] == 4.0);
  CHECK(state.z[0] == 2.0);
  CHECK(w[0] == doctest::Approx(-2.0 / 3.0));
  ftrl_step(state, w, Vector{-1.0}, cfg);
  // n = 5, sigma = sqrt5 - 2, z = 2 - 1 + (sqrt5 - 2) * 2/3, w = -z / (1 + sqrt5)
  CHECK(state.n[0] == 5.0);
  CHECK(state.z[0] == doctest::Approx(1.157379).epsilon(1e-6));
  CHECK(w[0] == doctest::Approx(-0.357649).epsilon(1e-5));
}

TEST_CASE("ftrl l1 and l2 regularisation") {
  FtrlConfig cfg;
  cfg.l1 = 1e6;
  FtrlState state(3);
  Vector w{0.5, -0.2, 0.0};
  for (int i = 0; i < 5; ++i) ftrl_step(state, w, Vector{3.0, -7.0, 1.0}, cfg);
  CHECK(w == Vector{0.0, 0.0, 0.0});

  FtrlConfig l1;
  l1.l1 = 0.5;
  l1.l2 = 1.0;
  FtrlState s2(1);
  Vector w2{0.0};
  ftrl_step(s2, w2, Vector{2.0}, l1);
  // z = 2, w = -(2 - 0.5) / ((1 + 2) + 1)
  CHECK(w2[0] == doctest::Approx(-1.5 / 4.0));
  CHECK_ERROR_KIND(ftrl_step(s2, w2, Vector{1.0, 2.0}, l1), ErrorKind::invalid_argument);
}

TEST_CASE("rmsprop trace matches a hand computation") {
  RmspropConfig cfg{0.1, 0.9, 1e-8};
  RmspropState state(1);
  Vector w{0.0};
  rmsprop_step(state, w, Vector{2.0}, cfg);
  CHECK(state.v[0] == doctest::Approx(0.4));
  CHECK(w[0] == doctest::Approx(0.1 * 2.0 / std::sqrt(0.4 + 1e-8)));
  rmsprop_step(state, w, Vector{2.0}, cfg);
  CHECK(state.v[0] == doctest::Approx(0.76));
  CHECK(w[0] == doctest::Approx(0.316228 + 0.229416).epsilon(1e-5));
  RmspropConfig bad = cfg;
  bad.decay = 1.0;
  CHECK_ERROR_KIND(rmsprop_step(state, w, Vector{1.0}, bad), ErrorKind::invalid_argument);
}

TEST_CASE("training config validation") {
  TrainingConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_ERROR_KIND(cfg.validate(), ErrorKind::invalid_argument);
  cfg = {};
  cfg.lambda = -1;
  CHECK_ERROR_KIND(cfg.validate(), ErrorKind::invalid_argument);
  cfg = {};
  cfg.ftrl.lr_power = -0.7;
  CHECK_ERROR_KIND(cfg.validate(), ErrorKind::invalid_argument);
  CHECK(parse_optimizer("rmsprop") == OptimizerKind::rmsprop);
  CHECK(to_string(OptimizerKind::ftrl) == "ftrl");
  CHECK_ERROR_KIND(parse_optimizer("adam"), ErrorKind::invalid_argument);
}

TEST_CASE("feature provider resolves constants and rejects bad atoms") {
  const Fixture fx;
  const Vector u = fx.features.input(Atom{0, {2}});
  CHECK(u == unary_features(fx.dataset.scenes[1].boxes[0], fx.dataset.scenes[1]));
  const Vector b = fx.features.input(Atom{2, {3, 4}});
  CHECK(b == pair_features(fx.dataset.scenes[1].boxes[1], fx.dataset.scenes[1].boxes[2],
                           fx.dataset.scenes[1]));
  CHECK_ERROR_KIND(fx.features.input(Atom{2, {0, 2}}), ErrorKind::lookup);
  CHECK_ERROR_KIND(fx.features.input(Atom{0, {9}}), ErrorKind::lookup);
  CHECK_ERROR_KIND(fx.features.input(Atom{2, {0}}), ErrorKind::lookup);
}

TEST_CASE("objective is the generalized mean of formula degrees minus the penalty") {
  const Fixture fx;
  GroundedTheory t = fx.theory(ModelKind::rwfn_ws);
  Rng rng(8);
  const Vector theta = sample_uniform(rng, t.learnable_size(), -0.5, 0.5);
  TrainingConfig cfg;
  cfg.lambda = 1e-3;
  const auto formulas = fx.kb.formulas();
  const Objective obj(t, formulas, fx.features, cfg);
  CHECK(obj.formula_count() == formulas.size());
  const auto degrees = obj.formula_degrees(theta);
  // Independent harmonic mean and penalty.
  double inv = 0;
  for (double d : degrees) inv += 1.0 / std::max(d, kDefaultMeanClamp);
  const double harmonic = static_cast<double>(degrees.size()) / inv;
  const auto value = obj.evaluate(theta);
  CHECK(value.satisfiability == doctest::Approx(harmonic).epsilon(1e-12));
  CHECK(value.objective == doctest::Approx(harmonic - 1e-3 * squared_norm(theta)).epsilon(1e-12));

  // The free functions agree with the compiled objective.
  t.scatter_params(theta);
  CHECK(satisfiability(t, formulas, fx.features, cfg).value() == doctest::Approx(harmonic));
  CHECK(objective(t, formulas, fx.features, cfg) == doctest::Approx(value.objective));
  CHECK_ERROR_KIND(satisfiability(t, {}, fx.features, cfg), ErrorKind::invalid_argument);

  // Each degree matches a direct evaluation through the groundings.
  AtomDegrees atoms;
  for (const auto& f : formulas) {
    f.for_each_atom([&](const Atom& a) {
      atoms.emplace(a, TruthDegree(t.score(a.predicate, fx.features.input(a))));
    });
  }
  for (std::size_t i = 0; i < formulas.size(); ++i) {
    CHECK(degrees[i] == doctest::Approx(eval_formula(formulas[i], atoms).value()).epsilon(1e-12));
  }
}

TEST_CASE("harmonic mean of two formulas at 0.2 and 0.8 is 0.32") {
  // Two example atoms whose groundings are pinned through the bias of a
  // one-slice NTN with zero weights: sigma(u * tanh(b)).
  const Fixture fx;
  ModelConfig model;
  model.kind = ModelKind::ntn;
  model.slices = 1;
  GroundedTheory t = GroundedTheory::create(fx.signature, FeatureSchema{2}, model, 1);
  Vector theta(t.learnable_size(), 0.0);
  auto set_degree = [&](PredicateId id, double y) {
    const std::size_t at = t.param_offset(id);
    const std::size_t size = params(t.grounding(id)).size();
    theta[at] = std::log(y / (1 - y)) / std::tanh(1.0);  // u
    theta[at + size - 1] = 1.0;                           // b
  };
  set_degree(0, 0.2);
  set_degree(1, 0.8);
  const std::vector<Formula> formulas{Formula::make_atom(Atom{0, {0}}), Formula::make_atom(Atom{1, {0}})};
  TrainingConfig cfg;
  cfg.lambda = 0;
  const Objective obj(t, formulas, fx.features, cfg);
  CHECK(obj.evaluate(theta).satisfiability == doctest::Approx(0.32).epsilon(1e-12));
}

TEST_CASE("objective gradients match finite differences") {
  const Fixture fx;
  const auto formulas = fx.kb.formulas();
  for (ModelKind kind : {ModelKind::rwfn_ws, ModelKind::rwfn, ModelKind::ntn}) {
    const GroundedTheory t = fx.theory(kind);
    for (int p : {-1, 0, 1}) {
      TrainingConfig cfg;
      cfg.p = p;
      cfg.lambda = 1e-2;
      const Objective obj(t, formulas, fx.features, cfg);
      Rng rng(static_cast<std::uint64_t>(p + 10));
      Vector theta = t.gather_params();
      const double scale = kind == ModelKind::ntn ? 0.05 : 0.3;
      for (auto& x : theta) x += scale * rng.normal();
      Vector grad(theta.size());
      obj.evaluate(theta, grad);
      const ScalarFunction f = [&](std::span<const double> th) { return obj.evaluate(th).objective; };
      CHECK(grad_check(f, grad, theta) < 1e-4);
    }
  }
}

TEST_CASE("minibatch evaluation restricts the mean to the selected formulas") {
  const Fixture fx;
  const GroundedTheory t = fx.theory(ModelKind::rwfn_ws);
  const auto formulas = fx.kb.formulas();
  TrainingConfig cfg;
  cfg.lambda = 0;
  const Objective full(t, formulas, fx.features, cfg);
  const std::vector<Formula> subset{formulas[1], formulas[4]};
  const Objective part(t, subset, fx.features, cfg);
  Rng rng(1);
  const Vector theta = sample_uniform(rng, t.learnable_size(), -1, 1);
  const std::vector<std::uint32_t> batch{1, 4};
  Vector g1(theta.size()), g2(theta.size());
  const auto a = full.evaluate(theta, g1, batch);
  const auto b = part.evaluate(theta, g2);
  CHECK(a.satisfiability == doctest::Approx(b.satisfiability).epsilon(1e-14));
  for (std::size_t i = 0; i < theta.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));
}

TEST_CASE("training improves satisfiability and leaves encoders frozen") {
  const Fixture fx;
  for (OptimizerKind opt : {OptimizerKind::ftrl, OptimizerKind::rmsprop}) {
    GroundedTheory t = fx.theory(ModelKind::rwfn_ws);
    const auto encoders = t.distinct_encoders();
    std::vector<RandomEncoder> before;
    for (const auto& e : encoders) before.push_back(*e);
    TrainingConfig cfg = quick_config(300);
    cfg.optimizer = opt;
    cfg.rmsprop.learning_rate = 0.05;
    std::vector<TraceRecord> seen;
    const TrainingReport r = train(t, fx.kb, fx.features, cfg, [&](const TraceRecord& x) { seen.push_back(x); });
    CHECK(r.epochs_run == 300);
    // beta = 0: 26 examples at 0.5 and 13 ground constraints at 1 -> 39 / (52 + 13)
    CHECK(r.initial_satisfiability == doctest::Approx(0.6));
    CHECK(r.final_satisfiability > 0.8);
    CHECK(t.trained());
    CHECK(seen == r.trace);
    CHECK(r.trace.front().epoch == 0);
    CHECK(r.trace.back().epoch == 300);
    CHECK(r.trace.size() == 31);
    for (std::size_t i = 0; i < encoders.size(); ++i) CHECK(*encoders[i] == before[i]);
    CHECK(satisfiability(t, fx.kb.formulas(), fx.features, cfg).value() ==
          doctest::Approx(r.final_satisfiability));
  }
}

TEST_CASE("ntn training moves every parameter") {
  const Fixture fx;
  GroundedTheory t = fx.theory(ModelKind::ntn);
  const Vector start = t.gather_params();
  const TrainingReport r = train(t, fx.kb, fx.features, quick_config(100));
  CHECK(r.final_satisfiability > r.initial_satisfiability);
  const Vector end = t.gather_params();
  std::size_t moved = 0;
  for (std::size_t i = 0; i < end.size(); ++i) moved += end[i] != start[i] ? 1 : 0;
  CHECK(moved > end.size() / 2);
}

TEST_CASE("training is deterministic for a fixed seed, including minibatches") {
  const Fixture fx;
  TrainingConfig cfg = quick_config(60);
  cfg.batch_size = 5;
  cfg.seed = 12;
  GroundedTheory a = fx.theory(ModelKind::rwfn_ws);
  GroundedTheory b = fx.theory(ModelKind::rwfn_ws);
  const auto ra = train(a, fx.kb, fx.features, cfg);
  const auto rb = train(b, fx.kb, fx.features, cfg);
  CHECK(ra.trace == rb.trace);
  CHECK(a.gather_params() == b.gather_params());
  CHECK(serialize_trace(ra.trace) == serialize_trace(rb.trace));

  cfg.seed = 13;
  GroundedTheory c = fx.theory(ModelKind::rwfn_ws);
  train(c, fx.kb, fx.features, cfg);
  CHECK(c.gather_params() != a.gather_params());
}

TEST_CASE("training rejects bad input") {
  const Fixture fx;
  GroundedTheory t = fx.theory(ModelKind::rwfn_ws);
  CHECK_ERROR_KIND(train(t, fx.kb, fx.features, quick_config(0)), ErrorKind::invalid_argument);
  KnowledgeBase empty = fx.kb;
  empty.examples.clear();
  empty.ground_constraints.clear();
  CHECK_ERROR_KIND(train(t, empty, fx.features, quick_config(5)), ErrorKind::invalid_argument);
  const Signature other(std::vector<std::string>{"x", "y"}, std::vector<std::string>{"r", "s"});
  ModelConfig model;
  model.hidden_unary = 4;
  model.hidden_binary = 4;
  GroundedTheory mismatched = GroundedTheory::create(other, FeatureSchema{2}, model, 1);
  CHECK_ERROR_KIND(train(mismatched, fx.kb, fx.features, quick_config(5)), ErrorKind::compatibility);
  CHECK_FALSE(t.trained());
}

TEST_CASE("a diverging run aborts with the last finite parameters") {
  const Fixture fx;
  GroundedTheory t = fx.theory(ModelKind::ntn);
  TrainingConfig cfg = quick_config(50);
  cfg.lambda = 1e300;
  cfg.optimizer = OptimizerKind::rmsprop;
  cfg.rmsprop.learning_rate = 1e200;
  try {
    train(t, fx.kb, fx.features, cfg);
    FAIL("expected the run to abort");
  } catch (const TrainingAborted& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK_FALSE(e.report().trace.empty());
    for (double x : t.gather_params()) CHECK(std::isfinite(x));
    CHECK_FALSE(t.trained());
  }
}

TEST_CASE("trace serialisation writes one JSON object per line") {
  const std::vector<TraceRecord> trace{{0, 0.25, 0.5}, {10, 0.5, 0.75}};
  const std::string text = serialize_trace(trace);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.find("\"epoch\":10") != std::string::npos);
  CHECK(text.find("\"satisfiability\":0.75") != std::string::npos);
}
