#include <vector>

#include "doctest.h"
#include "recall_oracle.hpp"
#include "rwfn/evaluation.hpp"
#include "rwfn/training.hpp"
#include "test_support.hpp"

using namespace rwfn;

namespace {

// Binary degree depends on the subject's x position and the predicate, so
// forward and reverse scores differ.
class ScriptedScorer final : public TripleScorer {
 public:
  std::size_t class_count() const override { return 2; }
  std::size_t relation_count() const override { return 3; }
  Vector unary_scores(const BoundingBox& box, const SceneAnnotation&) const override {
    return box.rect.x_min < 50 ? Vector{0.9, 0.3} : Vector{0.2, 0.6};
  }
  Vector binary_scores(const BoundingBox& s, const BoundingBox&, const SceneAnnotation&) const override {
    const double x = s.rect.x_min / 200.0;
    return {x, 0.5, 1.0 - x};
  }
};

PredictedTriple prediction(std::uint32_t s, std::uint32_t r, std::uint32_t o, double score,
                           const SceneAnnotation& scene) {
  PredictedTriple p;
  p.subject_box = s;
  p.object_box = o;
  p.predicate = r;
  p.subject_class = *scene.boxes[s].label;
  p.object_class = *scene.boxes[o].label;
  p.score = score;
  p.subject_rect = scene.boxes[s].rect;
  p.object_rect = scene.boxes[o].rect;
  p.union_rect = union_box(p.subject_rect, p.object_rect);
  return p;
}

}  // namespace

TEST_CASE("two boxes and seventy predicates give 140 candidate triples") {
  SceneAnnotation scene;
  scene.width = scene.height = 100;
  scene.boxes = {testing::box(0, 0, 10, 10, 0, 3), testing::box(50, 50, 60, 60, 1, 3)};
  const ConstantScorer scorer(3, 70, 0.5);
  const auto preds = score_triples(scorer, scene, FrequencyPrior::uniform(70), Task::predicate);
  CHECK(preds.size() == 140);
  for (std::size_t i = 1; i < preds.size(); ++i) CHECK_FALSE(ranks_before(preds[i], preds[i - 1]));
  // All tied: the order is predicate, then subject box.
  CHECK(preds[0].predicate == 0);
  CHECK(preds[0].subject_box == 0);
  CHECK(preds[1].predicate == 0);
  CHECK(preds[1].subject_box == 1);
  CHECK(preds[2].predicate == 1);
}

TEST_CASE("the frequency prior scales scores and zero prior removes a predicate") {
  const Dataset ds = testing::tiny_dataset();
  const FrequencyPrior prior = FrequencyPrior::from_scenes(ds.scenes, 2);
  // above twice, below once.
  CHECK(prior.values() == std::vector<double>{1.0, 0.5});
  CHECK_ERROR_KIND(prior(2), ErrorKind::lookup);
  CHECK_ERROR_KIND(FrequencyPrior({1.5}), ErrorKind::invalid_argument);

  const ConstantScorer scorer(2, 2, 0.8);
  const FrequencyPrior zero({0.0, 1.0});
  const auto preds = score_triples(scorer, ds.scenes[0], zero, Task::predicate);
  for (const auto& p : preds) CHECK(p.score == doctest::Approx(p.predicate == 0 ? 0.0 : 0.8));
  CHECK_ERROR_KIND(score_triples(scorer, ds.scenes[0], FrequencyPrior::uniform(3), Task::predicate),
                   ErrorKind::invalid_argument);
}

TEST_CASE("class degrees enter phrase and relationship scores; unlabeled boxes take the argmax") {
  SceneAnnotation scene;
  scene.width = 200;
  scene.height = 100;
  scene.boxes = {testing::box(10, 0, 20, 10, 1, 2), testing::box(100, 0, 120, 10, std::nullopt, 2)};
  const ScriptedScorer scorer;
  const auto prior = FrequencyPrior::uniform(3);
  const auto pred = score_triples(scorer, scene, prior, Task::predicate);
  const auto phrase = score_triples(scorer, scene, prior, Task::phrase);
  auto find = [](const std::vector<PredictedTriple>& v, std::uint32_t s, std::uint32_t r) {
    return *std::find_if(v.begin(), v.end(), [&](const auto& p) { return p.subject_box == s && p.predicate == r; });
  };
  const auto a = find(pred, 0, 0);
  CHECK(a.subject_class == 1);  // kept label
  CHECK(a.object_class == 1);   // argmax of {0.2, 0.6}
  CHECK(a.score == doctest::Approx(10.0 / 200.0));
  const auto b = find(phrase, 0, 0);
  // Labeled box keeps its class but contributes its degree 0.3; the other 0.6.
  CHECK(b.score == doctest::Approx(10.0 / 200.0 * 0.3 * 0.6));
}

TEST_CASE("equivalent predicates average forward and reverse degrees") {
  SceneAnnotation scene;
  scene.width = 200;
  scene.height = 100;
  scene.boxes = {testing::box(20, 0, 30, 10, 0, 2), testing::box(120, 0, 130, 10, 1, 2)};
  const ScriptedScorer scorer;
  const auto prior = FrequencyPrior::uniform(3);
  // Predicate 0 with subject at x: x/200; predicate 2: 1 - x/200.
  const auto preds = score_triples(scorer, scene, prior, Task::predicate, {{0, 2}, {1, 1}});
  for (const auto& p : preds) {
    const double xs = scene.boxes[p.subject_box].rect.x_min / 200.0;
    const double xo = scene.boxes[p.object_box].rect.x_min / 200.0;
    if (p.predicate == 0) CHECK(p.score == doctest::Approx(0.5 * (xs + (1.0 - xo))));
    if (p.predicate == 1) CHECK(p.score == doctest::Approx(0.5));
    if (p.predicate == 2) CHECK(p.score == doctest::Approx(0.5 * ((1.0 - xs) + xo)));
  }
  CHECK_ERROR_KIND(score_triples(scorer, scene, prior, Task::predicate, {{0, 5}}), ErrorKind::invalid_argument);
}

TEST_CASE("recall uses one-to-one matching") {
  const Dataset ds = testing::tiny_dataset();
  const auto& a = ds.scenes[0];
  const auto& b = ds.scenes[1];
  // Image a: both triples predicted, image b: a wrong predicate first.
  const std::vector<std::vector<PredictedTriple>> preds{
      {prediction(0, 0, 1, 0.9, a), prediction(1, 1, 0, 0.8, a), prediction(0, 0, 1, 0.7, a)},
      {prediction(0, 1, 1, 0.9, b), prediction(0, 0, 1, 0.2, b)}};
  CHECK(recall_at_n(preds, ds.scenes, 1, Task::predicate) == doctest::Approx(1.0 / 3.0));
  CHECK(recall_at_n(preds, ds.scenes, 2, Task::predicate) == doctest::Approx(1.0));
  // A duplicate prediction cannot hit the same triple twice.
  const std::vector<std::vector<PredictedTriple>> dup{
      {prediction(0, 0, 1, 0.9, a), prediction(0, 0, 1, 0.9, a)}, {}};
  CHECK(recall_at_n(dup, ds.scenes, 10, Task::predicate) == doctest::Approx(1.0 / 3.0));
  CHECK_ERROR_KIND(recall_at_n(dup, ds.scenes, 0, Task::predicate), ErrorKind::invalid_argument);
  CHECK_ERROR_KIND(recall_at_n({{}}, ds.scenes, 5, Task::predicate), ErrorKind::invalid_argument);
  // No ground truth anywhere.
  SceneAnnotation empty = a;
  empty.triples.clear();
  CHECK(recall_at_n({{prediction(0, 0, 1, 1.0, a)}}, {empty}, 5, Task::predicate) == 0.0);
}

TEST_CASE("maximum matching beats greedy assignment") {
  // Two ground-truth triples with overlapping boxes: the first prediction
  // could match either triple, the second only the first triple.
  SceneAnnotation scene;
  scene.width = scene.height = 100;
  scene.boxes = {testing::box(0, 0, 10, 10, 0, 1), testing::box(20, 0, 30, 10, 0, 1),
                 testing::box(0, 0, 10, 14, 0, 1), testing::box(20, 0, 30, 14, 0, 1)};
  scene.triples = {{0, 0, 1}, {2, 0, 3}};
  PredictedTriple p1 = prediction(0, 0, 1, 0.9, scene);
  PredictedTriple p2 = prediction(0, 0, 1, 0.8, scene);
  p2.subject_rect = {0, 0, 10, 6};
  p2.object_rect = {20, 0, 30, 6};
  // p1 matches both triples, p2 matches only the shorter boxes of triple 0.
  CHECK(triple_matches(p1, scene, scene.triples[1], Task::relationship));
  CHECK_FALSE(triple_matches(p2, scene, scene.triples[1], Task::relationship));
  CHECK(recall_at_n({{p1, p2}}, {scene}, 2, Task::relationship) == doctest::Approx(1.0));
}

TEST_CASE("task overlap rules") {
  const Dataset ds = testing::tiny_dataset();
  const auto& a = ds.scenes[0];
  PredictedTriple p = prediction(0, 0, 1, 1.0, a);
  p.subject_box = 1;  // wrong box index but identical rectangles
  CHECK_FALSE(triple_matches(p, a, a.triples[0], Task::predicate));
  CHECK(triple_matches(p, a, a.triples[0], Task::relationship));
  CHECK(triple_matches(p, a, a.triples[0], Task::phrase));
  p.subject_rect = {10, 5, 30, 12};  // IoU 0.35 with the true subject
  CHECK_FALSE(triple_matches(p, a, a.triples[0], Task::relationship));
  CHECK(triple_matches(p, a, a.triples[0], Task::phrase));
  p.subject_class = 1;
  CHECK_FALSE(triple_matches(p, a, a.triples[0], Task::phrase));
  CHECK(parse_task("phrase") == Task::phrase);
  CHECK(to_string(Task::relationship) == "relationship");
  CHECK_ERROR_KIND(parse_task("detection"), ErrorKind::invalid_argument);
}

TEST_CASE("recall agrees with an exhaustive oracle and is monotone in N") {
  Rng rng(2024);
  for (int i = 0; i < 300; ++i) {
    const auto m = oracle::micro_instance(rng);
    const double got = recall_at_n(m.predictions, m.scenes, m.n, m.task);
    CHECK(got == doctest::Approx(oracle::recall(m.predictions, m.scenes, m.n, m.task)).epsilon(1e-12));
    CHECK(recall_at_n(m.predictions, m.scenes, m.n + 1, m.task) >= got);
  }
}

TEST_CASE("zero-shot recall only counts unseen triple types") {
  const Dataset ds = testing::tiny_dataset();
  const auto& a = ds.scenes[0];
  const std::vector<std::vector<PredictedTriple>> preds{{prediction(0, 0, 1, 0.9, a)}, {}};
  // Unseen: (dog, below, cat) only occurs in image a as triple 1, never hit.
  const std::vector<TripleType> below{{1, 1, 0}};
  CHECK(zero_shot_recall(preds, ds.scenes, below, 10, Task::predicate) == 0.0);
  // (cat, above, dog) occurs once in a (hit) and never in b (dog above dog).
  const std::vector<TripleType> above{{0, 0, 1}};
  CHECK(zero_shot_recall(preds, ds.scenes, above, 10, Task::predicate) == doctest::Approx(1.0));
  CHECK_ERROR_KIND(zero_shot_recall(preds, ds.scenes, {}, 10, Task::predicate), ErrorKind::invalid_argument);
}

TEST_CASE("theory scorer requires a trained theory and matches direct grounding scores") {
  const Dataset ds = testing::tiny_dataset();
  const Signature sig = Signature::from_dataset(ds);
  ModelConfig model;
  model.hidden_unary = 4;
  model.hidden_binary = 6;
  GroundedTheory t = GroundedTheory::create(sig, FeatureSchema{2}, model, 1);
  CHECK_ERROR_KIND(TheoryScorer{t}, ErrorKind::state);
  Rng rng(3);
  t.scatter_params(sample_uniform(rng, t.learnable_size(), -1, 1));
  t.mark_trained();
  const TheoryScorer scorer(t);
  const auto& scene = ds.scenes[1];
  const Vector u = scorer.unary_scores(scene.boxes[0], scene);
  CHECK(u[1] == doctest::Approx(t.score(1, unary_features(scene.boxes[0], scene))));
  const Vector bsc = scorer.binary_scores(scene.boxes[2], scene.boxes[0], scene);
  CHECK(bsc[1] == doctest::Approx(t.score(3, pair_features(scene.boxes[2], scene.boxes[0], scene))));
}
