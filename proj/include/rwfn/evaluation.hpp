#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rwfn/groundings.hpp"
#include "rwfn/numeric.hpp"
#include "rwfn/scene_data.hpp"

namespace rwfn {

enum class Task { phrase, relationship, predicate };

std::string to_string(Task task);
Task parse_task(const std::string& name);

struct PredictedTriple {
  std::uint32_t subject_box = 0;
  std::uint32_t object_box = 0;
  std::uint32_t subject_class = 0;
  std::uint32_t predicate = 0;
  std::uint32_t object_class = 0;
  double score = 0.0;
  Rect subject_rect;
  Rect object_rect;
  // Tight cover of both boxes.
  Rect union_rect;
};

// Ranking order: score descending, then predicate, subject box, object box ascending.
bool ranks_before(const PredictedTriple& a, const PredictedTriple& b);
void sort_predictions(std::vector<PredictedTriple>& predictions);

// Per-predicate occurrence counts in a training set, divided by the largest count.
class FrequencyPrior {
 public:
  explicit FrequencyPrior(std::vector<double> normalized);

  static FrequencyPrior from_scenes(const std::vector<SceneAnnotation>& scenes,
                                    std::size_t predicate_count);
  static FrequencyPrior uniform(std::size_t predicate_count);

  std::size_t size() const { return values_.size(); }
  double operator()(std::uint32_t predicate) const;
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

// Source of unary and binary truth degrees for a box or an ordered box pair.
class TripleScorer {
 public:
  virtual ~TripleScorer() = default;
  virtual std::size_t class_count() const = 0;
  virtual std::size_t relation_count() const = 0;
  // One degree per class.
  virtual Vector unary_scores(const BoundingBox& box, const SceneAnnotation& scene) const = 0;
  // One degree per binary predicate.
  virtual Vector binary_scores(const BoundingBox& subject, const BoundingBox& object,
                               const SceneAnnotation& scene) const = 0;
};

// Scores with a trained theory; a shared encoder is evaluated once per input.
class TheoryScorer final : public TripleScorer {
 public:
  // Throws a state error unless the theory has been trained.
  explicit TheoryScorer(const GroundedTheory& theory);

  std::size_t class_count() const override;
  std::size_t relation_count() const override;
  Vector unary_scores(const BoundingBox& box, const SceneAnnotation& scene) const override;
  Vector binary_scores(const BoundingBox& subject, const BoundingBox& object,
                       const SceneAnnotation& scene) const override;

 private:
  Vector scores(std::size_t first, std::size_t count, std::span<const double> input) const;

  const GroundedTheory& theory_;
};

// Every grounding replaced by a constant degree.
class ConstantScorer final : public TripleScorer {
 public:
  ConstantScorer(std::size_t classes, std::size_t relations, double value);

  std::size_t class_count() const override { return classes_; }
  std::size_t relation_count() const override { return relations_; }
  Vector unary_scores(const BoundingBox&, const SceneAnnotation&) const override;
  Vector binary_scores(const BoundingBox&, const BoundingBox&,
                       const SceneAnnotation&) const override;

 private:
  std::size_t classes_;
  std::size_t relations_;
  double value_;
};

// Pairs (r, s) of binary predicates with r(x, y) equivalent to s(y, x); a
// symmetric predicate is paired with itself.
using Equivalences = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

// Scores every ordered pair of distinct boxes with every binary predicate,
// multiplied by the prior. Annotated boxes keep their label; other boxes take
// the class with the highest unary degree. For phrase and relationship tasks
// the subject and object class degrees are multiplied in as well. Returned in
// ranking order.
std::vector<PredictedTriple> score_triples(const TripleScorer& scorer, const SceneAnnotation& scene,
                                           const FrequencyPrior& prior, Task task,
                                           const Equivalences& equivalences = {});

// Fraction of ground-truth triples hit by the top-n predictions of their
// image, pooled over images. A prediction hits a ground-truth triple when the
// labels agree and the task's overlap test passes (predicate: same boxes;
// phrase: union boxes IoU >= 0.5; relationship: both boxes IoU >= 0.5). Each
// prediction and each ground-truth triple is used at most once; the largest
// such one-to-one assignment is counted.
double recall_at_n(const std::vector<std::vector<PredictedTriple>>& predictions,
                   const std::vector<SceneAnnotation>& ground_truth, int n, Task task);

// recall_at_n restricted to ground-truth triples whose type is in unseen.
double zero_shot_recall(const std::vector<std::vector<PredictedTriple>>& predictions,
                        const std::vector<SceneAnnotation>& ground_truth,
                        const std::vector<TripleType>& unseen, int n, Task task);

// Whether prediction p matches ground-truth triple t of scene under task.
bool triple_matches(const PredictedTriple& p, const SceneAnnotation& scene, const Triple& t,
                    Task task);

}  // namespace rwfn
