#include "rwfn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "rwfn/error.hpp"

namespace rwfn {

std::string to_string(Task task) {
  switch (task) {
    case Task::phrase: return "phrase";
    case Task::relationship: return "relationship";
    case Task::predicate: return "predicate";
  }
  return "unknown";
}

Task parse_task(const std::string& name) {
  if (name == "phrase") return Task::phrase;
  if (name == "relationship") return Task::relationship;
  if (name == "predicate") return Task::predicate;
  fail(ErrorKind::invalid_argument,
       "unknown task '" + name + "' (expected phrase, relationship or predicate)");
}

bool ranks_before(const PredictedTriple& a, const PredictedTriple& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.predicate != b.predicate) return a.predicate < b.predicate;
  if (a.subject_box != b.subject_box) return a.subject_box < b.subject_box;
  return a.object_box < b.object_box;
}

void sort_predictions(std::vector<PredictedTriple>& predictions) {
  std::stable_sort(predictions.begin(), predictions.end(), ranks_before);
}

FrequencyPrior::FrequencyPrior(std::vector<double> normalized) : values_(std::move(normalized)) {
  for (double v : values_) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorKind::invalid_argument,
            "frequency prior values must lie in [0, 1]");
  }
}

FrequencyPrior FrequencyPrior::from_scenes(const std::vector<SceneAnnotation>& scenes,
                                           std::size_t predicate_count) {
  std::vector<double> counts(predicate_count, 0.0);
  for (const auto& scene : scenes) {
    for (const auto& t : scene.triples) {
      require(t.predicate < predicate_count, ErrorKind::schema,
              "triple predicate " + std::to_string(t.predicate) + " outside the vocabulary");
      counts[t.predicate] += 1.0;
    }
  }
  const double top = counts.empty() ? 0.0 : *std::max_element(counts.begin(), counts.end());
  if (top > 0.0) {
    for (auto& c : counts) c /= top;
  }
  return FrequencyPrior(std::move(counts));
}

FrequencyPrior FrequencyPrior::uniform(std::size_t predicate_count) {
  return FrequencyPrior(std::vector<double>(predicate_count, 1.0));
}

double FrequencyPrior::operator()(std::uint32_t predicate) const {
  require(predicate < values_.size(), ErrorKind::lookup,
          "no prior for predicate " + std::to_string(predicate));
  return values_[predicate];
}

TheoryScorer::TheoryScorer(const GroundedTheory& theory) : theory_(theory) {
  require(theory.trained(), ErrorKind::state, "cannot score with an untrained theory");
}

std::size_t TheoryScorer::class_count() const { return theory_.signature().unary_count(); }

std::size_t TheoryScorer::relation_count() const { return theory_.signature().binary_count(); }

Vector TheoryScorer::scores(std::size_t first, std::size_t count,
                            std::span<const double> input) const {
  std::map<const RandomEncoder*, Vector> encoded;
  Vector out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto id = static_cast<PredicateId>(first + i);
    const Grounding& g = theory_.grounding(id);
    if (const auto* rwfn = std::get_if<RwfnGrounding>(&g)) {
      auto it = encoded.find(&rwfn->encoder());
      if (it == encoded.end()) {
        it = encoded.emplace(&rwfn->encoder(), rwfn->encoder().encode(input)).first;
      }
      out[i] = RwfnGrounding::score_encoded(rwfn->params(), it->second);
    } else {
      out[i] = score(g, input);
    }
  }
  return out;
}

Vector TheoryScorer::unary_scores(const BoundingBox& box, const SceneAnnotation& scene) const {
  return scores(0, class_count(), unary_features(box, scene));
}

Vector TheoryScorer::binary_scores(const BoundingBox& subject, const BoundingBox& object,
                                   const SceneAnnotation& scene) const {
  return scores(class_count(), relation_count(), pair_features(subject, object, scene));
}

ConstantScorer::ConstantScorer(std::size_t classes, std::size_t relations, double value)
    : classes_(classes), relations_(relations), value_(value) {
  require(value >= 0.0 && value <= 1.0, ErrorKind::invalid_argument,
          "constant degree must lie in [0, 1]");
}

Vector ConstantScorer::unary_scores(const BoundingBox&, const SceneAnnotation&) const {
  return Vector(classes_, value_);
}

Vector ConstantScorer::binary_scores(const BoundingBox&, const BoundingBox&,
                                     const SceneAnnotation&) const {
  return Vector(relations_, value_);
}

std::vector<PredictedTriple> score_triples(const TripleScorer& scorer, const SceneAnnotation& scene,
                                           const FrequencyPrior& prior, Task task,
                                           const Equivalences& equivalences) {
  const std::size_t relations = scorer.relation_count();
  require(prior.size() == relations, ErrorKind::invalid_argument,
          "prior covers " + std::to_string(prior.size()) + " predicates, scorer " +
              std::to_string(relations));
  std::vector<std::int64_t> partner(relations, -1);
  for (const auto& [r, s] : equivalences) {
    require(r < relations && s < relations, ErrorKind::invalid_argument,
            "equivalence refers to an unknown predicate");
    partner[r] = s;
    partner[s] = r;
  }
  const bool need_reverse =
      std::any_of(partner.begin(), partner.end(), [](std::int64_t p) { return p >= 0; });

  const std::size_t n = scene.boxes.size();
  std::vector<std::uint32_t> classes(n);
  std::vector<double> class_degree(n, 1.0);
  for (std::size_t b = 0; b < n; ++b) {
    const BoundingBox& box = scene.boxes[b];
    const bool needs_unary = task != Task::predicate || !box.label;
    if (!needs_unary) {
      classes[b] = *box.label;
      continue;
    }
    const Vector u = scorer.unary_scores(box, scene);
    require(!u.empty(), ErrorKind::invalid_argument, "scorer has no unary predicates");
    if (box.label) {
      require(*box.label < u.size(), ErrorKind::schema, "box label outside the vocabulary");
      classes[b] = *box.label;
    } else {
      classes[b] = static_cast<std::uint32_t>(std::max_element(u.begin(), u.end()) - u.begin());
    }
    class_degree[b] = u[classes[b]];
  }

  std::vector<PredictedTriple> out;
  out.reserve(n * (n > 0 ? n - 1 : 0) * relations);
  for (std::uint32_t s = 0; s < n; ++s) {
    for (std::uint32_t o = 0; o < n; ++o) {
      if (s == o) continue;
      const BoundingBox& bs = scene.boxes[s];
      const BoundingBox& bo = scene.boxes[o];
      const Vector forward = scorer.binary_scores(bs, bo, scene);
      const Vector reverse = need_reverse ? scorer.binary_scores(bo, bs, scene) : Vector{};
      const double unary =
          task == Task::predicate ? 1.0 : class_degree[s] * class_degree[o];
      for (std::uint32_t r = 0; r < relations; ++r) {
        double degree = forward[r];
        if (partner[r] >= 0) degree = 0.5 * (degree + reverse[static_cast<std::size_t>(partner[r])]);
        PredictedTriple t;
        t.subject_box = s;
        t.object_box = o;
        t.subject_class = classes[s];
        t.predicate = r;
        t.object_class = classes[o];
        t.score = degree * prior(r) * unary;
        t.subject_rect = bs.rect;
        t.object_rect = bo.rect;
        t.union_rect = union_box(bs.rect, bo.rect);
        require(std::isfinite(t.score), ErrorKind::numeric, "non-finite triple score");
        out.push_back(t);
      }
    }
  }
  sort_predictions(out);
  return out;
}

bool triple_matches(const PredictedTriple& p, const SceneAnnotation& scene, const Triple& t,
                    Task task) {
  if (p.predicate != t.predicate) return false;
  const BoundingBox& gs = scene.boxes[t.subject];
  const BoundingBox& go = scene.boxes[t.object];
  if (!gs.label || !go.label) return false;
  if (p.subject_class != *gs.label || p.object_class != *go.label) return false;
  switch (task) {
    case Task::predicate: return p.subject_box == t.subject && p.object_box == t.object;
    case Task::phrase: return iou(p.union_rect, union_box(gs.rect, go.rect)) >= 0.5;
    case Task::relationship:
      return iou(p.subject_rect, gs.rect) >= 0.5 && iou(p.object_rect, go.rect) >= 0.5;
  }
  return false;
}

namespace {

// Maximum one-to-one assignment between the top-n predictions and the
// selected ground-truth triples (augmenting paths, predictions in rank order).
std::size_t count_hits(const std::vector<PredictedTriple>& predictions, const SceneAnnotation& scene,
                       const std::vector<std::size_t>& truth, int n, Task task) {
  std::vector<PredictedTriple> ranked = predictions;
  sort_predictions(ranked);
  const std::size_t top = std::min(ranked.size(), static_cast<std::size_t>(n));
  std::vector<std::vector<std::size_t>> edges(top);
  for (std::size_t i = 0; i < top; ++i) {
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (triple_matches(ranked[i], scene, scene.triples[truth[j]], task)) edges[i].push_back(j);
    }
  }
  std::vector<std::int64_t> owner(truth.size(), -1);
  std::vector<char> seen;
  std::function<bool(std::size_t)> augment = [&](std::size_t i) {
    for (auto j : edges[i]) {
      if (seen[j]) continue;
      seen[j] = 1;
      if (owner[j] < 0 || augment(static_cast<std::size_t>(owner[j]))) {
        owner[j] = static_cast<std::int64_t>(i);
        return true;
      }
    }
    return false;
  };
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) {
    if (edges[i].empty()) continue;
    seen.assign(truth.size(), 0);
    if (augment(i)) ++hits;
  }
  return hits;
}

double pooled_recall(const std::vector<std::vector<PredictedTriple>>& predictions,
                     const std::vector<SceneAnnotation>& ground_truth, int n, Task task,
                     const std::function<bool(const SceneAnnotation&, const Triple&)>& keep) {
  require(n > 0, ErrorKind::invalid_argument, "recall@N needs N > 0");
  require(predictions.size() == ground_truth.size(), ErrorKind::invalid_argument,
          "recall: " + std::to_string(predictions.size()) + " prediction lists for " +
              std::to_string(ground_truth.size()) + " images");
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t img = 0; img < ground_truth.size(); ++img) {
    const SceneAnnotation& scene = ground_truth[img];
    std::vector<std::size_t> truth;
    for (std::size_t t = 0; t < scene.triples.size(); ++t) {
      if (keep(scene, scene.triples[t])) truth.push_back(t);
    }
    total += truth.size();
    if (!truth.empty()) hits += count_hits(predictions[img], scene, truth, n, task);
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

double recall_at_n(const std::vector<std::vector<PredictedTriple>>& predictions,
                   const std::vector<SceneAnnotation>& ground_truth, int n, Task task) {
  return pooled_recall(predictions, ground_truth, n, task,
                       [](const SceneAnnotation&, const Triple&) { return true; });
}

double zero_shot_recall(const std::vector<std::vector<PredictedTriple>>& predictions,
                        const std::vector<SceneAnnotation>& ground_truth,
                        const std::vector<TripleType>& unseen, int n, Task task) {
  require(!unseen.empty(), ErrorKind::invalid_argument, "zero-shot recall needs unseen triple types");
  const std::set<TripleType> types(unseen.begin(), unseen.end());
  return pooled_recall(predictions, ground_truth, n, task,
                       [&](const SceneAnnotation& scene, const Triple& t) {
                         return types.contains(triple_type(scene, t));
                       });
}

}  // namespace rwfn
