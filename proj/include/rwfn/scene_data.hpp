#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rwfn/numeric.hpp"

namespace rwfn {

// Axis-aligned box in pixel coordinates.
struct Rect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  bool valid() const { return x_min < x_max && y_min < y_max; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

double intersection_area(const Rect& a, const Rect& b);
double iou(const Rect& a, const Rect& b);
Rect union_box(const Rect& a, const Rect& b);

struct BoundingBox {
  Rect rect;
  // Annotated class; absent for raw detector output.
  std::optional<std::uint32_t> label;
  // One score per unary predicate: detector confidences, or one-hot of label.
  Vector scores;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// <subject box, predicate, object box>; box fields index SceneAnnotation::boxes.
struct Triple {
  std::uint32_t subject = 0;
  std::uint32_t predicate = 0;
  std::uint32_t object = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct SceneAnnotation {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<BoundingBox> boxes;
  std::vector<Triple> triples;

  friend bool operator==(const SceneAnnotation&, const SceneAnnotation&) = default;
};

enum class BoxSource { ground_truth, detector };

struct Dataset {
  std::vector<std::string> classes;
  std::vector<std::string> predicates;
  BoxSource source = BoxSource::ground_truth;
  std::vector<SceneAnnotation> scenes;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Checks every scene invariant against the vocabulary; throws schema errors.
void validate(const Dataset& dataset);

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& scene_indices);

struct FeatureSchema {
  static constexpr std::size_t kGeometryDim = 5;
  static constexpr std::size_t kJointDim = 8;

  std::size_t class_dim = 0;

  std::size_t unary_dim() const { return class_dim + kGeometryDim; }
  std::size_t binary_dim() const { return 2 * unary_dim() + kJointDim; }
  std::size_t input_dim(std::size_t arity) const { return arity == 1 ? unary_dim() : binary_dim(); }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

// concat(class scores, [x_min/W, y_min/H, x_max/W, y_max/H, area/(W*H)])
Vector unary_features(const BoundingBox& box, const SceneAnnotation& scene);

// [inter/area1, inter/area2, iou, centroid distance / diagonal, dcx/W, dcy/H,
//  log(w1/w2), log(h1/h2)] with deltas taken subject minus object and the log
// ratios clamped to [-5, 5].
Vector joint_features(const BoundingBox& subject, const BoundingBox& object,
                      const SceneAnnotation& scene);

// concat(unary(subject), unary(object), joint(subject, object))
Vector pair_features(const BoundingBox& subject, const BoundingBox& object,
                     const SceneAnnotation& scene);

// Dataset file (JSON, format "rwfn-scenes", version 1). Box coordinates are
// stored in the VRD order [y_min, y_max, x_min, x_max].
inline constexpr int kDatasetFormatVersion = 1;

Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& text);
std::string serialize_dataset(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// VRD-style annotations are ingested through the same schema.
inline Dataset load_vrd(const std::filesystem::path& path) { return load_dataset(path); }

// Synthetic scenes with rule-defined relations.
enum class SpatialRelation { above, below, left_of, right_of, near };

std::string to_string(SpatialRelation relation);
SpatialRelation parse_spatial_relation(const std::string& name);

struct PredicateRule {
  std::string name;
  SpatialRelation relation = SpatialRelation::above;
  // Allowed classes by index; empty means any class.
  std::vector<std::uint32_t> subject_classes;
  std::vector<std::uint32_t> object_classes;
};

struct SyntheticSpec {
  std::size_t images = 100;
  std::vector<std::string> classes;
  std::vector<PredicateRule> predicates;
  std::size_t min_boxes = 6;
  std::size_t max_boxes = 9;
  double width = 640.0;
  double height = 480.0;
  // Vertical/horizontal separation as a fraction of the image side.
  double margin = 0.05;
  // "near" threshold as a fraction of the image diagonal.
  double near_radius = 0.25;
  // Probability that a rule-generated triple is relabelled with another predicate.
  double noise = 0.0;
};

// Rule semantics, with c() the box centroid:
//   above(a,b)    c_y(a) < c_y(b) - margin*H
//   below(a,b)    c_y(a) > c_y(b) + margin*H
//   left_of(a,b)  c_x(a) < c_x(b) - margin*W
//   right_of(a,b) c_x(a) > c_x(b) + margin*W
//   near(a,b)     |c(a) - c(b)| < near_radius * diagonal
// and the subject/object classes must be allowed by the rule.
bool rule_holds(const PredicateRule& rule, const SyntheticSpec& spec, const SceneAnnotation& scene,
                std::uint32_t subject, std::uint32_t object);

Dataset generate_synthetic(Rng& rng, const SyntheticSpec& spec);

struct TripleType {
  std::uint32_t subject_class = 0;
  std::uint32_t predicate = 0;
  std::uint32_t object_class = 0;

  friend auto operator<=>(const TripleType&, const TripleType&) = default;
};

TripleType triple_type(const SceneAnnotation& scene, const Triple& triple);

struct SceneSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<TripleType> unseen;
};

// Holds out `held_out` triple types: every scene containing one goes to test.
// Further scenes are moved to test until it holds min_test_fraction of the corpus.
SceneSplit zero_shot_split(const std::vector<SceneAnnotation>& scenes, std::size_t held_out,
                           Rng& rng, double min_test_fraction = 0.0);

// Plain random split without held-out types.
SceneSplit random_split(std::size_t scene_count, double test_fraction, Rng& rng);

// Split manifest (JSON, format "rwfn-split"): image ids per side and unseen
// types by name.
std::string serialize_split(const SceneSplit& split, const Dataset& dataset);
SceneSplit parse_split(const std::string& text, const Dataset& dataset);

}  // namespace rwfn
