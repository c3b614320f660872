#include "rwfn/scene_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "rwfn/error.hpp"

namespace rwfn {

using ordered_json = nlohmann::ordered_json;

double intersection_area(const Rect& a, const Rect& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const Rect& a, const Rect& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

Rect union_box(const Rect& a, const Rect& b) {
  return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min), std::max(a.x_max, b.x_max),
          std::max(a.y_max, b.y_max)};
}

namespace {

std::string where(std::size_t scene, const std::string& what) {
  return "image " + std::to_string(scene) + ": " + what;
}

}  // namespace

void validate(const Dataset& dataset) {
  const std::size_t n_classes = dataset.classes.size();
  for (std::size_t s = 0; s < dataset.scenes.size(); ++s) {
    const auto& scene = dataset.scenes[s];
    require(scene.width > 0.0 && scene.height > 0.0, ErrorKind::schema,
            where(s, "image dimensions must be positive"));
    for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
      const auto& box = scene.boxes[b];
      const std::string tag = "box " + std::to_string(b);
      require(box.rect.valid(), ErrorKind::schema, where(s, tag + " is degenerate"));
      require(!box.label || *box.label < n_classes, ErrorKind::schema,
              where(s, tag + " has unknown class index"));
      require(box.scores.size() == n_classes, ErrorKind::schema,
              where(s, tag + " score vector length differs from class count"));
      for (double v : box.scores) {
        require(v >= 0.0 && v <= 1.0, ErrorKind::schema, where(s, tag + " score outside [0,1]"));
      }
    }
    for (std::size_t t = 0; t < scene.triples.size(); ++t) {
      const auto& tr = scene.triples[t];
      const std::string tag = "triple " + std::to_string(t);
      require(tr.subject < scene.boxes.size() && tr.object < scene.boxes.size(), ErrorKind::schema,
              where(s, tag + " references a missing box"));
      require(tr.subject != tr.object, ErrorKind::schema,
              where(s, tag + " has identical subject and object"));
      require(tr.predicate < dataset.predicates.size(), ErrorKind::schema,
              where(s, tag + " has unknown predicate index"));
    }
  }
}

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& scene_indices) {
  Dataset out{dataset.classes, dataset.predicates, dataset.source, {}};
  out.scenes.reserve(scene_indices.size());
  for (auto i : scene_indices) {
    require(i < dataset.scenes.size(), ErrorKind::invalid_argument, "subset: scene index out of range");
    out.scenes.push_back(dataset.scenes[i]);
  }
  return out;
}

Vector unary_features(const BoundingBox& box, const SceneAnnotation& scene) {
  require(scene.width > 0.0 && scene.height > 0.0, ErrorKind::invalid_argument,
          "unary_features: degenerate scene dimensions");
  Vector out;
  out.reserve(box.scores.size() + FeatureSchema::kGeometryDim);
  out.insert(out.end(), box.scores.begin(), box.scores.end());
  const Rect& r = box.rect;
  out.push_back(r.x_min / scene.width);
  out.push_back(r.y_min / scene.height);
  out.push_back(r.x_max / scene.width);
  out.push_back(r.y_max / scene.height);
  out.push_back(r.area() / (scene.width * scene.height));
  return out;
}

Vector joint_features(const BoundingBox& subject, const BoundingBox& object,
                      const SceneAnnotation& scene) {
  const Rect& a = subject.rect;
  const Rect& b = object.rect;
  const double inter = intersection_area(a, b);
  const double dx = a.center_x() - b.center_x();
  const double dy = a.center_y() - b.center_y();
  const double diagonal = std::hypot(scene.width, scene.height);
  const auto log_ratio = [](double x, double y) { return std::clamp(std::log(x / y), -5.0, 5.0); };
  return {inter / a.area(),
          inter / b.area(),
          iou(a, b),
          std::hypot(dx, dy) / diagonal,
          dx / scene.width,
          dy / scene.height,
          log_ratio(a.width(), b.width()),
          log_ratio(a.height(), b.height())};
}

Vector pair_features(const BoundingBox& subject, const BoundingBox& object,
                     const SceneAnnotation& scene) {
  Vector out = unary_features(subject, scene);
  const Vector second = unary_features(object, scene);
  const Vector joint = joint_features(subject, object, scene);
  out.insert(out.end(), second.begin(), second.end());
  out.insert(out.end(), joint.begin(), joint.end());
  return out;
}

// ---- dataset file -------------------------------------------------------

namespace {

constexpr const char* kDatasetFormat = "rwfn-scenes";
constexpr const char* kSplitFormat = "rwfn-split";

std::string source_name(BoxSource s) { return s == BoxSource::detector ? "detector" : "ground_truth"; }

Vector one_hot(std::size_t dim, std::uint32_t index) {
  Vector v(dim, 0.0);
  v[index] = 1.0;
  return v;
}

std::vector<std::string> read_names(const ordered_json& doc, const char* key) {
  require(doc.contains(key) && doc[key].is_array(), ErrorKind::parse,
          std::string("dataset: missing array '") + key + "'");
  std::vector<std::string> names;
  for (const auto& n : doc[key]) names.push_back(n.get<std::string>());
  return names;
}

SceneAnnotation read_scene(const ordered_json& img, std::size_t n_classes) {
  SceneAnnotation scene;
  scene.image_id = img.at("id").get<std::string>();
  scene.width = img.at("width").get<double>();
  scene.height = img.at("height").get<double>();
  for (const auto& jb : img.at("boxes")) {
    BoundingBox box;
    const auto& bb = jb.at("bbox");
    require(bb.is_array() && bb.size() == 4, ErrorKind::parse, "bbox must have 4 entries");
    box.rect = {bb[2].get<double>(), bb[0].get<double>(), bb[3].get<double>(), bb[1].get<double>()};
    if (jb.contains("category")) box.label = jb["category"].get<std::uint32_t>();
    if (jb.contains("scores")) {
      box.scores = jb["scores"].get<Vector>();
    } else {
      require(box.label.has_value(), ErrorKind::parse, "box needs a category or scores");
      require(*box.label < n_classes, ErrorKind::parse, "box category out of range");
      box.scores = one_hot(n_classes, *box.label);
    }
    scene.boxes.push_back(std::move(box));
  }
  if (img.contains("triples")) {
    for (const auto& jt : img["triples"]) {
      scene.triples.push_back({jt.at("subject").get<std::uint32_t>(),
                               jt.at("predicate").get<std::uint32_t>(),
                               jt.at("object").get<std::uint32_t>()});
    }
  }
  return scene;
}

}  // namespace

Dataset parse_dataset(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("dataset is not valid JSON: ") + e.what());
  }
  require(doc.is_object(), ErrorKind::parse, "dataset root must be an object");
  require(doc.value("format", std::string()) == kDatasetFormat, ErrorKind::parse,
          "dataset: format tag must be 'rwfn-scenes'");
  require(doc.value("version", 0) == kDatasetFormatVersion, ErrorKind::parse,
          "dataset: unsupported format version");

  Dataset ds;
  ds.classes = read_names(doc, "classes");
  ds.predicates = read_names(doc, "predicates");
  const std::string source = doc.value("box_source", std::string("ground_truth"));
  require(source == "ground_truth" || source == "detector", ErrorKind::parse,
          "dataset: box_source must be ground_truth or detector");
  ds.source = source == "detector" ? BoxSource::detector : BoxSource::ground_truth;
  require(doc.contains("images") && doc["images"].is_array(), ErrorKind::parse,
          "dataset: missing array 'images'");

  const auto& images = doc["images"];
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      ds.scenes.push_back(read_scene(images[i], ds.classes.size()));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::parse, "record " + std::to_string(i) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::parse, "record " + std::to_string(i) + ": " + e.what());
    }
  }
  try {
    validate(ds);
  } catch (const Error& e) {
    fail(ErrorKind::parse, e.what());
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open dataset file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset(buffer.str());
}

std::string serialize_dataset(const Dataset& dataset) {
  ordered_json doc;
  doc["format"] = kDatasetFormat;
  doc["version"] = kDatasetFormatVersion;
  doc["box_source"] = source_name(dataset.source);
  doc["classes"] = dataset.classes;
  doc["predicates"] = dataset.predicates;
  ordered_json images = ordered_json::array();
  for (const auto& scene : dataset.scenes) {
    ordered_json img;
    img["id"] = scene.image_id;
    img["width"] = scene.width;
    img["height"] = scene.height;
    ordered_json boxes = ordered_json::array();
    for (const auto& box : scene.boxes) {
      ordered_json jb;
      if (box.label) jb["category"] = *box.label;
      jb["bbox"] = {box.rect.y_min, box.rect.y_max, box.rect.x_min, box.rect.x_max};
      const bool implied = box.label && box.scores == one_hot(dataset.classes.size(), *box.label);
      if (!implied) jb["scores"] = box.scores;
      boxes.push_back(std::move(jb));
    }
    img["boxes"] = std::move(boxes);
    ordered_json triples = ordered_json::array();
    for (const auto& t : scene.triples) {
      triples.push_back({{"subject", t.subject}, {"predicate", t.predicate}, {"object", t.object}});
    }
    img["triples"] = std::move(triples);
    images.push_back(std::move(img));
  }
  doc["images"] = std::move(images);
  return doc.dump(1) + "\n";
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write dataset file " + path.string());
  out << serialize_dataset(dataset);
}

// ---- synthetic generation -------------------------------------------------

std::string to_string(SpatialRelation relation) {
  switch (relation) {
    case SpatialRelation::above: return "above";
    case SpatialRelation::below: return "below";
    case SpatialRelation::left_of: return "left_of";
    case SpatialRelation::right_of: return "right_of";
    case SpatialRelation::near: return "near";
  }
  return "above";
}

SpatialRelation parse_spatial_relation(const std::string& name) {
  for (auto r : {SpatialRelation::above, SpatialRelation::below, SpatialRelation::left_of,
                 SpatialRelation::right_of, SpatialRelation::near}) {
    if (to_string(r) == name) return r;
  }
  fail(ErrorKind::invalid_argument, "unknown spatial relation '" + name + "'");
}

namespace {

bool allowed(const std::vector<std::uint32_t>& classes, const std::optional<std::uint32_t>& label) {
  if (classes.empty()) return true;
  return label && std::find(classes.begin(), classes.end(), *label) != classes.end();
}

}  // namespace

bool rule_holds(const PredicateRule& rule, const SyntheticSpec& spec, const SceneAnnotation& scene,
                std::uint32_t subject, std::uint32_t object) {
  if (subject == object) return false;
  const auto& a = scene.boxes.at(subject);
  const auto& b = scene.boxes.at(object);
  if (!allowed(rule.subject_classes, a.label) || !allowed(rule.object_classes, b.label)) return false;
  const double dy = a.rect.center_y() - b.rect.center_y();
  const double dx = a.rect.center_x() - b.rect.center_x();
  switch (rule.relation) {
    case SpatialRelation::above: return dy < -spec.margin * scene.height;
    case SpatialRelation::below: return dy > spec.margin * scene.height;
    case SpatialRelation::left_of: return dx < -spec.margin * scene.width;
    case SpatialRelation::right_of: return dx > spec.margin * scene.width;
    case SpatialRelation::near:
      return std::hypot(dx, dy) < spec.near_radius * std::hypot(scene.width, scene.height);
  }
  return false;
}

Dataset generate_synthetic(Rng& rng, const SyntheticSpec& spec) {
  require(!spec.classes.empty(), ErrorKind::invalid_argument, "synthetic spec needs classes");
  require(!spec.predicates.empty(), ErrorKind::invalid_argument, "synthetic spec needs predicates");
  require(spec.min_boxes >= 2 && spec.min_boxes <= spec.max_boxes, ErrorKind::invalid_argument,
          "synthetic spec needs 2 <= min_boxes <= max_boxes");
  require(spec.noise >= 0.0 && spec.noise <= 1.0, ErrorKind::invalid_argument,
          "synthetic noise must lie in [0,1]");
  require(spec.width > 0.0 && spec.height > 0.0, ErrorKind::invalid_argument,
          "synthetic image size must be positive");
  for (const auto& rule : spec.predicates) {
    for (auto c : rule.subject_classes) {
      require(c < spec.classes.size(), ErrorKind::invalid_argument, "rule subject class out of range");
    }
    for (auto c : rule.object_classes) {
      require(c < spec.classes.size(), ErrorKind::invalid_argument, "rule object class out of range");
    }
  }

  Dataset ds;
  ds.classes = spec.classes;
  for (const auto& rule : spec.predicates) ds.predicates.push_back(rule.name);
  const auto n_classes = static_cast<std::uint32_t>(spec.classes.size());
  const auto n_predicates = static_cast<std::uint32_t>(spec.predicates.size());

  for (std::size_t i = 0; i < spec.images; ++i) {
    SceneAnnotation scene;
    scene.image_id = "synthetic_" + std::to_string(i);
    scene.width = spec.width;
    scene.height = spec.height;
    const std::size_t n_boxes = spec.min_boxes + rng.below(spec.max_boxes - spec.min_boxes + 1);
    for (std::size_t b = 0; b < n_boxes; ++b) {
      const double w = std::round(rng.uniform(0.1, 0.35) * spec.width);
      const double h = std::round(rng.uniform(0.1, 0.35) * spec.height);
      const double x = std::round(rng.uniform(0.0, spec.width - w));
      const double y = std::round(rng.uniform(0.0, spec.height - h));
      const auto label = static_cast<std::uint32_t>(rng.below(n_classes));
      scene.boxes.push_back({{x, y, x + w, y + h}, label, one_hot(n_classes, label)});
    }
    std::set<Triple> triples;
    for (std::uint32_t s = 0; s < n_boxes; ++s) {
      for (std::uint32_t o = 0; o < n_boxes; ++o) {
        if (s == o) continue;
        for (std::uint32_t p = 0; p < n_predicates; ++p) {
          if (!rule_holds(spec.predicates[p], spec, scene, s, o)) continue;
          std::uint32_t emitted = p;
          if (spec.noise > 0.0 && n_predicates > 1 && rng.uniform() < spec.noise) {
            emitted = static_cast<std::uint32_t>((p + 1 + rng.below(n_predicates - 1)) % n_predicates);
          }
          triples.insert({s, emitted, o});
        }
      }
    }
    scene.triples.assign(triples.begin(), triples.end());
    ds.scenes.push_back(std::move(scene));
  }
  return ds;
}

// ---- splits ---------------------------------------------------------------

TripleType triple_type(const SceneAnnotation& scene, const Triple& triple) {
  const auto& s = scene.boxes.at(triple.subject);
  const auto& o = scene.boxes.at(triple.object);
  require(s.label.has_value() && o.label.has_value(), ErrorKind::invalid_argument,
          "triple type needs labelled boxes");
  return {*s.label, triple.predicate, *o.label};
}

SceneSplit zero_shot_split(const std::vector<SceneAnnotation>& scenes, std::size_t held_out,
                           Rng& rng, double min_test_fraction) {
  require(held_out >= 1, ErrorKind::invalid_argument, "zero_shot_split: held_out must be >= 1");
  require(min_test_fraction >= 0.0 && min_test_fraction < 1.0, ErrorKind::invalid_argument,
          "zero_shot_split: min_test_fraction must lie in [0,1)");

  std::map<TripleType, std::set<std::size_t>> scenes_of;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (const auto& t : scenes[i].triples) scenes_of[triple_type(scenes[i], t)].insert(i);
  }
  require(scenes_of.size() >= 2, ErrorKind::split, "zero_shot_split: fewer than 2 triple types");

  std::vector<TripleType> candidates;
  for (const auto& [type, _] : scenes_of) candidates.push_back(type);
  for (std::size_t i = candidates.size(); i > 1; --i) {
    std::swap(candidates[i - 1], candidates[rng.below(i)]);
  }
  // Rarer types first keeps the test side small; the shuffle breaks ties.
  std::stable_sort(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b) {
    return scenes_of[a].size() < scenes_of[b].size();
  });

  SceneSplit split;
  std::set<std::size_t> test;
  for (const auto& type : candidates) {
    if (split.unseen.size() == held_out) break;
    std::set<std::size_t> merged = test;
    merged.insert(scenes_of[type].begin(), scenes_of[type].end());
    if (merged.size() >= scenes.size()) continue;
    test = std::move(merged);
    split.unseen.push_back(type);
  }
  require(split.unseen.size() == held_out, ErrorKind::split,
          "zero_shot_split: cannot hold out " + std::to_string(held_out) +
              " triple types without emptying the training side");

  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (!test.count(i)) rest.push_back(i);
  }
  for (std::size_t i = rest.size(); i > 1; --i) std::swap(rest[i - 1], rest[rng.below(i)]);
  const auto target = static_cast<std::size_t>(std::ceil(min_test_fraction * scenes.size()));
  while (test.size() < target && rest.size() > 1) {
    test.insert(rest.back());
    rest.pop_back();
  }

  split.test.assign(test.begin(), test.end());
  split.train = std::move(rest);
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.unseen.begin(), split.unseen.end());
  return split;
}

SceneSplit random_split(std::size_t scene_count, double test_fraction, Rng& rng) {
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorKind::invalid_argument,
          "random_split: test_fraction must lie in (0,1)");
  require(scene_count >= 2, ErrorKind::split, "random_split: need at least 2 scenes");
  std::vector<std::size_t> order(scene_count);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  auto n_test = static_cast<std::size_t>(std::round(test_fraction * scene_count));
  n_test = std::clamp<std::size_t>(n_test, 1, scene_count - 1);
  SceneSplit split;
  split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::string serialize_split(const SceneSplit& split, const Dataset& dataset) {
  ordered_json doc;
  doc["format"] = kSplitFormat;
  doc["version"] = 1;
  const auto ids = [&](const std::vector<std::size_t>& idx) {
    ordered_json arr = ordered_json::array();
    for (auto i : idx) arr.push_back(dataset.scenes.at(i).image_id);
    return arr;
  };
  doc["train"] = ids(split.train);
  doc["test"] = ids(split.test);
  ordered_json unseen = ordered_json::array();
  for (const auto& t : split.unseen) {
    unseen.push_back({{"subject", dataset.classes.at(t.subject_class)},
                      {"predicate", dataset.predicates.at(t.predicate)},
                      {"object", dataset.classes.at(t.object_class)}});
  }
  doc["unseen"] = std::move(unseen);
  return doc.dump(1) + "\n";
}

SceneSplit parse_split(const std::string& text, const Dataset& dataset) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("split manifest is not valid JSON: ") + e.what());
  }
  require(doc.value("format", std::string()) == kSplitFormat, ErrorKind::parse,
          "split manifest: format tag must be 'rwfn-split'");
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < dataset.scenes.size(); ++i) by_id[dataset.scenes[i].image_id] = i;
  const auto index_of = [](const std::vector<std::string>& names, const std::string& name) {
    const auto it = std::find(names.begin(), names.end(), name);
    require(it != names.end(), ErrorKind::compatibility, "split manifest names unknown symbol " + name);
    return static_cast<std::uint32_t>(it - names.begin());
  };
  SceneSplit split;
  try {
    for (const auto& id : doc.at("train")) {
      const auto it = by_id.find(id.get<std::string>());
      require(it != by_id.end(), ErrorKind::compatibility, "split manifest names unknown image");
      split.train.push_back(it->second);
    }
    for (const auto& id : doc.at("test")) {
      const auto it = by_id.find(id.get<std::string>());
      require(it != by_id.end(), ErrorKind::compatibility, "split manifest names unknown image");
      split.test.push_back(it->second);
    }
    for (const auto& t : doc.at("unseen")) {
      split.unseen.push_back({index_of(dataset.classes, t.at("subject").get<std::string>()),
                              index_of(dataset.predicates, t.at("predicate").get<std::string>()),
                              index_of(dataset.classes, t.at("object").get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("split manifest: ") + e.what());
  }
  return split;
}

}  // namespace rwfn
