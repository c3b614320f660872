#include <cmath>
#include <set>
#include <string>

#include "doctest.h"
#include "rwfn/numeric.hpp"
#include "rwfn/scene_data.hpp"
#include "test_support.hpp"

using namespace rwfn;

namespace {

SyntheticSpec small_spec(std::size_t images, double noise = 0.0) {
  SyntheticSpec spec;
  spec.images = images;
  spec.classes = {"person", "car", "tree"};
  spec.predicates = {{"above", SpatialRelation::above, {}, {}},
                     {"left_of", SpatialRelation::left_of, {}, {}},
                     {"near", SpatialRelation::near, {0}, {}}};
  spec.min_boxes = 3;
  spec.max_boxes = 5;
  spec.noise = noise;
  return spec;
}

}  // namespace

TEST_CASE("rectangle geometry") {
  const Rect a{0, 0, 2, 1};
  const Rect b{1, 0, 3, 1};
  CHECK(a.area() == 2.0);
  CHECK(intersection_area(a, b) == 1.0);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Rect{5, 5, 6, 6}) == 0.0);
  // Touching edges do not overlap.
  CHECK(intersection_area(a, Rect{2, 0, 3, 1}) == 0.0);
  const Rect u = union_box(a, Rect{-1, 2, 1, 4});
  CHECK(u.x_min == -1.0);
  CHECK(u.y_min == 0.0);
  CHECK(u.x_max == 2.0);
  CHECK(u.y_max == 4.0);
}

TEST_CASE("unary features are class scores followed by normalised geometry") {
  SceneAnnotation scene;
  scene.width = 200;
  scene.height = 100;
  const BoundingBox b = testing::box(20, 10, 120, 60, 1, 3);
  const Vector f = unary_features(b, scene);
  const Vector expected{0, 1, 0, 0.1, 0.1, 0.6, 0.6, 5000.0 / 20000.0};
  REQUIRE(f.size() == expected.size());
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == doctest::Approx(expected[i]));
  CHECK(FeatureSchema{3}.unary_dim() == 8);
  CHECK(FeatureSchema{3}.binary_dim() == 24);
  CHECK(FeatureSchema{100}.unary_dim() == 105);
}

TEST_CASE("joint features match a hand computation") {
  SceneAnnotation scene;
  scene.width = 100;
  scene.height = 100;
  const BoundingBox s = testing::box(0, 0, 20, 10, 0, 1);   // area 200, centre (10, 5)
  const BoundingBox o = testing::box(10, 0, 50, 40, 0, 1);  // area 1600, centre (30, 20)
  const Vector j = joint_features(s, o, scene);
  REQUIRE(j.size() == FeatureSchema::kJointDim);
  // overlap [10,20] x [0,10] = 100
  CHECK(j[0] == doctest::Approx(100.0 / 200.0));
  CHECK(j[1] == doctest::Approx(100.0 / 1600.0));
  CHECK(j[2] == doctest::Approx(100.0 / 1700.0));
  CHECK(j[3] == doctest::Approx(std::hypot(20.0, 15.0) / std::hypot(100.0, 100.0)));
  CHECK(j[4] == doctest::Approx(-0.2));
  CHECK(j[5] == doctest::Approx(-0.15));
  CHECK(j[6] == doctest::Approx(std::log(20.0 / 40.0)));
  CHECK(j[7] == doctest::Approx(std::log(10.0 / 40.0)));

  const BoundingBox thin = testing::box(0, 0, 0.0001, 50, 0, 1);
  const Vector k = joint_features(thin, o, scene);
  CHECK(k[6] == -5.0);

  const Vector p = pair_features(s, o, scene);
  CHECK(p.size() == FeatureSchema{1}.binary_dim());
}

TEST_CASE("dataset files round-trip") {
  const Dataset ds = testing::tiny_dataset();
  const std::string text = serialize_dataset(ds);
  const Dataset back = parse_dataset(text);
  CHECK(back == ds);
  CHECK(serialize_dataset(back) == text);
}

TEST_CASE("dataset parser reports the failing record") {
  Dataset ds = testing::tiny_dataset();
  std::string text = serialize_dataset(ds);
  CHECK_ERROR_KIND(parse_dataset("not json"), ErrorKind::parse);
  CHECK_ERROR_KIND(parse_dataset(R"({"format":"other","version":1})"), ErrorKind::parse);

  const std::string bad_box =
      R"({"format":"rwfn-scenes","version":1,"classes":["a"],"predicates":["r"],"images":[)"
      R"({"id":"x","width":10,"height":10,"boxes":[{"category":0,"bbox":[0,1,0,1]}],"triples":[]},)"
      R"({"id":"y","width":10,"height":10,"boxes":[{"category":0,"bbox":[0,1]}],"triples":[]}]})";
  try {
    parse_dataset(bad_box);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }

  const std::string self_triple =
      R"({"format":"rwfn-scenes","version":1,"classes":["a"],"predicates":["r"],"images":[)"
      R"({"id":"x","width":10,"height":10,"boxes":[{"category":0,"bbox":[0,1,0,1]}],)"
      R"("triples":[{"subject":0,"predicate":0,"object":0}]}]})";
  CHECK_ERROR_KIND(parse_dataset(self_triple), ErrorKind::parse);
}

TEST_CASE("validate rejects inconsistent scenes") {
  Dataset ds = testing::tiny_dataset();
  ds.scenes[0].boxes[0].label = 7;
  CHECK_ERROR_KIND(validate(ds), ErrorKind::schema);
  ds = testing::tiny_dataset();
  ds.scenes[1].triples.push_back({0, 5, 1});
  CHECK_ERROR_KIND(validate(ds), ErrorKind::schema);
  ds = testing::tiny_dataset();
  ds.scenes[0].boxes[1].rect = {5, 5, 5, 9};
  CHECK_ERROR_KIND(validate(ds), ErrorKind::schema);
}

TEST_CASE("synthetic generator is deterministic and follows its rules") {
  const SyntheticSpec spec = small_spec(30);
  Rng a(11), b(11);
  const Dataset d1 = generate_synthetic(a, spec);
  const Dataset d2 = generate_synthetic(b, spec);
  CHECK(d1 == d2);
  CHECK(d1.scenes.size() == 30);
  CHECK_NOTHROW(validate(d1));
  std::size_t total = 0;
  for (const auto& scene : d1.scenes) {
    CHECK(scene.boxes.size() >= 3);
    CHECK(scene.boxes.size() <= 5);
    // Without noise the triples are exactly the rule-satisfying ones.
    std::set<Triple> expected;
    for (std::uint32_t s = 0; s < scene.boxes.size(); ++s) {
      for (std::uint32_t o = 0; o < scene.boxes.size(); ++o) {
        for (std::uint32_t p = 0; p < spec.predicates.size(); ++p) {
          if (rule_holds(spec.predicates[p], spec, scene, s, o)) expected.insert({s, p, o});
        }
      }
    }
    CHECK(std::set<Triple>(scene.triples.begin(), scene.triples.end()) == expected);
    total += scene.triples.size();
  }
  CHECK(total > 0);
}

TEST_CASE("synthetic noise relabels some triples") {
  const SyntheticSpec spec = small_spec(40, 0.5);
  Rng rng(5);
  const Dataset noisy = generate_synthetic(rng, spec);
  std::size_t violations = 0;
  for (const auto& scene : noisy.scenes) {
    for (const auto& t : scene.triples) {
      if (!rule_holds(spec.predicates[t.predicate], spec, scene, t.subject, t.object)) ++violations;
    }
  }
  CHECK(violations > 0);
}

TEST_CASE("rule semantics") {
  SyntheticSpec spec = small_spec(1);
  SceneAnnotation scene;
  scene.width = 100;
  scene.height = 100;
  scene.boxes = {testing::box(0, 0, 10, 10, 0, 3), testing::box(0, 30, 10, 40, 1, 3)};
  CHECK(rule_holds(spec.predicates[0], spec, scene, 0, 1));
  CHECK_FALSE(rule_holds(spec.predicates[0], spec, scene, 1, 0));
  CHECK_FALSE(rule_holds(spec.predicates[1], spec, scene, 0, 1));
  CHECK(rule_holds(spec.predicates[2], spec, scene, 0, 1));
  // near restricted to person subjects
  CHECK_FALSE(rule_holds(spec.predicates[2], spec, scene, 1, 0));
  CHECK_FALSE(rule_holds(spec.predicates[0], spec, scene, 0, 0));
  CHECK(parse_spatial_relation("left_of") == SpatialRelation::left_of);
  CHECK_ERROR_KIND(parse_spatial_relation("inside"), ErrorKind::invalid_argument);
}

TEST_CASE("zero-shot split keeps held-out types out of training") {
  Rng gen(3);
  const Dataset ds = generate_synthetic(gen, small_spec(60));
  Rng rng(9);
  const SceneSplit split = zero_shot_split(ds.scenes, 2, rng, 0.2);
  REQUIRE(split.unseen.size() == 2);
  CHECK(split.train.size() + split.test.size() == ds.scenes.size());
  CHECK(split.test.size() >= 12);
  const std::set<TripleType> unseen(split.unseen.begin(), split.unseen.end());
  for (auto i : split.train) {
    for (const auto& t : ds.scenes[i].triples) CHECK_FALSE(unseen.contains(triple_type(ds.scenes[i], t)));
  }
  std::set<std::size_t> all(split.train.begin(), split.train.end());
  all.insert(split.test.begin(), split.test.end());
  CHECK(all.size() == ds.scenes.size());

  Rng again(9);
  const SceneSplit same = zero_shot_split(ds.scenes, 2, again, 0.2);
  CHECK(same.train == split.train);
  CHECK(same.unseen == split.unseen);

  Rng r(1);
  CHECK_ERROR_KIND(zero_shot_split(ds.scenes, 10000, r), ErrorKind::split);
}

TEST_CASE("random split and manifests") {
  const Dataset ds = testing::tiny_dataset();
  Rng rng(4);
  const SceneSplit split = random_split(ds.scenes.size(), 0.5, rng);
  CHECK(split.train.size() == 1);
  CHECK(split.test.size() == 1);
  CHECK_ERROR_KIND(random_split(1, 0.5, rng), ErrorKind::split);
  CHECK_ERROR_KIND(random_split(4, 1.0, rng), ErrorKind::invalid_argument);

  SceneSplit manual;
  manual.train = {1};
  manual.test = {0};
  manual.unseen = {{0, 1, 1}};
  const SceneSplit back = parse_split(serialize_split(manual, ds), ds);
  CHECK(back.train == manual.train);
  CHECK(back.test == manual.test);
  CHECK(back.unseen == manual.unseen);
  CHECK_ERROR_KIND(parse_split(R"({"format":"rwfn-split","train":["nope"],"test":[],"unseen":[]})", ds),
                   ErrorKind::compatibility);
}

TEST_CASE("fixture dataset in the repository loads") {
  const Dataset ds = load_vrd(std::string(RWFN_SOURCE_DIR) + "/data/fixture_scenes.json");
  CHECK(ds.scenes.size() == 2);
  std::size_t triples = 0;
  for (const auto& s : ds.scenes) triples += s.triples.size();
  CHECK(triples == 3);
  CHECK_ERROR_KIND(load_dataset("/nonexistent/file.json"), ErrorKind::io);
}
