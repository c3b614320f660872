#include "rwfn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rwfn/error.hpp"

namespace rwfn {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Seed tags for the independent random streams of one experiment.
constexpr std::uint64_t kDataTag = 1;
constexpr std::uint64_t kSplitTag = 2;
constexpr std::uint64_t kDropTag = 3;
constexpr std::uint64_t kExampleTag = 4;
constexpr std::uint64_t kTheoryTag = 5;
constexpr std::uint64_t kTrainTag = 6;

[[noreturn]] void config_error(const std::string& field, const std::string& message) {
  fail(ErrorKind::config, field + ": " + message);
}

// Typed access to one JSON object with field paths in error messages.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) config_error(display(), "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return node_.contains(key); }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& [key, _] : node_.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
        config_error(field(key), "unknown key");
      }
    }
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    return as<T>(node_.at(key), field(key));
  }

  Section child(const std::string& key) const { return Section(node_.at(key), field(key)); }
  const json& raw(const std::string& key) const { return node_.at(key); }

  template <typename T>
  static T as(const json& value, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!value.is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!value.is_number_integer()) throw std::invalid_argument("expected an integer");
        if (std::is_unsigned_v<T> && value.is_number_integer() && !value.is_number_unsigned() &&
            value.get<std::int64_t>() < 0) {
          throw std::invalid_argument("expected a non-negative integer");
        }
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!value.is_boolean()) throw std::invalid_argument("expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!value.is_string()) throw std::invalid_argument("expected a string");
      }
      return value.get<T>();
    } catch (const std::exception& e) {
      config_error(where, e.what());
    }
  }

 private:
  std::string display() const { return path_.empty() ? "config" : path_; }

  const json& node_;
  std::string path_;
};

std::vector<std::string> string_list(const Section& s, const std::string& key) {
  std::vector<std::string> out;
  if (!s.has(key)) return out;
  const json& arr = s.raw(key);
  if (!arr.is_array()) config_error(s.field(key), "expected an array of strings");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(Section::as<std::string>(arr[i], s.field(key) + "[" + std::to_string(i) + "]"));
  }
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename F>
auto with_field(const std::string& field, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    config_error(field, e.what());
  }
}

SyntheticSpec parse_synthetic(const Section& s) {
  s.allow({"images", "classes", "predicates", "min_boxes", "max_boxes", "width", "height", "margin",
           "near_radius", "noise"});
  SyntheticSpec spec;
  spec.images = s.get<std::size_t>("images", spec.images);
  spec.classes = string_list(s, "classes");
  if (spec.classes.empty()) config_error(s.field("classes"), "at least one class is required");
  spec.min_boxes = s.get<std::size_t>("min_boxes", spec.min_boxes);
  spec.max_boxes = s.get<std::size_t>("max_boxes", spec.max_boxes);
  spec.width = s.get<double>("width", spec.width);
  spec.height = s.get<double>("height", spec.height);
  spec.margin = s.get<double>("margin", spec.margin);
  spec.near_radius = s.get<double>("near_radius", spec.near_radius);
  spec.noise = s.get<double>("noise", spec.noise);
  if (spec.noise < 0.0 || spec.noise > 1.0) config_error(s.field("noise"), "must lie in [0, 1]");
  if (!s.has("predicates") || !s.raw("predicates").is_array() || s.raw("predicates").empty()) {
    config_error(s.field("predicates"), "expected a non-empty array of rules");
  }
  auto class_indices = [&](const Section& rule, const std::string& key) {
    std::vector<std::uint32_t> out;
    for (const auto& name : string_list(rule, key)) {
      auto it = std::find(spec.classes.begin(), spec.classes.end(), name);
      if (it == spec.classes.end()) config_error(rule.field(key), "unknown class '" + name + "'");
      out.push_back(static_cast<std::uint32_t>(it - spec.classes.begin()));
    }
    return out;
  };
  const json& rules = s.raw("predicates");
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const Section rule(rules[i], s.field("predicates") + "[" + std::to_string(i) + "]");
    rule.allow({"name", "relation", "subject", "object"});
    PredicateRule r;
    r.relation = with_field(rule.field("relation"), [&] {
      return parse_spatial_relation(rule.get<std::string>("relation", ""));
    });
    r.name = rule.get<std::string>("name", to_string(r.relation));
    r.subject_classes = class_indices(rule, "subject");
    r.object_classes = class_indices(rule, "object");
    spec.predicates.push_back(std::move(r));
  }
  return spec;
}

json synthetic_to_json(const SyntheticSpec& spec) {
  json rules = json::array();
  auto names = [&](const std::vector<std::uint32_t>& ids) {
    json out = json::array();
    for (auto c : ids) out.push_back(spec.classes.at(c));
    return out;
  };
  for (const auto& r : spec.predicates) {
    rules.push_back({{"name", r.name},
                     {"relation", to_string(r.relation)},
                     {"subject", names(r.subject_classes)},
                     {"object", names(r.object_classes)}});
  }
  return {{"images", spec.images},       {"classes", spec.classes},   {"predicates", rules},
          {"min_boxes", spec.min_boxes}, {"max_boxes", spec.max_boxes}, {"width", spec.width},
          {"height", spec.height},       {"margin", spec.margin},     {"near_radius", spec.near_radius},
          {"noise", spec.noise}};
}

std::string split_kind_name(SplitKind kind) {
  switch (kind) {
    case SplitKind::zero_shot: return "zero_shot";
    case SplitKind::random: return "random";
    case SplitKind::manifest: return "manifest";
  }
  return "unknown";
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    config_error(assignment, "override must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->contains(path[i])) (*node)[path[i]] = json::object();
    node = &(*node)[path[i]];
    if (!node->is_object()) config_error(key, "cannot override inside a non-object");
  }
  (*node)[path.back()] = std::move(value);
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

json config_to_json(const ExperimentConfig& c) {
  json dataset;
  if (c.dataset.synthetic) dataset["synthetic"] = synthetic_to_json(*c.dataset.synthetic);
  if (!c.dataset.path.empty()) dataset["path"] = c.dataset.path.generic_string();
  dataset["split"] = {{"kind", split_kind_name(c.dataset.split.kind)},
                      {"held_out", c.dataset.split.held_out},
                      {"test_fraction", c.dataset.split.test_fraction}};
  if (!c.dataset.split.manifest.empty()) {
    dataset["split"]["manifest"] = c.dataset.split.manifest.generic_string();
  }
  dataset["drop_train_triples"] = c.dataset.drop_train_triples;

  json kb = {{"mode", to_string(c.kb.mode)},
             {"constraints", c.kb.constraints},
             {"negative_rate", c.kb.negative_rate}};
  if (!c.kb.constraints_file.empty()) kb["constraints_file"] = c.kb.constraints_file.generic_string();

  const TrainingConfig& t = c.training;
  json training = {
      {"epochs", t.epochs},
      {"p", t.p},
      {"lambda", t.lambda},
      {"optimizer", to_string(t.optimizer)},
      {"ftrl",
       {{"learning_rate", t.ftrl.learning_rate},
        {"lr_power", t.ftrl.lr_power},
        {"l1", t.ftrl.l1},
        {"l2", t.ftrl.l2},
        {"beta", t.ftrl.beta}}},
      {"rmsprop",
       {{"learning_rate", t.rmsprop.learning_rate},
        {"decay", t.rmsprop.decay},
        {"epsilon", t.rmsprop.epsilon}}},
      {"epsilon_clamp", t.mean_clamp},
      {"batch_size", t.batch_size},
      {"log_every", t.log_every}};

  json tasks = json::array();
  for (auto task : c.eval.tasks) tasks.push_back(to_string(task));
  json eq = json::array();
  for (const auto& [a, b] : c.eval.equivalences) eq.push_back({a, b});

  return {{"seed", c.seed},
          {"dataset", dataset},
          {"model",
           {{"kind", to_string(c.model.kind)},
            {"hidden_unary", c.model.hidden_unary},
            {"hidden_binary", c.model.hidden_binary},
            {"fan_in", c.model.fan_in},
            {"slices", c.model.slices}}},
          {"kb", kb},
          {"training", training},
          {"eval", {{"tasks", tasks}, {"n", c.eval.n}, {"equivalences", eq}}},
          {"params", {{"input_dim", c.params.input_dim}, {"predicates", c.params.predicates}}}};
}

std::string read_file(const fs::path& path, const std::string& field) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error(field, "cannot read file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir,
                              const std::vector<std::string>& overrides) {
  json doc = json::parse(text, nullptr, false, true);
  if (doc.is_discarded()) config_error("config", "not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);

  const Section root(doc, "");
  root.allow({"seed", "dataset", "model", "kb", "training", "eval", "params"});
  ExperimentConfig c;
  c.seed = root.get<std::uint64_t>("seed", c.seed);

  if (root.has("dataset")) {
    const Section d = root.child("dataset");
    d.allow({"synthetic", "path", "split", "drop_train_triples"});
    if (d.has("synthetic") == d.has("path")) {
      config_error("dataset", "set exactly one of dataset.synthetic and dataset.path");
    }
    if (d.has("synthetic")) c.dataset.synthetic = parse_synthetic(d.child("synthetic"));
    if (d.has("path")) c.dataset.path = resolve(base_dir, d.get<std::string>("path", ""));
    c.dataset.drop_train_triples = d.get<double>("drop_train_triples", 0.0);
    if (c.dataset.drop_train_triples < 0.0 || c.dataset.drop_train_triples >= 1.0) {
      config_error(d.field("drop_train_triples"), "must lie in [0, 1)");
    }
    if (d.has("split")) {
      const Section s = d.child("split");
      s.allow({"kind", "held_out", "test_fraction", "manifest"});
      const std::string kind = s.get<std::string>("kind", "zero_shot");
      if (kind == "zero_shot") {
        c.dataset.split.kind = SplitKind::zero_shot;
      } else if (kind == "random") {
        c.dataset.split.kind = SplitKind::random;
      } else if (kind == "manifest") {
        c.dataset.split.kind = SplitKind::manifest;
      } else {
        config_error(s.field("kind"), "expected zero_shot, random or manifest");
      }
      c.dataset.split.held_out = s.get<std::size_t>("held_out", c.dataset.split.held_out);
      c.dataset.split.test_fraction = s.get<double>("test_fraction", c.dataset.split.test_fraction);
      if (c.dataset.split.test_fraction < 0.0 || c.dataset.split.test_fraction >= 1.0) {
        config_error(s.field("test_fraction"), "must lie in [0, 1)");
      }
      if (s.has("manifest")) c.dataset.split.manifest = resolve(base_dir, s.get<std::string>("manifest", ""));
      if (c.dataset.split.kind == SplitKind::manifest && c.dataset.split.manifest.empty()) {
        config_error(s.field("manifest"), "required when kind is manifest");
      }
    }
  }

  if (root.has("model")) {
    const Section m = root.child("model");
    m.allow({"kind", "hidden_unary", "hidden_binary", "fan_in", "slices"});
    c.model.kind = with_field(m.field("kind"), [&] {
      return parse_model_kind(m.get<std::string>("kind", to_string(c.model.kind)));
    });
    c.model.hidden_unary = m.get<std::size_t>("hidden_unary", c.model.hidden_unary);
    c.model.hidden_binary = m.get<std::size_t>("hidden_binary", c.model.hidden_binary);
    c.model.fan_in = m.get<std::size_t>("fan_in", c.model.fan_in);
    c.model.slices = m.get<std::size_t>("slices", c.model.slices);
    if (c.model.hidden_unary == 0) config_error(m.field("hidden_unary"), "must be >= 1");
    if (c.model.hidden_binary == 0) config_error(m.field("hidden_binary"), "must be >= 1");
    if (c.model.fan_in == 0) config_error(m.field("fan_in"), "must be >= 1");
    if (c.model.slices == 0) config_error(m.field("slices"), "must be >= 1");
  }

  if (root.has("kb")) {
    const Section k = root.child("kb");
    k.allow({"mode", "constraints", "constraints_file", "negative_rate"});
    c.kb.mode = with_field(k.field("mode"), [&] {
      return parse_kb_mode(k.get<std::string>("mode", to_string(c.kb.mode)));
    });
    c.kb.constraints = string_list(k, "constraints");
    if (k.has("constraints_file")) {
      c.kb.constraints_file = resolve(base_dir, k.get<std::string>("constraints_file", ""));
    }
    c.kb.negative_rate = k.get<double>("negative_rate", c.kb.negative_rate);
    if (!(c.kb.negative_rate > 0.0 && c.kb.negative_rate <= 1.0)) {
      config_error(k.field("negative_rate"), "must lie in (0, 1]");
    }
  }

  if (root.has("training")) {
    const Section t = root.child("training");
    t.allow({"epochs", "p", "lambda", "optimizer", "ftrl", "rmsprop", "epsilon_clamp", "batch_size",
             "log_every"});
    TrainingConfig& tc = c.training;
    tc.epochs = t.get<std::size_t>("epochs", tc.epochs);
    tc.p = t.get<int>("p", tc.p);
    tc.lambda = t.get<double>("lambda", tc.lambda);
    tc.optimizer = with_field(t.field("optimizer"), [&] {
      return parse_optimizer(t.get<std::string>("optimizer", to_string(tc.optimizer)));
    });
    tc.mean_clamp = t.get<double>("epsilon_clamp", tc.mean_clamp);
    tc.batch_size = t.get<std::size_t>("batch_size", tc.batch_size);
    tc.log_every = t.get<std::size_t>("log_every", tc.log_every);
    if (t.has("ftrl")) {
      const Section f = t.child("ftrl");
      f.allow({"learning_rate", "lr_power", "l1", "l2", "beta"});
      tc.ftrl.learning_rate = f.get<double>("learning_rate", tc.ftrl.learning_rate);
      tc.ftrl.lr_power = f.get<double>("lr_power", tc.ftrl.lr_power);
      tc.ftrl.l1 = f.get<double>("l1", tc.ftrl.l1);
      tc.ftrl.l2 = f.get<double>("l2", tc.ftrl.l2);
      tc.ftrl.beta = f.get<double>("beta", tc.ftrl.beta);
    }
    if (t.has("rmsprop")) {
      const Section r = t.child("rmsprop");
      r.allow({"learning_rate", "decay", "epsilon"});
      tc.rmsprop.learning_rate = r.get<double>("learning_rate", tc.rmsprop.learning_rate);
      tc.rmsprop.decay = r.get<double>("decay", tc.rmsprop.decay);
      tc.rmsprop.epsilon = r.get<double>("epsilon", tc.rmsprop.epsilon);
    }
    with_field("training", [&] {
      tc.validate();
      return 0;
    });
  }

  if (root.has("eval")) {
    const Section e = root.child("eval");
    e.allow({"tasks", "n", "equivalences"});
    if (e.has("tasks")) {
      c.eval.tasks.clear();
      for (const auto& name : string_list(e, "tasks")) {
        c.eval.tasks.push_back(with_field(e.field("tasks"), [&] { return parse_task(name); }));
      }
    }
    if (e.has("n")) {
      const json& arr = e.raw("n");
      if (!arr.is_array() || arr.empty()) config_error(e.field("n"), "expected a non-empty array");
      c.eval.n.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const int n = Section::as<int>(arr[i], e.field("n") + "[" + std::to_string(i) + "]");
        if (n <= 0) config_error(e.field("n"), "entries must be > 0");
        c.eval.n.push_back(n);
      }
    }
    if (e.has("equivalences")) {
      const json& arr = e.raw("equivalences");
      if (!arr.is_array()) config_error(e.field("equivalences"), "expected an array of pairs");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string where = e.field("equivalences") + "[" + std::to_string(i) + "]";
        if (!arr[i].is_array() || arr[i].size() != 2) config_error(where, "expected a pair of names");
        c.eval.equivalences.emplace_back(Section::as<std::string>(arr[i][0], where),
                                         Section::as<std::string>(arr[i][1], where));
      }
    }
  }

  if (root.has("params")) {
    const Section p = root.child("params");
    p.allow({"input_dim", "predicates"});
    c.params.input_dim = p.get<std::size_t>("input_dim", c.params.input_dim);
    c.params.predicates = p.get<std::size_t>("predicates", c.params.predicates);
    if (c.params.input_dim == 0) config_error(p.field("input_dim"), "must be >= 1");
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  if (!fs::exists(path)) config_error("config", "file not found: " + path.string());
  return parse_config(read_file(path, "config"), path.parent_path(), overrides);
}

std::string serialize_config(const ExperimentConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
  json doc = config_to_json(config);
  doc.erase("eval");
  doc.erase("params");
  return fnv1a_hex(doc.dump());
}

Dataset build_dataset(const ExperimentConfig& config) {
  if (config.dataset.synthetic) {
    Rng rng(mix_seed(config.seed, kDataTag));
    return generate_synthetic(rng, *config.dataset.synthetic);
  }
  if (config.dataset.path.empty()) {
    config_error("dataset", "set dataset.synthetic or dataset.path");
  }
  if (!fs::exists(config.dataset.path)) {
    config_error("dataset.path", "file not found: " + config.dataset.path.string());
  }
  return load_dataset(config.dataset.path);
}

PreparedData prepare_data(const ExperimentConfig& config) {
  return prepare_data(config, build_dataset(config));
}

PreparedData prepare_data(const ExperimentConfig& config, Dataset dataset) {
  validate(dataset);
  PreparedData data;
  const SplitSection& s = config.dataset.split;
  Rng rng(mix_seed(config.seed, kSplitTag));
  switch (s.kind) {
    case SplitKind::zero_shot:
      data.split = zero_shot_split(dataset.scenes, s.held_out, rng, s.test_fraction);
      break;
    case SplitKind::random:
      data.split = random_split(dataset.scenes.size(), s.test_fraction, rng);
      break;
    case SplitKind::manifest:
      if (!fs::exists(s.manifest)) {
        config_error("dataset.split.manifest", "file not found: " + s.manifest.string());
      }
      data.split = parse_split(read_file(s.manifest, "dataset.split.manifest"), dataset);
      break;
  }
  for (auto i : data.split.train) data.train_scenes.push_back(dataset.scenes[i]);
  for (auto i : data.split.test) data.test_scenes.push_back(dataset.scenes[i]);

  if (config.dataset.drop_train_triples > 0.0) {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t sc = 0; sc < data.train_scenes.size(); ++sc) {
      for (std::size_t t = 0; t < data.train_scenes[sc].triples.size(); ++t) all.emplace_back(sc, t);
    }
    Rng drop_rng(mix_seed(config.seed, kDropTag));
    for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[drop_rng.below(i)]);
    const auto drop = static_cast<std::size_t>(
        std::llround(config.dataset.drop_train_triples * static_cast<double>(all.size())));
    std::set<std::pair<std::size_t, std::size_t>> dropped(all.begin(), all.begin() + drop);
    for (std::size_t sc = 0; sc < data.train_scenes.size(); ++sc) {
      auto& triples = data.train_scenes[sc].triples;
      std::vector<Triple> kept;
      for (std::size_t t = 0; t < triples.size(); ++t) {
        if (!dropped.contains({sc, t})) kept.push_back(triples[t]);
      }
      triples = std::move(kept);
    }
  }
  data.dataset = std::move(dataset);
  return data;
}

KnowledgeBase build_kb(const ExperimentConfig& config, const PreparedData& data) {
  Signature signature(data.dataset.classes, data.dataset.predicates);
  signature.add_constants(data.train_scenes);
  Rng rng(mix_seed(config.seed, kExampleTag));
  auto examples = build_examples(data.train_scenes, signature, config.kb.negative_rate, rng);

  std::string text;
  for (const auto& line : config.kb.constraints) text += line + "\n";
  if (!config.kb.constraints_file.empty()) {
    if (!fs::exists(config.kb.constraints_file)) {
      config_error("kb.constraints_file", "file not found: " + config.kb.constraints_file.string());
    }
    text += read_file(config.kb.constraints_file, "kb.constraints_file");
  }
  auto constraints = parse_constraints(text, signature);
  return assemble_kb(signature, std::move(examples), std::move(constraints), config.kb.mode);
}

TrainOutcome run_training(const ExperimentConfig& config, const PreparedData& data,
                          const ProgressSink& sink) {
  const KnowledgeBase kb = build_kb(config, data);
  FeatureSchema schema;
  schema.class_dim = data.dataset.classes.size();
  GroundedTheory theory =
      GroundedTheory::create(kb.signature, schema, config.model, mix_seed(config.seed, kTheoryTag));
  theory.set_config_hash(config_hash(config));
  const FeatureProvider features(kb.signature, data.train_scenes);
  TrainingConfig training = config.training;
  training.seed = mix_seed(config.seed, kTrainTag);
  TrainingReport report = train(theory, kb, features, training, sink);
  return TrainOutcome{std::move(theory), std::move(report)};
}

MetricsReport evaluate_scenes(const ExperimentConfig& config, const PreparedData& data,
                              const TripleScorer& scorer) {
  const auto& predicates = data.dataset.predicates;
  Equivalences equivalences;
  for (const auto& [a, b] : config.eval.equivalences) {
    auto index = [&](const std::string& name) {
      auto it = std::find(predicates.begin(), predicates.end(), name);
      if (it == predicates.end()) config_error("eval.equivalences", "unknown predicate '" + name + "'");
      return static_cast<std::uint32_t>(it - predicates.begin());
    };
    equivalences.emplace_back(index(a), index(b));
  }
  const FrequencyPrior prior = FrequencyPrior::from_scenes(data.train_scenes, predicates.size());

  MetricsReport report;
  report.n = config.eval.n;
  for (auto task : config.eval.tasks) {
    std::vector<std::vector<PredictedTriple>> predictions;
    predictions.reserve(data.test_scenes.size());
    for (const auto& scene : data.test_scenes) {
      predictions.push_back(score_triples(scorer, scene, prior, task, equivalences));
    }
    MetricsRow row;
    row.task = task;
    for (int n : report.n) {
      row.recall.push_back(recall_at_n(predictions, data.test_scenes, n, task));
      if (!data.split.unseen.empty()) {
        row.zero_shot.push_back(
            zero_shot_recall(predictions, data.test_scenes, data.split.unseen, n, task));
      }
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

MetricsReport run_evaluation(const ExperimentConfig& config, const PreparedData& data,
                             const GroundedTheory& theory) {
  require(theory.signature().unary_names() == data.dataset.classes &&
              theory.signature().binary_names() == data.dataset.predicates,
          ErrorKind::compatibility, "checkpoint predicates do not match the dataset vocabulary");
  require(theory.schema().class_dim == data.dataset.classes.size(), ErrorKind::compatibility,
          "checkpoint feature dimension does not match the dataset");
  const TheoryScorer scorer(theory);
  return evaluate_scenes(config, data, scorer);
}

namespace {

std::string fixed(double x, int precision = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << x;
  return out.str();
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::vector<std::string> header_columns(const std::vector<int>& ns, bool zero_shot) {
  std::vector<std::string> cols{"task"};
  for (int n : ns) cols.push_back("R@" + std::to_string(n));
  if (zero_shot) {
    for (int n : ns) cols.push_back("ZS-R@" + std::to_string(n));
  }
  return cols;
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size() + 2);
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) line += pad(row[i], width[i]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace

std::string format_report(const MetricsReport& report, const std::string& title) {
  const bool zs = std::any_of(report.rows.begin(), report.rows.end(),
                              [](const MetricsRow& r) { return !r.zero_shot.empty(); });
  std::vector<std::vector<std::string>> rows{header_columns(report.n, zs)};
  for (const auto& r : report.rows) {
    std::vector<std::string> row{to_string(r.task)};
    for (double v : r.recall) row.push_back(fixed(v));
    if (zs) {
      for (std::size_t i = 0; i < report.n.size(); ++i) {
        row.push_back(r.zero_shot.empty() ? "-" : fixed(r.zero_shot[i]));
      }
    }
    rows.push_back(std::move(row));
  }
  return "# " + title + "\n" + render_table(rows);
}

std::string format_repeats(const std::vector<MetricsReport>& runs, const std::string& title) {
  require(!runs.empty(), ErrorKind::invalid_argument, "no runs to summarise");
  const MetricsReport& first = runs.front();
  const bool zs = !first.rows.empty() && !first.rows.front().zero_shot.empty();
  auto summary = [&](const std::function<double(const MetricsReport&)>& pick) {
    double mean = 0.0;
    for (const auto& r : runs) mean += pick(r);
    mean /= static_cast<double>(runs.size());
    double var = 0.0;
    for (const auto& r : runs) var += (pick(r) - mean) * (pick(r) - mean);
    const double sd = runs.size() > 1 ? std::sqrt(var / static_cast<double>(runs.size() - 1)) : 0.0;
    return fixed(mean) + " +/- " + fixed(2.0 * sd);
  };
  std::vector<std::vector<std::string>> rows{header_columns(first.n, zs)};
  for (std::size_t t = 0; t < first.rows.size(); ++t) {
    std::vector<std::string> row{to_string(first.rows[t].task)};
    for (std::size_t i = 0; i < first.n.size(); ++i) {
      row.push_back(summary([&](const MetricsReport& r) { return r.rows.at(t).recall.at(i); }));
    }
    if (zs) {
      for (std::size_t i = 0; i < first.n.size(); ++i) {
        row.push_back(summary([&](const MetricsReport& r) { return r.rows.at(t).zero_shot.at(i); }));
      }
    }
    rows.push_back(std::move(row));
  }
  return "# " + title + " (" + std::to_string(runs.size()) + " runs, mean +/- 2 SD)\n" +
         render_table(rows);
}

std::string format_ratio(std::size_t a, std::size_t b) {
  require(a > 0, ErrorKind::invalid_argument, "ratio with a zero left-hand side");
  const auto r = std::llround(static_cast<double>(b) / static_cast<double>(a));
  return std::to_string(a) + ":" + std::to_string(b) + " (~1:" + std::to_string(r) + ")";
}

std::string params_report(const ExperimentConfig& config) {
  const std::size_t in = config.params.input_dim;
  const std::size_t count = config.params.predicates;
  const std::size_t hidden = config.model.hidden_unary;
  const std::size_t k = config.model.slices;
  const ParamCounts ntn = ntn_param_counts(in, k);
  const ParamCounts rwfn = rwfn_param_counts(in, hidden);

  const GroundingShape rwfn_shape{ModelKind::rwfn, in, hidden, count};
  const GroundingShape ntn_shape{ModelKind::ntn, in, k, count};
  const std::size_t shared = theory_space(std::span(&rwfn_shape, 1), true);
  const std::size_t unshared = theory_space(std::span(&rwfn_shape, 1), false);
  const std::size_t ntn_space = theory_space(std::span(&ntn_shape, 1), false);

  std::vector<std::vector<std::string>> rows{{"model", "total", "learnable"},
                                             {"ntn", std::to_string(ntn.total), std::to_string(ntn.learnable)},
                                             {"rwfn", std::to_string(rwfn.total), std::to_string(rwfn.learnable)}};
  std::vector<std::vector<std::string>> space{{"theory", "space"},
                                              {"rwfn_ws", std::to_string(shared)},
                                              {"rwfn", std::to_string(unshared)},
                                              {"ntn", std::to_string(ntn_space)}};
  std::ostringstream out;
  out << "# parameter accounting: input dim " << in << ", B " << hidden << ", k " << k << ", "
      << count << " predicates\n"
      << render_table(rows) << render_table(space)
      << "learnable ratio rwfn:ntn " << format_ratio(rwfn.learnable, ntn.learnable) << "\n"
      << "space ratio rwfn_ws:ntn " << format_ratio(shared, ntn_space) << "\n";
  return out.str();
}

}  // namespace rwfn
