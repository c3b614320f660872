#include "rwfn/groundings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "rwfn/error.hpp"

namespace rwfn {

namespace {

void check_input(std::span<const double> v, std::size_t expected, const char* who) {
  require(v.size() == expected, ErrorKind::invalid_argument,
          std::string(who) + ": input has dimension " + std::to_string(v.size()) + ", expected " +
              std::to_string(expected));
}

}  // namespace

RwfnGrounding::RwfnGrounding(std::shared_ptr<const RandomEncoder> encoder, std::size_t arity)
    : encoder_(std::move(encoder)), arity_(arity) {
  require(encoder_ != nullptr, ErrorKind::invalid_argument, "rwfn grounding needs an encoder");
  require(arity_ == 1 || arity_ == 2, ErrorKind::invalid_argument, "arity must be 1 or 2");
  beta_.assign(encoder_->output_dim(), 0.0);
}

double RwfnGrounding::score(std::span<const double> v) const {
  check_input(v, input_dim(), "rwfn_score");
  const Vector h = encoder_->encode(v);
  return score_encoded(beta_, h);
}

double RwfnGrounding::score_encoded(std::span<const double> beta, std::span<const double> encoded,
                                    std::span<double> gradient) {
  const double y = sigmoid(dot(beta, encoded));
  if (!gradient.empty()) {
    const double dz = y * (1.0 - y);
    for (std::size_t i = 0; i < gradient.size(); ++i) gradient[i] = dz * encoded[i];
  }
  return y;
}

NtnGrounding::NtnGrounding(std::size_t input_dim, std::size_t slices, std::size_t arity)
    : input_dim_(input_dim), slices_(slices), arity_(arity) {
  require(input_dim_ >= 1, ErrorKind::invalid_argument, "ntn grounding needs input_dim >= 1");
  require(slices_ >= 1, ErrorKind::invalid_argument, "ntn grounding needs k >= 1");
  require(arity_ == 1 || arity_ == 2, ErrorKind::invalid_argument, "arity must be 1 or 2");
  params_.assign(param_size(input_dim_, slices_), 0.0);
}

NtnGrounding NtnGrounding::random(Rng& rng, std::size_t input_dim, std::size_t slices,
                                  std::size_t arity) {
  NtnGrounding g(input_dim, slices, arity);
  const double sd = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (auto& p : g.params_) p = sd * rng.normal();
  return g;
}

double NtnGrounding::score(std::span<const double> v) const {
  return forward(params_, input_dim_, slices_, v);
}

double NtnGrounding::forward(std::span<const double> params, std::size_t input_dim,
                             std::size_t slices, std::span<const double> v,
                             std::span<double> gradient) {
  check_input(v, input_dim, "ntn_score");
  require(params.size() == param_size(input_dim, slices), ErrorKind::invalid_argument,
          "ntn_score: parameter vector has the wrong size");
  require(gradient.empty() || gradient.size() == params.size(), ErrorKind::invalid_argument,
          "ntn_score: gradient has the wrong size");
  const std::size_t n = input_dim;
  const std::size_t tensor_at = slices;
  const std::size_t linear_at = tensor_at + slices * n * n;
  const std::size_t bias_at = linear_at + slices * n;

  Vector activations(slices);
  double z = 0.0;
  for (std::size_t i = 0; i < slices; ++i) {
    const double* w = params.data() + tensor_at + i * n * n;
    double s = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      double row = 0.0;
      for (std::size_t c = 0; c < n; ++c) row += w[a * n + c] * v[c];
      s += v[a] * row;
    }
    const double* lin = params.data() + linear_at + i * n;
    for (std::size_t a = 0; a < n; ++a) s += lin[a] * v[a];
    s += params[bias_at + i];
    activations[i] = std::tanh(s);
    z += params[i] * activations[i];
  }
  const double y = sigmoid(z);

  if (!gradient.empty()) {
    const double dz = y * (1.0 - y);
    for (std::size_t i = 0; i < slices; ++i) {
      gradient[i] = dz * activations[i];
      const double ds = dz * params[i] * (1.0 - activations[i] * activations[i]);
      double* gw = gradient.data() + tensor_at + i * n * n;
      for (std::size_t a = 0; a < n; ++a) {
        const double va = ds * v[a];
        for (std::size_t c = 0; c < n; ++c) gw[a * n + c] = va * v[c];
      }
      double* gl = gradient.data() + linear_at + i * n;
      for (std::size_t a = 0; a < n; ++a) gl[a] = ds * v[a];
      gradient[bias_at + i] = ds;
    }
  }
  return y;
}

std::size_t arity(const Grounding& g) {
  return std::visit([](const auto& x) { return x.arity(); }, g);
}

std::size_t input_dim(const Grounding& g) {
  return std::visit([](const auto& x) { return x.input_dim(); }, g);
}

std::span<double> params(Grounding& g) {
  return std::visit([](auto& x) { return x.params(); }, g);
}

std::span<const double> params(const Grounding& g) {
  return std::visit([](const auto& x) { return x.params(); }, g);
}

double score(const Grounding& g, std::span<const double> v) {
  return std::visit([&](const auto& x) { return x.score(v); }, g);
}

ParamCounts ntn_param_counts(std::size_t input_dim, std::size_t slices) {
  require(input_dim >= 1 && slices >= 1, ErrorKind::invalid_argument,
          "ntn parameter count needs input_dim >= 1 and k >= 1");
  const std::size_t n = (input_dim * input_dim + input_dim + 2) * slices;
  return {n, n};
}

ParamCounts rwfn_param_counts(std::size_t input_dim, std::size_t hidden) {
  require(input_dim >= 1 && hidden >= 1, ErrorKind::invalid_argument,
          "rwfn parameter count needs input_dim >= 1 and B >= 1");
  return {(2 * input_dim + 3) * hidden, 2 * hidden};
}

ParamCounts param_counts(const Grounding& g) {
  if (const auto* r = std::get_if<RwfnGrounding>(&g)) {
    return rwfn_param_counts(r->input_dim(), r->encoder().hidden());
  }
  const auto& n = std::get<NtnGrounding>(g);
  return ntn_param_counts(n.input_dim(), n.slices());
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::rwfn: return "rwfn";
    case ModelKind::rwfn_ws: return "rwfn_ws";
    case ModelKind::ntn: return "ntn";
  }
  return "rwfn";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "rwfn") return ModelKind::rwfn;
  if (name == "rwfn_ws") return ModelKind::rwfn_ws;
  if (name == "ntn") return ModelKind::ntn;
  fail(ErrorKind::invalid_argument, "unknown model kind '" + name + "' (expected rwfn, rwfn_ws or ntn)");
}

namespace {

constexpr std::uint64_t kSharedEncoderTag = 0x5348;
constexpr std::uint64_t kOwnEncoderTag = 0x4f574e00;
constexpr std::uint64_t kNtnInitTag = 0x4e544e00;

EncoderKey encoder_key(const ModelConfig& model, const FeatureSchema& schema, std::size_t arity,
                       std::uint64_t seed, PredicateId id) {
  const std::size_t in = schema.input_dim(arity);
  const std::uint64_t s = model.kind == ModelKind::rwfn_ws ? mix_seed(seed, kSharedEncoderTag + arity)
                                                           : mix_seed(seed, kOwnEncoderTag + id);
  return {arity, in, model.hidden(arity), s, std::min(model.fan_in, in)};
}

}  // namespace

GroundedTheory GroundedTheory::create(const Signature& signature, const FeatureSchema& schema,
                                      const ModelConfig& model, std::uint64_t seed) {
  require(schema.class_dim >= 1, ErrorKind::invalid_argument, "feature schema needs class_dim >= 1");
  require(model.fan_in >= 1, ErrorKind::invalid_argument, "fan_in must be >= 1");
  GroundedTheory t;
  t.signature_ = Signature(signature.unary_names(), signature.binary_names());
  t.schema_ = schema;
  t.model_ = model;
  t.seed_ = seed;
  t.registry_ = std::make_shared<EncoderRegistry>();
  for (PredicateId id = 0; id < t.signature_.predicate_count(); ++id) {
    const std::size_t ar = t.signature_.arity(id);
    if (model.kind == ModelKind::ntn) {
      Rng rng(mix_seed(seed, kNtnInitTag + id));
      t.groundings_.emplace_back(NtnGrounding::random(rng, schema.input_dim(ar), model.slices, ar));
    } else {
      require(model.hidden(ar) >= 1, ErrorKind::invalid_argument, "hidden size B must be >= 1");
      auto encoder = t.registry_->get_or_create(encoder_key(model, schema, ar, seed, id));
      t.groundings_.emplace_back(RwfnGrounding(std::move(encoder), ar));
    }
  }
  return t;
}

double GroundedTheory::score(PredicateId id, std::span<const double> v) const {
  return rwfn::score(grounding(id), v);
}

std::size_t GroundedTheory::learnable_size() const {
  std::size_t n = 0;
  for (const auto& g : groundings_) n += params(g).size();
  return n;
}

std::size_t GroundedTheory::param_offset(PredicateId id) const {
  require(id < groundings_.size(), ErrorKind::lookup, "unknown predicate id");
  std::size_t n = 0;
  for (PredicateId i = 0; i < id; ++i) n += params(groundings_[i]).size();
  return n;
}

std::vector<double> GroundedTheory::gather_params() const {
  std::vector<double> theta;
  theta.reserve(learnable_size());
  for (const auto& g : groundings_) {
    const auto p = params(g);
    theta.insert(theta.end(), p.begin(), p.end());
  }
  return theta;
}

void GroundedTheory::scatter_params(std::span<const double> theta) {
  require(theta.size() == learnable_size(), ErrorKind::invalid_argument,
          "scatter_params: parameter vector has the wrong size");
  std::size_t at = 0;
  for (auto& g : groundings_) {
    auto p = params(g);
    std::copy(theta.begin() + static_cast<std::ptrdiff_t>(at),
              theta.begin() + static_cast<std::ptrdiff_t>(at + p.size()), p.begin());
    at += p.size();
  }
}

std::vector<std::shared_ptr<const RandomEncoder>> GroundedTheory::distinct_encoders() const {
  std::vector<std::shared_ptr<const RandomEncoder>> out;
  std::set<const RandomEncoder*> seen;
  for (const auto& g : groundings_) {
    if (const auto* r = std::get_if<RwfnGrounding>(&g)) {
      if (seen.insert(&r->encoder()).second) out.push_back(r->shared_encoder());
    }
  }
  return out;
}

std::size_t theory_space(std::span<const GroundingShape> shapes, bool shared) {
  std::size_t total = 0;
  for (const auto& s : shapes) {
    if (s.count == 0) continue;
    if (s.kind == ModelKind::ntn) {
      total += ntn_param_counts(s.input_dim, s.hidden_or_slices).total * s.count;
    } else if (shared) {
      rwfn_param_counts(s.input_dim, s.hidden_or_slices);  // validates the shape
      total += 2 * s.input_dim * s.hidden_or_slices + s.hidden_or_slices +
               2 * s.hidden_or_slices * s.count;
    } else {
      total += rwfn_param_counts(s.input_dim, s.hidden_or_slices).total * s.count;
    }
  }
  return total;
}

std::size_t theory_space(const GroundedTheory& theory, bool shared) {
  // Group predicates by (arity, input dim, B) so each shared encoder is counted once.
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, GroundingShape> groups;
  std::size_t ntn_total = 0;
  for (PredicateId id = 0; id < theory.size(); ++id) {
    const auto& g = theory.grounding(id);
    if (const auto* r = std::get_if<RwfnGrounding>(&g)) {
      const std::size_t hidden = r->encoder().hidden();
      auto [it, inserted] = groups.try_emplace({r->arity(), r->input_dim(), hidden},
                                               GroundingShape{ModelKind::rwfn, r->input_dim(), hidden, 0});
      ++it->second.count;
    } else {
      ntn_total += param_counts(g).total;
    }
  }
  std::vector<GroundingShape> shapes;
  for (const auto& [_, s] : groups) shapes.push_back(s);
  return ntn_total + theory_space(shapes, shared);
}

// ---- checkpoints ----------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "rwfn-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

std::string serialize_checkpoint(const GroundedTheory& theory) {
  using json = nlohmann::ordered_json;
  json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  doc["config_hash"] = theory.config_hash();
  doc["trained"] = theory.trained();
  doc["seed"] = theory.seed();
  doc["model"] = {{"kind", to_string(theory.model().kind)},
                  {"hidden_unary", theory.model().hidden_unary},
                  {"hidden_binary", theory.model().hidden_binary},
                  {"fan_in", theory.model().fan_in},
                  {"slices", theory.model().slices}};
  doc["class_dim"] = theory.schema().class_dim;
  doc["unary"] = theory.signature().unary_names();
  doc["binary"] = theory.signature().binary_names();

  const auto encoders = theory.distinct_encoders();
  std::map<const RandomEncoder*, std::size_t> encoder_index;
  json jenc = json::array();
  for (const auto& e : encoders) {
    encoder_index[e.get()] = jenc.size();
    jenc.push_back({{"input_dim", e->input_dim()},
                    {"hidden", e->hidden()},
                    {"fan_in", e->fan_in()},
                    {"seed", e->seed()}});
  }
  doc["encoders"] = std::move(jenc);

  json preds = json::array();
  for (PredicateId id = 0; id < theory.size(); ++id) {
    const auto& g = theory.grounding(id);
    json jp;
    jp["name"] = theory.signature().name(id);
    jp["arity"] = arity(g);
    if (const auto* r = std::get_if<RwfnGrounding>(&g)) {
      jp["encoder"] = encoder_index.at(&r->encoder());
    } else {
      jp["slices"] = std::get<NtnGrounding>(g).slices();
    }
    const auto p = params(g);
    jp["params"] = std::vector<double>(p.begin(), p.end());
    preds.push_back(std::move(jp));
  }
  doc["predicates"] = std::move(preds);
  return doc.dump(1) + "\n";
}

GroundedTheory parse_checkpoint(const std::string& text) {
  using json = nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  require(doc.value("format", std::string()) == kCheckpointFormat, ErrorKind::parse,
          "checkpoint: format tag must be 'rwfn-checkpoint'");
  require(doc.value("version", 0) == kCheckpointVersion, ErrorKind::parse,
          "checkpoint: unsupported version");
  GroundedTheory t;
  try {
    const auto& m = doc.at("model");
    t.model_.kind = parse_model_kind(m.at("kind").get<std::string>());
    t.model_.hidden_unary = m.at("hidden_unary").get<std::size_t>();
    t.model_.hidden_binary = m.at("hidden_binary").get<std::size_t>();
    t.model_.fan_in = m.at("fan_in").get<std::size_t>();
    t.model_.slices = m.at("slices").get<std::size_t>();
    t.seed_ = doc.at("seed").get<std::uint64_t>();
    t.schema_.class_dim = doc.at("class_dim").get<std::size_t>();
    t.signature_ = Signature(doc.at("unary").get<std::vector<std::string>>(),
                             doc.at("binary").get<std::vector<std::string>>());
    t.config_hash_ = doc.value("config_hash", std::string());
    t.trained_ = doc.value("trained", false);
    t.registry_ = std::make_shared<EncoderRegistry>();

    std::vector<EncoderKey> keys;
    for (const auto& e : doc.at("encoders")) {
      keys.push_back({0, e.at("input_dim").get<std::size_t>(), e.at("hidden").get<std::size_t>(),
                      e.at("seed").get<std::uint64_t>(), e.at("fan_in").get<std::size_t>()});
    }
    const auto& preds = doc.at("predicates");
    require(preds.size() == t.signature_.predicate_count(), ErrorKind::parse,
            "checkpoint: predicate list does not match signature");
    for (PredicateId id = 0; id < preds.size(); ++id) {
      const auto& jp = preds[id];
      const std::size_t ar = t.signature_.arity(id);
      require(jp.at("name").get<std::string>() == t.signature_.name(id) &&
                  jp.at("arity").get<std::size_t>() == ar,
              ErrorKind::parse, "checkpoint: predicate " + std::to_string(id) + " is inconsistent");
      const auto values = jp.at("params").get<std::vector<double>>();
      Grounding g = [&]() -> Grounding {
        if (t.model_.kind == ModelKind::ntn) {
          return NtnGrounding(t.schema_.input_dim(ar), jp.at("slices").get<std::size_t>(), ar);
        }
        EncoderKey key = keys.at(jp.at("encoder").get<std::size_t>());
        key.arity = ar;
        require(key.input_dim == t.schema_.input_dim(ar), ErrorKind::parse,
                "checkpoint: encoder input dimension does not match the feature schema");
        return RwfnGrounding(t.registry_->get_or_create(key), ar);
      }();
      auto p = params(g);
      require(values.size() == p.size(), ErrorKind::parse,
              "checkpoint: parameter count mismatch for predicate " + t.signature_.name(id));
      require_finite(values, "checkpoint parameters");
      std::copy(values.begin(), values.end(), p.begin());
      t.groundings_.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("checkpoint: ") + e.what());
  }
  return t;
}

void save_checkpoint(const GroundedTheory& theory, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write checkpoint " + path.string());
  out << serialize_checkpoint(theory);
}

GroundedTheory load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace rwfn
