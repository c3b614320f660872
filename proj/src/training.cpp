#include "rwfn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "json.hpp"

namespace rwfn {

namespace {

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

void check_shapes(std::size_t params, std::size_t grads, const char* op) {
  require(params == grads, ErrorKind::invalid_argument,
          std::string(op) + ": parameter and gradient sizes differ (" + std::to_string(params) +
              " vs " + std::to_string(grads) + ")");
}

}  // namespace

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::ftrl ? "ftrl" : "rmsprop";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "ftrl") return OptimizerKind::ftrl;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  fail(ErrorKind::invalid_argument, "unknown optimizer '" + name + "' (expected ftrl or rmsprop)");
}

void TrainingConfig::validate() const {
  require(epochs >= 1, ErrorKind::invalid_argument, "training needs epochs >= 1");
  require(std::isfinite(lambda) && lambda >= 0.0, ErrorKind::invalid_argument,
          "training needs lambda >= 0");
  require(mean_clamp > 0.0 && mean_clamp < 1.0, ErrorKind::invalid_argument,
          "epsilon clamp must lie in (0, 1)");
  require(log_every >= 1, ErrorKind::invalid_argument, "log interval must be >= 1");
  if (optimizer == OptimizerKind::ftrl) {
    require(ftrl.learning_rate > 0.0, ErrorKind::invalid_argument, "ftrl learning rate must be > 0");
    require(ftrl.lr_power == -0.5, ErrorKind::invalid_argument,
            "ftrl learning-rate power other than -0.5 is not supported");
    require(ftrl.l1 >= 0.0 && ftrl.l2 >= 0.0, ErrorKind::invalid_argument,
            "ftrl l1 and l2 must be >= 0");
    require(ftrl.beta >= 0.0, ErrorKind::invalid_argument, "ftrl beta must be >= 0");
  } else {
    require(rmsprop.learning_rate > 0.0, ErrorKind::invalid_argument,
            "rmsprop learning rate must be > 0");
    require(rmsprop.decay >= 0.0 && rmsprop.decay < 1.0, ErrorKind::invalid_argument,
            "rmsprop decay must lie in [0, 1)");
    require(rmsprop.epsilon > 0.0, ErrorKind::invalid_argument, "rmsprop epsilon must be > 0");
  }
}

void ftrl_step(FtrlState& state, std::span<double> params, std::span<const double> loss_gradient,
               const FtrlConfig& config) {
  check_shapes(params.size(), loss_gradient.size(), "ftrl_step");
  check_shapes(params.size(), state.z.size(), "ftrl_step");
  check_shapes(params.size(), state.n.size(), "ftrl_step");
  require(config.learning_rate > 0.0, ErrorKind::invalid_argument, "ftrl learning rate must be > 0");
  const double alpha = config.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = loss_gradient[i];
    const double n_new = state.n[i] + g * g;
    const double sigma = (std::sqrt(n_new) - std::sqrt(state.n[i])) / alpha;
    const double z_new = state.z[i] + g - sigma * params[i];
    state.n[i] = n_new;
    state.z[i] = z_new;
    if (std::abs(z_new) <= config.l1) {
      params[i] = 0.0;
    } else {
      const double sign = z_new < 0.0 ? -1.0 : 1.0;
      params[i] = -(z_new - sign * config.l1) / ((config.beta + std::sqrt(n_new)) / alpha + config.l2);
    }
  }
}

void rmsprop_step(RmspropState& state, std::span<double> params,
                  std::span<const double> objective_gradient, const RmspropConfig& config) {
  check_shapes(params.size(), objective_gradient.size(), "rmsprop_step");
  check_shapes(params.size(), state.v.size(), "rmsprop_step");
  require(config.decay >= 0.0 && config.decay < 1.0, ErrorKind::invalid_argument,
          "rmsprop decay must lie in [0, 1)");
  require(config.learning_rate > 0.0 && config.epsilon > 0.0, ErrorKind::invalid_argument,
          "rmsprop learning rate and epsilon must be > 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = objective_gradient[i];
    state.v[i] = config.decay * state.v[i] + (1.0 - config.decay) * g * g;
    params[i] += config.learning_rate * g / std::sqrt(state.v[i] + config.epsilon);
  }
}

FeatureProvider::FeatureProvider(const Signature& signature,
                                 const std::vector<SceneAnnotation>& scenes)
    : signature_(signature), scenes_(scenes) {
  require(signature.scene_count() == scenes.size(), ErrorKind::invalid_argument,
          "feature provider: signature covers " + std::to_string(signature.scene_count()) +
              " scenes, got " + std::to_string(scenes.size()));
}

Vector FeatureProvider::input(const Atom& atom) const {
  const std::size_t arity = signature_.arity(atom.predicate);
  require(atom.args.size() == arity, ErrorKind::lookup,
          "atom of " + signature_.name(atom.predicate) + " has " +
              std::to_string(atom.args.size()) + " arguments, expected " + std::to_string(arity));
  const auto& constants = signature_.constants();
  for (auto c : atom.args) {
    require(c < constants.size(), ErrorKind::lookup, "unknown constant " + std::to_string(c));
  }
  const BoxRef first = constants[atom.args[0]];
  const SceneAnnotation& scene = scenes_[first.scene];
  if (arity == 1) return unary_features(scene.boxes[first.box], scene);
  const BoxRef second = constants[atom.args[1]];
  require(second.scene == first.scene, ErrorKind::lookup,
          "atom of " + signature_.name(atom.predicate) + " relates boxes of different scenes");
  return pair_features(scene.boxes[first.box], scene.boxes[second.box], scene);
}

Objective::Objective(const GroundedTheory& theory, const std::vector<Formula>& formulas,
                     const FeatureProvider& features, const TrainingConfig& config)
    : parameter_count_(theory.learnable_size()),
      p_(config.p),
      lambda_(config.lambda),
      clamp_(config.mean_clamp) {
  std::map<Atom, std::uint32_t> atom_index;
  // Encoded (RWFN) or raw (NTN) inputs, keyed by encoder identity and constants.
  std::map<std::pair<const void*, std::vector<std::uint32_t>>, std::size_t> feature_index;

  for (const auto& formula : formulas) {
    formula.for_each_atom([&](const Atom& atom) {
      if (atom_index.contains(atom)) return;
      const Grounding& g = theory.grounding(atom.predicate);
      require(arity(g) == atom.args.size(), ErrorKind::lookup,
              "atom arity does not match its predicate");
      AtomEntry entry{};
      entry.predicate = atom.predicate;
      entry.param_offset = theory.param_offset(atom.predicate);
      entry.param_size = params(g).size();
      const void* source = nullptr;
      if (const auto* ntn = std::get_if<NtnGrounding>(&g)) {
        entry.ntn = true;
        entry.ntn_input_dim = ntn->input_dim();
        entry.ntn_slices = ntn->slices();
      } else {
        source = &std::get<RwfnGrounding>(g).encoder();
      }
      auto key = std::make_pair(source, atom.args);
      auto it = feature_index.find(key);
      if (it == feature_index.end()) {
        Vector v = features.input(atom);
        if (source != nullptr) v = std::get<RwfnGrounding>(g).encoder().encode(v);
        it = feature_index.emplace(std::move(key), feature_pool_.size()).first;
        feature_pool_.insert(feature_pool_.end(), v.begin(), v.end());
      }
      entry.feature_offset = it->second;
      entry.feature_size = entry.ntn ? entry.ntn_input_dim : entry.param_size;
      atom_index.emplace(atom, static_cast<std::uint32_t>(atoms_.size()));
      atoms_.push_back(entry);
    });
    formula_begin_.push_back(static_cast<std::uint32_t>(nodes_.size()));
    roots_.push_back(compile(formula, atom_index));
  }
}

std::uint32_t Objective::compile(const Formula& f, const std::map<Atom, std::uint32_t>& atom_index) {
  Node node{f.kind(), 0, 0};
  if (f.kind() == Formula::Kind::atom) {
    node.first = atom_index.at(f.atom());
  } else {
    node.first = compile(f.children()[0], atom_index);
    if (f.children().size() > 1) node.second = compile(f.children()[1], atom_index);
  }
  nodes_.push_back(node);
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

double Objective::atom_score(const AtomEntry& a, std::span<const double> theta,
                             std::span<double> grad) const {
  const auto w = theta.subspan(a.param_offset, a.param_size);
  const std::span<const double> x(feature_pool_.data() + a.feature_offset, a.feature_size);
  if (a.ntn) return NtnGrounding::forward(w, a.ntn_input_dim, a.ntn_slices, x, grad);
  return RwfnGrounding::score_encoded(w, x, grad);
}

Objective::Value Objective::evaluate(std::span<const double> theta, std::span<double> gradient,
                                     std::span<const std::uint32_t> batch) const {
  require(theta.size() == parameter_count_, ErrorKind::invalid_argument,
          "objective: parameter vector has size " + std::to_string(theta.size()) + ", expected " +
              std::to_string(parameter_count_));
  require(gradient.empty() || gradient.size() == parameter_count_, ErrorKind::invalid_argument,
          "objective: gradient has the wrong size");
  std::vector<std::uint32_t> all;
  if (batch.empty()) {
    all.resize(roots_.size());
    std::iota(all.begin(), all.end(), 0u);
    batch = all;
  }
  require(!batch.empty(), ErrorKind::invalid_argument, "objective: empty formula batch");

  std::vector<double> atom_values(atoms_.size());
  for (std::size_t i = 0; i < atoms_.size(); ++i) atom_values[i] = atom_score(atoms_[i], theta, {});

  std::vector<double> values(nodes_.size(), 0.0);
  std::vector<double> degrees(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::uint32_t f = batch[b];
    require(f < roots_.size(), ErrorKind::invalid_argument, "objective: formula index out of range");
    for (std::uint32_t n = formula_begin_[f]; n <= roots_[f]; ++n) {
      const Node& node = nodes_[n];
      switch (node.kind) {
        case Formula::Kind::atom: values[n] = atom_values[node.first]; break;
        case Formula::Kind::negation: values[n] = lukasiewicz::negation(values[node.first]); break;
        case Formula::Kind::conjunction:
          values[n] = lukasiewicz::conjunction(values[node.first], values[node.second]);
          break;
        case Formula::Kind::disjunction:
          values[n] = lukasiewicz::disjunction(values[node.first], values[node.second]);
          break;
        case Formula::Kind::implication:
          values[n] = lukasiewicz::implication(values[node.first], values[node.second]);
          break;
      }
    }
    degrees[b] = values[roots_[f]];
  }

  std::vector<double> mean_grad(gradient.empty() ? 0 : degrees.size());
  Value result;
  result.satisfiability = generalized_mean(degrees, p_, clamp_, mean_grad);
  result.objective = result.satisfiability - lambda_ * squared_norm(theta);
  if (gradient.empty()) return result;

  std::vector<double> adjoint(nodes_.size(), 0.0);
  std::vector<double> atom_adjoint(atoms_.size(), 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::uint32_t f = batch[b];
    adjoint[roots_[f]] = mean_grad[b];
    for (std::uint32_t n = roots_[f] + 1; n-- > formula_begin_[f];) {
      const Node& node = nodes_[n];
      const double up = adjoint[n];
      adjoint[n] = 0.0;
      if (up == 0.0) continue;
      switch (node.kind) {
        case Formula::Kind::atom: atom_adjoint[node.first] += up; break;
        case Formula::Kind::negation: adjoint[node.first] -= up; break;
        default: {
          const auto d = lukasiewicz::partials(to_connective(node.kind), values[node.first],
                                               values[node.second]);
          adjoint[node.first] += d[0] * up;
          adjoint[node.second] += d[1] * up;
        }
      }
    }
  }

  for (std::size_t i = 0; i < parameter_count_; ++i) gradient[i] = -2.0 * lambda_ * theta[i];
  std::vector<double> scratch;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    const double up = atom_adjoint[i];
    if (up == 0.0) continue;
    const AtomEntry& a = atoms_[i];
    auto out = gradient.subspan(a.param_offset, a.param_size);
    if (a.ntn) {
      scratch.assign(a.param_size, 0.0);
      atom_score(a, theta, scratch);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += up * scratch[j];
    } else {
      const double y = atom_values[i];
      const double scale = up * y * (1.0 - y);
      const double* h = feature_pool_.data() + a.feature_offset;
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += scale * h[j];
    }
  }
  return result;
}

std::vector<double> Objective::formula_degrees(std::span<const double> theta) const {
  std::vector<double> atom_values(atoms_.size());
  for (std::size_t i = 0; i < atoms_.size(); ++i) atom_values[i] = atom_score(atoms_[i], theta, {});
  std::vector<double> values(nodes_.size(), 0.0);
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const Node& node = nodes_[n];
    if (node.kind == Formula::Kind::atom) {
      values[n] = atom_values[node.first];
    } else if (node.kind == Formula::Kind::negation) {
      values[n] = lukasiewicz::negation(values[node.first]);
    } else {
      const TruthDegree operands[] = {TruthDegree(values[node.first]),
                                      TruthDegree(values[node.second])};
      values[n] = eval_connective(to_connective(node.kind), operands).value();
    }
  }
  std::vector<double> degrees;
  degrees.reserve(roots_.size());
  for (auto r : roots_) degrees.push_back(values[r]);
  return degrees;
}

TruthDegree satisfiability(const GroundedTheory& theory, const std::vector<Formula>& batch,
                           const FeatureProvider& features, const TrainingConfig& config) {
  require(!batch.empty(), ErrorKind::invalid_argument, "satisfiability of an empty batch");
  const Objective obj(theory, batch, features, config);
  return TruthDegree(obj.evaluate(theory.gather_params()).satisfiability);
}

double objective(const GroundedTheory& theory, const std::vector<Formula>& batch,
                 const FeatureProvider& features, const TrainingConfig& config) {
  require(!batch.empty(), ErrorKind::invalid_argument, "objective of an empty batch");
  const Objective obj(theory, batch, features, config);
  return obj.evaluate(theory.gather_params()).objective;
}

TrainingReport train(GroundedTheory& theory, const KnowledgeBase& kb,
                     const FeatureProvider& features, const TrainingConfig& config,
                     const ProgressSink& sink) {
  config.validate();
  require(theory.signature().same_predicates(kb.signature), ErrorKind::compatibility,
          "knowledge base and theory use different predicates");
  const std::vector<Formula> formulas = kb.formulas();
  require(!formulas.empty(), ErrorKind::invalid_argument, "cannot train on an empty knowledge base");

  const Objective obj(theory, formulas, features, config);
  std::vector<double> theta = theory.gather_params();
  std::vector<double> last_good = theta;
  std::vector<double> grad(theta.size(), 0.0);
  std::vector<double> loss_grad(theta.size(), 0.0);
  FtrlState ftrl(theta.size());
  RmspropState rms(theta.size());

  TrainingReport report;
  auto record = [&](std::size_t epoch, const Objective::Value& v) {
    TraceRecord r{epoch, v.objective, v.satisfiability};
    report.trace.push_back(r);
    if (sink) sink(r);
  };
  auto abort = [&](std::size_t epoch) {
    theory.scatter_params(last_good);
    report.epochs_run = epoch == 0 ? 0 : epoch - 1;
    throw TrainingAborted("objective became non-finite at epoch " + std::to_string(epoch) +
                              "; parameters restored to the last finite state",
                          report);
  };
  auto step = [&]() {
    if (config.optimizer == OptimizerKind::ftrl) {
      for (std::size_t i = 0; i < grad.size(); ++i) loss_grad[i] = -grad[i];
      ftrl_step(ftrl, theta, loss_grad, config.ftrl);
    } else {
      rmsprop_step(rms, theta, grad, config.rmsprop);
    }
  };

  const bool full_batch = config.batch_size == 0 || config.batch_size >= formulas.size();
  Objective::Value current = obj.evaluate(theta, grad);
  if (!std::isfinite(current.objective) || !all_finite(grad)) abort(0);
  report.initial_satisfiability = current.satisfiability;
  record(0, current);

  Rng rng(mix_seed(config.seed, 0x42415443));
  std::vector<std::uint32_t> order(formulas.size());
  std::iota(order.begin(), order.end(), 0u);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (full_batch) {
      step();
      current = obj.evaluate(theta, grad);
      if (!std::isfinite(current.objective) || !all_finite(grad)) abort(epoch);
    } else {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t len = std::min(config.batch_size, order.size() - start);
        const Objective::Value v =
            obj.evaluate(theta, grad, std::span<const std::uint32_t>(order).subspan(start, len));
        if (!std::isfinite(v.objective) || !all_finite(grad)) abort(epoch);
        step();
      }
      current = obj.evaluate(theta);
      if (!std::isfinite(current.objective) || !all_finite(theta)) abort(epoch);
    }
    last_good = theta;
    if (epoch % config.log_every == 0 || epoch == config.epochs) record(epoch, current);
  }

  theory.scatter_params(theta);
  theory.mark_trained();
  report.final_satisfiability = current.satisfiability;
  report.epochs_run = config.epochs;
  return report;
}

std::string serialize_trace(const std::vector<TraceRecord>& trace) {
  std::string out;
  for (const auto& r : trace) {
    nlohmann::ordered_json line;
    line["epoch"] = r.epoch;
    line["objective"] = r.objective;
    line["satisfiability"] = r.satisfiability;
    out += line.dump();
    out += '\n';
  }
  return out;
}

}  // namespace rwfn
