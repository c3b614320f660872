#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rwfn/error.hpp"
#include "rwfn/fuzzy_logic.hpp"
#include "rwfn/groundings.hpp"
#include "rwfn/knowledge_base.hpp"
#include "rwfn/scene_data.hpp"

namespace rwfn {

enum class OptimizerKind { ftrl, rmsprop };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct FtrlConfig {
  double learning_rate = 1.0;
  double lr_power = -0.5;
  double l1 = 0.0;
  double l2 = 0.0;
  double beta = 1.0;
};

struct RmspropConfig {
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
};

struct TrainingConfig {
  std::size_t epochs = 10000;
  int p = -1;
  double lambda = 1e-10;
  OptimizerKind optimizer = OptimizerKind::ftrl;
  FtrlConfig ftrl;
  RmspropConfig rmsprop;
  std::uint64_t seed = 0;
  double mean_clamp = kDefaultMeanClamp;
  // 0 trains on the full knowledge base every step.
  std::size_t batch_size = 0;
  std::size_t log_every = 100;

  void validate() const;
};

// Per-coordinate FTRL-proximal accumulators.
struct FtrlState {
  explicit FtrlState(std::size_t size) : z(size, 0.0), n(size, 0.0) {}
  std::vector<double> z;
  std::vector<double> n;
};

// One FTRL-proximal step. loss_gradient is the gradient of the quantity being
// minimised; train() passes the negated objective gradient.
void ftrl_step(FtrlState& state, std::span<double> params, std::span<const double> loss_gradient,
               const FtrlConfig& config);

struct RmspropState {
  explicit RmspropState(std::size_t size) : v(size, 0.0) {}
  std::vector<double> v;
};

// Ascent step on the objective gradient g:
// v' = decay v + (1 - decay) g^2, w' = w + lr g / sqrt(v' + eps).
void rmsprop_step(RmspropState& state, std::span<double> params,
                  std::span<const double> objective_gradient, const RmspropConfig& config);

// Resolves atoms over the constants of a signature to feature vectors.
class FeatureProvider {
 public:
  // Keeps a reference to scenes; the caller keeps them alive.
  FeatureProvider(const Signature& signature, const std::vector<SceneAnnotation>& scenes);

  // Unary features for arity 1, pair features for arity 2.
  Vector input(const Atom& atom) const;

 private:
  const Signature& signature_;
  const std::vector<SceneAnnotation>& scenes_;
};

// The generalized-mean satisfiability of a formula set minus lambda ||theta||^2,
// as a function of the theory's learnable parameter vector. Encoded features
// are computed once at construction.
class Objective {
 public:
  Objective(const GroundedTheory& theory, const std::vector<Formula>& formulas,
            const FeatureProvider& features, const TrainingConfig& config);

  struct Value {
    double objective = 0.0;
    double satisfiability = 0.0;
  };

  std::size_t formula_count() const { return roots_.size(); }
  std::size_t parameter_count() const { return parameter_count_; }

  // gradient (if non-empty) receives d objective / d theta. batch selects a
  // subset of formulas; empty means all.
  Value evaluate(std::span<const double> theta, std::span<double> gradient = {},
                 std::span<const std::uint32_t> batch = {}) const;

  std::vector<double> formula_degrees(std::span<const double> theta) const;

 private:
  struct AtomEntry {
    PredicateId predicate;
    std::size_t param_offset;
    std::size_t param_size;
    std::size_t feature_offset;
    std::size_t feature_size;
    bool ntn;
    std::size_t ntn_input_dim;
    std::size_t ntn_slices;
  };
  struct Node {
    Formula::Kind kind;
    std::uint32_t first;   // atom index, or child node index
    std::uint32_t second;  // second child node index
  };

  std::uint32_t compile(const Formula& f, const std::map<Atom, std::uint32_t>& atom_index);
  double atom_score(const AtomEntry& a, std::span<const double> theta, std::span<double> grad) const;

  std::vector<AtomEntry> atoms_;
  std::vector<double> feature_pool_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> roots_;
  std::vector<std::uint32_t> formula_begin_;
  std::size_t parameter_count_ = 0;
  int p_;
  double lambda_;
  double clamp_;
};

TruthDegree satisfiability(const GroundedTheory& theory, const std::vector<Formula>& batch,
                      const FeatureProvider& features, const TrainingConfig& config);
double objective(const GroundedTheory& theory, const std::vector<Formula>& batch,
                 const FeatureProvider& features, const TrainingConfig& config);

struct TraceRecord {
  std::size_t epoch = 0;
  double objective = 0.0;
  double satisfiability = 0.0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct TrainingReport {
  std::vector<TraceRecord> trace;
  double initial_satisfiability = 0.0;
  double final_satisfiability = 0.0;
  std::size_t epochs_run = 0;
};

// Thrown when the objective or its gradient stops being finite. The theory is
// left holding the last parameters with a finite objective.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& message, TrainingReport report)
      : Error(ErrorKind::numeric, message), report_(std::move(report)) {}
  const TrainingReport& report() const { return report_; }

 private:
  TrainingReport report_;
};

using ProgressSink = std::function<void(const TraceRecord&)>;

// Maximises the objective over the knowledge base. RWFN theories only move
// their decoders; NTN theories move every parameter.
TrainingReport train(GroundedTheory& theory, const KnowledgeBase& kb,
                     const FeatureProvider& features, const TrainingConfig& config,
                     const ProgressSink& sink = {});

// One JSON object per line: {"epoch":..,"objective":..,"satisfiability":..}
std::string serialize_trace(const std::vector<TraceRecord>& trace);

}  // namespace rwfn
