#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rwfn/evaluation.hpp"
#include "rwfn/groundings.hpp"
#include "rwfn/knowledge_base.hpp"
#include "rwfn/scene_data.hpp"
#include "rwfn/training.hpp"

namespace rwfn {

enum class SplitKind { zero_shot, random, manifest };

struct SplitSection {
  SplitKind kind = SplitKind::zero_shot;
  std::size_t held_out = 3;
  double test_fraction = 0.3;
  std::filesystem::path manifest;
};

struct DatasetSection {
  // Exactly one of synthetic / path is set.
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path path;
  SplitSection split;
  // Fraction of training triples removed before building the knowledge base,
  // simulating incomplete annotation. Test scenes are untouched.
  double drop_train_triples = 0.0;
};

struct KbSection {
  KbMode mode = KbMode::prior;
  std::vector<std::string> constraints;
  std::filesystem::path constraints_file;
  double negative_rate = 0.1;
};

struct EvalSection {
  std::vector<Task> tasks{Task::predicate};
  std::vector<int> n{50, 100};
  std::vector<std::pair<std::string, std::string>> equivalences;
};

// Dimensions for the accounting table; defaults are the VRD setting.
struct ParamsSection {
  std::size_t input_dim = 105;
  std::size_t predicates = 100;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetSection dataset;
  ModelConfig model;
  KbSection kb;
  TrainingConfig training;
  EvalSection eval;
  ParamsSection params;
};

// Parses an experiment config (JSON). Relative paths resolve against
// base_dir. Errors are config errors naming the offending field.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {},
                              const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});
std::string serialize_config(const ExperimentConfig& config);

// Stable hex digest of everything that influences training.
std::string config_hash(const ExperimentConfig& config);

struct PreparedData {
  Dataset dataset;
  SceneSplit split;
  std::vector<SceneAnnotation> train_scenes;
  std::vector<SceneAnnotation> test_scenes;
};

Dataset build_dataset(const ExperimentConfig& config);
PreparedData prepare_data(const ExperimentConfig& config);
PreparedData prepare_data(const ExperimentConfig& config, Dataset dataset);

KnowledgeBase build_kb(const ExperimentConfig& config, const PreparedData& data);

struct TrainOutcome {
  GroundedTheory theory;
  TrainingReport report;
};

TrainOutcome run_training(const ExperimentConfig& config, const PreparedData& data,
                          const ProgressSink& sink = {});

struct MetricsRow {
  Task task = Task::predicate;
  std::vector<double> recall;
  std::vector<double> zero_shot;  // empty without unseen types
};

struct MetricsReport {
  std::vector<int> n;
  std::vector<MetricsRow> rows;
};

// Scores the test scenes with the scorer and the training-set frequency prior.
MetricsReport evaluate_scenes(const ExperimentConfig& config, const PreparedData& data,
                              const TripleScorer& scorer);
// Throws a compatibility error if the theory's predicates differ from the dataset's.
MetricsReport run_evaluation(const ExperimentConfig& config, const PreparedData& data,
                             const GroundedTheory& theory);

std::string format_report(const MetricsReport& report, const std::string& title);

// mean +- 2 SD over repeated runs with seeds seed, seed+1, ...
std::string format_repeats(const std::vector<MetricsReport>& runs, const std::string& title);

// Parameter counts per model, theory space with and without sharing, and the
// learnable and space ratios.
std::string params_report(const ExperimentConfig& config);

// "a:b (~1:r)" with r = b/a rounded to the nearest integer.
std::string format_ratio(std::size_t a, std::size_t b);

}  // namespace rwfn
