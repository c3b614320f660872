#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "rwfn/error.hpp"
#include "rwfn/experiment.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kConfig = 2,
  kNumeric = 3,
  kCompatibility = 4,
  kData = 5,
};

int exit_code(rwfn::ErrorKind kind) {
  switch (kind) {
    case rwfn::ErrorKind::config: return kConfig;
    case rwfn::ErrorKind::numeric: return kNumeric;
    case rwfn::ErrorKind::compatibility: return kCompatibility;
    case rwfn::ErrorKind::parse:
    case rwfn::ErrorKind::schema:
    case rwfn::ErrorKind::io:
    case rwfn::ErrorKind::split:
    case rwfn::ErrorKind::lookup:
    case rwfn::ErrorKind::consistency: return kData;
    default: return kOther;
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("rwfn");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("RWFN_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  rwfn::require(static_cast<bool>(out), rwfn::ErrorKind::io, "cannot write " + path.string());
  out << text;
  rwfn::require(static_cast<bool>(out), rwfn::ErrorKind::io, "failed writing " + path.string());
}

rwfn::ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return rwfn::parse_config("{}", {}, overrides);
  return rwfn::load_config(path, overrides);
}

void emit(const std::string& text, const std::string& out) {
  std::cout << text;
  if (!out.empty()) write_file(out, text);
}

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::string out_dir = "run";
  std::string checkpoint;
  std::string dataset;
  int repeats = 1;
};

int cmd_gen_data(const Options& o) {
  const auto cfg = load(o.config, o.overrides);
  rwfn::require(cfg.dataset.synthetic.has_value(), rwfn::ErrorKind::config,
                "dataset.synthetic: gen-data needs a synthetic dataset section");
  const rwfn::Dataset ds = rwfn::build_dataset(cfg);
  write_file(o.out, rwfn::serialize_dataset(ds));
  spdlog::info("wrote {} scenes to {}", ds.scenes.size(), o.out);
  return kOk;
}

rwfn::PreparedData prepare(const rwfn::ExperimentConfig& cfg, const std::string& dataset) {
  if (dataset.empty()) return rwfn::prepare_data(cfg);
  return rwfn::prepare_data(cfg, rwfn::load_dataset(dataset));
}

int cmd_split(const Options& o) {
  const auto cfg = load(o.config, o.overrides);
  const rwfn::PreparedData data = prepare(cfg, o.dataset);
  write_file(o.out, rwfn::serialize_split(data.split, data.dataset));
  spdlog::info("split: {} train, {} test scenes, {} unseen triple types", data.split.train.size(),
               data.split.test.size(), data.split.unseen.size());
  return kOk;
}

int cmd_train(const Options& o) {
  rwfn::require(o.repeats >= 1, rwfn::ErrorKind::config, "--repeats must be >= 1");
  const auto base = load(o.config, o.overrides);
  const fs::path dir(o.out_dir);
  std::vector<rwfn::MetricsReport> runs;
  for (int r = 0; r < o.repeats; ++r) {
    rwfn::ExperimentConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(r);
    const fs::path run_dir = o.repeats == 1 ? dir : dir / ("seed-" + std::to_string(cfg.seed));
    const rwfn::PreparedData data = prepare(cfg, o.dataset);
    spdlog::info("seed {}: {} training scenes, {} test scenes", cfg.seed, data.train_scenes.size(),
                 data.test_scenes.size());
    auto outcome = rwfn::run_training(cfg, data, [](const rwfn::TraceRecord& t) {
      spdlog::debug("epoch {} objective {:.6f} satisfiability {:.6f}", t.epoch, t.objective,
                    t.satisfiability);
    });
    spdlog::info("satisfiability {:.4f} -> {:.4f}", outcome.report.initial_satisfiability,
                 outcome.report.final_satisfiability);
    fs::create_directories(run_dir);
    rwfn::save_checkpoint(outcome.theory, run_dir / "checkpoint.json");
    write_file(run_dir / "trace.jsonl", rwfn::serialize_trace(outcome.report.trace));
    if (o.repeats > 1) {
      runs.push_back(rwfn::run_evaluation(cfg, data, outcome.theory));
      write_file(run_dir / "report.txt",
                 rwfn::format_report(runs.back(), "seed " + std::to_string(cfg.seed)));
    }
  }
  if (o.repeats > 1) emit(rwfn::format_repeats(runs, "recall"), (dir / "repeats.txt").string());
  return kOk;
}

int cmd_eval(const Options& o) {
  const auto cfg = load(o.config, o.overrides);
  const rwfn::GroundedTheory theory = rwfn::load_checkpoint(o.checkpoint);
  if (theory.config_hash() != rwfn::config_hash(cfg)) {
    spdlog::warn("checkpoint was trained with a different configuration");
  }
  const rwfn::PreparedData data = prepare(cfg, o.dataset);
  const rwfn::MetricsReport report = rwfn::run_evaluation(cfg, data, theory);
  emit(rwfn::format_report(report, "recall on " + std::to_string(data.test_scenes.size()) +
                                       " test scenes"),
       o.out);
  return kOk;
}

int cmd_params(const Options& o) {
  emit(rwfn::params_report(load(o.config, o.overrides)), o.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Random weighted feature networks vs logic tensor networks for relational learning"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("-c,--config", o.config, "Experiment config (JSON)");
    if (required) opt->required();
    cmd->add_option("--set", o.overrides, "Override a config key: key.path=value")->take_all();
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset");
  add_config(gen, true);
  gen->add_option("-o,--out", o.out, "Dataset file to write")->required();

  auto* split = app.add_subcommand("split", "Write the train/test split manifest");
  add_config(split, true);
  split->add_option("-d,--dataset", o.dataset, "Dataset file (overrides the config)");
  split->add_option("-o,--out", o.out, "Split manifest to write")->required();

  auto* train = app.add_subcommand("train", "Train a grounded theory and write a checkpoint");
  add_config(train, true);
  train->add_option("-d,--dataset", o.dataset, "Dataset file (overrides the config)");
  train->add_option("-o,--out-dir", o.out_dir, "Directory for checkpoint and trace")->capture_default_str();
  train->add_option("--repeats", o.repeats, "Train and evaluate this many consecutive seeds");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test scenes");
  add_config(eval, true);
  eval->add_option("-k,--checkpoint", o.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("-d,--dataset", o.dataset, "Dataset file (overrides the config)");
  eval->add_option("-o,--out", o.out, "Also write the report here");

  auto* params = app.add_subcommand("params", "Print parameter and space accounting");
  add_config(params, false);
  params->add_option("-o,--out", o.out, "Also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit 0; malformed command lines count as config errors.
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (split->parsed()) return cmd_split(o);
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (params->parsed()) return cmd_params(o);
  } catch (const rwfn::Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kOther;
  }
  return kOther;
}
