#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xfer/report.hpp"
#include "xfer/trainer.hpp"

namespace fs = std::filesystem;
using namespace xfer;

namespace {

struct ExperimentFlags {
  std::string config_path;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string init;
  bool quiet = false;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f, bool takes_init) {
  cmd->add_option("--config", f.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--preset", f.preset, "preset used when no --config is given")
      ->check(CLI::IsMember({"desk", "reference"}));
  cmd->add_option("--seed", f.seed, "seed for initialization and every phase");
  cmd->add_option("--output-dir", f.output_dir, "run directory");
  if (takes_init) cmd->add_option("--init", f.init, "encoder checkpoint to start from")->required()->check(CLI::ExistingFile);
  cmd->add_flag("--quiet", f.quiet, "no progress lines");
}

void reseed(trainer::ExperimentConfig& c, std::uint64_t seed) {
  c.seed = seed;
  if (c.pretrain.phase) c.pretrain.phase->seed = seed;
  if (c.intermediate) c.intermediate->phase.seed = seed;
  for (auto& t : c.targets)
    if (t.phase) t.phase->seed = seed;
}

trainer::ExperimentConfig load_config(const ExperimentFlags& f) {
  trainer::ExperimentConfig c = f.config_path.empty()
                                    ? trainer::preset(f.preset, f.seed.value_or(1))
                                    : trainer::experiment_config_from_json(nlohmann::json::parse(trainer::read_file(f.config_path)));
  if (f.seed) reseed(c, *f.seed);
  if (!f.output_dir.empty()) c.output_dir = f.output_dir;
  return c;
}

int run(trainer::ExperimentConfig c, const ExperimentFlags& f) {
  const auto result = trainer::run_experiment(c, f.quiet ? nullptr : &std::cerr);
  std::cout << (fs::path(c.output_dir) / "manifest.json").string() << " " << result.manifest_hash << "\n";
  return 0;
}

struct LoadedRun {
  std::string label;
  nlohmann::json manifest;
  std::string hash;
};

LoadedRun load_manifest(const std::string& path) {
  const std::string text = trainer::read_file(path);
  LoadedRun r{fs::path(path).parent_path().filename().string(), nlohmann::json::parse(text),
              hex64(fnv1a64(text))};
  if (r.label.empty()) r.label = fs::path(path).stem().string();
  if (r.manifest.value("status", std::string()) != "complete")
    throw ConfigError(path + ": run did not complete");
  return r;
}

std::vector<std::string> target_order(const nlohmann::json& manifest) {
  std::vector<std::string> order;
  for (const auto& t : manifest.at("config").at("targets")) order.push_back(t.at("task").get<std::string>());
  return order;
}

// Rows built from `split` records; tasks without records there fall back to test and are flagged.
report::BenchmarkRow benchmark_row(const LoadedRun& run, const std::string& split,
                                   const std::vector<std::string>& order) {
  auto results = report::task_results_from_records(trainer::manifest_records(run.manifest, split));
  if (split != "test") {
    for (auto& r : report::task_results_from_records(trainer::manifest_records(run.manifest, "test"))) {
      const bool have = std::any_of(results.begin(), results.end(), [&](const auto& x) { return x.task == r.task; });
      if (!have) {
        r.dev_fallback = true;
        results.push_back(std::move(r));
      }
    }
  }
  auto row = report::benchmark_average(run.label, results, order);
  row.provenance = {run.label, run.hash};
  return row;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intermediate-task transfer experiments on a synthetic multilingual world"};
  app.require_subcommand(1);

  ExperimentFlags gen_flags, pre_flags, inter_flags, target_flags, run_flags;
  auto* gen = app.add_subcommand("gen-data", "write the synthetic world to a directory");
  add_experiment_flags(gen, gen_flags, false);
  auto* pre = app.add_subcommand("pretrain", "MLM pretraining only");
  add_experiment_flags(pre, pre_flags, false);
  auto* inter = app.add_subcommand("intermediate", "intermediate-task training from a checkpoint");
  add_experiment_flags(inter, inter_flags, true);
  auto* target = app.add_subcommand("target", "target tasks from a checkpoint");
  add_experiment_flags(target, target_flags, true);
  auto* full = app.add_subcommand("run", "all phases of an experiment");
  add_experiment_flags(full, run_flags, false);
  std::string dump_config;
  full->add_option("--print-config", dump_config, "write the resolved config to this path and exit");

  auto* rep = app.add_subcommand("report", "delta table of runs against a baseline");
  std::string baseline_path, format = "plain", split = "test", out_path;
  std::vector<std::string> run_paths;
  rep->add_option("--baseline", baseline_path, "baseline manifest")->check(CLI::ExistingFile);
  rep->add_option("--runs", run_paths, "run manifests")->check(CLI::ExistingFile);
  rep->add_option("--format", format)->check(CLI::IsMember({"plain", "markdown", "data"}));
  rep->add_option("--split", split, "metric split")->check(CLI::IsMember({"dev", "test"}));
  rep->add_option("--output", out_path, "write here instead of stdout");
  auto* best = rep->add_subcommand("best", "per task, the test result of the run best on dev");
  std::vector<std::string> best_runs;
  best->add_option("--runs", best_runs, "run manifests")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto c = load_config(gen_flags);
      if (!c.world) throw ConfigError("gen-data needs a config with a world section");
      const fs::path dir = gen_flags.output_dir.empty() ? fs::path(c.output_dir) / "data" : fs::path(gen_flags.output_dir);
      corpus::gen_synthetic_world(*c.world).write(dir);
      std::cout << (dir / "world.json").string() << "\n";
      return 0;
    }
    if (*pre) {
      auto c = load_config(pre_flags);
      c.intermediate.reset();
      c.targets.clear();
      return run(c, pre_flags);
    }
    if (*inter) {
      auto c = load_config(inter_flags);
      if (!c.intermediate) throw ConfigError("config has no intermediate phase");
      c.pretrain.phase.reset();
      c.pretrain.checkpoint = inter_flags.init;
      c.targets.clear();
      return run(c, inter_flags);
    }
    if (*target) {
      auto c = load_config(target_flags);
      c.pretrain.phase.reset();
      c.pretrain.checkpoint = target_flags.init;
      c.intermediate.reset();
      return run(c, target_flags);
    }
    if (*full) {
      auto c = load_config(run_flags);
      if (!dump_config.empty()) {
        trainer::write_file(dump_config, trainer::to_json(c).dump(2) + "\n");
        return 0;
      }
      return run(c, run_flags);
    }

    std::string text;
    if (*best) {
      std::vector<LoadedRun> runs;
      for (const auto& p : best_runs) runs.push_back(load_manifest(p));
      const auto order = target_order(runs.front().manifest);
      std::vector<report::BenchmarkRow> dev_rows, test_rows;
      for (const auto& r : runs) {
        dev_rows.push_back(benchmark_row(r, "dev", order));
        test_rows.push_back(benchmark_row(r, "test", order));
      }
      const auto selection = report::select_best(dev_rows);
      std::ostringstream out;
      for (const auto& task : order) {
        const auto& s = selection.at(task);
        out << task << "\t" << s.label << "\t" << report::format_value(s.score) << (s.tie ? "\ttie" : "")
            << (s.dev_fallback ? "\tno-dev" : "") << "\n";
      }
      const auto row = report::best_models_row(selection, test_rows, order);
      out << "\n" << report::render(report::delta_table(row, {}), report::parse_render_format(format));
      text = out.str();
    } else {
      if (baseline_path.empty()) throw ConfigError("report needs --baseline");
      const auto base = load_manifest(baseline_path);
      const auto order = target_order(base.manifest);
      std::vector<report::BenchmarkRow> rows;
      for (const auto& p : run_paths) rows.push_back(benchmark_row(load_manifest(p), split, order));
      text = report::render(report::delta_table(benchmark_row(base, split, order), rows),
                            report::parse_render_format(format));
    }
    if (out_path.empty()) {
      std::cout << text;
    } else {
      trainer::write_file(out_path, text);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "xfer: " << e.what() << "\n";
    return 1;
  }
}
