#pragma once

#include <map>
#include <optional>
#include <string>

#include "xfer/trainer/config.hpp"

namespace xfer::trainer {

struct ReferenceHyperparameters {
  std::size_t batch_size;
  std::uint64_t num_epochs;
};

/// Intermediate-phase batch sizes and epochs of the reference setup.
inline const std::map<std::string, ReferenceHyperparameters>& reference_intermediate() {
  static const std::map<std::string, ReferenceHyperparameters> t = {
      {"anli", {24, 2}},     {"ccg", {24, 15}}, {"commonsenseqa", {4, 10}}, {"cosmosqa", {4, 15}},
      {"hellaswag", {24, 7}}, {"qqp", {24, 3}},  {"squad", {8, 3}},         {"multi", {24, 3}}};
  return t;
}

/// Target-phase batch sizes and epochs of the reference setup; retrieval
/// targets are absent because they are not trained.
inline const std::map<std::string, ReferenceHyperparameters>& reference_target() {
  static const std::map<std::string, ReferenceHyperparameters> t = {
      {"xnli", {4, 2}},    {"pawsx", {32, 5}}, {"xquad", {16, 2}}, {"mlqa", {16, 2}},
      {"tydiqa", {16, 2}}, {"pos", {32, 10}},  {"ner", {32, 10}}};
  return t;
}

inline constexpr double kReferenceIntermediateLr = 1e-5;
inline constexpr double kReferenceIntermediateMlmLr = 5e-6;
inline constexpr double kReferenceTargetLr = 3e-6;
inline constexpr std::size_t kReferenceMlmBatch = 8;

/// Synthetic task standing in for each reference task.
inline const std::map<std::string, std::string>& reference_analogue() {
  static const std::map<std::string, std::string> m = {
      {"paraphrase", "pawsx"}, {"wordclass", "pos"}, {"qa", "xquad"}, {"choice", "xnli"}};
  return m;
}

inline PhaseConfig reference_intermediate_phase(const std::string& reference_task, bool with_mlm,
                                                std::vector<std::string> tasks, std::uint64_t seed) {
  const auto& hp = reference_intermediate().at(reference_task);
  PhaseConfig p;
  p.tasks = std::move(tasks);
  p.include_mlm = with_mlm;
  p.learning_rate = with_mlm ? kReferenceIntermediateMlmLr : kReferenceIntermediateLr;
  p.batch_size = hp.batch_size;
  p.num_epochs = hp.num_epochs;
  p.early_stop.dev_subset_size = 500;
  p.seed = seed;
  return p;
}

inline std::optional<PhaseConfig> reference_target_phase(const std::string& reference_task, std::uint64_t seed) {
  auto it = reference_target().find(reference_task);
  if (it == reference_target().end()) return std::nullopt;
  PhaseConfig p;
  p.tasks = {reference_task};
  p.learning_rate = kReferenceTargetLr;
  p.batch_size = it->second.batch_size;
  p.num_epochs = it->second.num_epochs;
  p.early_stop.dev_subset_size = 500;
  p.seed = seed;
  return p;
}

/// The tested configuration: a 3-language synthetic world, a 2-layer
/// hidden-64 encoder, MLM pretraining, paraphrase intermediate training and
/// every synthetic target.
inline ExperimentConfig desk_preset(std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.seed = seed;
  c.world = corpus::SyntheticWorldConfig{};
  c.world->seed = 7;
  c.world->anchor_fraction = 0.8;
  c.world->preference_strength = 0.8;
  c.world->task_train_size = 8000;
  c.world->retrieval_size = 1000;
  c.model = model::EncoderConfig{};
  c.model.dropout = 0.1;

  PhaseConfig pre;
  pre.learning_rate = 4e-3;
  pre.batch_size = 128;
  pre.max_steps = 2000;
  pre.seed = seed;
  c.pretrain.phase = pre;

  PhaseConfig inter;
  inter.tasks = {"paraphrase"};
  inter.learning_rate = 1e-3;
  inter.batch_size = 32;
  inter.max_steps = 500;
  inter.early_stop = {300, 100, 0};
  inter.seed = seed;
  c.intermediate = IntermediateConfig{IntermediateVariant::single, inter};

  for (const std::string task : {"paraphrase", "wordclass", "qa", "choice"}) {
    PhaseConfig t;
    t.tasks = {task};
    t.learning_rate = 3e-4;
    t.batch_size = 32;
    t.max_steps = 300;
    t.early_stop = {300, 100, 0};
    t.seed = seed;
    c.targets.push_back({task, t});
  }
  c.targets.push_back({"tatoeba", std::nullopt});
  c.targets.push_back({"bucc", std::nullopt});
  c.extractor.layer_index = 1;
  c.output_dir = "runs/desk-" + std::to_string(seed);
  return c;
}

/// The desk world and model with the reference learning rates, batch sizes
/// and epoch counts, each synthetic task taking its analogue's settings.
inline ExperimentConfig reference_preset(std::uint64_t seed = 1) {
  ExperimentConfig c = desk_preset(seed);
  c.pretrain.phase->batch_size = kReferenceMlmBatch;
  c.intermediate->phase = reference_intermediate_phase("qqp", false, {"paraphrase"}, seed);
  for (auto& t : c.targets) {
    auto it = reference_analogue().find(t.task);
    if (it == reference_analogue().end()) continue;
    t.phase = reference_target_phase(it->second, seed);
    t.phase->tasks = {t.task};
  }
  c.output_dir = "runs/reference-" + std::to_string(seed);
  return c;
}

inline ExperimentConfig preset(const std::string& name, std::uint64_t seed) {
  if (name == "desk") return desk_preset(seed);
  if (name == "reference") return reference_preset(seed);
  throw ConfigError("unknown preset '" + name + "' (reference|desk)");
}

}  // namespace xfer::trainer
