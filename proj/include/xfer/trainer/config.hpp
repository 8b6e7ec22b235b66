#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xfer/corpus/synthetic.hpp"
#include "xfer/error.hpp"
#include "xfer/metrics/classification.hpp"
#include "xfer/model/config.hpp"
#include "xfer/sampling/masking.hpp"
#include "xfer/sampling/mixture.hpp"
#include "xfer/trainer/optimizer.hpp"

namespace xfer::trainer {

struct EarlyStopConfig {
  std::size_t dev_subset_size = 500;
  std::uint64_t eval_interval_steps = 0;  // 0: evaluate only at the end of the phase
  std::uint64_t patience = 0;             // evaluations without improvement before stopping; 0 never stops
  bool operator==(const EarlyStopConfig&) const = default;
};

struct PhaseConfig {
  std::vector<std::string> tasks;
  bool include_mlm = false;
  double learning_rate = 1e-5;
  std::size_t batch_size = 8;
  std::uint64_t num_epochs = 1;
  std::uint64_t max_steps = 0;  // when positive, replaces the epoch-derived step count
  double warmup_fraction = 0.1;
  EarlyStopConfig early_stop;
  std::uint64_t seed = 0;
  std::uint64_t cap_k = sampling::kDefaultTaskCap;
  OptimizerConfig optimizer;
  bool operator==(const PhaseConfig&) const = default;

  void validate(const std::string& where) const {
    const auto fail = [&](const std::string& m) { throw ConfigError(where + ": " + m); };
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) fail("warmup_fraction must lie in [0, 1)");
    if (early_stop.dev_subset_size < 1) fail("early_stop.dev_subset_size must be at least 1");
    if (batch_size < 1) fail("batch_size must be positive");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (num_epochs == 0 && max_steps == 0) fail("either num_epochs or max_steps must be positive");
    if (cap_k == 0) fail("cap_k must be positive");
  }
};

enum class IntermediateVariant { single, multi, single_mlm, multi_mlm };

inline const char* to_string(IntermediateVariant v) {
  switch (v) {
    case IntermediateVariant::single: return "single";
    case IntermediateVariant::multi: return "multi";
    case IntermediateVariant::single_mlm: return "single+mlm";
    case IntermediateVariant::multi_mlm: return "multi+mlm";
  }
  return "?";
}

inline IntermediateVariant parse_variant(const std::string& s) {
  if (s == "single") return IntermediateVariant::single;
  if (s == "multi") return IntermediateVariant::multi;
  if (s == "single+mlm") return IntermediateVariant::single_mlm;
  if (s == "multi+mlm") return IntermediateVariant::multi_mlm;
  throw ConfigError("unknown intermediate variant '" + s + "' (single|multi|single+mlm|multi+mlm)");
}

inline bool variant_has_mlm(IntermediateVariant v) {
  return v == IntermediateVariant::single_mlm || v == IntermediateVariant::multi_mlm;
}

struct IntermediateConfig {
  IntermediateVariant variant = IntermediateVariant::single;
  PhaseConfig phase;
  bool operator==(const IntermediateConfig&) const = default;
};

struct TargetConfig {
  std::string task;
  std::optional<PhaseConfig> phase;  // absent for retrieval tasks
  bool operator==(const TargetConfig&) const = default;
};

struct PretrainConfig {
  std::optional<PhaseConfig> phase;       // train from scratch with MLM
  std::optional<std::string> checkpoint;  // or start from a saved encoder
  double language_alpha = sampling::kDefaultLanguageAlpha;
  bool operator==(const PretrainConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;  // encoder initialization
  std::optional<corpus::SyntheticWorldConfig> world;
  std::optional<std::string> data_dir;  // a directory written by gen-data
  model::EncoderConfig model;
  PretrainConfig pretrain;
  std::optional<IntermediateConfig> intermediate;
  std::vector<TargetConfig> targets;
  model::EmbeddingExtractor extractor;
  sampling::MaskingPolicy masking;
  metrics::TaggingMode tagging_mode = metrics::TaggingMode::token_micro;
  std::size_t eval_batch_size = 64;
  std::size_t max_answer_length = 16;
  std::uint64_t log_interval = 10;
  std::string output_dir = "runs/default";

  void validate() const {
    if (world.has_value() == data_dir.has_value()) throw ConfigError("exactly one of world and data_dir must be set");
    if (world) world->validate();
    if (pretrain.phase && pretrain.checkpoint) throw ConfigError("pretrain: set either phase or checkpoint, not both");
    if (pretrain.phase) pretrain.phase->validate("pretrain");
    if (intermediate) {
      intermediate->phase.validate("intermediate");
      const auto& ph = intermediate->phase;
      const bool single = intermediate->variant == IntermediateVariant::single ||
                          intermediate->variant == IntermediateVariant::single_mlm;
      if (ph.tasks.empty()) throw ConfigError("intermediate: no tasks listed");
      if (single && ph.tasks.size() != 1)
        throw ConfigError(std::string("intermediate: variant ") + to_string(intermediate->variant) +
                          " takes exactly one task, got " + std::to_string(ph.tasks.size()));
      if (ph.include_mlm != variant_has_mlm(intermediate->variant))
        throw ConfigError(std::string("intermediate: include_mlm disagrees with variant ") +
                          to_string(intermediate->variant));
    }
    for (const auto& t : targets)
      if (t.phase) t.phase->validate("target " + t.task);
    if (eval_batch_size == 0) throw ConfigError("eval_batch_size must be positive");
    if (log_interval == 0) throw ConfigError("log_interval must be positive");
    masking.validate();
  }
};

inline void to_json(nlohmann::json& j, const PhaseConfig& p) {
  j = {{"tasks", p.tasks},
       {"include_mlm", p.include_mlm},
       {"learning_rate", p.learning_rate},
       {"batch_size", p.batch_size},
       {"num_epochs", p.num_epochs},
       {"max_steps", p.max_steps},
       {"warmup_fraction", p.warmup_fraction},
       {"early_stop",
        {{"dev_subset_size", p.early_stop.dev_subset_size},
         {"eval_interval_steps", p.early_stop.eval_interval_steps},
         {"patience", p.early_stop.patience}}},
       {"seed", p.seed},
       {"cap_k", p.cap_k},
       {"optimizer", p.optimizer}};
}

inline void from_json(const nlohmann::json& j, PhaseConfig& p) {
  p = PhaseConfig{};
  p.tasks = j.value("tasks", p.tasks);
  p.include_mlm = j.value("include_mlm", p.include_mlm);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.batch_size = j.value("batch_size", p.batch_size);
  p.num_epochs = j.value("num_epochs", p.num_epochs);
  p.max_steps = j.value("max_steps", p.max_steps);
  p.warmup_fraction = j.value("warmup_fraction", p.warmup_fraction);
  if (j.contains("early_stop")) {
    const auto& e = j.at("early_stop");
    p.early_stop.dev_subset_size = e.value("dev_subset_size", p.early_stop.dev_subset_size);
    p.early_stop.eval_interval_steps = e.value("eval_interval_steps", p.early_stop.eval_interval_steps);
    p.early_stop.patience = e.value("patience", p.early_stop.patience);
  }
  p.seed = j.value("seed", p.seed);
  p.cap_k = j.value("cap_k", p.cap_k);
  if (j.contains("optimizer")) p.optimizer = j.at("optimizer").get<OptimizerConfig>();
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["world"] = c.world ? corpus::to_json(*c.world) : nlohmann::json(nullptr);
  j["data_dir"] = c.data_dir ? nlohmann::json(*c.data_dir) : nlohmann::json(nullptr);
  j["model"] = model::to_json(c.model);
  j["pretrain"] = {{"phase", c.pretrain.phase ? nlohmann::json(*c.pretrain.phase) : nlohmann::json(nullptr)},
                   {"checkpoint", c.pretrain.checkpoint ? nlohmann::json(*c.pretrain.checkpoint) : nlohmann::json(nullptr)},
                   {"language_alpha", c.pretrain.language_alpha}};
  j["intermediate"] = c.intermediate ? nlohmann::json{{"variant", to_string(c.intermediate->variant)},
                                                      {"phase", c.intermediate->phase}}
                                     : nlohmann::json(nullptr);
  j["targets"] = nlohmann::json::array();
  for (const auto& t : c.targets)
    j["targets"].push_back({{"task", t.task}, {"phase", t.phase ? nlohmann::json(*t.phase) : nlohmann::json(nullptr)}});
  j["extractor"] = {{"layer_index", c.extractor.layer_index}};
  j["masking"] = {{"select_prob", c.masking.select_prob},
                  {"mask_frac", c.masking.mask_frac},
                  {"random_frac", c.masking.random_frac},
                  {"keep_frac", c.masking.keep_frac}};
  j["tagging_mode"] = c.tagging_mode == metrics::TaggingMode::token_micro ? "token_micro" : "entity_bio";
  j["eval_batch_size"] = c.eval_batch_size;
  j["max_answer_length"] = c.max_answer_length;
  j["log_interval"] = c.log_interval;
  j["output_dir"] = c.output_dir;
  return j;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  const auto opt = [&](const nlohmann::json& parent, const char* key) -> const nlohmann::json* {
    auto it = parent.find(key);
    return (it == parent.end() || it->is_null()) ? nullptr : &*it;
  };
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (const auto* w = opt(j, "world")) c.world = corpus::world_config_from_json(*w);
    if (const auto* d = opt(j, "data_dir")) c.data_dir = d->get<std::string>();
    if (const auto* m = opt(j, "model")) c.model = model::encoder_config_from_json(*m);
    if (const auto* p = opt(j, "pretrain")) {
      if (const auto* ph = opt(*p, "phase")) c.pretrain.phase = ph->get<PhaseConfig>();
      if (const auto* ck = opt(*p, "checkpoint")) c.pretrain.checkpoint = ck->get<std::string>();
      c.pretrain.language_alpha = p->value("language_alpha", c.pretrain.language_alpha);
    }
    if (const auto* in = opt(j, "intermediate"))
      c.intermediate = IntermediateConfig{parse_variant(in->at("variant").get<std::string>()),
                                          in->at("phase").get<PhaseConfig>()};
    if (const auto* ts = opt(j, "targets"))
      for (const auto& t : *ts) {
        TargetConfig tc{t.at("task").get<std::string>(), std::nullopt};
        if (const auto* ph = opt(t, "phase")) tc.phase = ph->get<PhaseConfig>();
        c.targets.push_back(std::move(tc));
      }
    if (const auto* e = opt(j, "extractor")) c.extractor.layer_index = e->value("layer_index", c.extractor.layer_index);
    if (const auto* m = opt(j, "masking")) {
      c.masking.select_prob = m->value("select_prob", c.masking.select_prob);
      c.masking.mask_frac = m->value("mask_frac", c.masking.mask_frac);
      c.masking.random_frac = m->value("random_frac", c.masking.random_frac);
      c.masking.keep_frac = m->value("keep_frac", c.masking.keep_frac);
    }
    const std::string mode = j.value("tagging_mode", std::string("token_micro"));
    if (mode == "token_micro") c.tagging_mode = metrics::TaggingMode::token_micro;
    else if (mode == "entity_bio") c.tagging_mode = metrics::TaggingMode::entity_bio;
    else throw ConfigError("unknown tagging_mode '" + mode + "'");
    c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
    c.max_answer_length = j.value("max_answer_length", c.max_answer_length);
    c.log_interval = j.value("log_interval", c.log_interval);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace xfer::trainer
