#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "xfer/corpus/synthetic.hpp"
#include "xfer/hash.hpp"
#include "xfer/model/checkpoint.hpp"
#include "xfer/trainer/config.hpp"
#include "xfer/trainer/phases.hpp"

#ifndef XFER_VERSION
#define XFER_VERSION "0.0.0"
#endif

namespace xfer::trainer {

inline constexpr int kManifestSchemaVersion = 1;

inline corpus::Tokenizer make_tokenizer(const corpus::SyntheticWorld& world) {
  const auto words = world.all_words();
  return corpus::Tokenizer(words, SeededRng(world.config().seed).derive_seed("tokenizer"),
                           world.config().subword_split_probability);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& contents) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << contents;
}

/// Regenerates the world a gen-data directory was written from and checks
/// that every file on disk matches.
inline corpus::SyntheticWorld load_world_dir(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(read_file(dir / "world.json"));
  corpus::SyntheticWorld world = corpus::gen_synthetic_world(corpus::world_config_from_json(manifest.at("config")));
  for (const auto& [path, contents] : world.serialize())
    if (read_file(dir / path) != contents)
      throw ConfigError("data directory " + dir.string() + ": " + path + " does not match its world.json");
  return world;
}

inline std::string world_fingerprint(const corpus::SyntheticWorld& world) {
  Fnv1a64 h;
  for (const auto& [path, contents] : world.serialize()) {
    h.update(path);
    h.update(contents);
  }
  return hex64(h.digest());
}

/// Config as recorded in the manifest: output_dir is excluded so that the
/// same experiment written to two places hashes the same.
inline nlohmann::json manifest_config(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("output_dir");
  return j;
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(manifest_config(c).dump())); }

struct RunResult {
  nlohmann::json manifest;
  std::string manifest_hash;
  Bundle bundle;  // state after the last training phase
};

namespace detail {

inline nlohmann::json records_json(const std::vector<metrics::MetricRecord>& r) { return r; }

}  // namespace detail

/// Runs pretraining (or loads its checkpoint), the optional intermediate
/// phase, then every target from the post-intermediate encoder. A checkpoint
/// is written after each training phase; the manifest is rewritten after each
/// phase and, on failure, records the error before rethrowing.
inline RunResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr) {
  config.validate();
  const std::filesystem::path out_dir(config.output_dir);
  std::filesystem::create_directories(out_dir);

  nlohmann::json manifest;
  manifest["schema_version"] = kManifestSchemaVersion;
  manifest["software_version"] = XFER_VERSION;
  manifest["config"] = manifest_config(config);
  manifest["config_hash"] = config_hash(config);
  manifest["status"] = "running";
  manifest["phases"] = nlohmann::json::array();
  manifest["targets"] = nlohmann::json::object();
  manifest["checkpoints"] = nlohmann::json::object();
  const auto write_manifest = [&]() { write_file(out_dir / "manifest.json", manifest.dump(1) + "\n"); };
  const auto say = [&](const std::string& m) {
    if (log) *log << m << std::endl;
  };

  try {
    const corpus::SyntheticWorld world =
        config.world ? corpus::gen_synthetic_world(*config.world) : load_world_dir(*config.data_dir);
    const corpus::Tokenizer tokenizer = make_tokenizer(world);
    model::EncoderConfig mcfg = config.model;
    if (mcfg.vocab_size == 0) mcfg.vocab_size = tokenizer.vocab_size();
    if (mcfg.vocab_size != tokenizer.vocab_size())
      throw ConfigError("model.vocab_size " + std::to_string(mcfg.vocab_size) + " does not match the tokenizer's " +
                        std::to_string(tokenizer.vocab_size()));
    manifest["world"] = {{"fingerprint", world_fingerprint(world)}, {"languages", world.languages()}};
    manifest["vocab_size"] = mcfg.vocab_size;
    manifest["seeds"] = {{"experiment", config.seed}};

    TrainContext ctx{&world.tasks(), &world.corpora(), BatchBuilder(tokenizer, mcfg.max_sequence_length),
                     world.source_language(), config.masking, config.eval_batch_size, config.max_answer_length,
                     config.tagging_mode, config.log_interval};

    const auto save = [&](const Bundle& b, const std::string& name) {
      const std::string rel = "checkpoints/" + name + ".ckpt";
      model::save_checkpoint(b, out_dir / rel);
      manifest["checkpoints"][name] = {{"path", rel}, {"encoder_fingerprint", hex64(b.fingerprint())}};
    };

    Bundle bundle;
    if (config.pretrain.checkpoint) {
      say("loading " + *config.pretrain.checkpoint);
      bundle = model::load_checkpoint<float>(*config.pretrain.checkpoint, &mcfg);
      manifest["init_checkpoint"] = {{"encoder_fingerprint", hex64(bundle.fingerprint())}};
    } else {
      bundle = model::init_encoder<float>(mcfg, config.seed);
    }

    if (config.pretrain.phase) {
      std::map<std::string, std::uint64_t> counts;
      for (const auto& [lang, sentences] : world.corpora()) counts[lang] = sentences.size();
      const auto mixture = sampling::compute_language_rates(counts, config.pretrain.language_alpha);
      say("pretraining");
      const auto rec = pretrain_mlm(bundle, ctx, mixture, *config.pretrain.phase);
      manifest["seeds"]["pretrain"] = config.pretrain.phase->seed;
      manifest["phases"].push_back(to_json(rec));
      save(bundle, "pretrain");
      write_manifest();
    }

    if (config.intermediate) {
      say(std::string("intermediate training (") + to_string(config.intermediate->variant) + ")");
      const auto rec = train_intermediate(bundle, ctx, config.intermediate->variant, config.intermediate->phase);
      manifest["seeds"]["intermediate"] = config.intermediate->phase.seed;
      manifest["phases"].push_back(to_json(rec));
      save(bundle, "intermediate");
      write_manifest();
    }

    const Bundle base = bundle;
    for (const auto& target : config.targets) {
      say("target " + target.task);
      Bundle b = base;
      auto result = train_target(b, ctx, target.task, target.phase, config.extractor);
      manifest["targets"][target.task] = {{"steps", result.record.steps_run},
                                          {"dev", detail::records_json(result.dev)},
                                          {"test", detail::records_json(result.test)},
                                          {"absent_languages", result.absent_languages}};
      if (target.phase) {
        manifest["seeds"]["targets"][target.task] = target.phase->seed;
        manifest["phases"].push_back(to_json(result.record));
        save(b, "target-" + target.task);
      }
      write_manifest();
    }
    manifest["status"] = "complete";
    write_manifest();
    return {manifest, hex64(fnv1a64(manifest.dump())), std::move(bundle)};
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    write_manifest();
    throw;
  }
}

/// Metric records of one split across all targets in a manifest.
inline std::vector<metrics::MetricRecord> manifest_records(const nlohmann::json& manifest, const std::string& split) {
  std::vector<metrics::MetricRecord> out;
  for (const auto& [task, t] : manifest.at("targets").items())
    for (const auto& r : t.at(split)) out.push_back(r.get<metrics::MetricRecord>());
  return out;
}

}  // namespace xfer::trainer
