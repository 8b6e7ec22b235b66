#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xfer/corpus/task.hpp"
#include "xfer/metrics/record.hpp"
#include "xfer/model/bundle.hpp"
#include "xfer/sampling/mixture.hpp"
#include "xfer/trainer/config.hpp"
#include "xfer/trainer/data.hpp"
#include "xfer/trainer/optimizer.hpp"
#include "xfer/trainer/schedule.hpp"

namespace xfer::trainer {

using Bundle = model::ModelBundle<float>;

inline constexpr const char* kMlmTaskName = "mlm";

struct EvalPoint {
  std::uint64_t step = 0;
  double score = 0.0;
};

/// What a phase did, for the run manifest.
struct PhaseRecord {
  std::string name;
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  std::uint64_t epoch_examples = 0;
  std::uint64_t total_steps = 0;
  std::uint64_t warmup_steps = 0;
  std::uint64_t steps_run = 0;
  std::map<std::string, double> rates;
  std::map<std::string, std::uint64_t> draws;
  std::vector<double> loss_curve;  // mean loss per log interval
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<EvalPoint> evals;
  std::optional<std::uint64_t> best_step;
  double best_score = 0.0;
  bool stopped_early = false;
};

inline nlohmann::json to_json(const PhaseRecord& r) {
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& e : r.evals) evals.push_back({{"step", e.step}, {"score", e.score}});
  return {{"name", r.name},
          {"learning_rate", r.learning_rate},
          {"batch_size", r.batch_size},
          {"epoch_examples", r.epoch_examples},
          {"total_steps", r.total_steps},
          {"warmup_steps", r.warmup_steps},
          {"steps_run", r.steps_run},
          {"rates", r.rates},
          {"draws", r.draws},
          {"loss_curve", r.loss_curve},
          {"initial_loss", r.initial_loss},
          {"final_loss", r.final_loss},
          {"evals", evals},
          {"best_step", r.best_step ? nlohmann::json(*r.best_step) : nlohmann::json(nullptr)},
          {"best_score", r.best_score},
          {"stopped_early", r.stopped_early}};
}

/// Read-only inputs shared by all phases of a run.
struct TrainContext {
  const std::map<std::string, corpus::Dataset>* tasks = nullptr;
  const std::map<std::string, std::vector<std::string>>* corpora = nullptr;
  BatchBuilder builder;
  std::string source_language = "en";
  sampling::MaskingPolicy masking;
  std::size_t eval_batch_size = 64;
  std::size_t max_answer_length = 16;
  metrics::TaggingMode tagging_mode = metrics::TaggingMode::token_micro;
  std::uint64_t log_interval = 10;

  const corpus::Dataset& task(const std::string& name) const {
    auto it = tasks->find(name);
    if (it == tasks->end()) throw ConfigError("unknown task '" + name + "'");
    return it->second;
  }
};

/// Cycles through a list in a fresh seeded order each pass.
template <typename Item>
class Stream {
 public:
  Stream(const std::vector<Item>* items, SeededRng rng) : items_(items), rng_(rng) {
    if (items_->empty()) throw ConfigError("cannot stream an empty list");
    order_.resize(items_->size());
    reshuffle();
  }

  std::vector<const Item*> next(std::size_t n) {
    std::vector<const Item*> out;
    for (std::size_t i = 0; i < n; ++i) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back(&(*items_)[order_[cursor_++]]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
    cursor_ = 0;
  }

  const std::vector<Item>* items_;
  SeededRng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Forward, loss, and backward for one batch; gradients accumulate into the
/// bundle. Returns nullopt when the batch has nothing to score.
inline std::optional<double> accumulate_batch(Bundle& bundle, const Batch& b, SeededRng& dropout_rng) {
  if (b.format == TaskFormat::mlm && b.targets.mlm_labels.empty()) return std::nullopt;
  const auto fw = bundle.forward(b.tokens, &dropout_rng);
  const auto out = bundle.head_forward(b.format, fw, b.tokens, b.inputs);
  model::Mat<float> d_output;
  const double loss = bundle.head(b.format).loss(out, fw, b.targets, &d_output);
  bundle.encoder().backward(fw, d_output);
  return loss;
}

inline std::uint64_t phase_total_steps(const PhaseConfig& cfg, std::uint64_t epoch_examples) {
  if (cfg.max_steps > 0) return cfg.max_steps;
  const std::uint64_t per_epoch = (epoch_examples + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t total = cfg.num_epochs * per_epoch;
  if (total == 0) throw ConfigError("phase has no steps (empty training data)");
  return total;
}

/// Shared optimization loop. `step_fn` accumulates gradients for one step;
/// `dev_fn`, when set, scores the current bundle for early stopping and the
/// best-scoring bundle is restored at the end.
inline void optimize(Bundle& bundle, const PhaseConfig& cfg, std::uint64_t log_interval, PhaseRecord& rec,
                     const std::function<std::optional<double>()>& step_fn, const std::function<double()>& dev_fn) {
  AdamW<float> opt(cfg.optimizer);
  rec.learning_rate = cfg.learning_rate;
  rec.batch_size = cfg.batch_size;
  rec.warmup_steps = warmup_steps(rec.total_steps, cfg.warmup_fraction);
  double window = 0.0;
  std::uint64_t window_n = 0;
  std::optional<Bundle> best;
  std::uint64_t since_best = 0;
  bool have_initial = false;

  const auto evaluate = [&](std::uint64_t step) {
    const double score = dev_fn();
    rec.evals.push_back({step, score});
    if (!rec.best_step || score > rec.best_score) {
      rec.best_step = step;
      rec.best_score = score;
      best = bundle;
      since_best = 0;
    } else {
      ++since_best;
    }
  };

  for (std::uint64_t step = 0; step < rec.total_steps; ++step) {
    bundle.zero_grad();
    const auto loss = step_fn();
    if (loss) {
      opt.step(bundle, lr_schedule(step + 1, rec.total_steps, cfg.learning_rate, cfg.warmup_fraction));
      if (!have_initial) {
        rec.initial_loss = *loss;
        have_initial = true;
      }
      rec.final_loss = *loss;
      window += *loss;
      ++window_n;
    }
    rec.steps_run = step + 1;
    if (rec.steps_run % log_interval == 0 || rec.steps_run == rec.total_steps) {
      rec.loss_curve.push_back(window_n ? window / static_cast<double>(window_n) : 0.0);
      window = 0.0;
      window_n = 0;
    }
    const auto interval = cfg.early_stop.eval_interval_steps;
    if (dev_fn && interval > 0 && rec.steps_run % interval == 0 && rec.steps_run < rec.total_steps) {
      evaluate(rec.steps_run);
      if (cfg.early_stop.patience > 0 && since_best >= cfg.early_stop.patience) {
        rec.stopped_early = true;
        break;
      }
    }
  }
  if (dev_fn) {
    if (!rec.stopped_early) evaluate(rec.steps_run);
    if (best) bundle = std::move(*best);
  }
}

/// First `limit` examples of the task's source-language dev split.
inline std::vector<const Example*> dev_subset(const corpus::Dataset& ds, std::size_t limit) {
  std::vector<const Example*> out;
  const auto* dev = ds.find("dev");
  if (!dev) return out;
  for (std::size_t i = 0; i < std::min(limit, dev->size()); ++i) out.push_back(&(*dev)[i]);
  return out;
}

/// Mean primary dev metric over the listed tasks, on their dev subsets.
inline double dev_score(const Bundle& bundle, const TrainContext& ctx, const std::vector<std::string>& tasks,
                        std::size_t limit) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& name : tasks) {
    const auto& ds = ctx.task(name);
    const auto subset = dev_subset(ds, limit);
    if (subset.empty()) continue;
    sum += primary_value(score_examples(bundle, ctx.builder, ds.spec, subset, ctx.eval_batch_size,
                                        ctx.max_answer_length, ctx.tagging_mode));
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline std::uint64_t head_seed(std::uint64_t phase_seed, const std::string& label) {
  return SeededRng(phase_seed).derive_seed("head:" + label);
}

/// Masked-token pretraining: each step draws a language by the mixture rates,
/// then a masked batch of that language's sentences.
inline PhaseRecord pretrain_mlm(Bundle& bundle, const TrainContext& ctx, const sampling::LanguageMixture& mixture,
                                const PhaseConfig& cfg) {
  cfg.validate("pretrain");
  PhaseRecord rec;
  rec.name = "pretrain";
  rec.rates = mixture.rates;
  const SeededRng root(cfg.seed);
  std::map<std::string, Stream<std::string>> streams;
  std::uint64_t sentences = 0;
  for (const auto& [lang, rate] : mixture.rates) {
    auto it = ctx.corpora->find(lang);
    if (it == ctx.corpora->end() || it->second.empty())
      throw ConfigError("pretrain: no corpus sentences for language '" + lang + "'");
    streams.emplace(lang, Stream<std::string>(&it->second, root.derive("pretrain/order/" + lang)));
    sentences += it->second.size();
    rec.draws[lang] = 0;
  }
  rec.epoch_examples = sentences;
  rec.total_steps = phase_total_steps(cfg, sentences);
  if (!bundle.has_head(TaskFormat::mlm)) bundle.reinit_head(TaskFormat::mlm, head_seed(cfg.seed, "pretrain/mlm"));

  SeededRng lang_rng = root.derive("pretrain/language");
  SeededRng mask_rng = root.derive("pretrain/mask");
  SeededRng drop_rng = root.derive("pretrain/dropout");
  optimize(
      bundle, cfg, ctx.log_interval, rec,
      [&]() -> std::optional<double> {
        const std::string lang = sampling::sample_source(lang_rng, mixture.rates);
        ++rec.draws[lang];
        std::vector<std::string> text;
        for (const auto* s : streams.at(lang).next(cfg.batch_size)) text.push_back(*s);
        return accumulate_batch(bundle, ctx.builder.build_mlm(text, ctx.masking, mask_rng), drop_rng);
      },
      {});
  return rec;
}

/// Intermediate-task training. Every participating format gets a fresh head;
/// formats shared by several tasks share one head over the union of labels.
inline PhaseRecord train_intermediate(Bundle& bundle, const TrainContext& ctx, IntermediateVariant variant,
                                      const PhaseConfig& cfg) {
  cfg.validate("intermediate");
  if (cfg.include_mlm != variant_has_mlm(variant))
    throw ConfigError(std::string("intermediate: include_mlm disagrees with variant ") + to_string(variant));
  PhaseRecord rec;
  rec.name = std::string("intermediate/") + to_string(variant);
  const SeededRng root(cfg.seed);

  std::map<std::string, std::uint64_t> sizes;
  std::map<TaskFormat, std::vector<std::string>> labels;
  std::vector<std::string> supervised;
  std::map<std::string, Stream<Example>> streams;
  for (const auto& name : cfg.tasks) {
    const auto& ds = ctx.task(name);
    if (ds.spec.format == TaskFormat::retrieval)
      throw ConfigError("intermediate: retrieval task '" + name + "' has no training data");
    const auto* train = ds.find("train");
    if (!train || train->empty()) throw ConfigError("intermediate: task '" + name + "' has no train split");
    sizes[name] = train->size();
    supervised.push_back(name);
    streams.emplace(name, Stream<Example>(train, root.derive("intermediate/order/" + name)));
    auto& l = labels[ds.spec.format];
    for (const auto& x : head_labels(ds.spec))
      if (std::find(l.begin(), l.end(), x) == l.end()) l.push_back(x);
  }
  std::vector<std::string> mlm_text;
  std::optional<Stream<std::string>> mlm_stream;
  if (cfg.include_mlm) {
    for (const auto& [lang, sentences] : *ctx.corpora) mlm_text.insert(mlm_text.end(), sentences.begin(), sentences.end());
    if (mlm_text.empty()) throw ConfigError("intermediate: mlm co-training needs corpus sentences");
    sizes[kMlmTaskName] = mlm_text.size();
    labels[TaskFormat::mlm];
    mlm_stream.emplace(&mlm_text, root.derive("intermediate/order/mlm"));
  }
  const auto mixture = sampling::compute_task_rates(sizes, cfg.cap_k);
  rec.rates = mixture.rates;
  rec.epoch_examples = mixture.capped_total();
  rec.total_steps = phase_total_steps(cfg, rec.epoch_examples);
  for (const auto& [name, _] : sizes) rec.draws[name] = 0;

  for (auto f : corpus::kAllFormats) bundle.remove_head(f);
  for (const auto& [format, l] : labels)
    bundle.reinit_head(format, head_seed(cfg.seed, "intermediate/" + std::string(corpus::to_string(format))), l);

  SeededRng task_rng = root.derive("intermediate/task");
  SeededRng mask_rng = root.derive("intermediate/mask");
  SeededRng drop_rng = root.derive("intermediate/dropout");
  optimize(
      bundle, cfg, ctx.log_interval, rec,
      [&]() -> std::optional<double> {
        const std::string name = sampling::sample_source(task_rng, mixture.rates);
        ++rec.draws[name];
        if (name == kMlmTaskName && cfg.include_mlm) {
          std::vector<std::string> text;
          for (const auto* s : mlm_stream->next(cfg.batch_size)) text.push_back(*s);
          return accumulate_batch(bundle, ctx.builder.build_mlm(text, ctx.masking, mask_rng), drop_rng);
        }
        const auto& ds = ctx.task(name);
        const auto examples = streams.at(name).next(cfg.batch_size);
        return accumulate_batch(bundle, ctx.builder.build(ds.spec.format, examples, labels.at(ds.spec.format)),
                                drop_rng);
      },
      [&]() { return dev_score(bundle, ctx, supervised, cfg.early_stop.dev_subset_size); });
  return rec;
}

struct TargetResult {
  PhaseRecord record;
  std::vector<metrics::MetricRecord> dev;
  std::vector<metrics::MetricRecord> test;
  std::vector<std::string> absent_languages;
};

namespace detail {

inline std::vector<const Example*> pointers(const std::vector<Example>& v) {
  std::vector<const Example*> out;
  for (const auto& e : v) out.push_back(&e);
  return out;
}

}  // namespace detail

/// Zero-shot evaluation of a trained (or, for retrieval, untrained) target
/// task on every language's dev and test split.
inline void evaluate_target(const Bundle& bundle, const TrainContext& ctx, const corpus::Dataset& ds,
                            const model::EmbeddingExtractor& extractor, TargetResult& out) {
  const auto& spec = ds.spec;
  for (const auto& lang : spec.languages) {
    bool present = false;
    for (const char* split : {"dev", "test"}) {
      auto& sink = std::string(split) == "dev" ? out.dev : out.test;
      if (spec.format == TaskFormat::retrieval) {
        if (lang == ctx.source_language) continue;
        const auto s = retrieval_split(ds, split, lang, ctx.source_language);
        if (s.target.empty() || s.source.empty()) continue;
        present = true;
        if (spec.metric == corpus::metric_id::mining_f1) {
          // the threshold for both splits comes from dev
          if (std::string(split) == "test") continue;
          const auto test = retrieval_split(ds, "test", lang, ctx.source_language);
          const auto dev_inst = mining_instance(bundle, ctx.builder, s, extractor, ctx.eval_batch_size);
          const auto test_inst = test.target.empty()
                                     ? metrics::MiningInstance{}
                                     : mining_instance(bundle, ctx.builder, test, extractor, ctx.eval_batch_size);
          const auto mined = metrics::mine_parallel(dev_inst, test_inst);
          out.dev.push_back({spec.name, lang, "f1", mined.dev.f1});
          if (!test.target.empty()) out.test.push_back({spec.name, lang, "f1", mined.test.f1});
        } else {
          sink.push_back({spec.name, lang, "accuracy",
                          tatoeba_accuracy(bundle, ctx.builder, s, extractor, ctx.eval_batch_size)});
        }
        continue;
      }
      const auto* examples = ds.find(corpus::split_name(split, lang, ctx.source_language));
      if (!examples || examples->empty()) continue;
      present = true;
      for (const auto& [metric, value] : score_examples(bundle, ctx.builder, spec, detail::pointers(*examples),
                                                        ctx.eval_batch_size, ctx.max_answer_length, ctx.tagging_mode))
        sink.push_back({spec.name, lang, metric, value});
    }
    if (!present && !(spec.format == TaskFormat::retrieval && lang == ctx.source_language))
      out.absent_languages.push_back(lang);
  }
}

/// Fine-tunes a fresh head on the source-language train split (skipped for
/// retrieval), then evaluates every language.
inline TargetResult train_target(Bundle& bundle, const TrainContext& ctx, const std::string& task,
                                 const std::optional<PhaseConfig>& cfg, const model::EmbeddingExtractor& extractor) {
  const auto& ds = ctx.task(task);
  TargetResult out;
  out.record.name = "target/" + task;
  for (auto f : corpus::kAllFormats) bundle.remove_head(f);
  if (ds.spec.format == TaskFormat::retrieval) {
    if (cfg) throw ConfigError("target '" + task + "' is a retrieval task and takes no training phase");
    evaluate_target(bundle, ctx, ds, extractor, out);
    return out;
  }
  if (!cfg) throw ConfigError("target '" + task + "' needs a training phase");
  cfg->validate("target " + task);
  const auto* train = ds.find("train");
  if (!train || train->empty()) throw ConfigError("target '" + task + "' has no train split");
  const SeededRng root(cfg->seed);
  const auto labels = head_labels(ds.spec);
  bundle.reinit_head(ds.spec.format, head_seed(cfg->seed, "target/" + task), labels);
  out.record.rates = {{task, 1.0}};
  out.record.epoch_examples = train->size();
  out.record.total_steps = phase_total_steps(*cfg, train->size());
  out.record.draws = {{task, 0}};
  Stream<Example> stream(train, root.derive("target/order/" + task));
  SeededRng drop_rng = root.derive("target/dropout/" + task);
  optimize(
      bundle, *cfg, ctx.log_interval, out.record,
      [&]() -> std::optional<double> {
        ++out.record.draws[task];
        return accumulate_batch(bundle, ctx.builder.build(ds.spec.format, stream.next(cfg->batch_size), labels),
                                drop_rng);
      },
      [&]() { return dev_score(bundle, ctx, {task}, cfg->early_stop.dev_subset_size); });
  evaluate_target(bundle, ctx, ds, extractor, out);
  return out;
}

}  // namespace xfer::trainer
