#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "xfer/corpus/task.hpp"
#include "xfer/corpus/tokenizer.hpp"
#include "xfer/error.hpp"
#include "xfer/metrics.hpp"
#include "xfer/model/bundle.hpp"
#include "xfer/rng.hpp"
#include "xfer/sampling/masking.hpp"

namespace xfer::trainer {

using corpus::Example;
using corpus::TaskFormat;

/// Everything one optimization or evaluation step needs.
struct Batch {
  TaskFormat format = TaskFormat::classification;
  corpus::TokenizedBatch tokens;
  model::HeadInputs inputs;
  model::HeadTargets targets;
  std::vector<corpus::EncodedRow> rows;
};

inline int label_index(const std::vector<std::string>& labels, const std::string& label) {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw ConfigError("label '" + label + "' is not known to the head");
  return static_cast<int>(it - labels.begin());
}

/// Token positions [start, end] of the first answer, or (0, 0) when the answer
/// was truncated away.
inline std::pair<int, int> answer_positions(const corpus::SpanExample& ex, const corpus::EncodedRow& row,
                                            std::size_t question_words) {
  const auto& a = ex.answers.front();
  const auto words = corpus::split_words(ex.context);
  std::ptrdiff_t first = -1, last = -1;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].end > a.start_char && words[w].begin < a.start_char + a.text.size()) {
      if (first < 0) first = static_cast<std::ptrdiff_t>(w);
      last = static_cast<std::ptrdiff_t>(w);
    }
  }
  if (first < 0) return {0, 0};
  const auto wf = static_cast<std::int32_t>(question_words + static_cast<std::size_t>(first));
  const auto wl = static_cast<std::int32_t>(question_words + static_cast<std::size_t>(last));
  int start = -1, end = -1;
  for (std::size_t t = 0; t < row.token_word.size(); ++t) {
    if (row.token_word[t] == wf && start < 0) start = static_cast<int>(t);
    if (row.token_word[t] == wl) end = static_cast<int>(t);
  }
  if (start < 0 || end < 0) return {0, 0};
  return {start, end};
}

/// Turns task examples into model batches.
class BatchBuilder {
 public:
  BatchBuilder(const corpus::Tokenizer& tokenizer, std::size_t max_length)
      : tokenizer_(&tokenizer), max_length_(max_length) {}

  const corpus::Tokenizer& tokenizer() const noexcept { return *tokenizer_; }
  std::size_t max_length() const noexcept { return max_length_; }

  Batch build(TaskFormat format, const std::vector<const Example*>& examples,
              const std::vector<std::string>& labels) const {
    Batch b;
    b.format = format;
    for (const Example* ex : examples) {
      if (corpus::format_of(*ex) != format) throw ConfigError("example format does not match the batch format");
      std::visit([&](const auto& e) { add(b, e, labels); }, *ex);
    }
    b.tokens = corpus::make_batch(b.rows);
    return b;
  }

  /// Sentences corrupted for masked-token prediction.
  Batch build_mlm(const std::vector<std::string>& sentences, const sampling::MaskingPolicy& policy,
                  SeededRng& rng) const {
    Batch b;
    b.format = TaskFormat::mlm;
    const sampling::TokenSpace space{tokenizer_->vocab_size(), corpus::special::mask, corpus::special::count};
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      auto row = tokenizer_->encode(sentences[i], max_length_);
      const auto masked = sampling::mask_tokens(row.ids, policy, rng, {}, space);
      for (std::size_t t = 0; t < masked.labels.size(); ++t) {
        if (masked.labels[t] == policy.ignore_label) continue;
        b.inputs.mlm_positions.emplace_back(i, t);
        b.targets.mlm_labels.push_back(masked.labels[t]);
      }
      row.ids = masked.corrupted;
      b.rows.push_back(std::move(row));
    }
    b.tokens = corpus::make_batch(b.rows);
    return b;
  }

  corpus::EncodedRow encode_sentence(const std::string& text) const { return tokenizer_->encode(text, max_length_); }

 private:
  void add(Batch& b, const corpus::ClassificationExample& e, const std::vector<std::string>& labels) const {
    const auto a = corpus::split_whitespace(e.text_a);
    if (e.text_b) {
      const auto c = corpus::split_whitespace(*e.text_b);
      b.rows.push_back(tokenizer_->encode_pair(a, c, max_length_));
    } else {
      b.rows.push_back(tokenizer_->encode(std::span<const std::string>(a), max_length_));
    }
    b.targets.labels.push_back(label_index(labels, e.label));
  }

  void add(Batch& b, const corpus::MultipleChoiceExample& e, const std::vector<std::string>&) const {
    if (b.inputs.num_choices == 0) b.inputs.num_choices = e.choices.size();
    if (b.inputs.num_choices != e.choices.size())
      throw ConfigError("multiple-choice batch mixes choice counts (" + e.id + ")");
    auto ctx = corpus::split_whitespace(e.context);
    for (auto& w : corpus::split_whitespace(e.question)) ctx.push_back(std::move(w));
    for (const auto& choice : e.choices) b.rows.push_back(tokenizer_->encode_pair(ctx, corpus::split_whitespace(choice), max_length_));
    b.targets.labels.push_back(static_cast<int>(e.answer_index));
  }

  void add(Batch& b, const corpus::SpanExample& e, const std::vector<std::string>&) const {
    const auto q = corpus::split_whitespace(e.question);
    const auto c = corpus::split_whitespace(e.context);
    auto row = tokenizer_->encode_pair(q, c, max_length_);
    const auto [s, t] = answer_positions(e, row, q.size());
    b.targets.span_start.push_back(s);
    b.targets.span_end.push_back(t);
    b.rows.push_back(std::move(row));
  }

  void add(Batch& b, const corpus::TaggingExample& e, const std::vector<std::string>& labels) const {
    auto row = tokenizer_->encode(std::span<const std::string>(e.words), max_length_);
    std::vector<int> tags;
    for (std::size_t w = 0; w < row.words_kept; ++w) tags.push_back(label_index(labels, e.tags[w]));
    b.targets.tags.push_back(std::move(tags));
    b.rows.push_back(std::move(row));
  }

  void add(Batch&, const corpus::MlmExample& e, const std::vector<std::string>&) const {
    throw ConfigError("mlm example '" + e.id + "' must go through build_mlm");
  }

  void add(Batch&, const corpus::RetrievalExample& e, const std::vector<std::string>&) const {
    throw ConfigError("retrieval example '" + e.id + "' has no training batch");
  }

  const corpus::Tokenizer* tokenizer_;
  std::size_t max_length_;
};

/// Labels a head needs for the task (empty for label-free formats).
inline std::vector<std::string> head_labels(const corpus::TaskSpec& spec) {
  return spec.label_set.value_or(std::vector<std::string>{});
}

/// Predicted outputs for a list of examples of one task.
struct Predictions {
  std::vector<std::string> labels;                // classification
  std::vector<std::size_t> choices;               // multiple choice
  std::vector<std::string> spans;                 // span extraction
  std::vector<std::vector<std::string>> tags;     // tagging, one per word
};

namespace detail {

inline std::string span_text(const corpus::SpanExample& e, const corpus::EncodedRow& row, std::size_t qwords,
                             std::size_t start, std::size_t end) {
  const auto words = corpus::split_whitespace(e.context);
  const std::int32_t ws = row.token_word[start], we = row.token_word[end];
  if (ws < 0 || we < 0) return "";
  std::string out;
  for (auto w = static_cast<std::size_t>(ws); w <= static_cast<std::size_t>(we); ++w) {
    if (w < qwords || w - qwords >= words.size()) continue;
    if (!out.empty()) out += ' ';
    out += words[w - qwords];
  }
  return out;
}

}  // namespace detail

template <typename T>
Predictions predict(const model::ModelBundle<T>& bundle, const BatchBuilder& builder, TaskFormat format,
                    const std::vector<const Example*>& examples, std::size_t batch_size,
                    std::size_t max_answer_length) {
  Predictions out;
  const auto& head = bundle.head(format);
  for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
    const std::vector<const Example*> chunk(examples.begin() + static_cast<std::ptrdiff_t>(begin),
                                            examples.begin() + static_cast<std::ptrdiff_t>(std::min(examples.size(), begin + batch_size)));
    const Batch b = builder.build(format, chunk, head.labels());
    const auto fw = bundle.forward(b.tokens);
    const auto o = bundle.head_forward(format, fw, b.tokens, b.inputs);
    switch (format) {
      case TaskFormat::classification:
        for (Eigen::Index r = 0; r < o.logits.rows(); ++r) {
          Eigen::Index arg = 0;
          o.logits.row(r).maxCoeff(&arg);
          out.labels.push_back(head.labels()[static_cast<std::size_t>(arg)]);
        }
        break;
      case TaskFormat::multiple_choice:
        for (Eigen::Index r = 0; r < o.logits.rows(); ++r) {
          Eigen::Index arg = 0;
          o.logits.row(r).maxCoeff(&arg);
          out.choices.push_back(static_cast<std::size_t>(arg));
        }
        break;
      case TaskFormat::span_extraction:
        for (std::size_t i = 0; i < chunk.size(); ++i) {
          const auto& e = std::get<corpus::SpanExample>(*chunk[i]);
          const auto& row = b.rows[i];
          std::vector<bool> allowed(b.tokens.length, false);
          for (std::size_t t = 0; t < row.ids.size(); ++t) allowed[t] = row.type_ids[t] == 1 && row.token_word[t] >= 0;
          const auto p = model::decode_span(o.logits, o.end_logits, i, allowed, max_answer_length);
          out.spans.push_back(std::isfinite(p.score)
                                  ? detail::span_text(e, row, corpus::split_whitespace(e.question).size(), p.start, p.end)
                                  : std::string());
        }
        break;
      case TaskFormat::tagging:
        for (std::size_t i = 0; i < chunk.size(); ++i) {
          const auto& e = std::get<corpus::TaggingExample>(*chunk[i]);
          std::vector<std::string> tags;
          for (std::size_t r = o.group_offsets[i]; r < o.group_offsets[i + 1]; ++r) {
            Eigen::Index arg = 0;
            o.logits.row(static_cast<Eigen::Index>(r)).maxCoeff(&arg);
            tags.push_back(head.labels()[static_cast<std::size_t>(arg)]);
          }
          // words dropped by truncation get the first label
          tags.resize(e.words.size(), head.labels().front());
          out.tags.push_back(std::move(tags));
        }
        break;
      default:
        throw ConfigError("no prediction rule for format " + std::string(corpus::to_string(format)));
    }
  }
  return out;
}

/// Metric values (as named records, fractions) for examples of one task.
template <typename T>
std::vector<std::pair<std::string, double>> score_examples(const model::ModelBundle<T>& bundle,
                                                            const BatchBuilder& builder, const corpus::TaskSpec& spec,
                                                            const std::vector<const Example*>& examples,
                                                            std::size_t batch_size, std::size_t max_answer_length,
                                                            metrics::TaggingMode tagging_mode) {
  const auto pred = predict(bundle, builder, spec.format, examples, batch_size, max_answer_length);
  switch (spec.format) {
    case TaskFormat::classification: {
      std::vector<std::string> gold;
      for (const auto* e : examples) gold.push_back(std::get<corpus::ClassificationExample>(*e).label);
      return {{"accuracy", metrics::accuracy(pred.labels, gold)}};
    }
    case TaskFormat::multiple_choice: {
      std::vector<std::size_t> gold;
      for (const auto* e : examples) gold.push_back(std::get<corpus::MultipleChoiceExample>(*e).answer_index);
      return {{"accuracy", metrics::accuracy(pred.choices, gold)}};
    }
    case TaskFormat::span_extraction: {
      std::vector<std::vector<std::string>> gold;
      for (const auto* e : examples) {
        std::vector<std::string> g;
        for (const auto& a : std::get<corpus::SpanExample>(*e).answers) g.push_back(a.text);
        gold.push_back(std::move(g));
      }
      const auto s = metrics::span_score_mean(pred.spans, gold);
      return {{"f1", s.f1}, {"em", s.em}};
    }
    case TaskFormat::tagging: {
      std::vector<std::vector<std::string>> gold;
      for (const auto* e : examples) gold.push_back(std::get<corpus::TaggingExample>(*e).tags);
      return {{"f1", metrics::tagging_f1(pred.tags, gold, tagging_mode).f1}};
    }
    default:
      throw ConfigError("task '" + spec.name + "' is not scored by prediction");
  }
}

/// The single number early stopping maximizes: accuracy or F1.
inline double primary_value(const std::vector<std::pair<std::string, double>>& scores) {
  for (const auto& [name, v] : scores)
    if (name == "accuracy" || name == "f1") return v;
  throw MetricError("no primary metric among scores");
}

template <typename T>
metrics::EmbeddingMatrix embed_sentences(const model::ModelBundle<T>& bundle, const BatchBuilder& builder,
                                         const std::vector<std::string>& sentences,
                                         const model::EmbeddingExtractor& extractor, std::size_t batch_size) {
  metrics::EmbeddingMatrix out(static_cast<Eigen::Index>(sentences.size()), bundle.config().hidden_size);
  for (std::size_t begin = 0; begin < sentences.size(); begin += batch_size) {
    std::vector<corpus::EncodedRow> rows;
    for (std::size_t i = begin; i < std::min(sentences.size(), begin + batch_size); ++i)
      rows.push_back(builder.encode_sentence(sentences[i]));
    const auto emb = bundle.sentence_embed(corpus::make_batch(rows), extractor);
    out.middleRows(static_cast<Eigen::Index>(begin), emb.rows()) = emb.template cast<double>();
  }
  return out;
}

/// Retrieval records of one target language in one split. Source-language
/// records belong to the target language named in their pair or record id.
struct RetrievalSplit {
  std::vector<const corpus::RetrievalExample*> source;
  std::vector<const corpus::RetrievalExample*> target;
};

inline RetrievalSplit retrieval_split(const corpus::Dataset& ds, const std::string& split, const std::string& lang,
                                      const std::string& source_lang) {
  RetrievalSplit out;
  const auto* examples = ds.find(split);
  if (!examples) return out;
  const std::string marker = "-" + lang + "-";
  for (const auto& ex : *examples) {
    const auto& r = std::get<corpus::RetrievalExample>(ex);
    if (r.language == lang && lang != source_lang) {
      out.target.push_back(&r);
    } else if (r.language == source_lang && r.id.find(marker) != std::string::npos) {
      out.source.push_back(&r);
    }
  }
  return out;
}

/// Target-language sentences retrieve their source-language mate.
template <typename T>
double tatoeba_accuracy(const model::ModelBundle<T>& bundle, const BatchBuilder& builder, const RetrievalSplit& s,
                        const model::EmbeddingExtractor& extractor, std::size_t batch_size) {
  std::map<std::string, std::size_t> src_index;
  std::vector<std::string> src_text, tgt_text;
  for (const auto* r : s.source) {
    if (!r->pair_id) continue;
    src_index[*r->pair_id] = src_text.size();
    src_text.push_back(r->sentence);
  }
  std::vector<std::size_t> gold;
  for (const auto* r : s.target) {
    if (!r->pair_id) continue;
    auto it = src_index.find(*r->pair_id);
    if (it == src_index.end()) throw ConfigError("retrieval pair '" + *r->pair_id + "' has no source sentence");
    gold.push_back(it->second);
    tgt_text.push_back(r->sentence);
  }
  return metrics::retrieval_accuracy(embed_sentences(bundle, builder, tgt_text, extractor, batch_size),
                                     embed_sentences(bundle, builder, src_text, extractor, batch_size), gold);
}

template <typename T>
metrics::MiningInstance mining_instance(const model::ModelBundle<T>& bundle, const BatchBuilder& builder,
                                        const RetrievalSplit& s, const model::EmbeddingExtractor& extractor,
                                        std::size_t batch_size) {
  metrics::MiningInstance inst;
  std::vector<std::string> src_text, tgt_text;
  std::map<std::string, std::string> src_by_pair;
  for (const auto* r : s.source) {
    inst.src.ids.push_back(r->id);
    src_text.push_back(r->sentence);
    if (r->pair_id) src_by_pair[*r->pair_id] = r->id;
  }
  for (const auto* r : s.target) {
    inst.tgt.ids.push_back(r->id);
    tgt_text.push_back(r->sentence);
    if (r->pair_id) {
      auto it = src_by_pair.find(*r->pair_id);
      if (it != src_by_pair.end()) inst.gold.insert({it->second, r->id});
    }
  }
  inst.src.embeddings = embed_sentences(bundle, builder, src_text, extractor, batch_size);
  inst.tgt.embeddings = embed_sentences(bundle, builder, tgt_text, extractor, batch_size);
  return inst;
}

}  // namespace xfer::trainer
