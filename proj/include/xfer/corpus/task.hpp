#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "xfer/error.hpp"

namespace xfer::corpus {

enum class TaskFormat { classification, multiple_choice, span_extraction, tagging, mlm, retrieval };

inline constexpr TaskFormat kAllFormats[] = {TaskFormat::classification, TaskFormat::multiple_choice,
                                             TaskFormat::span_extraction, TaskFormat::tagging,
                                             TaskFormat::mlm, TaskFormat::retrieval};

inline std::string_view to_string(TaskFormat f) {
  switch (f) {
    case TaskFormat::classification: return "classification";
    case TaskFormat::multiple_choice: return "multiple_choice";
    case TaskFormat::span_extraction: return "span_extraction";
    case TaskFormat::tagging: return "tagging";
    case TaskFormat::mlm: return "mlm";
    case TaskFormat::retrieval: return "retrieval";
  }
  return "unknown";
}

inline TaskFormat parse_format(std::string_view s) {
  for (auto f : kAllFormats)
    if (to_string(f) == s) return f;
  throw ConfigError("unknown task format '" + std::string(s) + "'");
}

/// Metric identifiers understood by the trainer and report modules.
namespace metric_id {
inline constexpr std::string_view accuracy = "accuracy";
inline constexpr std::string_view token_f1 = "token_f1";
inline constexpr std::string_view entity_f1 = "entity_f1";
inline constexpr std::string_view span_f1_em = "span_f1_em";
inline constexpr std::string_view mining_f1 = "mining_f1";
inline constexpr std::string_view retrieval_accuracy = "retrieval_accuracy";
inline constexpr std::string_view mlm_loss = "mlm_loss";
}  // namespace metric_id

struct TaskSpec {
  std::string name;
  TaskFormat format = TaskFormat::classification;
  std::optional<std::vector<std::string>> label_set;
  std::string metric;
  std::vector<std::string> languages;
  bool has_train = true;

  void validate() const {
    if (name.empty()) throw ConfigError("task spec without a name");
    const bool needs_labels = format == TaskFormat::classification || format == TaskFormat::tagging;
    if (needs_labels != label_set.has_value())
      throw ConfigError("task '" + name + "': label_set must be present exactly for classification and tagging");
    if (needs_labels && label_set->empty()) throw ConfigError("task '" + name + "': empty label_set");
    if ((format == TaskFormat::retrieval) == has_train)
      throw ConfigError("task '" + name + "': has_train must be false exactly for retrieval tasks");
    if (languages.empty()) throw ConfigError("task '" + name + "': no languages");
  }
};

struct ClassificationExample {
  std::string id;
  std::string text_a;
  std::optional<std::string> text_b;
  std::string label;
};

struct MultipleChoiceExample {
  std::string id;
  std::string context;
  std::string question;
  std::vector<std::string> choices;
  std::size_t answer_index = 0;
};

struct SpanAnswer {
  std::string text;
  std::size_t start_char = 0;
};

struct SpanExample {
  std::string id;
  std::string context;
  std::string question;
  std::vector<SpanAnswer> answers;
};

struct TaggingExample {
  std::string id;
  std::vector<std::string> words;
  std::vector<std::string> tags;
};

struct MlmExample {
  std::string id;
  std::string text;
  std::string language;
};

struct RetrievalExample {
  std::string id;
  std::string sentence;
  std::string language;
  std::optional<std::string> pair_id;
};

using Example = std::variant<ClassificationExample, MultipleChoiceExample, SpanExample, TaggingExample,
                             MlmExample, RetrievalExample>;

inline TaskFormat format_of(const Example& ex) {
  return static_cast<TaskFormat>(ex.index());
}

/// Checks the per-variant invariants; returns an error description or nullopt.
inline std::optional<std::string> check_example(const Example& ex) {
  struct Visitor {
    std::optional<std::string> operator()(const ClassificationExample&) const { return std::nullopt; }
    std::optional<std::string> operator()(const MultipleChoiceExample& e) const {
      if (e.choices.empty()) return "multiple_choice example has no choices";
      if (e.answer_index >= e.choices.size()) return "answer_index out of range";
      return std::nullopt;
    }
    std::optional<std::string> operator()(const SpanExample& e) const {
      if (e.answers.empty()) return "span example has no answers";
      for (const auto& a : e.answers) {
        if (a.start_char + a.text.size() > e.context.size() ||
            e.context.compare(a.start_char, a.text.size(), a.text) != 0)
          return "answer '" + a.text + "' not found at start_char " + std::to_string(a.start_char);
      }
      return std::nullopt;
    }
    std::optional<std::string> operator()(const TaggingExample& e) const {
      if (e.words.size() != e.tags.size())
        return "words/tags length mismatch (" + std::to_string(e.words.size()) + " vs " +
               std::to_string(e.tags.size()) + ")";
      return std::nullopt;
    }
    std::optional<std::string> operator()(const MlmExample&) const { return std::nullopt; }
    std::optional<std::string> operator()(const RetrievalExample&) const { return std::nullopt; }
  };
  return std::visit(Visitor{}, ex);
}

/// Split naming: "train", "dev", "test" hold English data; per-language
/// evaluation splits are "<split>.<lang>" (e.g. "test.l1"). Retrieval tasks
/// keep every language in "dev"/"test" and tell languages apart by record.
inline std::string split_name(std::string_view split, std::string_view lang, std::string_view source_lang = "en") {
  if (lang == source_lang) return std::string(split);
  return std::string(split) + "." + std::string(lang);
}

struct Dataset {
  TaskSpec spec;
  std::map<std::string, std::vector<Example>> splits;

  const std::vector<Example>* find(const std::string& split) const {
    auto it = splits.find(split);
    return it == splits.end() ? nullptr : &it->second;
  }
  const std::vector<Example>& at(const std::string& split) const {
    auto it = splits.find(split);
    if (it == splits.end()) throw ConfigError("task '" + spec.name + "' has no split '" + split + "'");
    return it->second;
  }
  std::size_t size(const std::string& split) const {
    const auto* s = find(split);
    return s ? s->size() : 0;
  }
};

}  // namespace xfer::corpus
