#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "xfer/corpus/task.hpp"

namespace xfer::corpus {

using nlohmann::json;

// JSONL record <-> Example. Field names follow the Example variants; an
// optional "split" field routes the record (default: "train" for trainable
// formats, "test" for retrieval).

inline json to_json(const Example& ex) {
  struct Visitor {
    json operator()(const ClassificationExample& e) const {
      json j{{"id", e.id}, {"text_a", e.text_a}, {"label", e.label}};
      if (e.text_b) j["text_b"] = *e.text_b;
      return j;
    }
    json operator()(const MultipleChoiceExample& e) const {
      return {{"id", e.id}, {"context", e.context}, {"question", e.question}, {"choices", e.choices},
              {"answer_index", e.answer_index}};
    }
    json operator()(const SpanExample& e) const {
      json answers = json::array();
      for (const auto& a : e.answers) answers.push_back({{"text", a.text}, {"start_char", a.start_char}});
      return {{"id", e.id}, {"context", e.context}, {"question", e.question}, {"answers", answers}};
    }
    json operator()(const TaggingExample& e) const {
      return {{"id", e.id}, {"words", e.words}, {"tags", e.tags}};
    }
    json operator()(const MlmExample& e) const {
      return {{"id", e.id}, {"text", e.text}, {"language", e.language}};
    }
    json operator()(const RetrievalExample& e) const {
      json j{{"id", e.id}, {"sentence", e.sentence}, {"language", e.language}};
      if (e.pair_id) j["pair_id"] = *e.pair_id;
      return j;
    }
  };
  return std::visit(Visitor{}, ex);
}

namespace detail {

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw std::invalid_argument(std::string("missing field '") + key + "'");
  return j.at(key).get<T>();
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace detail

/// Parses one record for the given format. Throws std::invalid_argument or
/// json exceptions on schema mismatch (callers attach line numbers).
inline Example from_json(const json& j, TaskFormat format) {
  using detail::optional_field;
  using detail::required;
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  switch (format) {
    case TaskFormat::classification:
      return ClassificationExample{required<std::string>(j, "id"), required<std::string>(j, "text_a"),
                                   optional_field<std::string>(j, "text_b"), required<std::string>(j, "label")};
    case TaskFormat::multiple_choice:
      return MultipleChoiceExample{required<std::string>(j, "id"), required<std::string>(j, "context"),
                                   required<std::string>(j, "question"),
                                   required<std::vector<std::string>>(j, "choices"),
                                   required<std::size_t>(j, "answer_index")};
    case TaskFormat::span_extraction: {
      SpanExample e{required<std::string>(j, "id"), required<std::string>(j, "context"),
                    required<std::string>(j, "question"), {}};
      for (const auto& a : required<json>(j, "answers"))
        e.answers.push_back({required<std::string>(a, "text"), required<std::size_t>(a, "start_char")});
      return e;
    }
    case TaskFormat::tagging:
      return TaggingExample{required<std::string>(j, "id"), required<std::vector<std::string>>(j, "words"),
                            required<std::vector<std::string>>(j, "tags")};
    case TaskFormat::mlm:
      return MlmExample{required<std::string>(j, "id"), required<std::string>(j, "text"),
                        required<std::string>(j, "language")};
    case TaskFormat::retrieval:
      return RetrievalExample{required<std::string>(j, "id"), required<std::string>(j, "sentence"),
                              required<std::string>(j, "language"), optional_field<std::string>(j, "pair_id")};
  }
  throw std::invalid_argument("unknown format");
}

inline std::string default_split(const TaskSpec& spec) { return spec.has_train ? "train" : "test"; }

/// Loads a JSONL task file. Every record is validated against the format's
/// schema and invariants; the first violation raises SchemaError carrying its
/// 1-based line number.
inline Dataset load_jsonl_task(std::istream& in, const TaskSpec& spec) {
  spec.validate();
  Dataset ds{spec, {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string split = default_split(spec);
    Example ex;
    try {
      const json j = json::parse(line);
      ex = from_json(j, spec.format);
      if (j.contains("split")) split = j.at("split").get<std::string>();
    } catch (const std::exception& e) {
      throw SchemaError(lineno, std::string("schema mismatch for ") + std::string(to_string(spec.format)) + ": " +
                                    e.what());
    }
    if (auto err = check_example(ex)) throw SchemaError(lineno, *err);
    if (spec.label_set) {
      const auto& labels = *spec.label_set;
      auto known = [&](const std::string& l) { return std::find(labels.begin(), labels.end(), l) != labels.end(); };
      if (const auto* c = std::get_if<ClassificationExample>(&ex); c && !known(c->label))
        throw SchemaError(lineno, "label '" + c->label + "' not in label_set");
      if (const auto* t = std::get_if<TaggingExample>(&ex))
        for (const auto& tag : t->tags)
          if (!known(tag)) throw SchemaError(lineno, "tag '" + tag + "' not in label_set");
    }
    ds.splits[split].push_back(std::move(ex));
  }
  if (spec.has_train && spec.format != TaskFormat::mlm && !ds.find("train"))
    throw ConfigError("task '" + spec.name + "' requires a train split but none was found");
  return ds;
}

inline Dataset load_jsonl_task(const std::filesystem::path& path, const TaskSpec& spec) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open task file " + path.string());
  return load_jsonl_task(in, spec);
}

/// Serializes every split of a dataset, one record per line, splits in key order.
inline void write_jsonl(std::ostream& out, const Dataset& ds) {
  for (const auto& [split, examples] : ds.splits) {
    for (const auto& ex : examples) {
      json j = to_json(ex);
      j["split"] = split;
      out << j.dump() << '\n';
    }
  }
}

inline json to_json(const TaskSpec& spec) {
  json j{{"name", spec.name},
         {"format", std::string(to_string(spec.format))},
         {"metric", spec.metric},
         {"languages", spec.languages},
         {"has_train", spec.has_train}};
  if (spec.label_set) j["label_set"] = *spec.label_set;
  return j;
}

inline TaskSpec task_spec_from_json(const json& j) {
  TaskSpec s;
  s.name = j.at("name").get<std::string>();
  s.format = parse_format(j.at("format").get<std::string>());
  if (j.contains("label_set")) s.label_set = j.at("label_set").get<std::vector<std::string>>();
  s.metric = j.at("metric").get<std::string>();
  s.languages = j.at("languages").get<std::vector<std::string>>();
  s.has_train = j.at("has_train").get<bool>();
  s.validate();
  return s;
}

}  // namespace xfer::corpus
