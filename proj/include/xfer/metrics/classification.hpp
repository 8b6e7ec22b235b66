#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "xfer/error.hpp"

namespace xfer::metrics {

template <typename Label>
double accuracy(const std::vector<Label>& predictions, const std::vector<Label>& golds) {
  if (predictions.size() != golds.size())
    throw MetricError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                      std::to_string(golds.size()) + " golds");
  if (golds.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) correct += predictions[i] == golds[i];
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

/// F1 from precision and recall; 0 when both are 0.
inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

enum class TaggingMode { token_micro, entity_bio };

struct TaggingScore {
  double f1 = 0.0;
  std::size_t repaired_tags = 0;  // I- tags that opened an entity and were read as B-
};

struct Entity {
  std::string type;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  auto operator<=>(const Entity&) const = default;
};

/// BIO decoding. An I-X that does not continue an open X entity starts a new
/// entity, as if it were B-X; such repairs are counted.
inline std::vector<Entity> decode_bio(const std::vector<std::string>& tags, std::size_t* repaired = nullptr) {
  std::vector<Entity> out;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    const bool is_b = tag.rfind("B-", 0) == 0;
    const bool is_i = tag.rfind("I-", 0) == 0;
    if (!is_b && !is_i) {
      open = false;
      continue;
    }
    const std::string type = tag.substr(2);
    if (is_i && open && out.back().type == type && out.back().end == i) {
      out.back().end = i + 1;
      continue;
    }
    if (is_i && repaired) ++*repaired;
    out.push_back({type, i, i + 1});
    open = true;
  }
  return out;
}

/// token_micro: micro-averaged F1 over every token (equals token accuracy for
/// single-label tagging). entity_bio: exact-boundary entity F1; when neither
/// side has entities the score is 1.
inline TaggingScore tagging_f1(const std::vector<std::vector<std::string>>& predictions,
                               const std::vector<std::vector<std::string>>& golds, TaggingMode mode) {
  if (predictions.size() != golds.size()) throw MetricError("tagging_f1: example count mismatch");
  TaggingScore score;
  if (mode == TaggingMode::token_micro) {
    std::size_t tp = 0, total_pred = 0, total_gold = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
      if (predictions[i].size() != golds[i].size())
        throw MetricError("tagging_f1: length mismatch in example " + std::to_string(i));
      for (std::size_t t = 0; t < golds[i].size(); ++t) tp += predictions[i][t] == golds[i][t];
      total_pred += predictions[i].size();
      total_gold += golds[i].size();
    }
    if (total_gold == 0) return {1.0, 0};
    score.f1 = f1_score(static_cast<double>(tp) / static_cast<double>(total_pred),
                        static_cast<double>(tp) / static_cast<double>(total_gold));
    return score;
  }
  std::set<std::tuple<std::size_t, Entity>> pred, gold;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (predictions[i].size() != golds[i].size())
      throw MetricError("tagging_f1: length mismatch in example " + std::to_string(i));
    for (auto& e : decode_bio(predictions[i], &score.repaired_tags)) pred.emplace(i, e);
    for (auto& e : decode_bio(golds[i], &score.repaired_tags)) gold.emplace(i, e);
  }
  if (pred.empty() && gold.empty()) {
    score.f1 = 1.0;
    return score;
  }
  std::size_t tp = 0;
  for (const auto& e : pred) tp += gold.count(e);
  const double p = pred.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred.size());
  const double r = gold.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(gold.size());
  score.f1 = f1_score(p, r);
  return score;
}

}  // namespace xfer::metrics
