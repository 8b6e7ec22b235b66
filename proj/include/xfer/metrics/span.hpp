#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "xfer/error.hpp"
#include "xfer/metrics/classification.hpp"

namespace xfer::metrics {

struct SpanScore {
  double f1 = 0.0;
  double em = 0.0;
};

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
/// whitespace.
inline std::string normalize_answer(std::string_view text) {
  std::string lowered;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) continue;
    lowered += static_cast<char>(std::tolower(u));
  }
  std::string out;
  std::size_t i = 0;
  while (i < lowered.size()) {
    while (i < lowered.size() && std::isspace(static_cast<unsigned char>(lowered[i]))) ++i;
    const std::size_t b = i;
    while (i < lowered.size() && !std::isspace(static_cast<unsigned char>(lowered[i]))) ++i;
    if (i == b) break;
    const std::string_view word(lowered.data() + b, i - b);
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

namespace detail {

inline std::vector<std::string> answer_tokens(const std::string& normalized) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < normalized.size()) {
    const std::size_t j = normalized.find(' ', i);
    out.push_back(normalized.substr(i, j == std::string::npos ? std::string::npos : j - i));
    if (j == std::string::npos) break;
    i = j + 1;
  }
  return out;
}

inline SpanScore score_single(const std::string& pred, const std::string& gold) {
  const std::string np = normalize_answer(pred);
  const std::string ng = normalize_answer(gold);
  SpanScore s;
  s.em = np == ng ? 1.0 : 0.0;
  const auto pt = answer_tokens(np);
  const auto gt = answer_tokens(ng);
  if (pt.empty() || gt.empty()) {
    s.f1 = (pt.empty() && gt.empty()) ? 1.0 : 0.0;
    return s;
  }
  std::map<std::string, int> bag;
  for (const auto& t : gt) ++bag[t];
  std::size_t common = 0;
  for (const auto& t : pt) {
    auto it = bag.find(t);
    if (it != bag.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return s;
  s.f1 = f1_score(static_cast<double>(common) / static_cast<double>(pt.size()),
                  static_cast<double>(common) / static_cast<double>(gt.size()));
  return s;
}

}  // namespace detail

/// Per-example score; EM and F1 are each maximized over the golds.
inline SpanScore span_score(const std::string& prediction, const std::vector<std::string>& golds) {
  if (golds.empty()) throw MetricError("span_score: at least one gold answer is required");
  SpanScore best;
  for (const auto& g : golds) {
    const auto s = detail::score_single(prediction, g);
    best.f1 = std::max(best.f1, s.f1);
    best.em = std::max(best.em, s.em);
  }
  return best;
}

/// Dataset score: mean of per-example scores.
inline SpanScore span_score_mean(const std::vector<std::string>& predictions,
                                 const std::vector<std::vector<std::string>>& golds) {
  if (predictions.size() != golds.size()) throw MetricError("span_score: example count mismatch");
  SpanScore total;
  if (golds.empty()) return total;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto s = span_score(predictions[i], golds[i]);
    total.f1 += s.f1;
    total.em += s.em;
  }
  total.f1 /= static_cast<double>(golds.size());
  total.em /= static_cast<double>(golds.size());
  return total;
}

}  // namespace xfer::metrics
