#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "xfer/error.hpp"
#include "xfer/rng.hpp"

namespace xfer::sampling {

inline constexpr std::uint64_t kDefaultTaskCap = std::uint64_t{1} << 17;  // 131072
inline constexpr double kDefaultLanguageAlpha = 0.3;

/// Task-level mixture: r_m = min(e_m, K) / sum_m' min(e_m', K).
struct MultiTaskMixture {
  std::map<std::string, std::uint64_t> sizes;
  std::uint64_t cap = kDefaultTaskCap;
  std::map<std::string, double> rates;

  /// Sum of capped sizes; one mixture "epoch" in examples.
  std::uint64_t capped_total() const {
    std::uint64_t total = 0;
    for (const auto& [name, e] : sizes) total += std::min(e, cap);
    return total;
  }
};

/// Language-level mixture: q_i = p_i^alpha / sum_j p_j^alpha, p_i = n_i / sum_k n_k.
struct LanguageMixture {
  std::map<std::string, std::uint64_t> counts;
  double alpha = kDefaultLanguageAlpha;
  std::map<std::string, double> rates;
};

inline MultiTaskMixture compute_task_rates(const std::map<std::string, std::uint64_t>& sizes,
                                           std::uint64_t cap = kDefaultTaskCap) {
  if (sizes.empty()) throw ConfigError("compute_task_rates: empty task map");
  if (cap == 0) throw ConfigError("compute_task_rates: cap K must be positive");
  MultiTaskMixture m{sizes, cap, {}};
  const auto denom = m.capped_total();
  for (const auto& [name, e] : sizes) {
    if (e == 0) throw ConfigError("compute_task_rates: task '" + name + "' has no examples");
  }
  for (const auto& [name, e] : sizes)
    m.rates[name] = static_cast<double>(std::min(e, cap)) / static_cast<double>(denom);
  return m;
}

inline LanguageMixture compute_language_rates(const std::map<std::string, std::uint64_t>& counts,
                                              double alpha = kDefaultLanguageAlpha) {
  if (counts.empty()) throw ConfigError("compute_language_rates: empty language map");
  if (!(alpha > 0.0)) throw ConfigError("compute_language_rates: alpha must be positive");
  LanguageMixture m{counts, alpha, {}};
  double total = 0.0;
  for (const auto& [lang, n] : counts) {
    if (n == 0) throw ConfigError("compute_language_rates: language '" + lang + "' has a non-positive count");
    total += static_cast<double>(n);
  }
  double z = 0.0;
  for (const auto& [lang, n] : counts) {
    const double q = std::pow(static_cast<double>(n) / total, alpha);
    m.rates[lang] = q;
    z += q;
  }
  for (auto& [lang, q] : m.rates) q /= z;
  return m;
}

/// Draws one key with probability equal to its rate. Keys are visited in map
/// order, so a fixed seed gives a fixed sequence.
inline const std::string& sample_source(SeededRng& rng, const std::map<std::string, double>& rates) {
  if (rates.empty()) throw ConfigError("sample_source: empty mixture");
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (const auto& [key, rate] : rates) {
    cumulative += rate;
    if (u < cumulative) return key;
  }
  // u landed in the rounding slack above the last cumulative sum
  auto last = rates.rbegin();
  while (last != rates.rend() && last->second <= 0.0) ++last;
  return last == rates.rend() ? rates.rbegin()->first : last->first;
}

inline const std::string& sample_source(SeededRng& rng, const MultiTaskMixture& m) {
  return sample_source(rng, m.rates);
}
inline const std::string& sample_source(SeededRng& rng, const LanguageMixture& m) {
  return sample_source(rng, m.rates);
}

inline nlohmann::json to_json(const MultiTaskMixture& m) {
  nlohmann::json j{{"cap", m.cap}, {"capped_total", m.capped_total()}};
  for (const auto& [name, e] : m.sizes) {
    j["tasks"][name] = {{"size", e},
                        {"numerator", std::min(e, m.cap)},
                        {"rate", m.rates.at(name)}};
  }
  return j;
}

inline nlohmann::json to_json(const LanguageMixture& m) {
  nlohmann::json j{{"alpha", m.alpha}};
  for (const auto& [lang, n] : m.counts) j["languages"][lang] = {{"count", n}, {"rate", m.rates.at(lang)}};
  return j;
}

}  // namespace xfer::sampling
