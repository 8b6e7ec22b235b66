#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "xfer/metrics.hpp"
#include "xfer/rng.hpp"

// Independent reference implementations shared by the unit tests and the
// acceptance check.
namespace xfer::oracle {

using metrics::EmbeddingMatrix;
using metrics::MiningInstance;

inline EmbeddingMatrix random_matrix(SeededRng& rng, Eigen::Index rows, Eigen::Index cols) {
  EmbeddingMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline std::vector<std::string> make_ids(const std::string& prefix, std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

// Gold pairs are noisy copies of each other; the rest are unrelated distractors.
inline MiningInstance planted_instance(SeededRng& rng, std::size_t pairs, std::size_t distractors, double noise,
                                const std::string& tag) {
  const Eigen::Index dim = 12;
  MiningInstance inst;
  const auto n_src = static_cast<Eigen::Index>(pairs + distractors);
  const auto n_tgt = static_cast<Eigen::Index>(pairs + distractors / 2);
  inst.src.embeddings = random_matrix(rng, n_src, dim);
  inst.tgt.embeddings = random_matrix(rng, n_tgt, dim);
  inst.src.ids = make_ids(tag + "s", static_cast<std::size_t>(n_src));
  inst.tgt.ids = make_ids(tag + "t", static_cast<std::size_t>(n_tgt));
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto i = static_cast<Eigen::Index>(p);
    inst.tgt.embeddings.row(i) = inst.src.embeddings.row(i) + noise * random_matrix(rng, 1, dim);
    inst.gold.insert({inst.src.ids[p], inst.tgt.ids[p]});
  }
  return inst;
}

// Direct cosine loops, no shared helpers.
inline std::vector<std::tuple<std::size_t, std::size_t, double>> oracle_candidates(const MiningInstance& inst) {
  const auto cosine = [](const auto& a, const auto& b) {
    double dot = 0, na = 0, nb = 0;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      dot += a(k) * b(k);
      na += a(k) * a(k);
      nb += b(k) * b(k);
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };
  const auto ns = static_cast<std::size_t>(inst.src.embeddings.rows());
  const auto nt = static_cast<std::size_t>(inst.tgt.embeddings.rows());
  std::vector<std::vector<double>> sim(ns, std::vector<double>(nt));
  for (std::size_t i = 0; i < ns; ++i)
    for (std::size_t j = 0; j < nt; ++j)
      sim[i][j] = cosine(inst.src.embeddings.row(static_cast<Eigen::Index>(i)),
                         inst.tgt.embeddings.row(static_cast<Eigen::Index>(j)));
  std::vector<std::tuple<std::size_t, std::size_t, double>> out;
  for (std::size_t i = 0; i < ns; ++i) {
    std::size_t j = 0;
    for (std::size_t c = 1; c < nt; ++c)
      if (sim[i][c] > sim[i][j]) j = c;
    std::size_t back = 0;
    for (std::size_t r = 1; r < ns; ++r)
      if (sim[r][j] > sim[back][j]) back = r;
    if (back == i) out.emplace_back(i, j, sim[i][j]);
  }
  return out;
}

inline double oracle_best_f1(const MiningInstance& inst) {
  const auto cands = oracle_candidates(inst);
  std::vector<double> thresholds;
  for (const auto& [i, j, s] : cands) {
    thresholds.push_back(s);
    thresholds.push_back(std::nextafter(s, std::numeric_limits<double>::infinity()));
  }
  double best = 0.0;
  for (double th : thresholds) {
    std::size_t predicted = 0, tp = 0;
    for (const auto& [i, j, s] : cands) {
      if (s < th) continue;
      ++predicted;
      tp += inst.gold.count({inst.src.ids[i], inst.tgt.ids[j]});
    }
    if (tp == 0) continue;
    const double p = double(tp) / double(predicted);
    const double r = double(tp) / double(inst.gold.size());
    best = std::max(best, 2 * p * r / (p + r));
  }
  return best;
}

// Independent span oracle: stream tokenization and bag intersection.
inline double oracle_span_f1(const std::string& pred, const std::string& gold) {
  const auto norm_tokens = [](const std::string& s) {
    std::string cleaned;
    for (char c : s) {
      if (std::ispunct(static_cast<unsigned char>(c))) continue;
      cleaned += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    std::istringstream in(cleaned);
    std::multiset<std::string> bag;
    for (std::string w; in >> w;)
      if (w != "a" && w != "an" && w != "the") bag.insert(w);
    return bag;
  };
  const auto p = norm_tokens(pred);
  const auto g = norm_tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::vector<std::string> common;
  std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(common));
  if (common.empty()) return 0.0;
  const double prec = double(common.size()) / double(p.size());
  const double rec = double(common.size()) / double(g.size());
  return 2 * prec * rec / (prec + rec);
}

inline std::string random_answer(SeededRng& rng) {
  static const std::vector<std::string> words = {"the", "a",   "an",  "Cat", "cat,", "sat", "down",
                                                 "dog", "ran", "red", "big", "The",  "mat.", "on"};
  std::string out;
  const auto n = rng.below(6);
  for (std::uint64_t i = 0; i < n; ++i) {
    if (i) out += rng.bernoulli(0.2) ? "  " : " ";
    out += words[rng.below(words.size())];
  }
  return out;
}


}  // namespace xfer::oracle
