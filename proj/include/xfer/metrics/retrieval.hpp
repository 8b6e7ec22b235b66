#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "xfer/error.hpp"
#include "xfer/metrics/classification.hpp"

namespace xfer::metrics {

using EmbeddingMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One side of a mining instance: embedding rows and the sentence ids they belong to.
struct MiningSide {
  EmbeddingMatrix embeddings;
  std::vector<std::string> ids;
};

struct MiningInstance {
  MiningSide src;
  MiningSide tgt;
  std::set<std::pair<std::string, std::string>> gold;  // (src id, tgt id)
};

struct MiningCandidate {
  std::size_t src = 0;
  std::size_t tgt = 0;
  double score = 0.0;
};

struct MiningResult {
  std::string src_language;
  std::string tgt_language;
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<std::pair<std::string, std::string>> predicted;
};

struct MiningOutcome {
  MiningResult dev;
  MiningResult test;
};

/// Unit-normalized copy; a zero-norm row is an error naming its id.
inline EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m, const std::vector<std::string>& ids) {
  EmbeddingMatrix out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw MetricError("zero-norm embedding for '" +
                        (static_cast<std::size_t>(i) < ids.size() ? ids[static_cast<std::size_t>(i)]
                                                                  : std::to_string(i)) +
                        "'");
    out.row(i) /= n;
  }
  return out;
}

namespace detail {

// argmax per row, lowest index on ties
inline std::vector<std::size_t> row_argmax(const EmbeddingMatrix& sims) {
  std::vector<std::size_t> best(static_cast<std::size_t>(sims.rows()), 0);
  for (Eigen::Index i = 0; i < sims.rows(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < sims.cols(); ++j)
      if (sims(i, j) > top) {
        top = sims(i, j);
        best[static_cast<std::size_t>(i)] = static_cast<std::size_t>(j);
      }
  }
  return best;
}

}  // namespace detail

/// Mutual nearest neighbours under cosine similarity, in source order.
inline std::vector<MiningCandidate> mutual_nearest_neighbors(const MiningSide& src, const MiningSide& tgt) {
  if (src.embeddings.rows() == 0 || tgt.embeddings.rows() == 0) return {};
  if (src.embeddings.cols() != tgt.embeddings.cols()) throw MetricError("embedding dimension mismatch");
  const EmbeddingMatrix s = normalize_rows(src.embeddings, src.ids);
  const EmbeddingMatrix t = normalize_rows(tgt.embeddings, tgt.ids);
  const EmbeddingMatrix sims = s * t.transpose();
  const auto fwd = detail::row_argmax(sims);
  const auto bwd = detail::row_argmax(sims.transpose());
  std::vector<MiningCandidate> out;
  for (std::size_t i = 0; i < fwd.size(); ++i)
    if (bwd[fwd[i]] == i)
      out.push_back({i, fwd[i], sims(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(fwd[i]))});
  return out;
}

/// Precision/recall/F1 of predicting every candidate scoring >= threshold.
inline MiningResult score_at_threshold(const MiningInstance& inst, const std::vector<MiningCandidate>& candidates,
                                       double threshold) {
  MiningResult r;
  r.threshold = threshold;
  std::size_t tp = 0;
  for (const auto& c : candidates) {
    if (!(c.score >= threshold)) continue;
    auto pair = std::make_pair(inst.src.ids[c.src], inst.tgt.ids[c.tgt]);
    tp += inst.gold.count(pair);
    r.predicted.push_back(std::move(pair));
  }
  r.precision = r.predicted.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(r.predicted.size());
  r.recall = inst.gold.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(inst.gold.size());
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

/// Picks the dev threshold with maximal F1 by sweeping every candidate score
/// (plus "above all", which predicts nothing), then applies it to test. On
/// F1 ties the higher threshold wins.
inline MiningOutcome mine_parallel(const MiningInstance& dev, const MiningInstance& test) {
  for (const auto& g : dev.gold)
    if (test.gold.count(g)) throw MetricError("mine_parallel: dev and test gold pairs overlap");

  auto dev_candidates = mutual_nearest_neighbors(dev.src, dev.tgt);
  std::sort(dev_candidates.begin(), dev_candidates.end(),
            [](const MiningCandidate& a, const MiningCandidate& b) { return a.score > b.score; });

  double best_threshold = std::numeric_limits<double>::infinity();
  double best_f1 = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < dev_candidates.size(); ++k) {
    tp += dev.gold.count({dev.src.ids[dev_candidates[k].src], dev.tgt.ids[dev_candidates[k].tgt]});
    // evaluate only at the end of a run of equal scores
    if (k + 1 < dev_candidates.size() && dev_candidates[k + 1].score == dev_candidates[k].score) continue;
    const double p = static_cast<double>(tp) / static_cast<double>(k + 1);
    const double r = dev.gold.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(dev.gold.size());
    const double f = f1_score(p, r);
    if (f > best_f1) {
      best_f1 = f;
      best_threshold = dev_candidates[k].score;
    }
  }
  MiningOutcome out;
  out.dev = score_at_threshold(dev, dev_candidates, best_threshold);
  out.test = score_at_threshold(test, mutual_nearest_neighbors(test.src, test.tgt), best_threshold);
  return out;
}

/// Fraction of source rows whose cosine nearest target is gold[i]. Ties go to
/// the lowest target index.
inline double retrieval_accuracy(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                                 const std::vector<std::size_t>& gold) {
  if (src.rows() != tgt.rows()) throw MetricError("retrieval_accuracy: source and target sizes differ");
  if (gold.size() != static_cast<std::size_t>(src.rows())) throw MetricError("retrieval_accuracy: bad alignment size");
  std::vector<bool> hit(gold.size(), false);
  for (auto g : gold) {
    if (g >= gold.size() || hit[g]) throw MetricError("retrieval_accuracy: alignment is not a bijection");
    hit[g] = true;
  }
  if (gold.empty()) return 0.0;
  std::vector<std::string> src_ids, tgt_ids;
  for (Eigen::Index i = 0; i < src.rows(); ++i) {
    src_ids.push_back("src[" + std::to_string(i) + "]");
    tgt_ids.push_back("tgt[" + std::to_string(i) + "]");
  }
  const EmbeddingMatrix sims = normalize_rows(src, src_ids) * normalize_rows(tgt, tgt_ids).transpose();
  const auto nn = detail::row_argmax(sims);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += nn[i] == gold[i];
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

}  // namespace xfer::metrics
