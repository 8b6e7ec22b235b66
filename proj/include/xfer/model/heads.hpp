#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "xfer/corpus/task.hpp"
#include "xfer/corpus/tokenizer.hpp"
#include "xfer/error.hpp"
#include "xfer/model/encoder.hpp"
#include "xfer/model/tensor.hpp"
#include "xfer/sampling/masking.hpp"

namespace xfer::model {

using corpus::TaskFormat;

/// Extra structure a head needs beyond the encoder output.
struct HeadInputs {
  std::size_t num_choices = 0;                                  // multiple_choice: batch = questions * choices
  std::vector<std::pair<std::size_t, std::size_t>> mlm_positions;  // mlm: (example, position) pairs to score
};

struct HeadTargets {
  std::vector<int> labels;                 // classification class / multiple-choice answer per example
  std::vector<int> span_start, span_end;   // token positions
  std::vector<std::vector<int>> tags;      // per example, per kept word
  std::vector<int> mlm_labels;             // aligned with HeadInputs::mlm_positions
};

/// Head logits. Layout by format:
///  classification  logits [B][labels]
///  multiple_choice logits [questions][choices]
///  span_extraction logits = start [B][T], end_logits = end [B][T]; -inf at padding
///  tagging         logits [sum of words][tags]; example b owns rows [group_offsets[b], group_offsets[b+1])
///  mlm             logits [positions][vocab]
template <typename T>
struct HeadOutput {
  TaskFormat format = TaskFormat::classification;
  Mat<T> logits;
  Mat<T> end_logits;
  std::vector<std::size_t> group_offsets;

  // backward cache
  std::vector<std::size_t> rows;  // encoder rows feeding the head
  Mat<T> gathered, pooled, transform_pre, transform_act;
  typename LayerNorm<T>::Cache transform_norm_cache;
  Mat<T> transformed;
};

template <typename T>
class Head {
 public:
  Head() = default;
  Head(TaskFormat format, std::vector<std::string> labels, std::size_t hidden, std::size_t vocab, SeededRng& rng)
      : format_(format), labels_(std::move(labels)) {
    switch (format_) {
      case TaskFormat::classification:
        if (labels_.empty()) throw ConfigError("classification head needs labels");
        pooler_.init(hidden, hidden, rng);
        out_.init(hidden, labels_.size(), rng);
        break;
      case TaskFormat::multiple_choice:
        pooler_.init(hidden, hidden, rng);
        out_.init(hidden, 1, rng);
        break;
      case TaskFormat::span_extraction:
        out_.init(hidden, 2, rng);
        break;
      case TaskFormat::tagging:
        if (labels_.empty()) throw ConfigError("tagging head needs labels");
        out_.init(hidden, labels_.size(), rng);
        break;
      case TaskFormat::mlm:
        pooler_.init(hidden, hidden, rng);
        norm_.init(hidden);
        decoder_bias_.resize(1, static_cast<Eigen::Index>(vocab));
        break;
      case TaskFormat::retrieval:
        throw ConfigError("retrieval tasks have no trainable head");
    }
  }

  TaskFormat format() const noexcept { return format_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  template <typename F>
  void for_each_param(F&& f) {
    const std::string prefix = "head." + std::string(corpus::to_string(format_));
    if (format_ == TaskFormat::classification || format_ == TaskFormat::multiple_choice)
      pooler_.for_each_param(prefix + ".pooler", f);
    if (format_ == TaskFormat::mlm) {
      pooler_.for_each_param(prefix + ".transform", f);
      norm_.for_each_param(prefix + ".transform_norm", f);
      f(prefix + ".decoder_bias", decoder_bias_);
      return;
    }
    out_.for_each_param(prefix + ".out", f);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    const_cast<Head*>(this)->for_each_param([&](const std::string& n, Param<T>& p) { f(n, std::as_const(p)); });
  }

  HeadOutput<T> forward(const typename Encoder<T>::Forward& enc, const corpus::TokenizedBatch& batch,
                        const HeadInputs& in = {}) const {
    HeadOutput<T> o;
    o.format = format_;
    const auto& L = enc.layout;
    const auto& Z = enc.output;
    switch (format_) {
      case TaskFormat::classification:
      case TaskFormat::multiple_choice: {
        for (std::size_t b = 0; b < L.batch; ++b) o.rows.push_back(L.offsets[b]);  // CLS
        o.gathered = gather(Z, o.rows);
        o.pooled = pooler_.forward(o.gathered).array().tanh();
        Mat<T> scores = out_.forward(o.pooled);
        if (format_ == TaskFormat::classification) {
          o.logits = std::move(scores);
        } else {
          const std::size_t c = in.num_choices;
          if (c == 0 || L.batch % c != 0)
            throw ConfigError("multiple_choice batch of " + std::to_string(L.batch) + " rows is not a multiple of " +
                              std::to_string(c) + " choices");
          o.logits = Mat<T>(static_cast<Eigen::Index>(L.batch / c), static_cast<Eigen::Index>(c));
          for (std::size_t i = 0; i < L.batch; ++i)
            o.logits(static_cast<Eigen::Index>(i / c), static_cast<Eigen::Index>(i % c)) = scores(static_cast<Eigen::Index>(i), 0);
        }
        break;
      }
      case TaskFormat::span_extraction: {
        const Mat<T> se = out_.forward(Z);
        const T neg_inf = -std::numeric_limits<T>::infinity();
        o.logits = Mat<T>::Constant(static_cast<Eigen::Index>(L.batch), static_cast<Eigen::Index>(L.length), neg_inf);
        o.end_logits = o.logits;
        for (std::size_t b = 0; b < L.batch; ++b)
          for (std::size_t t = 0; t < L.row_length(b); ++t) {
            const auto r = static_cast<Eigen::Index>(L.row(b, t));
            o.logits(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t)) = se(r, 0);
            o.end_logits(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t)) = se(r, 1);
          }
        break;
      }
      case TaskFormat::tagging: {
        o.group_offsets.push_back(0);
        for (std::size_t b = 0; b < L.batch; ++b) {
          for (std::size_t s : batch.word_starts.at(b))
            if (s < L.row_length(b)) o.rows.push_back(L.row(b, s));
          o.group_offsets.push_back(o.rows.size());
        }
        o.gathered = gather(Z, o.rows);
        o.logits = out_.forward(o.gathered);
        break;
      }
      case TaskFormat::mlm: {
        for (const auto& [b, t] : in.mlm_positions) {
          if (b >= L.batch || t >= L.row_length(b)) throw ConfigError("mlm position outside the batch");
          o.rows.push_back(L.row(b, t));
        }
        o.gathered = gather(Z, o.rows);
        o.transform_pre = pooler_.forward(o.gathered);
        o.transform_act = o.transform_pre.unaryExpr([](T v) { return gelu(v); });
        o.transformed = norm_.forward(o.transform_act, &o.transform_norm_cache);
        if (!enc.token_embeddings) throw ConfigError("mlm head needs the encoder's token embeddings");
        o.logits = o.transformed * enc.token_embeddings->transpose();
        o.logits.rowwise() += decoder_bias_.value.row(0);
        break;
      }
      case TaskFormat::retrieval: break;
    }
    return o;
  }

  /// Mean loss of the head's objective; when `d_output` is non-null, head
  /// gradients are accumulated and dL/d(encoder output) is written to it.
  T loss(const HeadOutput<T>& o, const typename Encoder<T>::Forward& enc, const HeadTargets& tg,
         Mat<T>* d_output) {
    const auto& L = enc.layout;
    Mat<T> dg;  // gradient w.r.t. gathered rows
    T loss = 0;
    const bool grad = d_output != nullptr;
    switch (format_) {
      case TaskFormat::classification:
      case TaskFormat::multiple_choice: {
        Mat<T> dlogits;
        check_size(tg.labels.size(), static_cast<std::size_t>(o.logits.rows()), "labels");
        loss = cross_entropy(o.logits, tg.labels, grad ? &dlogits : nullptr);
        if (!grad) break;
        Mat<T> dscores;
        if (format_ == TaskFormat::classification) {
          dscores = std::move(dlogits);
        } else {
          dscores.resize(static_cast<Eigen::Index>(L.batch), 1);
          const auto c = static_cast<std::size_t>(o.logits.cols());
          for (std::size_t i = 0; i < L.batch; ++i)
            dscores(static_cast<Eigen::Index>(i), 0) = dlogits(static_cast<Eigen::Index>(i / c), static_cast<Eigen::Index>(i % c));
        }
        Mat<T> dpooled = out_.backward(o.pooled, dscores);
        Mat<T> dpre = dpooled.cwiseProduct((T(1) - o.pooled.array().square()).matrix());
        dg = pooler_.backward(o.gathered, dpre);
        break;
      }
      case TaskFormat::span_extraction: {
        check_size(tg.span_start.size(), L.batch, "span_start");
        check_size(tg.span_end.size(), L.batch, "span_end");
        Mat<T> dse = Mat<T>::Zero(static_cast<Eigen::Index>(L.rows()), 2);
        const T half = static_cast<T>(0.5);
        for (std::size_t b = 0; b < L.batch; ++b) {
          const auto n = static_cast<Eigen::Index>(L.row_length(b));
          for (int side = 0; side < 2; ++side) {
            const Mat<T>& src = side == 0 ? o.logits : o.end_logits;
            const int target = side == 0 ? tg.span_start[b] : tg.span_end[b];
            if (target < 0 || target >= n) throw ConfigError("span target outside the sequence");
            Mat<T> row = src.block(static_cast<Eigen::Index>(b), 0, 1, n);
            Mat<T> drow;
            loss += cross_entropy(row, {target}, grad ? &drow : nullptr, half / static_cast<T>(L.batch));
            if (grad) dse.block(static_cast<Eigen::Index>(L.offsets[b]), side, n, 1) = drow.transpose();
          }
        }
        if (!grad) break;
        *d_output = out_.backward(enc.output, dse);
        return loss;
      }
      case TaskFormat::tagging: {
        std::vector<int> flat;
        check_size(tg.tags.size(), L.batch, "tags");
        for (std::size_t b = 0; b < L.batch; ++b) {
          const std::size_t words = o.group_offsets[b + 1] - o.group_offsets[b];
          if (tg.tags[b].size() < words) throw ConfigError("fewer tag targets than gathered words");
          flat.insert(flat.end(), tg.tags[b].begin(), tg.tags[b].begin() + static_cast<std::ptrdiff_t>(words));
        }
        if (flat.empty()) return T(0);
        Mat<T> dlogits;
        loss = cross_entropy(o.logits, flat, grad ? &dlogits : nullptr);
        if (grad) dg = out_.backward(o.gathered, dlogits);
        break;
      }
      case TaskFormat::mlm: {
        check_size(tg.mlm_labels.size(), o.rows.size(), "mlm_labels");
        if (o.rows.empty()) {
          if (grad) *d_output = Mat<T>::Zero(enc.output.rows(), enc.output.cols());
          return T(0);
        }
        Mat<T> dlogits;
        loss = cross_entropy(o.logits, tg.mlm_labels, grad ? &dlogits : nullptr);
        if (!grad) break;
        decoder_bias_.grad.row(0) += dlogits.colwise().sum();
        if (enc.decoder_grad.size() == 0) enc.decoder_grad = Mat<T>::Zero(enc.token_embeddings->rows(), enc.token_embeddings->cols());
        enc.decoder_grad.noalias() += dlogits.transpose() * o.transformed;
        Mat<T> dtransformed = dlogits * *enc.token_embeddings;
        Mat<T> dact = norm_.backward(o.transform_norm_cache, dtransformed);
        Mat<T> dpre = dact.cwiseProduct(o.transform_pre.unaryExpr([](T v) { return gelu_grad(v); }));
        dg = pooler_.backward(o.gathered, dpre);
        break;
      }
      case TaskFormat::retrieval: break;
    }
    if (grad) {
      *d_output = Mat<T>::Zero(enc.output.rows(), enc.output.cols());
      for (std::size_t i = 0; i < o.rows.size(); ++i)
        d_output->row(static_cast<Eigen::Index>(o.rows[i])) += dg.row(static_cast<Eigen::Index>(i));
    }
    return loss;
  }

 private:
  static Mat<T> gather(const Mat<T>& z, const std::vector<std::size_t>& rows) {
    Mat<T> g(static_cast<Eigen::Index>(rows.size()), z.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) g.row(static_cast<Eigen::Index>(i)) = z.row(static_cast<Eigen::Index>(rows[i]));
    return g;
  }
  static void check_size(std::size_t got, std::size_t want, const char* what) {
    if (got != want)
      throw ConfigError(std::string("head targets: ") + what + " has " + std::to_string(got) + " entries, expected " +
                        std::to_string(want));
  }

  TaskFormat format_ = TaskFormat::classification;
  std::vector<std::string> labels_;
  Linear<T> pooler_;
  LayerNorm<T> norm_;
  Linear<T> out_;
  Param<T> decoder_bias_;
};

struct SpanPrediction {
  std::size_t start = 0;
  std::size_t end = 0;
  double score = -std::numeric_limits<double>::infinity();
};

/// Best (start, end) with start <= end, end - start < max_answer_length, both
/// positions allowed. Ties keep the earliest pair.
template <typename T>
SpanPrediction decode_span(const Mat<T>& start, const Mat<T>& end, std::size_t b, const std::vector<bool>& allowed,
                           std::size_t max_answer_length) {
  SpanPrediction best;
  const auto row = static_cast<Eigen::Index>(b);
  for (std::size_t s = 0; s < allowed.size(); ++s) {
    if (!allowed[s]) continue;
    for (std::size_t e = s; e < allowed.size() && e - s < max_answer_length; ++e) {
      if (!allowed[e]) continue;
      const double score = static_cast<double>(start(row, static_cast<Eigen::Index>(s))) +
                           static_cast<double>(end(row, static_cast<Eigen::Index>(e)));
      if (score > best.score) best = {s, e, score};
    }
  }
  return best;
}

}  // namespace xfer::model
