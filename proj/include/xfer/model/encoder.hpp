#pragma once

#include <algorithm>
#include <utility>
#include <cmath>
#include <string>
#include <vector>

#include "xfer/corpus/tokenizer.hpp"
#include "xfer/error.hpp"
#include "xfer/model/config.hpp"
#include "xfer/model/tensor.hpp"
#include "xfer/rng.hpp"

namespace xfer::model {

/// Real (unpadded) tokens of a batch packed row-wise: example b occupies rows
/// [offsets[b], offsets[b+1]). Padding never enters the computation, so pad
/// positions exchange no attention with real tokens.
struct PackedLayout {
  std::size_t batch = 0;
  std::size_t length = 0;  // padded length of the source batch
  std::vector<std::size_t> offsets;
  std::vector<corpus::TokenId> ids;
  std::vector<std::int8_t> types;
  std::vector<std::size_t> positions;
  bool truncated = false;  // some row exceeded max_sequence_length and lost its tail

  std::size_t rows() const { return ids.size(); }
  std::size_t row_length(std::size_t b) const { return offsets[b + 1] - offsets[b]; }
  std::size_t row(std::size_t b, std::size_t t) const { return offsets[b] + t; }

  static PackedLayout from_batch(const corpus::TokenizedBatch& batch, std::size_t max_len) {
    PackedLayout p;
    p.batch = batch.batch;
    p.length = batch.length;
    p.offsets.push_back(0);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      std::size_t n = 0;
      while (n < batch.length && batch.mask(b, n)) ++n;
      if (n > max_len) {
        n = max_len;
        p.truncated = true;
      }
      for (std::size_t t = 0; t < n; ++t) {
        p.ids.push_back(batch.id(b, t));
        p.types.push_back(batch.type(b, t));
        p.positions.push_back(t);
      }
      p.offsets.push_back(p.ids.size());
    }
    return p;
  }
};

template <typename T>
struct EncoderLayer {
  LayerNorm<T> ln_attn;
  Linear<T> query, key, value, attn_out;
  LayerNorm<T> ln_ffn;
  Linear<T> ffn_in, ffn_out;

  template <typename F>
  void for_each_param(const std::string& prefix, F&& f) {
    ln_attn.for_each_param(prefix + ".ln_attn", f);
    query.for_each_param(prefix + ".query", f);
    key.for_each_param(prefix + ".key", f);
    value.for_each_param(prefix + ".value", f);
    attn_out.for_each_param(prefix + ".attn_out", f);
    ln_ffn.for_each_param(prefix + ".ln_ffn", f);
    ffn_in.for_each_param(prefix + ".ffn_in", f);
    ffn_out.for_each_param(prefix + ".ffn_out", f);
  }
};

/// Pre-LayerNorm transformer encoder over token + position + segment
/// embeddings. hidden[0] is the embedding output, hidden[l] the residual
/// stream after block l; `output` is the final LayerNorm of hidden[L] and is
/// what task heads consume.
template <typename T>
class Encoder {
 public:
  struct LayerCache {
    typename LayerNorm<T>::Cache ln_attn, ln_ffn;
    Mat<T> attn_in, q, k, v, context, ffn_in_act, ffn_pre, ffn_hidden;
    std::vector<Mat<T>> probs;  // per (example, head)
    Mat<T> attn_drop, ffn_drop;
  };

  struct Forward {
    PackedLayout layout;
    std::vector<Mat<T>> hidden;  // [L+1] each [rows][H]
    Mat<T> output;
    typename LayerNorm<T>::Cache final_cache;
    std::vector<LayerCache> layers;
    Mat<T> embed_drop;
    // The MLM decoder shares the token embedding matrix. Its gradient from the
    // head loss lands in decoder_grad and is folded in by backward().
    const Mat<T>* token_embeddings = nullptr;
    mutable Mat<T> decoder_grad;

    std::size_t hidden_size() const { return static_cast<std::size_t>(output.cols()); }
    /// Hidden state of (example, position) at a layer; zero at padded positions.
    RowVec<T> at(std::size_t layer, std::size_t b, std::size_t t) const {
      if (t >= layout.row_length(b)) return RowVec<T>::Zero(output.cols());
      return hidden[layer].row(static_cast<Eigen::Index>(layout.row(b, t)));
    }
  };

  Encoder() = default;
  Encoder(const EncoderConfig& config, SeededRng& rng) : config_(config) {
    config_.validate();
    const auto h = static_cast<Eigen::Index>(config_.hidden_size);
    token_embedding_.resize(static_cast<Eigen::Index>(config_.vocab_size), h);
    position_embedding_.resize(static_cast<Eigen::Index>(config_.max_sequence_length), h);
    type_embedding_.resize(2, h);
    token_embedding_.fill_normal(rng, kInitStd);
    position_embedding_.fill_normal(rng, kInitStd);
    type_embedding_.fill_normal(rng, kInitStd);
    layers_.resize(config_.num_layers);
    // output projections scaled down with depth
    const double out_std = kInitStd / std::sqrt(2.0 * static_cast<double>(config_.num_layers));
    for (auto& l : layers_) {
      l.ln_attn.init(config_.hidden_size);
      l.query.init(config_.hidden_size, config_.hidden_size, rng);
      l.key.init(config_.hidden_size, config_.hidden_size, rng);
      l.value.init(config_.hidden_size, config_.hidden_size, rng);
      l.attn_out.init(config_.hidden_size, config_.hidden_size, rng, out_std);
      l.ln_ffn.init(config_.hidden_size);
      l.ffn_in.init(config_.hidden_size, config_.ffn_size, rng);
      l.ffn_out.init(config_.ffn_size, config_.hidden_size, rng, out_std);
    }
    final_norm_.init(config_.hidden_size);
  }

  const EncoderConfig& config() const noexcept { return config_; }

  template <typename F>
  void for_each_param(F&& f) {
    f("embeddings.token", token_embedding_);
    f("embeddings.position", position_embedding_);
    f("embeddings.type", type_embedding_);
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].for_each_param("layer" + std::to_string(i), f);
    final_norm_.for_each_param("final_norm", f);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    const_cast<Encoder*>(this)->for_each_param([&](const std::string& name, Param<T>& p) { f(name, std::as_const(p)); });
  }

  /// `dropout_rng` non-null enables dropout (training mode).
  Forward forward(const corpus::TokenizedBatch& batch, SeededRng* dropout_rng = nullptr) const {
    Forward fw;
    fw.layout = PackedLayout::from_batch(batch, config_.max_sequence_length);
    fw.token_embeddings = &token_embedding_.value;
    const auto& L = fw.layout;
    const auto rows = static_cast<Eigen::Index>(L.rows());
    const auto hsz = static_cast<Eigen::Index>(config_.hidden_size);
    for (auto id : L.ids)
      if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size)
        throw ConfigError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(config_.vocab_size));

    Mat<T> x(rows, hsz);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto i = static_cast<std::size_t>(r);
      x.row(r) = token_embedding_.value.row(L.ids[i]) +
                 position_embedding_.value.row(static_cast<Eigen::Index>(L.positions[i])) +
                 type_embedding_.value.row(L.types[i] ? 1 : 0);
    }
    const bool train = dropout_rng != nullptr && config_.dropout > 0.0;
    if (train) {
      fw.embed_drop = dropout_mask(rows, hsz, *dropout_rng);
      x = x.cwiseProduct(fw.embed_drop);
    }
    fw.hidden.push_back(x);
    fw.layers.resize(layers_.size());

    const std::size_t heads = config_.num_attention_heads;
    const auto dh = static_cast<Eigen::Index>(config_.hidden_size / heads);
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& layer = layers_[li];
      auto& c = fw.layers[li];
      c.attn_in = layer.ln_attn.forward(x, &c.ln_attn);
      c.q = layer.query.forward(c.attn_in);
      c.k = layer.key.forward(c.attn_in);
      c.v = layer.value.forward(c.attn_in);
      c.context = Mat<T>::Zero(rows, hsz);
      c.probs.resize(L.batch * heads);
      for (std::size_t b = 0; b < L.batch; ++b) {
        const auto off = static_cast<Eigen::Index>(L.offsets[b]);
        const auto n = static_cast<Eigen::Index>(L.row_length(b));
        if (n == 0) continue;
        for (std::size_t h = 0; h < heads; ++h) {
          const auto col = static_cast<Eigen::Index>(h) * dh;
          Mat<T> s = (c.q.block(off, col, n, dh) * c.k.block(off, col, n, dh).transpose()) * scale;
          for (Eigen::Index i = 0; i < n; ++i) {
            const T m = s.row(i).maxCoeff();
            s.row(i) = (s.row(i).array() - m).exp();
            s.row(i) /= s.row(i).sum();
          }
          c.context.block(off, col, n, dh).noalias() = s * c.v.block(off, col, n, dh);
          c.probs[b * heads + h] = std::move(s);
        }
      }
      Mat<T> attn = layer.attn_out.forward(c.context);
      if (train) {
        c.attn_drop = dropout_mask(rows, hsz, *dropout_rng);
        attn = attn.cwiseProduct(c.attn_drop);
      }
      x += attn;
      c.ffn_in_act = layer.ln_ffn.forward(x, &c.ln_ffn);
      c.ffn_pre = layer.ffn_in.forward(c.ffn_in_act);
      c.ffn_hidden = c.ffn_pre.unaryExpr([](T v) { return gelu(v); });
      Mat<T> ffn = layer.ffn_out.forward(c.ffn_hidden);
      if (train) {
        c.ffn_drop = dropout_mask(rows, hsz, *dropout_rng);
        ffn = ffn.cwiseProduct(c.ffn_drop);
      }
      x += ffn;
      fw.hidden.push_back(x);
    }
    fw.output = final_norm_.forward(x, &fw.final_cache);
    return fw;
  }

  /// Backpropagates dL/d(output) through the encoder, accumulating gradients.
  void backward(const Forward& fw, const Mat<T>& d_output) {
    const auto& L = fw.layout;
    const std::size_t heads = config_.num_attention_heads;
    const auto dh = static_cast<Eigen::Index>(config_.hidden_size / heads);
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Mat<T> dx = final_norm_.backward(fw.final_cache, d_output);
    for (std::size_t li = layers_.size(); li-- > 0;) {
      auto& layer = layers_[li];
      const auto& c = fw.layers[li];
      // FFN branch
      Mat<T> dffn = c.ffn_drop.size() ? Mat<T>(dx.cwiseProduct(c.ffn_drop)) : dx;
      Mat<T> dhidden = layer.ffn_out.backward(c.ffn_hidden, dffn);
      Mat<T> dpre = dhidden.cwiseProduct(c.ffn_pre.unaryExpr([](T v) { return gelu_grad(v); }));
      Mat<T> dnorm = layer.ffn_in.backward(c.ffn_in_act, dpre);
      dx += layer.ln_ffn.backward(c.ln_ffn, dnorm);
      // attention branch
      Mat<T> dattn = c.attn_drop.size() ? Mat<T>(dx.cwiseProduct(c.attn_drop)) : dx;
      Mat<T> dcontext = layer.attn_out.backward(c.context, dattn);
      Mat<T> dq = Mat<T>::Zero(dcontext.rows(), dcontext.cols());
      Mat<T> dk = Mat<T>::Zero(dcontext.rows(), dcontext.cols());
      Mat<T> dv = Mat<T>::Zero(dcontext.rows(), dcontext.cols());
      for (std::size_t b = 0; b < L.batch; ++b) {
        const auto off = static_cast<Eigen::Index>(L.offsets[b]);
        const auto n = static_cast<Eigen::Index>(L.row_length(b));
        if (n == 0) continue;
        for (std::size_t h = 0; h < heads; ++h) {
          const auto col = static_cast<Eigen::Index>(h) * dh;
          const Mat<T>& p = c.probs[b * heads + h];
          const auto dctx = dcontext.block(off, col, n, dh);
          dv.block(off, col, n, dh).noalias() = p.transpose() * dctx;
          Mat<T> dp = dctx * c.v.block(off, col, n, dh).transpose();
          Mat<T> ds(n, n);
          for (Eigen::Index i = 0; i < n; ++i) {
            const T dot = dp.row(i).dot(p.row(i));
            ds.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
          }
          ds *= scale;
          dq.block(off, col, n, dh).noalias() = ds * c.k.block(off, col, n, dh);
          dk.block(off, col, n, dh).noalias() = ds.transpose() * c.q.block(off, col, n, dh);
        }
      }
      Mat<T> dattn_in = layer.query.backward(c.attn_in, dq);
      dattn_in += layer.key.backward(c.attn_in, dk);
      dattn_in += layer.value.backward(c.attn_in, dv);
      dx += layer.ln_attn.backward(c.ln_attn, dattn_in);
    }
    if (fw.embed_drop.size()) dx = dx.cwiseProduct(fw.embed_drop);
    if (fw.decoder_grad.size()) token_embedding_.grad += fw.decoder_grad;
    for (std::size_t r = 0; r < L.rows(); ++r) {
      const auto row = dx.row(static_cast<Eigen::Index>(r));
      token_embedding_.grad.row(L.ids[r]) += row;
      position_embedding_.grad.row(static_cast<Eigen::Index>(L.positions[r])) += row;
      type_embedding_.grad.row(L.types[r] ? 1 : 0) += row;
    }
  }

  Param<T>& token_embedding() { return token_embedding_; }
  Param<T>& position_embedding() { return position_embedding_; }
  Param<T>& type_embedding() { return type_embedding_; }

 private:
  Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, SeededRng& rng) const {
    Mat<T> m(rows, cols);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - config_.dropout));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < config_.dropout ? T(0) : keep_scale;
    return m;
  }

  EncoderConfig config_;
  Param<T> token_embedding_, position_embedding_, type_embedding_;
  std::vector<EncoderLayer<T>> layers_;
  LayerNorm<T> final_norm_;
};

}  // namespace xfer::model
