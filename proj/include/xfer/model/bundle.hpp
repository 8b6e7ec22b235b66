#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xfer/corpus/task.hpp"
#include "xfer/corpus/tokenizer.hpp"
#include "xfer/error.hpp"
#include "xfer/hash.hpp"
#include "xfer/model/config.hpp"
#include "xfer/model/encoder.hpp"
#include "xfer/model/heads.hpp"

namespace xfer::model {

/// Shared encoder plus at most one head per task format.
template <typename T>
class ModelBundle {
 public:
  using Scalar = T;
  using Forward = typename Encoder<T>::Forward;

  ModelBundle() = default;
  ModelBundle(const EncoderConfig& config, Encoder<T> encoder) : config_(config), encoder_(std::move(encoder)) {}

  const EncoderConfig& config() const noexcept { return config_; }
  Encoder<T>& encoder() noexcept { return encoder_; }
  const Encoder<T>& encoder() const noexcept { return encoder_; }

  /// Content hash of the encoder weights (names, shapes, and values).
  std::uint64_t fingerprint() const {
    Fnv1a64 h;
    encoder_.for_each_param([&](const std::string& name, const Param<T>& p) {
      h.update(name);
      h.update_value(static_cast<std::int64_t>(p.value.rows()));
      h.update_value(static_cast<std::int64_t>(p.value.cols()));
      h.update(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(T));
    });
    return h.digest();
  }

  bool has_head(TaskFormat f) const { return heads_.count(f) != 0; }
  const std::map<TaskFormat, Head<T>>& heads() const noexcept { return heads_; }

  Head<T>& head(TaskFormat f) {
    auto it = heads_.find(f);
    if (it == heads_.end())
      throw LifecycleError("no " + std::string(corpus::to_string(f)) +
                           " head attached; call reinit_head() to attach one before use");
    return it->second;
  }
  const Head<T>& head(TaskFormat f) const { return const_cast<ModelBundle*>(this)->head(f); }

  /// Attaches a freshly initialized head, replacing any existing head of the
  /// format. Head weights depend only on (format, labels, seed); the encoder
  /// and the other heads are untouched. Labels default to the replaced head's.
  Head<T>& reinit_head(TaskFormat f, std::uint64_t seed, std::vector<std::string> labels = {}) {
    if (labels.empty() && has_head(f)) labels = heads_.at(f).labels();
    SeededRng rng = SeededRng(seed).derive("head/" + std::string(corpus::to_string(f)));
    Head<T> fresh(f, std::move(labels), config_.hidden_size, config_.vocab_size, rng);
    heads_.insert_or_assign(f, std::move(fresh));
    return heads_.at(f);
  }

  void remove_head(TaskFormat f) { heads_.erase(f); }
  void attach_head(Head<T> h) { heads_.insert_or_assign(h.format(), std::move(h)); }

  Forward forward(const corpus::TokenizedBatch& batch, SeededRng* dropout_rng = nullptr) const {
    return encoder_.forward(batch, dropout_rng);
  }

  HeadOutput<T> head_forward(TaskFormat f, const Forward& fw, const corpus::TokenizedBatch& batch,
                             const HeadInputs& in = {}) const {
    return head(f).forward(fw, batch, in);
  }

  /// Mean over real positions of hidden layer `extractor.layer_index`. [B][H]
  Mat<T> sentence_embed(const Forward& fw, const EmbeddingExtractor& extractor) const {
    if (extractor.layer_index > config_.num_layers)
      throw ConfigError("layer_index " + std::to_string(extractor.layer_index) + " exceeds num_layers " +
                        std::to_string(config_.num_layers));
    const auto& L = fw.layout;
    const Mat<T>& h = fw.hidden[extractor.layer_index];
    Mat<T> out = Mat<T>::Zero(static_cast<Eigen::Index>(L.batch), h.cols());
    for (std::size_t b = 0; b < L.batch; ++b) {
      const auto n = static_cast<Eigen::Index>(L.row_length(b));
      if (n == 0) continue;
      out.row(static_cast<Eigen::Index>(b)) =
          h.block(static_cast<Eigen::Index>(L.offsets[b]), 0, n, h.cols()).colwise().sum() / static_cast<T>(n);
    }
    return out;
  }
  Mat<T> sentence_embed(const corpus::TokenizedBatch& batch, const EmbeddingExtractor& extractor) const {
    return sentence_embed(forward(batch), extractor);
  }

  template <typename F>
  void for_each_param(F&& f) {
    encoder_.for_each_param(f);
    for (auto& [fmt, h] : heads_) h.for_each_param(f);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    encoder_.for_each_param(f);
    for (const auto& [fmt, h] : heads_) h.for_each_param(f);
  }

  void zero_grad() {
    for_each_param([](const std::string&, Param<T>& p) { p.zero_grad(); });
  }

 private:
  EncoderConfig config_;
  Encoder<T> encoder_;
  std::map<TaskFormat, Head<T>> heads_;
};

template <typename T = float>
ModelBundle<T> init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  SeededRng rng = SeededRng(seed).derive("encoder");
  return ModelBundle<T>(config, Encoder<T>(config, rng));
}

/// Dense copy of every hidden layer: [L+1][B] matrices of [T][H], zero at padding.
template <typename T>
std::vector<std::vector<Mat<T>>> dense_hidden_states(const typename Encoder<T>::Forward& fw) {
  const auto& L = fw.layout;
  std::vector<std::vector<Mat<T>>> out(fw.hidden.size());
  for (std::size_t l = 0; l < fw.hidden.size(); ++l) {
    for (std::size_t b = 0; b < L.batch; ++b) {
      Mat<T> m = Mat<T>::Zero(static_cast<Eigen::Index>(L.length), fw.hidden[l].cols());
      const auto n = static_cast<Eigen::Index>(L.row_length(b));
      m.topRows(n) = fw.hidden[l].middleRows(static_cast<Eigen::Index>(L.offsets[b]), n);
      out[l].push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace xfer::model
