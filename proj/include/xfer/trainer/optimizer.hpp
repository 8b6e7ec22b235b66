#pragma once

#include <cmath>
#include <map>
#include <string>

#include <json.hpp>

#include "xfer/model/bundle.hpp"

namespace xfer::trainer {

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // global gradient norm; 0 disables clipping
  bool operator==(const OptimizerConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}, {"weight_decay", c.weight_decay},
       {"clip_norm", c.clip_norm}};
}

inline void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c = OptimizerConfig{};
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
}

/// AdamW with decoupled weight decay on weight matrices and embeddings
/// (not on biases or normalization parameters). Moments are keyed by
/// parameter name, so a re-initialized head gets fresh moments only if its
/// state is reset.
template <typename T = float>
class AdamW {
 public:
  explicit AdamW(OptimizerConfig config = {}) : config_(config) {}

  void reset() {
    state_.clear();
    step_ = 0;
  }

  /// Applies one update to every parameter and returns the pre-clipping
  /// global gradient norm.
  double step(model::ModelBundle<T>& bundle, double lr) {
    double sq = 0.0;
    bundle.for_each_param([&](const std::string&, model::Param<T>& p) {
      sq += static_cast<double>(p.grad.squaredNorm());
    });
    const double norm = std::sqrt(sq);
    const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    bundle.for_each_param([&](const std::string& name, model::Param<T>& p) {
      auto& [m, v] = state_[name];
      if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
        m = model::Mat<T>::Zero(p.value.rows(), p.value.cols());
        v = model::Mat<T>::Zero(p.value.rows(), p.value.cols());
      }
      const model::Mat<T> g = p.grad * static_cast<T>(clip);
      m = b1 * m + (T(1) - b1) * g;
      v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
      if (decays(name)) p.value *= static_cast<T>(1.0 - lr * config_.weight_decay);
      const T step_size = static_cast<T>(lr / bc1);
      const T denom_scale = static_cast<T>(1.0 / std::sqrt(bc2));
      p.value.array() -=
          step_size * m.array() / ((v.array().sqrt() * denom_scale) + static_cast<T>(config_.epsilon));
    });
    return norm;
  }

  const OptimizerConfig& config() const noexcept { return config_; }

 private:
  static bool decays(const std::string& name) {
    const auto ends_with = [&](const char* suffix) {
      const std::string s(suffix);
      return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return ends_with(".weight") || name.rfind("embeddings.", 0) == 0;
  }

  OptimizerConfig config_;
  std::uint64_t step_ = 0;
  std::map<std::string, std::pair<model::Mat<T>, model::Mat<T>>> state_;
};

}  // namespace xfer::trainer
