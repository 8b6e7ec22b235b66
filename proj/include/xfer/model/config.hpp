#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

#include "xfer/error.hpp"

namespace xfer::model {

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t hidden_size = 64;
  std::size_t num_attention_heads = 4;
  std::size_t ffn_size = 128;
  std::size_t max_sequence_length = 64;
  std::size_t vocab_size = 0;
  double dropout = 0.0;

  void validate() const {
    if (num_layers == 0 || hidden_size == 0 || num_attention_heads == 0 || ffn_size == 0 ||
        max_sequence_length == 0 || vocab_size == 0)
      throw ConfigError("encoder dimensions must all be positive (vocab_size=" + std::to_string(vocab_size) + ")");
    if (hidden_size % num_attention_heads != 0)
      throw ConfigError("hidden_size " + std::to_string(hidden_size) + " is not divisible by num_attention_heads " +
                        std::to_string(num_attention_heads));
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  }

  bool operator==(const EncoderConfig&) const = default;
};

inline nlohmann::json to_json(const EncoderConfig& c) {
  return {{"num_layers", c.num_layers},
          {"hidden_size", c.hidden_size},
          {"num_attention_heads", c.num_attention_heads},
          {"ffn_size", c.ffn_size},
          {"max_sequence_length", c.max_sequence_length},
          {"vocab_size", c.vocab_size},
          {"dropout", c.dropout}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.num_layers = j.value("num_layers", c.num_layers);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.num_attention_heads = j.value("num_attention_heads", c.num_attention_heads);
  c.ffn_size = j.value("ffn_size", c.ffn_size);
  c.max_sequence_length = j.value("max_sequence_length", c.max_sequence_length);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

/// Which hidden-state layer feeds sentence embeddings; 0 is the embedding output.
struct EmbeddingExtractor {
  std::size_t layer_index = 0;
};

}  // namespace xfer::model
