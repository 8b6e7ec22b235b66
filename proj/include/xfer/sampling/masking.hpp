#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "xfer/corpus/tokenizer.hpp"
#include "xfer/error.hpp"
#include "xfer/rng.hpp"

namespace xfer::sampling {

using corpus::TokenId;

inline constexpr TokenId kIgnoreLabel = -100;

struct MaskingPolicy {
  double select_prob = 0.15;
  double mask_frac = 0.8;
  double random_frac = 0.1;
  double keep_frac = 0.1;
  TokenId ignore_label = kIgnoreLabel;

  void validate() const {
    if (select_prob < 0.0 || select_prob > 1.0) throw ConfigError("select_prob must lie in [0, 1]");
    if (mask_frac < 0.0 || random_frac < 0.0 || keep_frac < 0.0)
      throw ConfigError("masking fractions must be non-negative");
    if (std::abs(mask_frac + random_frac + keep_frac - 1.0) > 1e-9)
      throw ConfigError("mask_frac + random_frac + keep_frac must equal 1");
  }
};

/// Token id layout the corruption needs: ids below first_regular are special.
struct TokenSpace {
  std::size_t vocab_size = 0;
  TokenId mask_id = corpus::special::mask;
  TokenId first_regular = corpus::special::count;
};

struct MaskedTokens {
  std::vector<TokenId> corrupted;
  std::vector<TokenId> labels;
};

/// MLM corruption. Positions listed in special_positions, and any position
/// holding a special id, are never selected.
inline MaskedTokens mask_tokens(std::span<const TokenId> ids, const MaskingPolicy& policy, SeededRng& rng,
                                const std::unordered_set<std::size_t>& special_positions, const TokenSpace& space) {
  policy.validate();
  if (space.vocab_size <= static_cast<std::size_t>(space.first_regular))
    throw ConfigError("mask_tokens: vocabulary has no regular tokens");
  MaskedTokens out{{ids.begin(), ids.end()}, std::vector<TokenId>(ids.size(), policy.ignore_label)};
  const auto num_regular = space.vocab_size - static_cast<std::size_t>(space.first_regular);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (special_positions.count(i) || ids[i] < space.first_regular) continue;
    if (!(rng.uniform() < policy.select_prob)) continue;
    out.labels[i] = ids[i];
    const double r = rng.uniform();
    if (r < policy.mask_frac) {
      out.corrupted[i] = space.mask_id;
    } else if (r < policy.mask_frac + policy.random_frac) {
      out.corrupted[i] = space.first_regular + static_cast<TokenId>(rng.below(num_regular));
    }
  }
  return out;
}

}  // namespace xfer::sampling
