#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "xfer/error.hpp"

namespace xfer::trainer {

/// ceil(warmup_fraction * total), kept below total so a decay segment remains.
inline std::uint64_t warmup_steps(std::uint64_t total_steps, double warmup_fraction) {
  if (total_steps == 0) throw ConfigError("total_steps must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw ConfigError("warmup_fraction must lie in [0, 1), got " + std::to_string(warmup_fraction));
  // the epsilon keeps 0.1 * 1000 from rounding up to 101
  const auto w = static_cast<std::uint64_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps) - 1e-9));
  return std::min(w, total_steps - 1);
}

/// Linear warmup from 0 to peak, then linear decay to 0 at total_steps.
inline double lr_schedule(std::uint64_t step, std::uint64_t total_steps, double peak, double warmup_fraction) {
  const std::uint64_t w = warmup_steps(total_steps, warmup_fraction);
  if (step > total_steps)
    throw ConfigError("step " + std::to_string(step) + " is past total_steps " + std::to_string(total_steps));
  // ratio first, so the boundary step yields exactly peak
  if (step < w) return peak * (static_cast<double>(step) / static_cast<double>(w));
  return peak * (static_cast<double>(total_steps - step) / static_cast<double>(total_steps - w));
}

}  // namespace xfer::trainer
