#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "promptinv/inversion.hpp"

namespace promptinv {

/// Mean diffusion loss of one prompt per timestep of a grid.
struct LossCurve {
  std::string prompt;
  std::vector<std::pair<int, double>> points;  // (t, mean_loss), sorted by t
  int noise_samples;
  std::uint64_t seed;
};

struct RangeSweepEntry {
  std::pair<int, int> range;  // (t_low, t_high)
  InversionResult result;
};

/// Per-point seeds derive from (seed, t, sample index), so the curve is
/// independent of grid ordering and may be computed pointwise in parallel.
LossCurve loss_curve(const DiffusionBackend& backend, const EncoderParams& encoder,
                     const Vocabulary& vocab, const EmbeddingTable& table,
                     const LatentImage& target, const std::vector<int>& prompt_ids,
                     const std::vector<int>& timesteps, int noise_samples,
                     std::uint64_t seed);

/// Every 50th timestep of the schedule (always including T).
std::vector<int> default_curve_grid(const NoiseSchedule& schedule, int stride = 50);

/// One inversion per range with t_start/t_end overridden and the base
/// config's seed shared across entries.
std::vector<RangeSweepEntry> range_sweep(
    const DiffusionBackend& backend, const EncoderParams& encoder,
    const Vocabulary& vocab, const EmbeddingTable& table,
    const LatentImage& target, const std::vector<std::pair<int, int>>& ranges,
    const InversionConfig& base_config);

}  // namespace promptinv
