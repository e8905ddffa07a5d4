#include "promptinv/probe.hpp"

#include <algorithm>

#include "promptinv/rng.hpp"

namespace promptinv {

std::vector<int> default_curve_grid(const NoiseSchedule& schedule, int stride) {
  std::vector<int> grid;
  for (int t = stride; t <= schedule.T(); t += stride) grid.push_back(t);
  if (grid.empty() || grid.back() != schedule.T()) grid.push_back(schedule.T());
  return grid;
}

LossCurve loss_curve(const DiffusionBackend& backend, const EncoderParams& encoder,
                     const Vocabulary& vocab, const EmbeddingTable& table,
                     const LatentImage& target, const std::vector<int>& prompt_ids,
                     const std::vector<int>& timesteps, int noise_samples,
                     std::uint64_t seed) {
  if (timesteps.empty()) throw std::invalid_argument("timestep grid is empty");
  if (noise_samples < 1) throw std::invalid_argument("noise_samples must be >= 1");
  backend.check_latent(target);
  for (int t : timesteps) backend.schedule().check_timestep(t);

  auto [lh, lw, lc] = backend.latent_shape();
  const Eigen::Index n = Eigen::Index(lh) * lw * lc;
  Eigen::MatrixXd cond = encode(table.embed(prompt_ids), encoder);

  LossCurve curve;
  curve.prompt = vocab.detokenize(prompt_ids);
  curve.noise_samples = noise_samples;
  curve.seed = seed;
  for (int t : timesteps) {
    double sum = 0.0;
    for (int k = 0; k < noise_samples; ++k) {
      Rng rng(mix64(seed, std::uint64_t(t), std::uint64_t(k)));
      LatentImage eps{rng.normal_vector(n), lh, lw, lc};
      sum += backend.ldm_loss(target, t, eps, cond);
    }
    curve.points.emplace_back(t, sum / noise_samples);
  }
  std::sort(curve.points.begin(), curve.points.end());
  return curve;
}

std::vector<RangeSweepEntry> range_sweep(
    const DiffusionBackend& backend, const EncoderParams& encoder,
    const Vocabulary& vocab, const EmbeddingTable& table,
    const LatentImage& target, const std::vector<std::pair<int, int>>& ranges,
    const InversionConfig& base_config) {
  std::vector<RangeSweepEntry> entries;
  entries.reserve(ranges.size());
  for (auto [t_low, t_high] : ranges) {
    InversionConfig config = base_config;
    config.t_start = t_low;
    config.t_end = t_high;
    entries.push_back({{t_low, t_high},
                       invert(backend, encoder, vocab, table, target, config)});
  }
  return entries;
}

}  // namespace promptinv
