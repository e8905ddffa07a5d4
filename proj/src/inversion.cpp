#include "promptinv/inversion.hpp"

#include <algorithm>
#include <cmath>

#include "promptinv/lbfgs.hpp"
#include "promptinv/rng.hpp"

namespace promptinv {

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "lbfgs") return Optimizer::Lbfgs;
  if (name == "adam") return Optimizer::Adam;
  throw std::invalid_argument("unknown optimizer: " + name);
}

std::string to_string(Optimizer o) {
  return o == Optimizer::Lbfgs ? "lbfgs" : "adam";
}

void InversionConfig::validate(const DiffusionBackend& backend) const {
  const int T = backend.schedule().T();
  if (length < 1) throw std::invalid_argument("prompt length must be positive");
  if (steps < 0) throw std::invalid_argument("step count must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (history < 0) throw std::invalid_argument("history size must be >= 0");
  if (!(curvature_threshold > 0.0))
    throw std::invalid_argument("curvature threshold must be positive");
  if (noise_samples < 1) throw std::invalid_argument("noise_samples must be >= 1");
  int te = resolved_t_end(T);
  if (t_start < 1 || t_start > te || te > T)
    throw std::invalid_argument("timestep range must satisfy 1 <= t_start <= t_end <= T");
  if (init_token_ids && static_cast<int>(init_token_ids->size()) != length)
    throw std::invalid_argument("init_token_ids length does not match prompt length");
}

std::vector<GridEntry> default_eval_grid(const NoiseSchedule& schedule,
                                         int n_timesteps, int n_noise, int t_lo) {
  const int T = schedule.T();
  t_lo = std::min(t_lo, T);
  std::vector<GridEntry> grid;
  for (int i = 0; i < n_timesteps; ++i) {
    int t = n_timesteps == 1 ? t_lo : t_lo + (T - t_lo) * i / (n_timesteps - 1);
    for (int k = 0; k < n_noise; ++k)
      grid.push_back({t, mix64(0x65766c67ULL, std::uint64_t(t), std::uint64_t(k))});
  }
  return grid;
}

namespace {

Eigen::VectorXd grid_noise(const DiffusionBackend& backend, std::uint64_t eps_seed) {
  return Rng(eps_seed).normal_vector(
      Eigen::Index(backend.latent_shape()[0]) * backend.latent_shape()[1] *
      backend.latent_shape()[2]);
}

std::vector<int> random_init_ids(const Vocabulary& vocab, int length, Rng& rng) {
  std::vector<int> pool;
  for (int i = 0; i < vocab.size(); ++i)
    if (!vocab.is_special(i)) pool.push_back(i);
  std::vector<int> ids(static_cast<std::size_t>(length));
  for (auto& id : ids)
    id = pool[static_cast<std::size_t>(rng.uniform_int(0, long(pool.size()) - 1))];
  return ids;
}

InversionResult run_inversion(const DiffusionBackend& backend,
                              const EncoderParams& encoder,
                              const Vocabulary& vocab,
                              const EmbeddingTable& table,
                              const LatentImage& target,
                              const LatentImage* negative,
                              const InversionConfig& config,
                              const StepObserver& observer) {
  config.validate(backend);
  backend.check_latent(target);
  if (negative) backend.check_latent(*negative);
  if (table.dim() != encoder.dim())
    throw std::invalid_argument("embedding dim does not match encoder");
  if (encoder.context_dim() != backend.context_dim())
    throw std::invalid_argument("encoder output does not match backend conditioning");
  if (config.length > encoder.max_length())
    throw std::length_error("prompt length exceeds encoder capacity");

  const int T = backend.schedule().T();
  const int t_hi = config.resolved_t_end(T);
  auto [lh, lw, lc] = backend.latent_shape();
  const Eigen::Index n = Eigen::Index(lh) * lw * lc;

  Rng init_rng(mix64(config.seed, 0x696e6974ULL));  // "init"
  Rng draw_rng(mix64(config.seed, 0x64726177ULL));  // "draw"

  std::vector<int> init_ids = config.init_token_ids
                                  ? *config.init_token_ids
                                  : random_init_ids(vocab, config.length, init_rng);
  for (int id : init_ids)
    if (vocab.is_special(id))
      throw std::invalid_argument("init token id is special: " + std::to_string(id));
  Eigen::MatrixXd free = table.embed(init_ids);

  LbfgsHistory history(config.history, config.curvature_threshold);
  Eigen::VectorXd prev_grad;
  Eigen::MatrixXd prev_free;

  InversionResult result;
  result.loss_trace.reserve(static_cast<std::size_t>(config.steps));

  for (int iter = 1; iter <= config.steps; ++iter) {
    if (!free.allFinite())
      throw divergence_error(iter, "free prompt variable diverged at iteration " +
                                       std::to_string(iter));

    auto [ids, projected] = table.project(free, config.metric);
    Eigen::MatrixXd cond = encode(projected, encoder);

    double loss = 0.0;
    int t_first = 0;
    Eigen::MatrixXd grad_cond_sum =
        Eigen::MatrixXd::Zero(cond.rows(), cond.cols());
    for (int k = 0; k < config.noise_samples; ++k) {
      int t = static_cast<int>(draw_rng.uniform_int(config.t_start, t_hi));
      if (k == 0) t_first = t;
      LatentImage eps{draw_rng.normal_vector(n), lh, lw, lc};

      Eigen::MatrixXd g;
      loss += backend.loss_grad_cond(target, t, eps, cond, &g);
      grad_cond_sum += g;
      if (negative) {
        Eigen::MatrixXd g_neg;
        loss -= backend.loss_grad_cond(*negative, t, eps, cond, &g_neg);
        grad_cond_sum -= g_neg;
      }
    }
    loss /= config.noise_samples;
    Eigen::MatrixXd grad_rows =
        encode_vjp(projected, grad_cond_sum / config.noise_samples, encoder);
    Eigen::VectorXd grad =
        Eigen::Map<const Eigen::VectorXd>(grad_rows.data(), grad_rows.size());

    if (!std::isfinite(loss) || !grad.allFinite())
      throw divergence_error(iter, "objective diverged at iteration " +
                                       std::to_string(iter));

    if (iter > 1 && config.optimizer == Optimizer::Lbfgs) {
      Eigen::Map<const Eigen::VectorXd> cur(free.data(), free.size());
      Eigen::Map<const Eigen::VectorXd> prev(prev_free.data(), prev_free.size());
      history.push(cur - prev, grad - prev_grad);
    }
    prev_free = free;
    prev_grad = grad;

    Eigen::VectorXd direction = config.optimizer == Optimizer::Lbfgs
                                    ? lbfgs_direction(history, grad)
                                    : grad;
    Eigen::Map<Eigen::VectorXd>(free.data(), free.size()) -=
        config.learning_rate * direction;

    result.loss_trace.push_back({iter, t_first, loss});
    if (observer) observer(StepInfo{iter, t_first, loss, free, projected, ids});
  }

  if (!free.allFinite())
    throw divergence_error(config.steps,
                           "free prompt variable diverged at the final step");

  auto [ids, projected] = table.project(free, config.metric);
  result.token_ids = ids;
  result.prompt = vocab.detokenize(ids);
  result.final_loss_estimate = evaluate_prompt(
      backend, encoder, table, ids, target, default_eval_grid(backend.schedule()));
  return result;
}

}  // namespace

double evaluate_prompt(const DiffusionBackend& backend,
                       const EncoderParams& encoder, const EmbeddingTable& table,
                       const std::vector<int>& token_ids,
                       const LatentImage& target,
                       const std::vector<GridEntry>& grid) {
  if (grid.empty()) throw std::invalid_argument("evaluation grid is empty");
  auto [lh, lw, lc] = backend.latent_shape();
  Eigen::MatrixXd cond = encode(table.embed(token_ids), encoder);
  double sum = 0.0;
  for (const auto& entry : grid) {
    LatentImage eps{grid_noise(backend, entry.eps_seed), lh, lw, lc};
    sum += backend.ldm_loss(target, entry.t, eps, cond);
  }
  return sum / double(grid.size());
}

InversionResult invert(const DiffusionBackend& backend,
                       const EncoderParams& encoder, const Vocabulary& vocab,
                       const EmbeddingTable& table, const LatentImage& target,
                       const InversionConfig& config, const StepObserver& observer) {
  return run_inversion(backend, encoder, vocab, table, target, nullptr, config,
                       observer);
}

InversionResult invert_negative(const DiffusionBackend& backend,
                                const EncoderParams& encoder,
                                const Vocabulary& vocab,
                                const EmbeddingTable& table,
                                const LatentImage& target,
                                const LatentImage& negative,
                                const InversionConfig& config,
                                const StepObserver& observer) {
  return run_inversion(backend, encoder, vocab, table, target, &negative, config,
                       observer);
}

}  // namespace promptinv
