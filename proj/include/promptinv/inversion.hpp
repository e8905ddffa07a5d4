#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "promptinv/backend.hpp"
#include "promptinv/encoder.hpp"
#include "promptinv/vocab.hpp"

namespace promptinv {

enum class Optimizer { Lbfgs, Adam };  // "adam" = plain projected descent switch

Optimizer optimizer_from_string(const std::string& name);
std::string to_string(Optimizer o);

struct InversionConfig {
  int length = 8;                // L
  int t_start = 500;             // t_a
  int t_end = 0;                 // 0 means the backend's T
  int steps = 200;               // N
  double learning_rate = 0.1;    // lambda
  int history = 10;              // m
  double curvature_threshold = 1e-8;
  Metric metric = Metric::Euclidean;
  std::optional<std::vector<int>> init_token_ids;
  std::uint64_t seed = 0;
  int noise_samples = 4;         // (t, eps) draws averaged per step
  Optimizer optimizer = Optimizer::Lbfgs;

  int resolved_t_end(int T) const { return t_end == 0 ? T : t_end; }
  void validate(const DiffusionBackend& backend) const;
};

struct TracePoint {
  int iter;     // 1-based
  int t;        // first timestep drawn this step
  double loss;  // step objective (mean over the draws)
};

struct InversionResult {
  std::vector<int> token_ids;
  std::string prompt;
  std::vector<TracePoint> loss_trace;
  double final_loss_estimate;
};

struct GridEntry {
  int t;
  std::uint64_t eps_seed;
};

/// Fixed scoring grid: n_timesteps evenly spaced in [t_lo, T], n_noise
/// seeded draws each. Independent of any run seed so that restarts and
/// configurations stay comparable.
std::vector<GridEntry> default_eval_grid(const NoiseSchedule& schedule,
                                         int n_timesteps = 8, int n_noise = 4,
                                         int t_lo = 500);

/// Raised when the free variable leaves the finite range mid-run.
class divergence_error : public std::runtime_error {
 public:
  divergence_error(int iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Per-iteration view handed to an observer: the unconstrained variable,
/// its projection (the matrix every loss evaluation received), and the
/// decoded ids.
struct StepInfo {
  int iter;
  int t;
  double loss;
  const Eigen::MatrixXd& free;
  const Eigen::MatrixXd& projected;
  const std::vector<int>& token_ids;
};

using StepObserver = std::function<void(const StepInfo&)>;

/// Mean loss of a fixed prompt over the evaluation grid; deterministic.
double evaluate_prompt(const DiffusionBackend& backend,
                       const EncoderParams& encoder, const EmbeddingTable& table,
                       const std::vector<int>& token_ids,
                       const LatentImage& target,
                       const std::vector<GridEntry>& grid);

/// Delayed-projection prompt inversion: per step, project the free
/// variable, differentiate the diffusion loss at the projected point over
/// freshly drawn (t, eps), take a quasi-Newton (or plain descent) step on
/// the free variable, and only decode through the projection at the end.
InversionResult invert(const DiffusionBackend& backend,
                       const EncoderParams& encoder, const Vocabulary& vocab,
                       const EmbeddingTable& table, const LatentImage& target,
                       const InversionConfig& config,
                       const StepObserver& observer = nullptr);

/// Negative-image variant: the per-draw objective is the loss on the
/// target minus the loss on the negative under the same (t, eps).
InversionResult invert_negative(const DiffusionBackend& backend,
                                const EncoderParams& encoder,
                                const Vocabulary& vocab,
                                const EmbeddingTable& table,
                                const LatentImage& target,
                                const LatentImage& negative,
                                const InversionConfig& config,
                                const StepObserver& observer = nullptr);

}  // namespace promptinv
