#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <memory>
#include <string>

#include "promptinv/schedule.hpp"

namespace promptinv {

struct LatentImage {
  Eigen::VectorXd data;  // flattened h*w*c, row-major (h, w, c)
  int h = 0, w = 0, c = 0;

  Eigen::Index size() const { return data.size(); }
  std::array<int, 3> shape() const { return {h, w, c}; }
};

struct PixelImage {
  Eigen::VectorXd data;  // flattened H*W*3, row-major, values in [0, 1]
  int h = 0, w = 0;

  Eigen::Index size() const { return data.size(); }
};

LatentImage make_latent(std::array<int, 3> shape, Eigen::VectorXd data);
PixelImage make_pixel(int h, int w, Eigen::VectorXd data);

/// Conditional diffusion model contract. Implementations are immutable
/// after construction; every member call is a pure function, so a backend
/// may be shared across threads.
///
/// Adapter implementations only need predict_noise / loss_grad_cond to be
/// differentiable with respect to the conditioning; add_noise and sample
/// are composed here from the schedule.
class DiffusionBackend {
 public:
  virtual ~DiffusionBackend() = default;

  virtual const NoiseSchedule& schedule() const = 0;
  virtual std::array<int, 3> latent_shape() const = 0;
  virtual std::array<int, 2> pixel_shape() const = 0;
  virtual Eigen::Index context_dim() const = 0;

  virtual LatentImage encode_image(const PixelImage& img) const = 0;
  virtual PixelImage decode_latent(const LatentImage& x) const = 0;

  virtual LatentImage predict_noise(const LatentImage& x_t, int t,
                                    const Eigen::MatrixXd& cond) const = 0;

  /// Mean over latent elements of (eps - predict_noise(x_t, t, cond))^2
  /// with x_t = add_noise(x, t, eps). When grad is non-null it receives
  /// the gradient with respect to cond (same shape as cond).
  virtual double loss_grad_cond(const LatentImage& x, int t,
                                const LatentImage& eps,
                                const Eigen::MatrixXd& cond,
                                Eigen::MatrixXd* grad) const = 0;

  double ldm_loss(const LatentImage& x, int t, const LatentImage& eps,
                  const Eigen::MatrixXd& cond) const {
    return loss_grad_cond(x, t, eps, cond, nullptr);
  }

  /// x_t = sqrt(alpha_bar_t) x + sqrt(1 - alpha_bar_t) eps, exactly.
  LatentImage add_noise(const LatentImage& x, int t, const LatentImage& eps) const;

  /// Ancestral reverse loop over a strided timestep subsequence of length
  /// `steps`; deterministic under the seed.
  LatentImage sample(const Eigen::MatrixXd& cond, int steps,
                     std::uint64_t seed) const;

  void check_latent(const LatentImage& x) const;
  void check_pixel(const PixelImage& img) const;
  void check_cond(const Eigen::MatrixXd& cond) const;
};

/// Seeded analytic stand-in for a latent diffusion model. The denoiser is
///   eps_hat = A x_t + w(t) B mean_rows(cond) + b,  w(t) = 1 - alpha_bar_t,
/// so the conditioning gain grows strictly with t: prompts only separate
/// the objective at the noisy end of the chain.
class ToyBackend : public DiffusionBackend {
 public:
  ToyBackend(std::uint64_t seed, NoiseSchedule schedule,
             std::array<int, 3> latent_shape, std::array<int, 2> pixel_shape,
             Eigen::Index context_dim);

  const NoiseSchedule& schedule() const override { return schedule_; }
  std::array<int, 3> latent_shape() const override { return latent_shape_; }
  std::array<int, 2> pixel_shape() const override { return pixel_shape_; }
  Eigen::Index context_dim() const override { return context_dim_; }

  LatentImage encode_image(const PixelImage& img) const override;
  PixelImage decode_latent(const LatentImage& x) const override;
  LatentImage predict_noise(const LatentImage& x_t, int t,
                            const Eigen::MatrixXd& cond) const override;
  double loss_grad_cond(const LatentImage& x, int t, const LatentImage& eps,
                        const Eigen::MatrixXd& cond,
                        Eigen::MatrixXd* grad) const override;

  double cond_gain(int t) const { return 1.0 - schedule_.alpha_bar(t); }

 private:
  NoiseSchedule schedule_;
  std::array<int, 3> latent_shape_;
  std::array<int, 2> pixel_shape_;
  Eigen::Index context_dim_;
  Eigen::MatrixXd latent_map_;   // n x n
  Eigen::MatrixXd cond_map_;     // n x context_dim
  Eigen::VectorXd bias_;         // n
  Eigen::MatrixXd channel_mix_;  // c x 3
  Eigen::MatrixXd channel_unmix_;  // 3 x c, pseudo-inverse of channel_mix_
};

/// JSON manifest: {type, seed, T, latent_shape, pixel_shape,
/// schedule: {beta_start, beta_end}, ...}. Adapter manifests add the
/// executable entry point.
struct BackendManifest {
  std::string type = "toy";  // "toy" | "adapter"
  std::uint64_t seed = 0;
  int T = 1000;
  std::array<int, 3> latent_shape = {4, 4, 2};
  std::array<int, 2> pixel_shape = {16, 16};
  int context_dim = 8;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  std::string command;  // adapter executable (plus arguments)

  static BackendManifest load(const std::string& path);
  void save(const std::string& path) const;
};

std::unique_ptr<DiffusionBackend> open_backend(const BackendManifest& m);

}  // namespace promptinv
