#include <cmath>
#include <stdexcept>

#include "promptinv/backend.hpp"
#include "promptinv/rng.hpp"

namespace promptinv {

namespace {

// Orthonormal luma/chroma basis; the latent keeps the first c components.
Eigen::MatrixXd fixed_channel_basis() {
  Eigen::MatrixXd q(3, 3);
  q.row(0) << 1, 1, 1;
  q.row(1) << 1, 0, -1;
  q.row(2) << 1, -2, 1;
  q.row(0) /= std::sqrt(3.0);
  q.row(1) /= std::sqrt(2.0);
  q.row(2) /= std::sqrt(6.0);
  return q;
}

}  // namespace

ToyBackend::ToyBackend(std::uint64_t seed, NoiseSchedule schedule,
                       std::array<int, 3> latent_shape,
                       std::array<int, 2> pixel_shape, Eigen::Index context_dim)
    : schedule_(std::move(schedule)),
      latent_shape_(latent_shape),
      pixel_shape_(pixel_shape),
      context_dim_(context_dim) {
  auto [h, w, c] = latent_shape_;
  auto [H, W] = pixel_shape_;
  if (h < 1 || w < 1 || c < 1 || c > 3)
    throw std::invalid_argument("toy latent needs 1 <= c <= 3");
  if (H % h != 0 || W % w != 0)
    throw std::invalid_argument("toy pixel shape must be a multiple of the latent shape");
  if (context_dim_ < 1) throw std::invalid_argument("context_dim must be positive");

  const Eigen::Index n = Eigen::Index(h) * w * c;
  Rng rng(mix64(seed, 0x746f79ULL));  // "toy"
  latent_map_ = 0.6 * Eigen::MatrixXd::Identity(n, n) +
                (0.25 / std::sqrt(double(n))) * rng.normal_matrix(n, n);
  cond_map_ = (0.6 / std::sqrt(double(context_dim_))) *
              rng.normal_matrix(n, context_dim_);
  bias_ = 0.05 * rng.normal_vector(n);
  channel_mix_ = fixed_channel_basis().topRows(c);
  channel_unmix_ = channel_mix_.transpose();
}

LatentImage ToyBackend::encode_image(const PixelImage& img) const {
  check_pixel(img);
  auto [h, w, c] = latent_shape_;
  const int ph = pixel_shape_[0] / h;
  const int pw = pixel_shape_[1] / w;

  LatentImage out{Eigen::VectorXd::Zero(Eigen::Index(h) * w * c), h, w, c};
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
      for (int pi = 0; pi < ph; ++pi)
        for (int pj = 0; pj < pw; ++pj) {
          Eigen::Index base = (Eigen::Index(i * ph + pi) * pixel_shape_[1] +
                               (j * pw + pj)) * 3;
          rgb += img.data.segment<3>(base);
        }
      rgb /= double(ph * pw);
      out.data.segment((Eigen::Index(i) * w + j) * c, c) = channel_mix_ * rgb;
    }
  }
  return out;
}

PixelImage ToyBackend::decode_latent(const LatentImage& x) const {
  check_latent(x);
  auto [h, w, c] = latent_shape_;
  const int ph = pixel_shape_[0] / h;
  const int pw = pixel_shape_[1] / w;

  PixelImage out{Eigen::VectorXd::Zero(Eigen::Index(pixel_shape_[0]) *
                                       pixel_shape_[1] * 3),
                 pixel_shape_[0], pixel_shape_[1]};
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      Eigen::Vector3d rgb =
          channel_unmix_ * x.data.segment((Eigen::Index(i) * w + j) * c, c);
      rgb = rgb.cwiseMax(0.0).cwiseMin(1.0);
      for (int pi = 0; pi < ph; ++pi)
        for (int pj = 0; pj < pw; ++pj) {
          Eigen::Index base = (Eigen::Index(i * ph + pi) * pixel_shape_[1] +
                               (j * pw + pj)) * 3;
          out.data.segment<3>(base) = rgb;
        }
    }
  }
  return out;
}

LatentImage ToyBackend::predict_noise(const LatentImage& x_t, int t,
                                      const Eigen::MatrixXd& cond) const {
  check_latent(x_t);
  check_cond(cond);
  schedule_.check_timestep(t);
  if (cond.rows() == 0)
    throw std::invalid_argument("conditioning must have at least one row");
  Eigen::VectorXd pooled = cond.colwise().mean();
  LatentImage out = x_t;
  out.data = latent_map_ * x_t.data + cond_gain(t) * (cond_map_ * pooled) + bias_;
  return out;
}

double ToyBackend::loss_grad_cond(const LatentImage& x, int t,
                                  const LatentImage& eps,
                                  const Eigen::MatrixXd& cond,
                                  Eigen::MatrixXd* grad) const {
  LatentImage x_t = add_noise(x, t, eps);
  LatentImage eps_hat = predict_noise(x_t, t, cond);
  const Eigen::Index n = eps_hat.size();
  Eigen::VectorXd residual = eps.data - eps_hat.data;
  double loss = residual.squaredNorm() / double(n);
  if (grad) {
    // d loss / d eps_hat = -2 residual / n, through the pooled-mean path.
    Eigen::VectorXd d_pool =
        cond_gain(t) * (cond_map_.transpose() * (-2.0 / double(n) * residual));
    grad->resize(cond.rows(), cond.cols());
    grad->rowwise() = (d_pool / double(cond.rows())).transpose();
  }
  return loss;
}

}  // namespace promptinv
