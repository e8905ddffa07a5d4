#include "promptinv/backend.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "promptinv/adapter.hpp"
#include "promptinv/rng.hpp"

namespace promptinv {

LatentImage make_latent(std::array<int, 3> shape, Eigen::VectorXd data) {
  auto [h, w, c] = shape;
  if (data.size() != Eigen::Index(h) * w * c)
    throw std::invalid_argument("latent data size does not match shape");
  return LatentImage{std::move(data), h, w, c};
}

PixelImage make_pixel(int h, int w, Eigen::VectorXd data) {
  if (data.size() != Eigen::Index(h) * w * 3)
    throw std::invalid_argument("pixel data size does not match shape");
  return PixelImage{std::move(data), h, w};
}

void DiffusionBackend::check_latent(const LatentImage& x) const {
  auto [h, w, c] = latent_shape();
  if (x.h != h || x.w != w || x.c != c || x.data.size() != Eigen::Index(h) * w * c)
    throw std::invalid_argument("latent shape does not match backend");
}

void DiffusionBackend::check_pixel(const PixelImage& img) const {
  auto [h, w] = pixel_shape();
  if (img.h != h || img.w != w || img.data.size() != Eigen::Index(h) * w * 3)
    throw std::invalid_argument("pixel shape does not match backend");
}

void DiffusionBackend::check_cond(const Eigen::MatrixXd& cond) const {
  if (cond.cols() != context_dim())
    throw std::invalid_argument("conditioning dimensionality does not match backend");
}

LatentImage DiffusionBackend::add_noise(const LatentImage& x, int t,
                                        const LatentImage& eps) const {
  check_latent(x);
  check_latent(eps);
  double ab = schedule().alpha_bar(t);
  LatentImage out = x;
  out.data = std::sqrt(ab) * x.data + std::sqrt(1.0 - ab) * eps.data;
  return out;
}

LatentImage DiffusionBackend::sample(const Eigen::MatrixXd& cond, int steps,
                                     std::uint64_t seed) const {
  if (steps < 1) throw std::invalid_argument("sample needs steps >= 1");
  check_cond(cond);
  const int T = schedule().T();
  auto [h, w, c] = latent_shape();
  const Eigen::Index n = Eigen::Index(h) * w * c;

  Rng rng(mix64(seed, 0x73616dULL));  // "sam"
  LatentImage x{rng.normal_vector(n), h, w, c};

  // Strided subsequence from T down to 1, DDPM ancestral updates between
  // consecutive visited timesteps.
  for (int i = 0; i < steps; ++i) {
    int t = steps == 1 ? T : T - (T - 1) * i / (steps - 1);
    int t_prev = i + 1 < steps ? (steps == 1 ? 1 : T - (T - 1) * (i + 1) / (steps - 1)) : 0;
    LatentImage eps_hat = predict_noise(x, t, cond);

    double ab = schedule().alpha_bar(t);
    Eigen::VectorXd x0 = (x.data - std::sqrt(1.0 - ab) * eps_hat.data) / std::sqrt(ab);
    if (t_prev >= 1) {
      double ab_prev = schedule().alpha_bar(t_prev);
      // Posterior mean toward t_prev plus scaled fresh noise.
      double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev));
      x.data = std::sqrt(ab_prev) * x0 +
               std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma)) * eps_hat.data +
               sigma * rng.normal_vector(n);
    } else {
      x.data = x0;
    }
  }
  return x;
}

BackendManifest BackendManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open backend manifest: " + path);
  nlohmann::json j = nlohmann::json::parse(in);

  BackendManifest m;
  m.type = j.value("type", "toy");
  if (m.type != "toy" && m.type != "adapter")
    throw std::runtime_error("unknown backend type: " + m.type);
  m.seed = j.value("seed", std::uint64_t{0});
  m.T = j.value("T", 1000);
  if (j.contains("latent_shape")) {
    auto v = j.at("latent_shape").get<std::vector<int>>();
    if (v.size() != 3) throw std::runtime_error("latent_shape must have 3 entries");
    m.latent_shape = {v[0], v[1], v[2]};
  }
  if (j.contains("pixel_shape")) {
    auto v = j.at("pixel_shape").get<std::vector<int>>();
    if (v.size() != 2) throw std::runtime_error("pixel_shape must have 2 entries");
    m.pixel_shape = {v[0], v[1]};
  }
  m.context_dim = j.value("context_dim", 8);
  if (j.contains("schedule")) {
    m.beta_start = j.at("schedule").value("beta_start", 1e-4);
    m.beta_end = j.at("schedule").value("beta_end", 2e-2);
  }
  m.command = j.value("command", std::string{});
  if (m.type == "adapter" && m.command.empty())
    throw std::runtime_error("adapter backend manifest needs a command");
  return m;
}

void BackendManifest::save(const std::string& path) const {
  nlohmann::json j{
      {"type", type},
      {"seed", seed},
      {"T", T},
      {"latent_shape", {latent_shape[0], latent_shape[1], latent_shape[2]}},
      {"pixel_shape", {pixel_shape[0], pixel_shape[1]}},
      {"context_dim", context_dim},
      {"schedule", {{"beta_start", beta_start}, {"beta_end", beta_end}}},
  };
  if (!command.empty()) j["command"] = command;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write backend manifest: " + path);
  out << j.dump(2) << '\n';
}

std::unique_ptr<DiffusionBackend> open_backend(const BackendManifest& m) {
  if (m.type == "adapter") return std::make_unique<AdapterBackend>(m.command);
  return std::make_unique<ToyBackend>(
      m.seed, NoiseSchedule::linear_beta(m.T, m.beta_start, m.beta_end),
      m.latent_shape, m.pixel_shape, m.context_dim);
}

}  // namespace promptinv
