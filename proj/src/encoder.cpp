#include "promptinv/encoder.hpp"

#include <stdexcept>

#include "promptinv/rng.hpp"

namespace promptinv {

void EncoderParams::validate() const {
  if (affine_w.rows() != dim() || affine_w.cols() != dim())
    throw std::invalid_argument("encoder affine map shape mismatch");
  if (affine_b.size() != dim())
    throw std::invalid_argument("encoder bias shape mismatch");
  if (mixing.rows() != max_length() || mixing.cols() != max_length())
    throw std::invalid_argument("encoder mixing map shape mismatch");
  if (!positional.allFinite() || !affine_w.allFinite() || !affine_b.allFinite() ||
      !mixing.allFinite())
    throw std::invalid_argument("encoder parameters contain non-finite entries");
}

EncoderParams make_toy_encoder(Eigen::Index l_max, Eigen::Index dim,
                               std::uint64_t seed) {
  Rng rng(mix64(seed, 0x656e63ULL));  // "enc"
  EncoderParams p;
  p.seed = seed;
  p.positional = 0.3 * rng.normal_matrix(l_max, dim);
  // Near-orthogonal affine map keeps gradients well-scaled through tanh.
  Eigen::MatrixXd w = rng.normal_matrix(dim, dim);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
  p.affine_w = Eigen::MatrixXd(qr.householderQ()) * 0.9;
  p.affine_b = 0.1 * rng.normal_vector(dim);
  p.mixing = Eigen::MatrixXd::Identity(l_max, l_max) +
             0.25 * rng.normal_matrix(l_max, l_max);
  p.validate();
  return p;
}

static void check_length(const Eigen::MatrixXd& rows, const EncoderParams& p) {
  if (rows.rows() > p.max_length())
    throw std::length_error("prompt length " + std::to_string(rows.rows()) +
                            " exceeds encoder capacity " +
                            std::to_string(p.max_length()));
  if (rows.cols() != p.dim())
    throw std::invalid_argument("prompt row dimensionality mismatch");
}

Eigen::MatrixXd encode(const Eigen::MatrixXd& prompt_rows,
                       const EncoderParams& params) {
  check_length(prompt_rows, params);
  const Eigen::Index L = prompt_rows.rows();
  Eigen::MatrixXd h = prompt_rows + params.positional.topRows(L);
  Eigen::MatrixXd a = (h * params.affine_w.transpose()).rowwise() +
                      params.affine_b.transpose();
  return params.mixing.topLeftCorner(L, L) * a.array().tanh().matrix();
}

Eigen::MatrixXd encode_vjp(const Eigen::MatrixXd& prompt_rows,
                           const Eigen::MatrixXd& upstream,
                           const EncoderParams& params) {
  check_length(prompt_rows, params);
  const Eigen::Index L = prompt_rows.rows();
  if (upstream.rows() != L || upstream.cols() != params.context_dim())
    throw std::invalid_argument("upstream gradient shape mismatch");

  Eigen::MatrixXd h = prompt_rows + params.positional.topRows(L);
  Eigen::MatrixXd z = ((h * params.affine_w.transpose()).rowwise() +
                       params.affine_b.transpose())
                          .array()
                          .tanh()
                          .matrix();
  Eigen::MatrixXd dz = params.mixing.topLeftCorner(L, L).transpose() * upstream;
  Eigen::MatrixXd da =
      (dz.array() * (1.0 - z.array().square())).matrix();
  return da * params.affine_w;
}

}  // namespace promptinv
