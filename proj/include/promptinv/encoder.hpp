#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace promptinv {

/// Frozen text-encoder parameters. The toy encoder is
///   C = M_L * tanh((P + Pos_L) * W^T + 1 b^T)
/// where Pos_L / M_L are the leading L rows / L x L block of the stored
/// tables. Everything is generated once from a seed and never trained.
struct EncoderParams {
  Eigen::MatrixXd positional;  // L_max x d
  Eigen::MatrixXd affine_w;    // d x d
  Eigen::VectorXd affine_b;    // d
  Eigen::MatrixXd mixing;      // L_max x L_max
  std::uint64_t seed = 0;

  Eigen::Index max_length() const { return positional.rows(); }
  Eigen::Index dim() const { return positional.cols(); }
  Eigen::Index context_dim() const { return positional.cols(); }

  void validate() const;
};

EncoderParams make_toy_encoder(Eigen::Index l_max, Eigen::Index dim,
                               std::uint64_t seed);

/// f(S): prompt rows (L x d) -> conditioning (L x d). Pure and deterministic.
Eigen::MatrixXd encode(const Eigen::MatrixXd& prompt_rows,
                       const EncoderParams& params);

/// Vector-Jacobian product: gradient of a scalar loss with respect to the
/// prompt rows, given its gradient `upstream` with respect to encode()'s
/// output.
Eigen::MatrixXd encode_vjp(const Eigen::MatrixXd& prompt_rows,
                           const Eigen::MatrixXd& upstream,
                           const EncoderParams& params);

}  // namespace promptinv
