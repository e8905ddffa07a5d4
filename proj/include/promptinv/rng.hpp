#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace promptinv {

// splitmix64 finalizer; used to derive independent per-(seed,t,index) streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ b);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b) ^ c);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(mix64(seed)) {}

  double normal() { return normal_(gen_); }
  double uniform() { return uniform_(gen_); }

  // Inclusive integer range.
  long uniform_int(long lo, long hi) {
    return std::uniform_int_distribution<long>(lo, hi)(gen_);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    // Row-major fill so the stream is independent of Eigen's storage order.
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal();
    return m;
  }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace promptinv
