#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gpm/numerics.hpp"

namespace testing {

inline gpm::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  gpm::Matrix m(rows, cols);
  for (double& v : m.data()) v = n(rng);
  return m;
}

inline gpm::Matrix random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  gpm::Matrix m = random_matrix(rows, cols, seed);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (double v : m.row(r)) s += v * v;
    for (double& v : m.row(r)) v /= std::sqrt(s);
  }
  return m;
}

/// labels 0,0,..,1,1,.. with k consecutive rows per place
inline std::vector<std::int64_t> block_labels(std::size_t places, std::size_t k) {
  std::vector<std::int64_t> out;
  for (std::size_t p = 0; p < places; ++p)
    for (std::size_t i = 0; i < k; ++i) out.push_back(static_cast<std::int64_t>(p));
  return out;
}

inline gpm::Matrix naive_matmul(const gpm::Matrix& a, const gpm::Matrix& b) {
  gpm::Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline double max_abs_diff(const gpm::Matrix& a, const gpm::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace testing
