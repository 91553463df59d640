#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace gpm {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. No broadcasting: every operation
/// checks shapes explicitly.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double value);
  Matrix transposed() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Standard product a·b. Throws DimensionError when a.cols != b.rows and
/// NumericError when the result is not finite.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a·bᵀ without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// aᵀ·b without materializing the transpose.
Matrix transposed_matmul(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

/// Threshold below which a vector is considered to have no direction.
inline constexpr double kDegenerateNorm = 1e-12;

/// Unit-norm copy of v. Throws DegenerateInputError if ‖v‖ < kDegenerateNorm.
Vector l2_normalize(std::span<const double> v);

/// Trainable parameter: value, accumulated gradient and momentum buffer,
/// all of the same shape.
struct ParamTensor {
  ParamTensor() = default;
  ParamTensor(std::size_t rows, std::size_t cols)
      : value(rows, cols), grad(rows, cols), momentum(rows, cols) {}
  explicit ParamTensor(Matrix initial);

  Matrix value;
  Matrix grad;
  Matrix momentum;

  void zero_grad() { grad.fill(0.0); }
};

struct SgdConfig {
  double learning_rate = 0.05;
  double momentum = 0.95;
  double weight_decay = 1e-4;
  double lr_decay_factor = 0.3;
  int lr_decay_every_epochs = 5;

  void validate() const;
  /// Piecewise-constant schedule lr0 · decay^⌊epoch / every⌋.
  double learning_rate_at(int epoch) const;
};

/// One SGD-with-momentum update over every parameter, with L2 weight decay
/// folded into the gradient:
///   v ← μ·v + (g + wd·w);  w ← w − lr(epoch)·v;  g ← 0
void sgd_step(std::span<ParamTensor* const> params, const SgdConfig& cfg, int epoch);

/// Compares p.grad (taken as the analytic gradient of f at p.value) to the
/// central difference (f(p+εe) − f(p−εe)) / 2ε for every coordinate and
/// returns the largest |analytic − numeric| / max(1, |analytic|, |numeric|).
/// p.value is restored before returning.
double finite_diff_check(const std::function<double()>& f, ParamTensor& p, double eps);

}  // namespace gpm
