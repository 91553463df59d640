#include "gpm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gpm/errors.hpp"

namespace gpm {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) throw NumericError(std::string(what) + ": non-finite result");
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: buffer length does not match shape");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw DimensionError("Matrix::from_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a) + " by " + shape_str(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  require_finite(out, "matmul");
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_transposed: " + shape_str(a) + " by " + shape_str(b) + "^T");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  require_finite(out, "matmul_transposed");
  return out;
}

Matrix transposed_matmul(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("transposed_matmul: " + shape_str(a) + "^T by " + shape_str(b));
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto a_row = a.row(k);
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  require_finite(out, "transposed_matmul");
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector l2_normalize(std::span<const double> v) {
  const double n = norm(v);
  if (!(n >= kDegenerateNorm)) {
    throw DegenerateInputError("l2_normalize: vector norm below 1e-12");
  }
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

ParamTensor::ParamTensor(Matrix initial)
    : value(std::move(initial)),
      grad(value.rows(), value.cols()),
      momentum(value.rows(), value.cols()) {}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("sgd.lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd.momentum must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("sgd.weight_decay must be non-negative");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw ConfigError("sgd.lr_decay_factor must be in (0,1]");
  }
  if (lr_decay_every_epochs < 1) throw ConfigError("sgd.lr_decay_every must be >= 1");
}

double SgdConfig::learning_rate_at(int epoch) const {
  const int drops = std::max(epoch, 0) / lr_decay_every_epochs;
  return learning_rate * std::pow(lr_decay_factor, drops);
}

void sgd_step(std::span<ParamTensor* const> params, const SgdConfig& cfg, int epoch) {
  const double lr = cfg.learning_rate_at(epoch);
  for (ParamTensor* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols() ||
        p->momentum.rows() != p->value.rows() || p->momentum.cols() != p->value.cols()) {
      throw DimensionError("sgd_step: grad/momentum shape differs from value");
    }
    auto w = p->value.data();
    auto g = p->grad.data();
    auto v = p->momentum.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg.momentum * v[i] + (g[i] + cfg.weight_decay * w[i]);
      w[i] -= lr * v[i];
    }
    p->zero_grad();
  }
}

double finite_diff_check(const std::function<double()>& f, ParamTensor& p, double eps) {
  double worst = 0.0;
  auto values = p.value.data();
  auto analytic = p.grad.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = f();
    values[i] = saved - eps;
    const double down = f();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double scale = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

}  // namespace gpm
