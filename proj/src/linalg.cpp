#include "cfd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace cfd::linalg {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// Lower-triangular Cholesky factor, or nullopt when a pivot is not safely
// positive relative to the largest diagonal entry.
std::optional<Matrix> cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a(i, i)));
  const double tol = 1e-13 * std::max(scale, 1e-300);

  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > tol)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Vector cholesky_solve(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  Vector y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) y[i] -= l(i, k) * y[k];
    y[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) y[i] -= l(k, i) * y[k];
    y[i] /= l(i, i);
  }
  return y;
}

Vector gaussian_solve(Matrix a, std::span<const double> b, const std::string& name) {
  const std::size_t n = a.rows();
  Vector rhs(b.begin(), b.end());
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  const double tol = 1e-12 * std::max(scale, 1e-300);

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (!(std::abs(a(pivot, col)) > tol)) {
      throw SingularMatrixError("singular system: " + name + " is not invertible (pivot " +
                                std::to_string(col) + ")");
    }
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(pivot, c));
      std::swap(rhs[col], rhs[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      rhs[r] -= f * rhs[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) rhs[i] -= a(i, k) * rhs[k];
    rhs[i] /= a(i, i);
  }
  return rhs;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data has " + std::to_string(data_.size()) + " entries, expected " +
                     shape_str(rows_, cols_));
  }
  require_finite(data_, "matrix");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(data_, "matrix");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw ShapeError("row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

void require_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NonFiniteError(std::string(what) + " has a non-finite entry at " + std::to_string(i));
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " times " +
                     shape_str(b.rows(), b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw ShapeError("matvec: " + shape_str(a.rows(), a.cols()) + " times length " +
                     std::to_string(x.size()));
  }
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
  return out;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) {
    throw ShapeError("matvec_transposed: " + shape_str(a.rows(), a.cols()) + " with length " +
                     std::to_string(x.size()));
  }
  Vector out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += r[j] * x[i];
  }
  return out;
}

Vector solve_spd(const Matrix& a, std::span<const double> b, const std::string& name) {
  if (a.rows() != a.cols() || a.rows() != b.size()) {
    throw ShapeError("solve: " + name + " is " + shape_str(a.rows(), a.cols()) +
                     ", rhs length " + std::to_string(b.size()));
  }
  if (auto l = cholesky(a)) return cholesky_solve(*l, b);
  return gaussian_solve(a, b, name);
}

Matrix regularized_gram(const Matrix& x, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("ridge lambda must be finite and nonnegative");
  }
  const std::size_t p = x.cols();
  Matrix g(p, p);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t i = 0; i < p; ++i) {
      const double v = row[i];
      if (v == 0.0) continue;
      for (std::size_t j = i; j < p; ++j) g(i, j) += v * row[j];
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    g(i, i) += lambda;
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  }
  return g;
}

Vector ridge_solve(const Matrix& x, std::span<const double> y, double lambda) {
  if (x.rows() != y.size()) {
    throw ShapeError("ridge_solve: X has " + std::to_string(x.rows()) + " rows, y has " +
                     std::to_string(y.size()));
  }
  require_finite(y, "label vector");
  const Vector xty = matvec_transposed(x, y);
  return solve_spd(regularized_gram(x, lambda), xty, "XtX + lambda*I");
}

Vector influence_weights(const Matrix& x_train, std::span<const double> x, double lambda) {
  if (x_train.cols() != x.size()) {
    throw ShapeError("influence_weights: X has " + std::to_string(x_train.cols()) +
                     " columns, x has length " + std::to_string(x.size()));
  }
  require_finite(x, "test input");
  const Vector w = solve_spd(regularized_gram(x_train, lambda), x, "XtX + lambda*I");
  return matvec(x_train, w);
}

}  // namespace cfd::linalg
