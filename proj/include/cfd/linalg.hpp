#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfd::linalg {

using Vector = std::vector<double>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dense row-major matrix of finite doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  // Throws ShapeError if data.size() != rows*cols, NonFiniteError on NaN/Inf.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Matrix transpose() const;
  Matrix select_rows(std::span<const std::size_t> indices) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

void require_finite(std::span<const double> v, const char* what);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
// aᵀ x without forming the transpose.
Vector matvec_transposed(const Matrix& a, std::span<const double> x);

// Solves A w = b for symmetric positive definite A via Cholesky, falling
// back to partially pivoted Gaussian elimination. `name` appears in the
// SingularMatrixError message.
Vector solve_spd(const Matrix& a, std::span<const double> b, const std::string& name);

// XᵀX + λI.
Matrix regularized_gram(const Matrix& x, double lambda);

// θ = (XᵀX + λI)⁻¹ Xᵀy.
Vector ridge_solve(const Matrix& x, std::span<const double> y, double lambda);

// z = xᵀ(XᵀX + λI)⁻¹Xᵀ, so that z·y equals the ridge prediction at x for
// every label vector y.
Vector influence_weights(const Matrix& x_train, std::span<const double> x, double lambda);

}  // namespace cfd::linalg
