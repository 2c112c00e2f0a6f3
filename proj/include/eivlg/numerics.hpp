#pragma once

// Minimal dense linear algebra on row-major doubles, activations, AdamW and a
// central-difference gradient checker. All heavy loops go through
// eivlg::kernels so the SIMD backend is picked at runtime.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace eivlg {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix Identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void Fill(double value);
  Matrix Transposed() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

bool AllFinite(std::span<const double> values);

/// Throws DataError naming `what` unless the shapes agree.
void RequireShape(const Matrix& m, std::size_t rows, std::size_t cols,
                  const char* what);

double Dot(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void Axpy(double alpha, std::span<const double> x, std::span<double> y);

Matrix MatMul(const Matrix& a, const Matrix& b);
/// aᵀ·b
Matrix MatMulTN(const Matrix& a, const Matrix& b);
/// a·bᵀ
Matrix MatMulNT(const Matrix& a, const Matrix& b);
/// Row vector times matrix: vᵀ·m, length m.cols().
Vector VecMat(std::span<const double> v, const Matrix& m);
/// m·v, length m.rows().
Vector MatVec(const Matrix& m, std::span<const double> v);
/// m += scale · u vᵀ
void AddOuter(Matrix& m, std::span<const double> u, std::span<const double> v,
              double scale = 1.0);
void AddInPlace(Matrix& dst, const Matrix& src, double scale = 1.0);

double LogSumExp(std::span<const double> v);
/// Max-subtracted softmax. Empty input is a precondition violation.
Vector Softmax(std::span<const double> v);
double Sigmoid(double x);
/// log(1 + eˣ) without overflow.
double Softplus(double x);
/// The learnable gate τ_γ = tanh(γ).
double TanhGate(double gamma);

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay and bias correction.

struct AdamWConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  AdamWConfig config;
  long step = 0;
  std::vector<Vector> m;  // one per parameter tensor
  std::vector<Vector> v;
};

/// One update over a list of parameter tensors. Moments are allocated on the
/// first call; later calls must pass the same tensor shapes.
void AdamWStep(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamWState& state);
void AdamWStep(std::span<double> params, std::span<const double> grads,
               AdamWState& state);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

/// Returns f(x); fills `grad` with the analytic gradient when non-null.
using ScalarFn = std::function<double(std::span<const double> x, Vector* grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  // Coordinates routed to the absolute-error channel (see `tiny` below).
  std::size_t tiny = 0;
  double max_tiny_abs_error = 0.0;
};

/// Central differences (f(x+h eᵢ) − f(x−h eᵢ)) / 2h against the analytic
/// gradient, error |a−n| / max(1e-8, |a|+|n|). `coords` restricts the check
/// to a subset of coordinates; empty means all of them. Coordinates where
/// both gradients are below `tiny` in magnitude are scored by absolute error
/// instead, since there the difference quotient is dominated by roundoff.
GradCheckResult GradCheck(const ScalarFn& f, std::span<const double> x, double h,
                          std::span<const std::size_t> coords = {}, double tiny = 0.0);

}  // namespace eivlg
