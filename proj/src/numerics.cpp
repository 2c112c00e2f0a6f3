#include "eivlg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eivlg/error.hpp"
#include "eivlg/kernels.hpp"

namespace eivlg {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DataError("matrix data size " + std::to_string(data_.size()) +
                    " does not match " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
}

Matrix Matrix::Identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::Fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix Matrix::Transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool AllFinite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double x) { return std::isfinite(x); });
}

void RequireShape(const Matrix& m, std::size_t rows, std::size_t cols,
                  const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DataError(std::string(what) + ": expected " + std::to_string(rows) +
                    "x" + std::to_string(cols) + ", got " +
                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

double Dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("dot: length mismatch");
  return kernels::Dot(a.data(), b.data(), a.size());
}

void Axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw DataError("axpy: length mismatch");
  kernels::Axpy(alpha, x.data(), y.data(), x.size());
}

Matrix MatMul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DataError("matmul: inner dimensions differ (" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                    ")");
  }
  Matrix c(a.rows(), b.cols());
  const auto& k = kernels::Table(kernels::Active());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.row(i).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double s = a(i, p);
      if (s != 0.0) k.axpy(s, b.row(p).data(), out, b.cols());
    }
  }
  return c;
}

Matrix MatMulTN(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DataError("matmul_tn: row counts differ");
  Matrix c(a.cols(), b.cols());
  const auto& k = kernels::Table(kernels::Active());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* brow = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = a(r, i);
      if (s != 0.0) k.axpy(s, brow, c.row(i).data(), b.cols());
    }
  }
  return c;
}

Matrix MatMulNT(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DataError("matmul_nt: column counts differ");
  Matrix c(a.rows(), b.rows());
  const auto& k = kernels::Table(kernels::Active());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j)
      c(i, j) = k.dot(a.row(i).data(), b.row(j).data(), a.cols());
  return c;
}

Vector VecMat(std::span<const double> v, const Matrix& m) {
  if (v.size() != m.rows()) throw DataError("vecmat: length mismatch");
  Vector out(m.cols(), 0.0);
  const auto& k = kernels::Table(kernels::Active());
  for (std::size_t r = 0; r < m.rows(); ++r)
    if (v[r] != 0.0) k.axpy(v[r], m.row(r).data(), out.data(), m.cols());
  return out;
}

Vector MatVec(const Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) throw DataError("matvec: length mismatch");
  Vector out(m.rows());
  const auto& k = kernels::Table(kernels::Active());
  for (std::size_t r = 0; r < m.rows(); ++r)
    out[r] = k.dot(m.row(r).data(), v.data(), m.cols());
  return out;
}

void AddOuter(Matrix& m, std::span<const double> u, std::span<const double> v,
              double scale) {
  if (u.size() != m.rows() || v.size() != m.cols())
    throw DataError("add_outer: shape mismatch");
  const auto& k = kernels::Table(kernels::Active());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double s = scale * u[r];
    if (s != 0.0) k.axpy(s, v.data(), m.row(r).data(), m.cols());
  }
}

void AddInPlace(Matrix& dst, const Matrix& src, double scale) {
  RequireShape(src, dst.rows(), dst.cols(), "add_in_place");
  kernels::Axpy(scale, src.data(), dst.data(), dst.size());
}

double LogSumExp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

Vector Softmax(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double Softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double TanhGate(double gamma) { return std::tanh(gamma); }

void AdamWStep(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamWState& state) {
  if (params.size() != grads.size())
    throw DataError("adamw: parameter/gradient tensor counts differ");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw DataError("adamw: state tensor count does not match parameters");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size() || state.m[t].size() != params[t].size())
      throw DataError("adamw: shape mismatch in tensor " + std::to_string(t));
    if (!AllFinite(grads[t]))
      throw NumericError("adamw: non-finite gradient in tensor " + std::to_string(t));
  }

  const auto& cfg = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    auto g = grads[t];
    auto& m = state.m[t];
    auto& v = state.v[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] = p[i] * decay - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void AdamWStep(std::span<double> params, std::span<const double> grads,
               AdamWState& state) {
  const std::span<double> p[] = {params};
  const std::span<const double> g[] = {grads};
  AdamWStep(std::span<const std::span<double>>(p),
            std::span<const std::span<const double>>(g), state);
}

GradCheckResult GradCheck(const ScalarFn& f, std::span<const double> x, double h,
                          std::span<const std::size_t> coords, double tiny) {
  if (!(h > 0.0)) throw UsageError("grad_check: step must be positive");
  Vector analytic;
  const double f0 = f(x, &analytic);
  if (!std::isfinite(f0) || !AllFinite(analytic))
    throw NumericError("grad_check: non-finite value or analytic gradient");
  if (analytic.size() != x.size())
    throw DataError("grad_check: gradient length differs from parameter length");

  Vector point(x.begin(), x.end());
  GradCheckResult result;
  auto check = [&](std::size_t i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double fp = f(point, nullptr);
    point[i] = saved - h;
    const double fm = f(point, nullptr);
    point[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("grad_check: non-finite evaluation at coordinate " +
                         std::to_string(i));
    const double numeric = (fp - fm) / (2.0 * h);
    if (std::abs(analytic[i]) < tiny && std::abs(numeric) < tiny) {
      result.max_tiny_abs_error = std::max(result.max_tiny_abs_error, std::abs(analytic[i] - numeric));
      ++result.tiny;
      return;
    }
    const double err = std::abs(analytic[i] - numeric) /
                       std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    if (result.checked == 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.analytic = analytic[i];
      result.numeric = numeric;
    }
    ++result.checked;
  };
  if (coords.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) check(i);
  } else {
    for (std::size_t i : coords) {
      if (i >= x.size()) throw DataError("grad_check: coordinate out of range");
      check(i);
    }
  }
  return result;
}

}  // namespace eivlg
