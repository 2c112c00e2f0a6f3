#pragma once

// Dense double-precision inner loops with scalar reference implementations
// and SIMD variants picked once at startup from the host CPU.
//
// EIVLG_KERNELS=scalar|avx2|neon|auto overrides the choice (auto by default).

#include <cstddef>
#include <string_view>

namespace eivlg::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = a ⊙ b
  void (*mul)(const double* a, const double* b, double* y, std::size_t n);
};

const KernelTable& Table(Backend backend);
bool Supported(Backend backend);

/// Backend used by the numerics layer.
Backend Active();
/// Forces a backend; throws std::invalid_argument when unsupported on this CPU.
void SetActive(Backend backend);
std::string_view Name(Backend backend);

inline double Dot(const double* a, const double* b, std::size_t n) {
  return Table(Active()).dot(a, b, n);
}
inline void Axpy(double alpha, const double* x, double* y, std::size_t n) {
  Table(Active()).axpy(alpha, x, y, n);
}
inline void Mul(const double* a, const double* b, double* y, std::size_t n) {
  Table(Active()).mul(a, b, y, n);
}

namespace scalar {
double Dot(const double* a, const double* b, std::size_t n);
void Axpy(double alpha, const double* x, double* y, std::size_t n);
void Mul(const double* a, const double* b, double* y, std::size_t n);
}  // namespace scalar

#if defined(EIVLG_HAVE_AVX2)
namespace avx2 {
double Dot(const double* a, const double* b, std::size_t n);
void Axpy(double alpha, const double* x, double* y, std::size_t n);
void Mul(const double* a, const double* b, double* y, std::size_t n);
}  // namespace avx2
#endif

#if defined(EIVLG_HAVE_NEON)
namespace neon {
double Dot(const double* a, const double* b, std::size_t n);
void Axpy(double alpha, const double* x, double* y, std::size_t n);
void Mul(const double* a, const double* b, double* y, std::size_t n);
}  // namespace neon
#endif

}  // namespace eivlg::kernels
