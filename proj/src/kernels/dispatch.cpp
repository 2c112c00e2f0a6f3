#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "eivlg/kernels.hpp"

namespace eivlg::kernels {
namespace {

constexpr KernelTable kScalarTable{&scalar::Dot, &scalar::Axpy, &scalar::Mul};
#if defined(EIVLG_HAVE_AVX2)
constexpr KernelTable kAvx2Table{&avx2::Dot, &avx2::Axpy, &avx2::Mul};
#endif
#if defined(EIVLG_HAVE_NEON)
constexpr KernelTable kNeonTable{&neon::Dot, &neon::Axpy, &neon::Mul};
#endif

Backend BestAvailable() {
  if (Supported(Backend::kAvx2)) return Backend::kAvx2;
  if (Supported(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

Backend FromEnvironment() {
  const char* env = std::getenv("EIVLG_KERNELS");
  if (env == nullptr) return BestAvailable();
  const std::string value(env);
  if (value == "scalar") return Backend::kScalar;
  if (value == "avx2" && Supported(Backend::kAvx2)) return Backend::kAvx2;
  if (value == "neon" && Supported(Backend::kNeon)) return Backend::kNeon;
  return BestAvailable();
}

std::atomic<Backend>& ActiveSlot() {
  static std::atomic<Backend> slot{FromEnvironment()};
  return slot;
}

}  // namespace

bool Supported(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if defined(EIVLG_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(EIVLG_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& Table(Backend backend) {
  switch (backend) {
#if defined(EIVLG_HAVE_AVX2)
    case Backend::kAvx2:
      return kAvx2Table;
#endif
#if defined(EIVLG_HAVE_NEON)
    case Backend::kNeon:
      return kNeonTable;
#endif
    default:
      return kScalarTable;
  }
}

Backend Active() { return ActiveSlot().load(std::memory_order_relaxed); }

void SetActive(Backend backend) {
  if (!Supported(backend)) {
    throw std::invalid_argument("kernel backend not supported on this CPU: " +
                                std::string(Name(backend)));
  }
  ActiveSlot().store(backend, std::memory_order_relaxed);
}

std::string_view Name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

}  // namespace eivlg::kernels
