#include <cstdlib>
#include <stdexcept>
#include <string>

#include "disco/kernels.hpp"

namespace disco::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  if (const char* env = std::getenv("DISCO_KERNELS")) {
    if (std::string(env) == "scalar") return Backend::kScalar;
  }
  return cpu_has_avx2() ? Backend::kAvx2 : Backend::kScalar;
}

Backend& current() {
  static Backend backend = initial_backend();
  return backend;
}

}  // namespace

bool backend_available(Backend backend) {
  return backend == Backend::kScalar || cpu_has_avx2();
}

Backend active_backend() { return current(); }

void set_backend(Backend backend) {
  if (!backend_available(backend)) {
    throw std::invalid_argument("kernel backend " + std::string(backend_name(backend)) + " not supported by this CPU");
  }
  current() = backend;
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& active() {
  return current() == Backend::kAvx2 ? avx2_table() : scalar_table();
}

}  // namespace disco::kernels
