#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "edgeyolo/simd/kernels.hpp"

namespace edgeyolo::simd {
namespace {

const KernelTable* select_default() {
  if (const char* env = std::getenv("EDGEYOLO_ISA")) {
    if (std::string(env) == "scalar") {
      return &scalar_kernels();
    }
  }
  if (cpu_supports(Isa::Avx2)) {
    return avx2_kernels();
  }
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(__i386__)
      return avx2_kernels() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

void set_isa(Isa isa) {
  if (!cpu_supports(isa)) {
    throw std::runtime_error("ISA " + std::string(isa_name(isa)) +
                             " is not supported on this CPU/build");
  }
  const KernelTable* t = isa == Isa::Avx2 ? avx2_kernels() : &scalar_kernels();
  current().store(t, std::memory_order_release);
}

}  // namespace edgeyolo::simd
