#include <cstdlib>
#include <cstring>

#include "lwdepth/error.hpp"
#include "lwdepth/kernels.hpp"

namespace lwdepth::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(LWDEPTH_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() noexcept {
  if (const char* env = std::getenv("LWDEPTH_ISA");
      env != nullptr && std::strcmp(env, "scalar") == 0) {
    return Isa::kScalar;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

Isa& current() noexcept {
  static Isa isa = detect();
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) noexcept {
  return isa == Isa::kScalar || (isa == Isa::kAvx2 && cpu_has_avx2());
}

Isa active_isa() noexcept { return current(); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw ConfigError("instruction set " + std::string(isa_name(isa)) +
                      " is not available on this machine");
  }
  current() = isa;
}

template <typename T>
const KernelTable<T>& table(Isa isa) {
  if (isa == Isa::kAvx2) {
#if defined(LWDEPTH_HAVE_AVX2)
    return *detail::avx2_table<T>();
#endif
  }
  return detail::scalar_table<T>();
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);

}  // namespace lwdepth::kernels
