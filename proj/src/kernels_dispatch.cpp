#include "gazealign/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace gazealign::kern {

bool avx2_supported() {
#if defined(GAZEALIGN_BUILD_AVX2)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported;
#else
  return false;
#endif
}

#if !defined(GAZEALIGN_BUILD_AVX2)
const Backend& avx2_backend() { return scalar_backend(); }
#endif

namespace {

enum class Choice { automatic, scalar, avx2 };

std::atomic<Choice> g_forced{Choice::automatic};

const Backend& pick() {
  const Choice forced = g_forced.load(std::memory_order_relaxed);
  if (forced == Choice::scalar) return scalar_backend();
  if (forced == Choice::avx2 && avx2_supported()) return avx2_backend();
  if (forced == Choice::automatic) {
    const char* env = std::getenv("GAZE_ALIGN_KERNELS");
    if (env != nullptr && std::strcmp(env, "scalar") == 0)
      return scalar_backend();
    if (avx2_supported()) return avx2_backend();
  }
  return scalar_backend();
}

}  // namespace

const Backend& active() { return pick(); }

void force_backend(const char* name) {
  if (name == nullptr) {
    g_forced.store(Choice::automatic, std::memory_order_relaxed);
  } else if (std::strcmp(name, "scalar") == 0) {
    g_forced.store(Choice::scalar, std::memory_order_relaxed);
  } else if (std::strcmp(name, "avx2") == 0) {
    g_forced.store(Choice::avx2, std::memory_order_relaxed);
  }
}

}  // namespace gazealign::kern
