#include "aqflow/simd.hpp"

#include <cstdlib>
#include <cstring>

namespace aqflow::simd {
namespace {

Mode g_mode = Mode::Auto;

Mode mode_from_env() {
    const char* env = std::getenv("AQFLOW_SIMD");
    if (env == nullptr) return Mode::Auto;
    if (std::strcmp(env, "scalar") == 0) return Mode::Scalar;
    if (std::strcmp(env, "avx2") == 0) return Mode::Avx2;
    return Mode::Auto;
}

const KernelTable* resolve(Mode m) {
    switch (m) {
    case Mode::Scalar:
        return &scalar_kernels();
    case Mode::Avx2:
        return avx2_kernels();
    case Mode::Auto:
    default: {
        if (const KernelTable* t = avx2_kernels()) return t;
        return &scalar_kernels();
    }
    }
}

} // namespace

const KernelTable& active_kernels() {
    static bool env_applied = false;
    if (!env_applied) {
        env_applied = true;
        if (const KernelTable* t = resolve(mode_from_env()); t != nullptr) {
            // Env override only narrows the default; set_mode() still wins later.
            if (g_mode == Mode::Auto) g_mode = mode_from_env();
        }
    }
    const KernelTable* t = resolve(g_mode);
    return t != nullptr ? *t : scalar_kernels();
}

bool set_mode(Mode m) {
    if (resolve(m) == nullptr) return false;
    g_mode = m;
    return true;
}

Mode mode() { return g_mode; }

} // namespace aqflow::simd
