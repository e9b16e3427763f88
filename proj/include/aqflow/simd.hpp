#pragma once

#include <cstddef>

namespace aqflow::simd {

// Data-parallel inner loops used by the warp, loss, metrics and SNN modules.
// Every entry has a scalar reference implementation (the arbitration oracle)
// and, on x86-64 with AVX2, a vectorized variant selected at runtime.
//
// Elementwise kernels (warp_batch, axpy, lif_update, scale_add) are written
// with the same per-element operation order in both variants and must produce
// bit-identical results. Reduction kernels (sum, sum_squares, dot) reassociate
// and agree only to rounding; count_greater is integer-exact.
struct KernelTable {
    const char* name;

    // out_x[i] = x[i] + (vx[i] + phi[i]*(x[i]-cx)) * dt_ms[i], same for y.
    void (*warp_batch)(std::size_t n, const double* x, const double* y,
                       const double* dt_ms, const double* vx, const double* vy,
                       const double* phi, double cx, double cy,
                       double* out_x, double* out_y);

    double (*sum)(const double* v, std::size_t n);
    double (*sum_squares)(const double* v, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);
    std::size_t (*count_greater)(const double* v, std::size_t n, double threshold);

    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);

    // Membrane update: u[i] = zeta*u[i] + (1-zeta)*input[i]; spike where
    // u >= v_th, spiking entries reset to 0. spikes[i] in {0,1}. Returns the
    // spike count.
    std::size_t (*lif_update)(std::size_t n, double zeta, double v_th,
                              const double* input, double* u, double* spikes);
};

enum class Mode { Auto, Scalar, Avx2 };

const KernelTable& scalar_kernels();

// Null when the CPU lacks AVX2 (or on non-x86 builds).
const KernelTable* avx2_kernels();

// Kernel table used by library code. Honors set_mode(); defaults to the best
// available variant, overridable via AQFLOW_SIMD={auto,scalar,avx2}.
const KernelTable& active_kernels();

// Returns false if the requested variant is unavailable (mode left unchanged).
bool set_mode(Mode mode);
Mode mode();

} // namespace aqflow::simd
