#include "aqflow/simd.hpp"

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
#define AQFLOW_X86 1
#include <immintrin.h>
#else
#define AQFLOW_X86 0
#endif

namespace aqflow::simd {

#if AQFLOW_X86
namespace {

// Elementwise kernels mirror the scalar operation order exactly (no FMA
// contraction), so results are bit-identical per lane.

__attribute__((target("avx2")))
void warp_batch_avx2(std::size_t n, const double* x, const double* y,
                     const double* dt_ms, const double* vx, const double* vy,
                     const double* phi, double cx, double cy,
                     double* out_x, double* out_y) {
    const __m256d vcx = _mm256_set1_pd(cx);
    const __m256d vcy = _mm256_set1_pd(cy);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xi = _mm256_loadu_pd(x + i);
        const __m256d yi = _mm256_loadu_pd(y + i);
        const __m256d dt = _mm256_loadu_pd(dt_ms + i);
        const __m256d vvx = _mm256_loadu_pd(vx + i);
        const __m256d vvy = _mm256_loadu_pd(vy + i);
        const __m256d ph = _mm256_loadu_pd(phi + i);
        const __m256d rx = _mm256_mul_pd(ph, _mm256_sub_pd(xi, vcx));
        const __m256d ry = _mm256_mul_pd(ph, _mm256_sub_pd(yi, vcy));
        const __m256d ox = _mm256_add_pd(xi, _mm256_mul_pd(_mm256_add_pd(vvx, rx), dt));
        const __m256d oy = _mm256_add_pd(yi, _mm256_mul_pd(_mm256_add_pd(vvy, ry), dt));
        _mm256_storeu_pd(out_x + i, ox);
        _mm256_storeu_pd(out_y + i, oy);
    }
    for (; i < n; ++i) {
        const double dt = dt_ms[i];
        const double p = phi[i];
        out_x[i] = x[i] + (vx[i] + p * (x[i] - cx)) * dt;
        out_y[i] = y[i] + (vy[i] + p * (y[i] - cy)) * dt;
    }
}

__attribute__((target("avx2")))
double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s2 = _mm_add_pd(lo, hi);
    const __m128d s1 = _mm_add_sd(s2, _mm_unpackhi_pd(s2, s2));
    return _mm_cvtsd_f64(s1);
}

__attribute__((target("avx2")))
double sum_avx2(const double* v, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(v + i));
    double total = hsum(acc);
    for (; i < n; ++i) total += v[i];
    return total;
}

__attribute__((target("avx2")))
double sum_squares_avx2(const double* v, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d x = _mm256_loadu_pd(v + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(x, x));
    }
    double total = hsum(acc);
    for (; i < n; ++i) total += v[i] * v[i];
    return total;
}

__attribute__((target("avx2")))
double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    double total = hsum(acc);
    for (; i < n; ++i) total += a[i] * b[i];
    return total;
}

__attribute__((target("avx2")))
std::size_t count_greater_avx2(const double* v, std::size_t n, double threshold) {
    const __m256d th = _mm256_set1_pd(threshold);
    std::size_t count = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d cmp = _mm256_cmp_pd(_mm256_loadu_pd(v + i), th, _CMP_GT_OQ);
        count += static_cast<std::size_t>(__builtin_popcount(_mm256_movemask_pd(cmp)));
    }
    for (; i < n; ++i) {
        if (v[i] > threshold) ++count;
    }
    return count;
}

__attribute__((target("avx2")))
void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d yi = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(yi, _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

__attribute__((target("avx2")))
std::size_t lif_update_avx2(std::size_t n, double zeta, double v_th,
                            const double* input, double* u, double* spikes) {
    const double gain = 1.0 - zeta;
    const __m256d vz = _mm256_set1_pd(zeta);
    const __m256d vg = _mm256_set1_pd(gain);
    const __m256d vth = _mm256_set1_pd(v_th);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d zero = _mm256_setzero_pd();
    std::size_t fired = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d ui = _mm256_add_pd(_mm256_mul_pd(vz, _mm256_loadu_pd(u + i)),
                                         _mm256_mul_pd(vg, _mm256_loadu_pd(input + i)));
        const __m256d mask = _mm256_cmp_pd(ui, vth, _CMP_GE_OQ);
        _mm256_storeu_pd(spikes + i, _mm256_and_pd(mask, one));
        _mm256_storeu_pd(u + i, _mm256_andnot_pd(mask, ui));
        fired += static_cast<std::size_t>(__builtin_popcount(_mm256_movemask_pd(mask)));
    }
    for (; i < n; ++i) {
        double ui = zeta * u[i] + gain * input[i];
        if (ui >= v_th) {
            spikes[i] = 1.0;
            u[i] = 0.0;
            ++fired;
        } else {
            spikes[i] = 0.0;
            u[i] = ui;
        }
    }
    return fired;
}

const KernelTable avx2_table = {
    "avx2",
    warp_batch_avx2,
    sum_avx2,
    sum_squares_avx2,
    dot_avx2,
    count_greater_avx2,
    axpy_avx2,
    lif_update_avx2,
};

} // namespace

const KernelTable* avx2_kernels() {
    return __builtin_cpu_supports("avx2") ? &avx2_table : nullptr;
}

#else

const KernelTable* avx2_kernels() { return nullptr; }

#endif // AQFLOW_X86

} // namespace aqflow::simd
