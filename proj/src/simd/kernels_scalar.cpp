#include "aqflow/simd.hpp"

namespace aqflow::simd {
namespace {

void warp_batch_scalar(std::size_t n, const double* x, const double* y,
                       const double* dt_ms, const double* vx, const double* vy,
                       const double* phi, double cx, double cy,
                       double* out_x, double* out_y) {
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = dt_ms[i];
        const double p = phi[i];
        out_x[i] = x[i] + (vx[i] + p * (x[i] - cx)) * dt;
        out_y[i] = y[i] + (vy[i] + p * (y[i] - cy)) * dt;
    }
}

double sum_scalar(const double* v, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += v[i];
    return acc;
}

double sum_squares_scalar(const double* v, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += v[i] * v[i];
    return acc;
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

std::size_t count_greater_scalar(const double* v, std::size_t n, double threshold) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (v[i] > threshold) ++count;
    }
    return count;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

std::size_t lif_update_scalar(std::size_t n, double zeta, double v_th,
                              const double* input, double* u, double* spikes) {
    const double gain = 1.0 - zeta;
    std::size_t fired = 0;
    for (std::size_t i = 0; i < n; ++i) {
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

} // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table = {
        "scalar",
        warp_batch_scalar,
        sum_scalar,
        sum_squares_scalar,
        dot_scalar,
        count_greater_scalar,
        axpy_scalar,
        lif_update_scalar,
    };
    return table;
}

} // namespace aqflow::simd
