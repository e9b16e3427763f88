#include "aqflow/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "aqflow/error.hpp"
#include "aqflow/simd.hpp"

namespace aqflow {
namespace {

double charbonnier(double x, double eps, double beta) {
    return std::pow(x * x + eps * eps, beta);
}

double charbonnier_deriv(double x, double eps, double beta) {
    return 2.0 * beta * x * std::pow(x * x + eps * eps, beta - 1.0);
}

// d/dT of f(T) = T^2 + lambda0 * tanh^2(T / eps_tanh); T >= 0 throughout.
double f_deriv(double t, const LossConfig& cfg) {
    double d = 2.0 * t;
    if (cfg.lambda0 != 0.0) {
        const double th = std::tanh(t / cfg.eps_tanh);
        d += cfg.lambda0 * 2.0 * th * (1.0 - th * th) / cfg.eps_tanh;
    }
    return d;
}

struct DirectionGrad {
    double loss = 0.0;
    // Per-pixel upstream factors f'(T_q) / active_count for each polarity.
    Image<double> g_pos;
    Image<double> g_neg;
    double active_denom = 0.0;
};

DirectionGrad cm_loss_with_pixel_grad(const IWE& iwe, const LossConfig& cfg) {
    DirectionGrad out;
    out.loss = cm_loss_at(iwe, cfg);
    const int W = iwe.t_pos.width();
    const int H = iwe.t_pos.height();
    out.active_denom =
        static_cast<double>(simd::active_kernels().count_greater(iwe.delta.data(), iwe.delta.size(), 0.0)) +
        cfg.eps_denom;
    out.g_pos = Image<double>(W, H, 0.0);
    out.g_neg = Image<double>(W, H, 0.0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (iwe.den_pos.at(x, y) > 0.0) {
                out.g_pos.at(x, y) = f_deriv(iwe.t_pos.at(x, y), cfg) / out.active_denom;
            }
            if (iwe.den_neg.at(x, y) > 0.0) {
                out.g_neg.at(x, y) = f_deriv(iwe.t_neg.at(x, y), cfg) / out.active_denom;
            }
        }
    }
    return out;
}

// Backpropagates one direction's contrast loss through the splat and warp
// into the per-cell gradient accumulators.
void accumulate_cm_gradient(const EventPartition& partition, const MotionField& field,
                            const Centroid& centroid, SensorSize sensor, std::uint64_t t_ref_us,
                            TimeDirection direction, const IWE& iwe, const DirectionGrad& dg,
                            const LossConfig& cfg, ThetaGradient& grad) {
    if (partition.empty()) return;
    const detail::WarpBatch batch = detail::make_warp_batch(partition, field, centroid, t_ref_us);
    const int rx0 = iwe.origin_x;
    const int ry0 = iwe.origin_y;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Event& e = partition.events[i];
        const double tau = normalized_timestamp(partition, e.t, direction);
        const int x0 = static_cast<int>(std::floor(batch.warped_x[i]));
        const int y0 = static_cast<int>(std::floor(batch.warped_y[i]));
        const double fx = batch.warped_x[i] - x0;
        const double fy = batch.warped_y[i] - y0;
        const double sx[2] = {1.0 - fx, fx};
        const double sy[2] = {1.0 - fy, fy};
        const double dsx[2] = {-1.0, 1.0}; // d(sx)/d(warped_x) per tap
        const double dsy[2] = {-1.0, 1.0};
        const Image<double>& t_img = e.p > 0 ? iwe.t_pos : iwe.t_neg;
        const Image<double>& den_img = e.p > 0 ? iwe.den_pos : iwe.den_neg;
        const Image<double>& g_img = e.p > 0 ? dg.g_pos : dg.g_neg;

        double dl_dwx = 0.0;
        double dl_dwy = 0.0;
        for (int dx = 0; dx < 2; ++dx) {
            for (int dy = 0; dy < 2; ++dy) {
                const int px = x0 + dx;
                const int py = y0 + dy;
                if (px < 0 || px >= sensor.width || py < 0 || py >= sensor.height) continue;
                const int lx = px - rx0;
                const int ly = py - ry0;
                const double g = g_img.at(lx, ly);
                if (g == 0.0) continue;
                // dT/dw for this event's splat weight at pixel (px, py)
                const double dt_dw = (tau - t_img.at(lx, ly)) / (den_img.at(lx, ly) + cfg.eps_denom);
                const double dl_dw = g * dt_dw;
                dl_dwx += dl_dw * dsx[dx] * sy[dy];
                dl_dwy += dl_dw * sx[dx] * dsy[dy];
            }
        }
        const std::size_t cell = batch.cell[i];
        const double dt = batch.dt_ms[i];
        grad.vx[cell] += dl_dwx * dt;
        grad.vy[cell] += dl_dwy * dt;
        grad.phi[cell] += (dl_dwx * (batch.x[i] - centroid.x) + dl_dwy * (batch.y[i] - centroid.y)) * dt;
    }
}

} // namespace

void LossConfig::validate() const {
    if (lambda < 0.0 || lambda0 < 0.0) throw std::invalid_argument("loss: weights must be >= 0");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("loss: beta must be in (0,1)");
    if (eps_charb <= 0.0 || eps_tanh <= 0.0 || eps_denom <= 0.0) {
        throw std::invalid_argument("loss: eps values must be > 0");
    }
}

double l0_approx(const Image<double>& grid, double eps_tanh) {
    double sum = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double th = std::tanh(std::abs(grid.data()[i]) / eps_tanh);
        sum += th * th;
    }
    return sum;
}

double cm_loss_at(const IWE& iwe, const LossConfig& cfg) {
    const auto& k = simd::active_kernels();
    double numer = k.sum_squares(iwe.t_pos.data(), iwe.t_pos.size()) +
                   k.sum_squares(iwe.t_neg.data(), iwe.t_neg.size());
    if (cfg.lambda0 != 0.0) {
        numer += cfg.lambda0 *
                 (l0_approx(iwe.t_pos, cfg.eps_tanh) + l0_approx(iwe.t_neg, cfg.eps_tanh));
    }
    const double active =
        static_cast<double>(k.count_greater(iwe.delta.data(), iwe.delta.size(), 0.0));
    return numer / (active + cfg.eps_denom);
}

std::pair<double, double> cm_loss_bidirectional(const EventPartition& partition,
                                                const MotionField& field, const Centroid& centroid,
                                                SensorSize sensor, const LossConfig& cfg) {
    const IWE fwd = build_iwe(partition, field, centroid, sensor, partition.t0,
                              TimeDirection::Forward, true);
    const IWE bwd = build_iwe(partition, field, centroid, sensor, partition.t_last,
                              TimeDirection::Backward, true);
    return {cm_loss_at(fwd, cfg), cm_loss_at(bwd, cfg)};
}

double smoothness_loss(const MotionField& field, const LossConfig& cfg) {
    double sum = 0.0;
    const int gw = field.grid_width();
    const int gh = field.grid_height();
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            const std::size_t a = field.cell_index(gx, gy);
            if (gx + 1 < gw) {
                const std::size_t b = field.cell_index(gx + 1, gy);
                sum += charbonnier(field.vx(a) - field.vx(b), cfg.eps_charb, cfg.beta) +
                       charbonnier(field.vy(a) - field.vy(b), cfg.eps_charb, cfg.beta) +
                       charbonnier(field.phi(a) - field.phi(b), cfg.eps_charb, cfg.beta);
            }
            if (gy + 1 < gh) {
                const std::size_t b = field.cell_index(gx, gy + 1);
                sum += charbonnier(field.vx(a) - field.vx(b), cfg.eps_charb, cfg.beta) +
                       charbonnier(field.vy(a) - field.vy(b), cfg.eps_charb, cfg.beta) +
                       charbonnier(field.phi(a) - field.phi(b), cfg.eps_charb, cfg.beta);
            }
        }
    }
    return sum;
}

LossBreakdown total_loss(const EventPartition& partition, const MotionField& field,
                         const Centroid& centroid, SensorSize sensor, const LossConfig& cfg) {
    LossBreakdown b;
    if (!partition.empty()) {
        const auto [fwd, bwd] = cm_loss_bidirectional(partition, field, centroid, sensor, cfg);
        b.cm_forward = fwd;
        b.cm_backward = bwd;
    }
    b.smoothness = smoothness_loss(field, cfg);
    b.total = b.cm_forward + b.cm_backward + cfg.lambda * b.smoothness;
    return b;
}

LossBreakdown total_loss_and_gradient(const EventPartition& partition, const MotionField& field,
                                      const Centroid& centroid, SensorSize sensor,
                                      const LossConfig& cfg, ThetaGradient& grad) {
    grad.vx.assign(field.cells(), 0.0);
    grad.vy.assign(field.cells(), 0.0);
    grad.phi.assign(field.cells(), 0.0);

    LossBreakdown b;
    if (!partition.empty()) {
        const IWE fwd = build_iwe(partition, field, centroid, sensor, partition.t0,
                                  TimeDirection::Forward, true);
        const DirectionGrad dg_fwd = cm_loss_with_pixel_grad(fwd, cfg);
        accumulate_cm_gradient(partition, field, centroid, sensor, partition.t0,
                               TimeDirection::Forward, fwd, dg_fwd, cfg, grad);

        const IWE bwd = build_iwe(partition, field, centroid, sensor, partition.t_last,
                                  TimeDirection::Backward, true);
        const DirectionGrad dg_bwd = cm_loss_with_pixel_grad(bwd, cfg);
        accumulate_cm_gradient(partition, field, centroid, sensor, partition.t_last,
                               TimeDirection::Backward, bwd, dg_bwd, cfg, grad);

        b.cm_forward = dg_fwd.loss;
        b.cm_backward = dg_bwd.loss;
    }

    // Smoothness gradient over unordered neighbor pairs.
    b.smoothness = smoothness_loss(field, cfg);
    const int gw = field.grid_width();
    const int gh = field.grid_height();
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            const std::size_t a = field.cell_index(gx, gy);
            for (int side = 0; side < 2; ++side) {
                const int nx = side == 0 ? gx + 1 : gx;
                const int ny = side == 0 ? gy : gy + 1;
                if (nx >= gw || ny >= gh) continue;
                const std::size_t n = field.cell_index(nx, ny);
                const double dvx = charbonnier_deriv(field.vx(a) - field.vx(n), cfg.eps_charb, cfg.beta);
                const double dvy = charbonnier_deriv(field.vy(a) - field.vy(n), cfg.eps_charb, cfg.beta);
                const double dphi = charbonnier_deriv(field.phi(a) - field.phi(n), cfg.eps_charb, cfg.beta);
                grad.vx[a] += cfg.lambda * dvx;
                grad.vx[n] -= cfg.lambda * dvx;
                grad.vy[a] += cfg.lambda * dvy;
                grad.vy[n] -= cfg.lambda * dvy;
                grad.phi[a] += cfg.lambda * dphi;
                grad.phi[n] -= cfg.lambda * dphi;
            }
        }
    }

    b.total = b.cm_forward + b.cm_backward + cfg.lambda * b.smoothness;
    if (!std::isfinite(b.cm_forward)) throw numeric_error("loss: cm_forward is non-finite");
    if (!std::isfinite(b.cm_backward)) throw numeric_error("loss: cm_backward is non-finite");
    if (!std::isfinite(b.smoothness)) throw numeric_error("loss: smoothness is non-finite");
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad.vx[i]) || !std::isfinite(grad.vy[i]) || !std::isfinite(grad.phi[i])) {
            throw numeric_error("loss: gradient is non-finite at cell " + std::to_string(i));
        }
    }
    return b;
}

} // namespace aqflow
