#pragma once

#include <vector>

#include "aqflow/events.hpp"
#include "aqflow/image.hpp"
#include "aqflow/warp.hpp"

namespace aqflow {

struct LossConfig {
    double lambda = 0.001;   // smoothness weight
    double lambda0 = 0.01;   // L0 approximation weight
    double beta = 0.45;      // Charbonnier exponent
    double eps_charb = 0.001;
    double eps_tanh = 0.01;  // tanh^2 scale, normalized-timestamp units
    double eps_denom = 1e-9; // stability offset in the T quotient and pixel count

    void validate() const; // throws std::invalid_argument
};

struct LossBreakdown {
    double cm_forward = 0.0;
    double cm_backward = 0.0;
    double smoothness = 0.0;
    double total = 0.0; // cm_forward + cm_backward + lambda * smoothness
};

/// Per-cell gradient of the total loss, same layout as the MotionField it was
/// computed against.
struct ThetaGradient {
    std::vector<double> vx, vy, phi;

    std::size_t size() const { return vx.size(); }
};

/// Differentiable L0 surrogate: sum of tanh^2(|value| / eps_tanh).
double l0_approx(const Image<double>& grid, double eps_tanh);

/// Eq.-4 style contrast loss of one IWE: [sum f(T+) + f(T-)] over the active
/// pixel count, f(T) = T^2 + lambda0 * tanh^2(|T| / eps_tanh). lambda0 = 0
/// takes the bare-T^2 code path bit-for-bit.
double cm_loss_at(const IWE& iwe, const LossConfig& cfg);

/// Builds IWEs at t0 (forward timestamps) and t_last (reversed timestamps) and
/// returns both contrast losses.
std::pair<double, double> cm_loss_bidirectional(const EventPartition& partition,
                                                const MotionField& field, const Centroid& centroid,
                                                SensorSize sensor, const LossConfig& cfg);

/// Charbonnier-penalized variation over 4-connected cell pairs, each unordered
/// pair counted once, summed over the three motion components.
double smoothness_loss(const MotionField& field, const LossConfig& cfg);

/// Total loss without gradients (solver line searches).
LossBreakdown total_loss(const EventPartition& partition, const MotionField& field,
                         const Centroid& centroid, SensorSize sensor, const LossConfig& cfg);

/// Total loss plus the analytic gradient with respect to every field cell.
/// Throws numeric_error if any intermediate goes non-finite.
LossBreakdown total_loss_and_gradient(const EventPartition& partition, const MotionField& field,
                                      const Centroid& centroid, SensorSize sensor,
                                      const LossConfig& cfg, ThetaGradient& grad);

} // namespace aqflow
