#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "aqflow/events.hpp"
#include "aqflow/image.hpp"

namespace aqflow {

enum class ScenePattern { StepEdge, BarGrating, Disk };

/// Procedural underwater scene: a moving intensity pattern attenuated by
/// depth, observed by an ideal contrast-threshold sensor.
///
/// Motion model: the material point at x0 (t=0) travels in a straight line
/// with velocity v + phi*(x0 - center), i.e. translation plus radial
/// expansion (phi > 0) or contraction (phi < 0) about `center`.
struct SceneSpec {
    ScenePattern pattern = ScenePattern::BarGrating;
    double pattern_low = 0.1;   // intensity levels of the base pattern
    double pattern_high = 1.0;
    double pattern_scale = 16.0; // grating period / disk radius, px
    double pattern_offset = 0.0; // edge x-position / grating phase, px

    double velocity_x = 0.0; // px/ms
    double velocity_y = 0.0; // px/ms
    double divergence = 0.0; // 1/ms, radial rate about `center`
    double center_x = -1.0;  // expansion center; negative = sensor center
    double center_y = -1.0;

    double attenuation = 0.0;        // 1/m
    double depth = 0.0;              // m
    double contrast_threshold = 0.2; // log-intensity units, > 0
    double noise_rate = 0.0;         // spurious events / px / s
    double duration_ms = 10.0;
    SensorSize sensor;
    std::uint64_t seed = 7;

    void validate() const; // throws std::invalid_argument

    double resolved_center_x() const {
        return center_x >= 0.0 ? center_x : 0.5 * (sensor.width - 1);
    }
    double resolved_center_y() const {
        return center_y >= 0.0 ? center_y : 0.5 * (sensor.height - 1);
    }
};

/// Analytic per-pixel displacement over a time window, px per window.
struct GroundTruthFlow {
    Image<double> u;
    Image<double> v;
    Image<std::uint8_t> valid;
    double window_ms = 0.0;
};

/// Attenuated intensity I0(pattern at time t) * exp(-alpha * z). Strictly
/// positive (pattern floor 0.05). Throws std::out_of_range if t is outside
/// [0, duration].
Image<double> render_intensity(const SceneSpec& scene, double t_ms);

/// Per-pixel contrast-threshold integration with linear crossing-time
/// interpolation plus seeded Poisson noise. Output sorted by (t, y, x, p).
EventStream generate_events(const SceneSpec& scene);

/// Displacement of the material point under each pixel at t_a, evaluated over
/// [t_a, t_b]. Pixels whose end position leaves the sensor are masked invalid.
GroundTruthFlow ground_truth_flow(const SceneSpec& scene, double t_a_ms, double t_b_ms);

namespace detail {

/// Threshold crossings of a sampled log-intensity timeline, the per-pixel core
/// of generate_events. Returns (t_ms, polarity) pairs; carries sub-threshold
/// residual between samples.
std::vector<std::pair<double, int>> threshold_crossings(const std::vector<double>& log_samples,
                                                        const std::vector<double>& times_ms,
                                                        double contrast_threshold);

} // namespace detail

} // namespace aqflow
