#include "aqflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <tuple>

#include "aqflow/error.hpp"

namespace aqflow {
namespace {

constexpr double kPatternFloor = 0.05; // keeps log-intensity defined

double ramp01(double d) {
    // 0 -> 1 over a 1 px band centered on d = 0
    return std::clamp(d + 0.5, 0.0, 1.0);
}

double pattern_value(const SceneSpec& scene, double px, double py) {
    const double lo = scene.pattern_low;
    const double hi = scene.pattern_high;
    double v = lo;
    switch (scene.pattern) {
    case ScenePattern::StepEdge: {
        v = lo + (hi - lo) * ramp01(px - scene.pattern_offset);
        break;
    }
    case ScenePattern::BarGrating: {
        const double period = scene.pattern_scale;
        double u = (px - scene.pattern_offset) / period;
        u -= std::floor(u); // [0,1), high half first
        const double d_on = std::min(u, 0.5 - u) * period;        // >0 inside the bar
        const double d_off = std::min(u - 0.5, 1.0 - u) * period; // >0 inside the gap
        const double d = u < 0.5 ? d_on : -d_off;
        v = lo + (hi - lo) * ramp01(d);
        break;
    }
    case ScenePattern::Disk: {
        const double dx = px - scene.resolved_center_x();
        const double dy = py - scene.resolved_center_y();
        const double r = std::sqrt(dx * dx + dy * dy);
        v = lo + (hi - lo) * ramp01(scene.pattern_scale - r);
        break;
    }
    }
    return std::max(v, kPatternFloor);
}

// Pattern-space position of the material point under pixel (x, y) at t.
// Inverts x = x0 + (v + phi*(x0 - c)) * t.
void inverse_motion(const SceneSpec& scene, double x, double y, double t_ms, double& px,
                    double& py) {
    const double cx = scene.resolved_center_x();
    const double cy = scene.resolved_center_y();
    const double s = 1.0 + scene.divergence * t_ms;
    px = cx + (x - cx - scene.velocity_x * t_ms) / s;
    py = cy + (y - cy - scene.velocity_y * t_ms) / s;
}

double log_intensity(const SceneSpec& scene, double x, double y, double t_ms,
                     double log_attenuation) {
    double px = 0.0, py = 0.0;
    inverse_motion(scene, x, y, t_ms, px, py);
    return std::log(pattern_value(scene, px, py)) + log_attenuation;
}

} // namespace

void SceneSpec::validate() const {
    if (contrast_threshold <= 0.0) throw std::invalid_argument("scene: contrast threshold must be > 0");
    if (attenuation < 0.0) throw std::invalid_argument("scene: attenuation must be >= 0");
    if (depth < 0.0) throw std::invalid_argument("scene: depth must be >= 0");
    if (duration_ms <= 0.0) throw std::invalid_argument("scene: duration must be > 0");
    if (noise_rate < 0.0) throw std::invalid_argument("scene: noise rate must be >= 0");
    if (sensor.width < 1 || sensor.height < 1) throw std::invalid_argument("scene: empty sensor");
    if (pattern_high < pattern_low) throw std::invalid_argument("scene: pattern_high < pattern_low");
    if (pattern_scale <= 0.0) throw std::invalid_argument("scene: pattern_scale must be > 0");
    if (1.0 + divergence * duration_ms <= 0.05) {
        throw std::invalid_argument("scene: divergence collapses the scene within the duration");
    }
}

Image<double> render_intensity(const SceneSpec& scene, double t_ms) {
    scene.validate();
    if (t_ms < 0.0 || t_ms > scene.duration_ms) {
        throw std::out_of_range("render_intensity: t outside scene duration");
    }
    const double att = std::exp(-scene.attenuation * scene.depth);
    Image<double> img(scene.sensor.width, scene.sensor.height);
    for (int y = 0; y < scene.sensor.height; ++y) {
        for (int x = 0; x < scene.sensor.width; ++x) {
            double px = 0.0, py = 0.0;
            inverse_motion(scene, x, y, t_ms, px, py);
            img.at(x, y) = pattern_value(scene, px, py) * att;
        }
    }
    return img;
}

namespace detail {

// Shared crossing core: walks one sample interval, emitting every +-c crossing
// of the running reference level with linearly interpolated timestamps.
template <typename Emit>
void advance_crossings(double& ref, double prev, double now, double t_prev, double t_now,
                       double c, Emit&& emit) {
    while (now - ref >= c || now - ref <= -c) {
        const int pol = now - ref >= c ? +1 : -1;
        const double target = ref + pol * c;
        double frac = now != prev ? (target - prev) / (now - prev) : 1.0;
        frac = std::clamp(frac, 0.0, 1.0);
        emit(t_prev + frac * (t_now - t_prev), pol);
        ref = target;
    }
}

std::vector<std::pair<double, int>> threshold_crossings(const std::vector<double>& log_samples,
                                                        const std::vector<double>& times_ms,
                                                        double c) {
    std::vector<std::pair<double, int>> out;
    if (log_samples.empty()) return out;
    double ref = log_samples[0];
    for (std::size_t k = 1; k < log_samples.size(); ++k) {
        advance_crossings(ref, log_samples[k - 1], log_samples[k], times_ms[k - 1], times_ms[k], c,
                          [&](double t, int pol) { out.emplace_back(t, pol); });
    }
    return out;
}

} // namespace detail

EventStream generate_events(const SceneSpec& scene) {
    scene.validate();
    const int W = scene.sensor.width;
    const int H = scene.sensor.height;
    const double c = scene.contrast_threshold;
    const double log_att = -scene.attenuation * scene.depth;

    const double dt = std::min(scene.duration_ms / 2000.0, 0.05);
    const int n_steps = static_cast<int>(std::ceil(scene.duration_ms / dt));

    Image<double> l_prev(W, H);
    Image<double> ref(W, H);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double l0 = log_intensity(scene, x, y, 0.0, log_att);
            l_prev.at(x, y) = l0;
            ref.at(x, y) = l0;
        }
    }

    std::vector<Event> events;
    for (int k = 1; k <= n_steps; ++k) {
        const double t_now = std::min(k * dt, scene.duration_ms);
        const double t_before = (k - 1) * dt;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const double now = log_intensity(scene, x, y, t_now, log_att);
                detail::advance_crossings(ref.at(x, y), l_prev.at(x, y), now, t_before, t_now, c,
                                          [&](double t_cross, int pol) {
                                              Event e;
                                              e.x = static_cast<std::uint16_t>(x);
                                              e.y = static_cast<std::uint16_t>(y);
                                              e.t = static_cast<std::uint64_t>(
                                                  std::llround(t_cross * 1000.0));
                                              e.p = static_cast<std::int8_t>(pol);
                                              events.push_back(e);
                                          });
                l_prev.at(x, y) = now;
            }
        }
    }

    if (scene.noise_rate > 0.0) {
        std::mt19937_64 rng(scene.seed);
        const double mean = scene.noise_rate * W * H * scene.duration_ms * 1e-3;
        std::poisson_distribution<long> count_dist(mean);
        std::uniform_int_distribution<int> xd(0, W - 1), yd(0, H - 1), pd(0, 1);
        std::uniform_real_distribution<double> td(0.0, scene.duration_ms);
        const long n_noise = count_dist(rng);
        for (long i = 0; i < n_noise; ++i) {
            Event e;
            e.x = static_cast<std::uint16_t>(xd(rng));
            e.y = static_cast<std::uint16_t>(yd(rng));
            e.t = static_cast<std::uint64_t>(std::llround(td(rng) * 1000.0));
            e.p = pd(rng) == 1 ? 1 : -1;
            events.push_back(e);
        }
    }

    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p);
    });

    EventStream stream;
    stream.events = std::move(events);
    stream.sensor = scene.sensor;
    return stream;
}

GroundTruthFlow ground_truth_flow(const SceneSpec& scene, double t_a_ms, double t_b_ms) {
    scene.validate();
    if (!(t_a_ms < t_b_ms)) throw std::invalid_argument("ground_truth_flow: need t_a < t_b");
    const int W = scene.sensor.width;
    const int H = scene.sensor.height;
    const double cx = scene.resolved_center_x();
    const double cy = scene.resolved_center_y();
    const double dt = t_b_ms - t_a_ms;

    GroundTruthFlow gt;
    gt.u = Image<double>(W, H);
    gt.v = Image<double>(W, H);
    gt.valid = Image<std::uint8_t>(W, H, 1);
    gt.window_ms = dt;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double px = 0.0, py = 0.0;
            inverse_motion(scene, x, y, t_a_ms, px, py);
            const double vel_x = scene.velocity_x + scene.divergence * (px - cx);
            const double vel_y = scene.velocity_y + scene.divergence * (py - cy);
            gt.u.at(x, y) = vel_x * dt;
            gt.v.at(x, y) = vel_y * dt;
            const double end_x = x + vel_x * dt;
            const double end_y = y + vel_y * dt;
            if (end_x < 0.0 || end_x > W - 1 || end_y < 0.0 || end_y > H - 1) {
                gt.valid.at(x, y) = 0;
            }
        }
    }
    return gt;
}

} // namespace aqflow
