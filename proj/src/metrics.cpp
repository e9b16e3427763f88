#include "aqflow/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "aqflow/error.hpp"
#include "aqflow/simd.hpp"

namespace aqflow {
namespace {

// Population variance over the full sensor, computed from region sums (grids
// may be tight; pixels outside hold zero).
double sensor_variance(const Image<double>& grid, SensorSize sensor) {
    const auto& k = simd::active_kernels();
    const double n = static_cast<double>(sensor.width) * sensor.height;
    const double s1 = k.sum(grid.data(), grid.size());
    const double s2 = k.sum_squares(grid.data(), grid.size());
    const double mean = s1 / n;
    return s2 / n - mean * mean;
}

double squared_timestamp_sum(const IWE& iwe) {
    const auto& k = simd::active_kernels();
    return k.sum_squares(iwe.t_pos.data(), iwe.t_pos.size()) +
           k.sum_squares(iwe.t_neg.data(), iwe.t_neg.size());
}

MotionField zero_field_like(const MotionField& field) {
    MotionField zero(field.grid_width(), field.grid_height(), field.cell_size());
    return zero;
}

} // namespace

FlowEvalResult aee_and_outliers(const DenseFlow& pred, const GroundTruthFlow& ref) {
    if (pred.u.width() != ref.u.width() || pred.u.height() != ref.u.height()) {
        throw std::invalid_argument("aee_and_outliers: shape mismatch");
    }
    FlowEvalResult result;
    double sum_ee = 0.0;
    std::size_t outliers = 0;
    for (int y = 0; y < pred.u.height(); ++y) {
        for (int x = 0; x < pred.u.width(); ++x) {
            const bool pred_ok = pred.valid.empty() || pred.valid.at(x, y) != 0;
            const bool ref_ok = ref.valid.empty() || ref.valid.at(x, y) != 0;
            if (!pred_ok || !ref_ok) continue;
            const double du = pred.u.at(x, y) - ref.u.at(x, y);
            const double dv = pred.v.at(x, y) - ref.v.at(x, y);
            const double ee = std::sqrt(du * du + dv * dv);
            sum_ee += ee;
            if (ee > 3.0) ++outliers;
            ++result.n_valid;
        }
    }
    if (result.n_valid == 0) throw std::invalid_argument("aee_and_outliers: empty validity mask");
    result.aee = sum_ee / static_cast<double>(result.n_valid);
    result.outlier_pct_3px = 100.0 * static_cast<double>(outliers) / static_cast<double>(result.n_valid);
    return result;
}

double fwl(const EventPartition& partition, const MotionField& field, const Centroid& centroid,
           SensorSize sensor) {
    const IWE warped = build_iwe(partition, field, centroid, sensor, partition.t0,
                                 TimeDirection::Forward, true);
    const IWE unwarped = build_iwe(partition, zero_field_like(field), centroid, sensor,
                                   partition.t0, TimeDirection::Forward, true);
    const double var_warped = sensor_variance(warped.delta, sensor);
    const double var_unwarped = sensor_variance(unwarped.delta, sensor);
    if (var_unwarped == 0.0) {
        throw numeric_error("fwl: unwarped event image has zero variance");
    }
    return var_warped / var_unwarped;
}

double rsat(const EventPartition& partition, const MotionField& field, const Centroid& centroid,
            SensorSize sensor) {
    const IWE warped = build_iwe(partition, field, centroid, sensor, partition.t0,
                                 TimeDirection::Forward, true);
    const IWE unwarped = build_iwe(partition, zero_field_like(field), centroid, sensor,
                                   partition.t0, TimeDirection::Forward, true);
    const double denom = squared_timestamp_sum(unwarped);
    if (denom == 0.0) throw numeric_error("rsat: zero-flow timestamp energy is zero");
    return squared_timestamp_sum(warped) / denom;
}

FiringRateReport firing_rate(const SpikeRecord& record) {
    FiringRateReport report;
    std::uint64_t spikes = 0;
    std::uint64_t steps = 0;
    for (const LayerActivity& layer : record.layers) {
        if (!layer.spiking) continue;
        spikes += layer.spikes;
        steps += layer.neuron_steps;
        const double rate = layer.neuron_steps > 0
                                ? 100.0 * static_cast<double>(layer.spikes) /
                                      static_cast<double>(layer.neuron_steps)
                                : 0.0;
        report.per_layer.emplace_back(layer.name, rate);
    }
    report.overall_pct =
        steps > 0 ? 100.0 * static_cast<double>(spikes) / static_cast<double>(steps) : 0.0;
    return report;
}

double estimate_energy_mj(double ops, OpKind kind, const EnergyModel& model) {
    if (ops < 0.0) throw std::invalid_argument("estimate_energy: ops must be >= 0");
    const double pj = kind == OpKind::Dense ? model.e_mac_pj : model.e_ac_pj;
    return ops * pj * 1e-9; // pJ -> mJ
}

} // namespace aqflow
