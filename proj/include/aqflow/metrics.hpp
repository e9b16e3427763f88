#pragma once

#include <string>
#include <utility>
#include <vector>

#include "aqflow/events.hpp"
#include "aqflow/flow_io.hpp"
#include "aqflow/spike_record.hpp"
#include "aqflow/synth.hpp"
#include "aqflow/warp.hpp"

namespace aqflow {

struct FlowEvalResult {
    double aee = 0.0;             // px
    double outlier_pct_3px = 0.0; // % of valid pixels with endpoint error > 3 px
    std::size_t n_valid = 0;
};

struct EnergyModel {
    double e_mac_pj = 4.6; // energy per multiply-accumulate
    double e_ac_pj = 0.9;  // energy per synaptic accumulate
};

enum class OpKind { Dense, Spiking };

/// Mean endpoint error and strict >3 px outlier rate over the intersection of
/// the prediction and reference validity masks. Both flows in px per window.
/// Throws std::invalid_argument when the mask is empty or shapes differ.
FlowEvalResult aee_and_outliers(const DenseFlow& pred, const GroundTruthFlow& ref);

/// Variance ratio of the motion-compensated event image against the unwarped
/// one (both at t0, polarity-pooled). > 1 means the flow sharpened the image.
/// Throws numeric_error when the unwarped image has zero variance.
double fwl(const EventPartition& partition, const MotionField& field, const Centroid& centroid,
           SensorSize sensor);

/// Ratio of summed squared average timestamps, warped over unwarped, both at
/// t0. < 1 means the flow concentrated the timestamps.
double rsat(const EventPartition& partition, const MotionField& field, const Centroid& centroid,
            SensorSize sensor);

struct FiringRateReport {
    double overall_pct = 0.0;
    std::vector<std::pair<std::string, double>> per_layer;
};

/// 100 * spikes / neuron-timesteps over the record's spiking layers.
FiringRateReport firing_rate(const SpikeRecord& record);

/// Theoretical energy in mJ: dense ops cost e_mac, spiking ops cost e_ac.
double estimate_energy_mj(double ops, OpKind kind, const EnergyModel& model);

} // namespace aqflow
