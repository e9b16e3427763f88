#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aqflow {

/// Per-layer activity from a forward pass, the basis of firing-rate and
/// operation counting.
struct LayerActivity {
    std::string name;
    bool spiking = true;             // emits binary spikes
    std::uint64_t spikes = 0;        // output spikes over all timesteps
    std::uint64_t neuron_steps = 0;  // neurons x timesteps
    double incoming_spikes = 0.0;    // input spike mass driving this layer
    std::uint64_t fanout_synapses = 0; // synapses touched per incoming spike
    std::uint64_t dense_macs = 0;    // MACs, for non-spiking layers
};

struct SpikeRecord {
    std::vector<LayerActivity> layers;

    bool empty() const { return layers.empty(); }
};

} // namespace aqflow
