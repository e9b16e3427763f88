#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "aqflow/events.hpp"
#include "aqflow/loss.hpp"
#include "aqflow/spike_record.hpp"
#include "aqflow/tensor.hpp"
#include "aqflow/warp.hpp"

namespace aqflow::snn {

/// Named learnable tensor with gradient and Adam moments.
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> m, v; // Adam state

    std::size_t size() const { return value.size(); }
};

/// Learnable LIF dynamics: membrane decay zeta = sigmoid(zeta_raw) keeps the
/// [0,1] clamp differentiable, threshold v_th = 0.01 + softplus(vth_raw)
/// keeps the floor.
struct LIFParams {
    double zeta(int channel) const;
    double v_th(int channel) const;

    Param zeta_raw;
    Param vth_raw;
};

struct LIFState {
    Tensor u;      // membrane potential
    Tensor s_prev; // previous output spikes
};

/// Pure LIF membrane step on flat grids; the building block the network layers
/// call per channel. u <- zeta*u + (1-zeta)*(ff + rec); spike where u >= v_th,
/// spiking entries reset to 0. Throws std::invalid_argument on shape mismatch.
void lif_step(LIFState& state, double zeta, double v_th, const Tensor& feedforward,
              const Tensor& recurrent, Tensor& spikes_out);

struct NetworkConfig {
    std::vector<int> pathway_a = {8, 8};   // full-resolution channels
    std::vector<int> pathway_b = {16, 16}; // half-resolution channels
    int kernel = 3;
    int scales = 2;              // full + half resolution (fixed topology)
    int attention_reduction = 2; // gate MLP hidden width = fused channels / this
    bool predict_phi = true;     // off reproduces the phi = 0 ablation
    double surrogate_slope = 2.0;
    std::uint64_t seed = 1;

    void validate() const;
    int fused_channels() const { return pathway_a.back() + pathway_b.back(); }
    int head_channels() const { return predict_phi ? 3 : 2; }
};

struct TrainConfig {
    std::size_t events_per_partition = 1000; // K
    int buffer_len = 10;                     // forward passes per update
    double lr = 2e-4;
    bool cosine_decay = true;
    int epochs = 1;
    int crop = 128; // px, square; must be even
    LossConfig loss_cfg;
    std::uint64_t seed = 7;

    void validate() const;
};

class Network;

namespace detail {
struct NetworkImpl;
}

/// Dual-pathway spiking flow estimator: a full-resolution spiking pathway and
/// a half-resolution spiking pathway with a ConvGRU, fused through a
/// cross-pathway skip and a spike-statistic channel gate, decoded by a
/// non-spiking 1x1 head into (vx, vy[, phi]) per pixel.
class Network {
public:
    explicit Network(const NetworkConfig& cfg);
    ~Network();
    Network(Network&&) noexcept;
    Network& operator=(Network&&) noexcept;

    const NetworkConfig& config() const;

    /// Drops recurrent state; next step() resizes to its input.
    void reset_state();

    /// One timestep: count image in, per-pixel motion field out. With
    /// record_tape the activations are kept for backward().
    MotionField step(const EventCountImage& input, bool record_tape = false);

    /// BPTT over the recorded tape. dflow_per_step holds dL/d(head output)
    /// per recorded step, shape (head_channels, H, W). Accumulates into the
    /// parameter gradients and clears the tape.
    void backward(const std::vector<Tensor>& dflow_per_step);

    void zero_grad();

    /// Keeps state values but cuts gradient flow into earlier buffers (also
    /// drops any un-backpropagated tape).
    void detach_state();

    /// Surrogate-smoothed forward: the hard spike is replaced by the smooth
    /// function whose derivative is the training surrogate, making backward()
    /// the exact gradient. Used by gradient checks.
    void set_smoothed(bool smoothed);

    std::vector<Param*> params();

    /// Activity of every layer since the last reset_record().
    const SpikeRecord& record() const;
    void reset_record();

    /// Per-channel attention gates for given per-channel spike statistics
    /// (test probe).
    std::vector<double> attention_gates(const std::vector<double>& channel_stats) const;

private:
    std::unique_ptr<detail::NetworkImpl> impl_;
};

struct OpCounts {
    std::uint64_t params = 0;
    double synaptic_ops = 0.0; // spike-driven accumulates
    double dense_macs = 0.0;   // multiply-accumulates in non-spiking layers
    double total() const { return synaptic_ops + dense_macs; }
};

/// Learnable scalar count plus operation counts implied by a forward record:
/// spiking layers cost incoming spikes x fan-out synapses, non-spiking layers
/// cost their dense MACs.
OpCounts count_params_and_ops(Network& net, const SpikeRecord& record);

struct TrainUpdateLog {
    int update = 0;
    double cm_forward = 0.0; // summed over the buffer
    double cm_backward = 0.0;
    double smoothness = 0.0;
    double total = 0.0;
    double firing_rate_pct = 0.0;
    std::size_t events = 0; // events contributing to this update
    double lr = 0.0;
};

struct TrainLog {
    std::vector<TrainUpdateLog> updates;
    bool aborted = false;
    std::string abort_reason;
};

/// Buffered self-supervised training: buffer_len forward passes accumulate
/// event/flow tuples, the summed loss backpropagates through time, Adam
/// updates with cosine-decayed lr, then states detach and the buffer resets.
/// On a non-finite loss the last good parameters are restored and training
/// aborts.
TrainLog train(Network& net, const EventStream& stream, const TrainConfig& cfg);

/// Versioned container of named float32 tensors with shape headers.
void save_checkpoint(Network& net, const std::filesystem::path& path);
void load_checkpoint(Network& net, const std::filesystem::path& path);

/// Training log CSV: update, cm_fwd, cm_bwd, smooth, total, firing_rate.
void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path);

} // namespace aqflow::snn
