#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "aqflow/events.hpp"
#include "aqflow/loss.hpp"
#include "aqflow/warp.hpp"

namespace aqflow {

struct SolverConfig {
    int max_iters = 250;
    double step = 0.5;   // initial learning rate
    double decay = 0.5;  // backtracking multiplier on rejected steps
    double tol = 1e-8;   // stop when loss improvement falls below
    double init_vx = 0.0;
    double init_vy = 0.0;
    double init_phi = 0.0;
    int patch = 32;                           // patch size, px
    bool freeze_phi = false;                  // phi = 0 ablation
    int min_events_per_patch = 20;            // below this a patch is masked invalid
    int refine_iters = 50;                    // joint smoothness pass over the grid
    std::size_t events_per_partition = 1000;  // K for solve_dense

    void validate() const; // throws std::invalid_argument
};

struct Theta {
    double vx = 0.0; // px/ms
    double vy = 0.0;
    double phi = 0.0; // 1/ms
};

struct PatchSolveResult {
    Theta theta;
    LossBreakdown loss;
    int iterations = 0;
};

/// Gradient descent with backtracking from theta0 on one event group treated
/// as a single motion cell. Returns the best theta seen; deterministic for
/// fixed inputs. Passing a centroid overrides the group's own (solve_dense
/// shares the partition centroid across patches).
PatchSolveResult solve_patch(const EventPartition& partition, SensorSize sensor,
                             const SolverConfig& cfg, const LossConfig& loss_cfg,
                             std::optional<Centroid> centroid = std::nullopt);

struct DenseSolveResult {
    MotionField field;     // after the joint refinement pass
    MotionField field_raw; // per-patch solutions before refinement
    Centroid centroid;
    std::uint64_t t0 = 0;
    std::uint64_t t_last = 0;
    double window_ms = 0.0;
    LossBreakdown loss;
    std::size_t partition_index = 0;
};

/// Tiles the sensor into cfg.patch cells, solves each patch on its events
/// (patches with too few events inherit theta = 0 and are masked invalid),
/// then jointly refines the assembled grid under the full loss.
std::vector<DenseSolveResult> solve_dense(const EventStream& stream, const SolverConfig& cfg,
                                          const LossConfig& loss_cfg);

} // namespace aqflow
