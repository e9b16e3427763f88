#include "aqflow/optimize.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "aqflow/error.hpp"

namespace aqflow {
namespace {

constexpr int kMaxBacktracks = 40;

MotionField single_cell_field(const Theta& theta) {
    MotionField field(1, 1, 1 << 15);
    field.vx(0) = theta.vx;
    field.vy(0) = theta.vy;
    field.phi(0) = theta.phi;
    return field;
}

// One backtracking descent step over an arbitrary parameter vector view.
// Returns false when no step along -grad improves the loss.
template <typename LossFn>
bool descend(std::vector<double>& params, const std::vector<double>& grad, double& step,
             double decay, double& loss, LossFn&& loss_at) {
    std::vector<double> cand(params.size());
    double s = step;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
        for (std::size_t i = 0; i < params.size(); ++i) cand[i] = params[i] - s * grad[i];
        const double cand_loss = loss_at(cand);
        if (cand_loss < loss) {
            params = cand;
            loss = cand_loss;
            step = s;
            return true;
        }
        s *= decay;
    }
    return false;
}

} // namespace

void SolverConfig::validate() const {
    if (max_iters < 1) throw std::invalid_argument("solver: max_iters must be >= 1");
    if (step <= 0.0) throw std::invalid_argument("solver: step must be > 0");
    if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("solver: decay must be in (0,1]");
    if (tol < 0.0) throw std::invalid_argument("solver: tol must be >= 0");
    if (patch < 1) throw std::invalid_argument("solver: patch must be >= 1");
    if (events_per_partition < 1) throw std::invalid_argument("solver: K must be >= 1");
}

PatchSolveResult solve_patch(const EventPartition& partition, SensorSize sensor,
                             const SolverConfig& cfg, const LossConfig& loss_cfg,
                             std::optional<Centroid> centroid) {
    cfg.validate();
    loss_cfg.validate();
    if (partition.empty()) throw std::invalid_argument("solve_patch: empty partition");
    const Centroid c = centroid.value_or(compute_centroid(partition));

    std::vector<double> params = {cfg.init_vx, cfg.init_vy, cfg.init_phi};
    MotionField field = single_cell_field({params[0], params[1], params[2]});

    const auto loss_only = [&](const std::vector<double>& p) {
        MotionField f = single_cell_field({p[0], p[1], p[2]});
        return total_loss(partition, f, c, sensor, loss_cfg).total;
    };

    ThetaGradient grad_grid;
    auto eval_grad = [&](const std::vector<double>& p, std::vector<double>& g) {
        MotionField f = single_cell_field({p[0], p[1], p[2]});
        const LossBreakdown b = total_loss_and_gradient(partition, f, c, sensor, loss_cfg, grad_grid);
        g = {grad_grid.vx[0], grad_grid.vy[0], cfg.freeze_phi ? 0.0 : grad_grid.phi[0]};
        return b.total;
    };

    std::vector<double> grad;
    double loss = eval_grad(params, grad);
    std::vector<double> best_params = params;
    double best_loss = loss;
    double step = cfg.step;
    int iterations = 0;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        iterations = it;
        const double prev_loss = loss;
        if (!descend(params, grad, step, cfg.decay, loss, loss_only)) break;
        if (loss < best_loss) {
            best_loss = loss;
            best_params = params;
        }
        if (prev_loss - loss < cfg.tol) break;
        loss = eval_grad(params, grad);
        step = std::min(cfg.step, step * 2.0); // let the line search recover
    }

    PatchSolveResult result;
    result.theta = {best_params[0], best_params[1], best_params[2]};
    MotionField best_field = single_cell_field(result.theta);
    result.loss = total_loss(partition, best_field, c, sensor, loss_cfg);
    result.iterations = iterations;
    return result;
}

std::vector<DenseSolveResult> solve_dense(const EventStream& stream, const SolverConfig& cfg,
                                          const LossConfig& loss_cfg) {
    cfg.validate();
    loss_cfg.validate();
    const PartitionResult parts = partition_by_count(stream, cfg.events_per_partition);

    std::vector<DenseSolveResult> results;
    for (std::size_t pi = 0; pi < parts.partitions.size(); ++pi) {
        const EventPartition& partition = parts.partitions[pi];
        const Centroid centroid = compute_centroid(partition);

        MotionField field = MotionField::covering(stream.sensor.width, stream.sensor.height, cfg.patch);

        // Bucket events by patch cell, keeping the parent time window.
        std::vector<EventPartition> cell_events(field.cells());
        for (auto& ce : cell_events) {
            ce.t0 = partition.t0;
            ce.t_last = partition.t_last;
        }
        for (const Event& e : partition.events) {
            cell_events[field.cell_for_pixel(e.x, e.y)].events.push_back(e);
        }

        for (std::size_t cell = 0; cell < field.cells(); ++cell) {
            if (cell_events[cell].size() < static_cast<std::size_t>(cfg.min_events_per_patch)) {
                field.valid(cell) = 0;
                continue;
            }
            try {
                const PatchSolveResult r =
                    solve_patch(cell_events[cell], stream.sensor, cfg, loss_cfg, centroid);
                field.vx(cell) = r.theta.vx;
                field.vy(cell) = r.theta.vy;
                field.phi(cell) = r.theta.phi;
            } catch (const numeric_error& e) {
                throw numeric_error("solve_dense: partition " + std::to_string(pi) + ", patch " +
                                    std::to_string(cell) + ": " + e.what());
            }
        }

        DenseSolveResult res;
        res.field_raw = field;

        // Joint refinement: descend the full loss (contrast + smoothness
        // across the assembled grid) from the per-patch solution.
        std::vector<double> params(field.cells() * 3);
        for (std::size_t i = 0; i < field.cells(); ++i) {
            params[3 * i + 0] = field.vx(i);
            params[3 * i + 1] = field.vy(i);
            params[3 * i + 2] = field.phi(i);
        }
        auto to_field = [&](const std::vector<double>& p) {
            MotionField f = field;
            for (std::size_t i = 0; i < f.cells(); ++i) {
                f.vx(i) = p[3 * i + 0];
                f.vy(i) = p[3 * i + 1];
                f.phi(i) = p[3 * i + 2];
            }
            return f;
        };
        const auto loss_only = [&](const std::vector<double>& p) {
            return total_loss(partition, to_field(p), centroid, stream.sensor, loss_cfg).total;
        };
        ThetaGradient grad_grid;
        auto eval_grad = [&](const std::vector<double>& p, std::vector<double>& g) {
            MotionField f = to_field(p);
            const LossBreakdown b =
                total_loss_and_gradient(partition, f, centroid, stream.sensor, loss_cfg, grad_grid);
            g.resize(p.size());
            for (std::size_t i = 0; i < f.cells(); ++i) {
                g[3 * i + 0] = grad_grid.vx[i];
                g[3 * i + 1] = grad_grid.vy[i];
                g[3 * i + 2] = cfg.freeze_phi ? 0.0 : grad_grid.phi[i];
            }
            return b.total;
        };

        try {
            std::vector<double> grad;
            double loss = eval_grad(params, grad);
            double step = cfg.step;
            for (int it = 0; it < cfg.refine_iters; ++it) {
                const double prev = loss;
                if (!descend(params, grad, step, cfg.decay, loss, loss_only)) break;
                if (prev - loss < cfg.tol) break;
                loss = eval_grad(params, grad);
                step = std::min(cfg.step, step * 2.0);
            }
        } catch (const numeric_error& e) {
            throw numeric_error("solve_dense: partition " + std::to_string(pi) +
                                " refinement: " + e.what());
        }

        MotionField refined = to_field(params);
        res.field = refined;
        res.centroid = centroid;
        res.t0 = partition.t0;
        res.t_last = partition.t_last;
        res.window_ms = partition.duration_ms();
        res.loss = total_loss(partition, refined, centroid, stream.sensor, loss_cfg);
        res.partition_index = pi;
        results.push_back(std::move(res));
    }
    return results;
}

} // namespace aqflow
