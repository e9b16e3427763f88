#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "aqflow/events.hpp"
#include "aqflow/image.hpp"

namespace aqflow {

/// Centroid of a partition's event positions; the reference point of the
/// isotropic-scaling term.
struct Centroid {
    double x = 0.0;
    double y = 0.0;
};

/// Per-cell motion parameters theta = (vx, vy, phi). Cells tile the sensor in
/// squares of cell_size px (cell_size 1 = per-pixel). Stored as planes so the
/// batched warp kernel can gather straight from them.
class MotionField {
public:
    MotionField() = default;
    MotionField(int grid_w, int grid_h, int cell_size)
        : grid_w_(grid_w), grid_h_(grid_h), cell_size_(cell_size),
          vx_(static_cast<std::size_t>(grid_w) * grid_h, 0.0),
          vy_(vx_.size(), 0.0), phi_(vx_.size(), 0.0), valid_(vx_.size(), 1) {}

    /// Grid sized to cover a W x H sensor with cells of `cell_size` px.
    static MotionField covering(int width, int height, int cell_size) {
        return MotionField((width + cell_size - 1) / cell_size,
                           (height + cell_size - 1) / cell_size, cell_size);
    }

    int grid_width() const { return grid_w_; }
    int grid_height() const { return grid_h_; }
    int cell_size() const { return cell_size_; }
    std::size_t cells() const { return vx_.size(); }

    std::size_t cell_index(int gx, int gy) const {
        return static_cast<std::size_t>(gy) * grid_w_ + gx;
    }
    std::size_t cell_for_pixel(int x, int y) const {
        int gx = x / cell_size_;
        int gy = y / cell_size_;
        if (gx >= grid_w_) gx = grid_w_ - 1;
        if (gy >= grid_h_) gy = grid_h_ - 1;
        return cell_index(gx, gy);
    }

    double& vx(std::size_t i) { return vx_[i]; }
    double& vy(std::size_t i) { return vy_[i]; }
    double& phi(std::size_t i) { return phi_[i]; }
    double vx(std::size_t i) const { return vx_[i]; }
    double vy(std::size_t i) const { return vy_[i]; }
    double phi(std::size_t i) const { return phi_[i]; }

    std::uint8_t& valid(std::size_t i) { return valid_[i]; }
    std::uint8_t valid(std::size_t i) const { return valid_[i]; }

    double* vx_data() { return vx_.data(); }
    double* vy_data() { return vy_.data(); }
    double* phi_data() { return phi_.data(); }
    const double* vx_data() const { return vx_.data(); }
    const double* vy_data() const { return vy_.data(); }
    const double* phi_data() const { return phi_.data(); }

private:
    int grid_w_ = 0;
    int grid_h_ = 0;
    int cell_size_ = 1;
    std::vector<double> vx_, vy_, phi_;
    std::vector<std::uint8_t> valid_;
};

/// Image of warped events: per-polarity average timestamps (normalized units)
/// plus polarity-pooled warped mass. num/den are the raw splat accumulators
/// the loss gradient works from.
///
/// Grids may cover only the populated sub-rectangle of the sensor (tight
/// mode); origin_x/origin_y locate them. Every pixel outside the grids holds
/// zero mass, so sums over the grids equal sums over the full sensor.
struct IWE {
    Image<double> t_pos;
    Image<double> t_neg;
    Image<double> delta;
    Image<double> num_pos, den_pos;
    Image<double> num_neg, den_neg;
    int origin_x = 0;
    int origin_y = 0;
    double dropped_mass = 0.0; // splat mass that fell outside the sensor
    double total_mass = 0.0;   // events warped, in-bounds mass = total - dropped
};

/// How per-event timestamps enter the splat: forward normalizes to [0,1] from
/// t0, backward uses 1 - normalized so both reference times penalize spread
/// symmetrically. A zero-duration partition normalizes every event to 0.5.
enum class TimeDirection { Forward, Backward };

/// Arithmetic mean of event positions. Throws std::invalid_argument on an
/// empty partition.
Centroid compute_centroid(const EventPartition& partition);

/// Eq.-2 style warp of a single event to t_ref (microseconds):
/// x' = x + (v + phi*(x - centroid)) * (t_ref - t) with time in ms.
void warp_event(double x, double y, std::uint64_t t_us, double vx, double vy, double phi,
                const Centroid& centroid, std::uint64_t t_ref_us, double& out_x, double& out_y);

/// Normalized timestamp of an event within a partition window under the given
/// direction.
double normalized_timestamp(const EventPartition& partition, std::uint64_t t_us,
                            TimeDirection direction);

/// Accumulates the bilinear splat of every warped event. Events take their
/// motion parameters from the field cell containing their original position.
/// With tight=true the grids cover only the populated sensor sub-rectangle
/// (same sums, less work).
IWE build_iwe(const EventPartition& partition, const MotionField& field, const Centroid& centroid,
              SensorSize sensor, std::uint64_t t_ref_us,
              TimeDirection direction = TimeDirection::Forward, bool tight = false);

/// Debug dump: "AQIW" + u16 W,H header, then T_pos, T_neg, delta as
/// little-endian float32 rasters.
void write_iwe(const IWE& iwe, const std::filesystem::path& path);
IWE read_iwe(const std::filesystem::path& path);

namespace detail {

/// Gathered per-event warp inputs and outputs, shared by the splat and the
/// loss gradient so both walk identical positions.
struct WarpBatch {
    std::vector<double> x, y, dt_ms, vx, vy, phi, warped_x, warped_y;
    std::vector<std::size_t> cell;

    std::size_t size() const { return x.size(); }
};

WarpBatch make_warp_batch(const EventPartition& partition, const MotionField& field,
                          const Centroid& centroid, std::uint64_t t_ref_us);

} // namespace detail

} // namespace aqflow
