#pragma once

#include <filesystem>

#include "aqflow/events.hpp"
#include "aqflow/image.hpp"
#include "aqflow/warp.hpp"

namespace aqflow {

/// Dense per-pixel flow in px per window, plus the scaling-rate plane when the
/// producer estimated one. Invalid pixels carry NaN on disk.
struct DenseFlow {
    Image<double> u;
    Image<double> v;
    Image<double> phi; // 1/ms; empty when has_phi is false
    Image<std::uint8_t> valid;
    bool has_phi = false;
};

/// Expands a cell field to per-pixel displacement over the window:
/// flow(x) = (v_cell + phi_cell * (x - centroid)) * window_ms.
DenseFlow field_to_dense_flow(const MotionField& field, const Centroid& centroid, double window_ms,
                              SensorSize sensor, bool include_phi);

/// Flow raster: 12-byte header (magic "AQFL", u16 W, u16 H, u32 flags), then
/// little-endian float32 planes u, v (and phi when flags bit 0 is set).
void write_flow(const DenseFlow& flow, const std::filesystem::path& path);
DenseFlow read_flow(const std::filesystem::path& path);

} // namespace aqflow
