#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aqflow/image.hpp"

namespace aqflow {

/// One change event: pixel, microsecond timestamp, polarity in {+1, -1}.
struct Event {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::uint64_t t = 0; // microseconds
    std::int8_t p = 1;

    bool operator==(const Event&) const = default;
};

struct SensorSize {
    int width = 346;  // DAVIS346 default
    int height = 260;

    bool operator==(const SensorSize&) const = default;
};

/// A time-sorted stream of events with the sensor geometry they came from.
struct EventStream {
    std::vector<Event> events;
    SensorSize sensor;
};

/// A consecutive group of events, the unit of flow estimation. t0/t_last are
/// the normalization window; sub-partition slices (per-patch, per-crop) keep
/// the parent window so timestamps stay on a common scale.
struct EventPartition {
    std::vector<Event> events;
    std::uint64_t t0 = 0;
    std::uint64_t t_last = 0;

    std::size_t size() const { return events.size(); }
    bool empty() const { return events.empty(); }
    double duration_ms() const {
        return (static_cast<double>(t_last) - static_cast<double>(t0)) * 1e-3;
    }
};

/// Per-pixel, per-polarity event tallies.
struct EventCountImage {
    Image<std::uint32_t> pos;
    Image<std::uint32_t> neg;
};

struct PartitionResult {
    std::vector<EventPartition> partitions;
    std::vector<Event> remainder; // trailing < K events, reported, never merged
};

/// Splits a sorted stream into fixed-count windows of K events.
/// Throws io_error if timestamps regress; std::invalid_argument if K < 1.
PartitionResult partition_by_count(const EventStream& stream, std::size_t K);

/// Keeps only events inside [x0, x0+w) x [y0, y0+h), preserving the parent
/// normalization window. Coordinates are shifted to the rectangle's origin
/// when shift_to_origin is set.
EventPartition slice_rect(const EventPartition& partition, int x0, int y0, int w, int h,
                          bool shift_to_origin = false);

/// Tallies a partition per pixel and polarity. Throws io_error naming the
/// offending event index if any event is out of bounds.
EventCountImage count_encode(const EventPartition& partition, SensorSize sensor);

enum class EventFileFormat { Text, Binary };

/// Reads a stream, sniffing the binary magic and falling back to text.
/// Text: UTF-8 lines "t_us,x,y,p" with p in {0,1}; optional "# width,height".
/// Binary: "AQEV" header + little-endian (u64 t, u16 x, u16 y, u8 p) records.
EventStream read_events(const std::filesystem::path& path);

void write_events(const EventStream& stream, const std::filesystem::path& path,
                  EventFileFormat format);

} // namespace aqflow
