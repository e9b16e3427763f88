#include "aqflow/flow_io.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "aqflow/error.hpp"

namespace aqflow {
namespace {

constexpr std::uint32_t kFlagHasPhi = 1u;

void append_le16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_le32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f32_le(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    append_le32(out, bits);
}

float read_f32_le(const unsigned char* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                               (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace

DenseFlow field_to_dense_flow(const MotionField& field, const Centroid& centroid, double window_ms,
                              SensorSize sensor, bool include_phi) {
    DenseFlow flow;
    flow.u = Image<double>(sensor.width, sensor.height, 0.0);
    flow.v = Image<double>(sensor.width, sensor.height, 0.0);
    flow.valid = Image<std::uint8_t>(sensor.width, sensor.height, 1);
    flow.has_phi = include_phi;
    if (include_phi) flow.phi = Image<double>(sensor.width, sensor.height, 0.0);
    for (int y = 0; y < sensor.height; ++y) {
        for (int x = 0; x < sensor.width; ++x) {
            const std::size_t cell = field.cell_for_pixel(x, y);
            flow.u.at(x, y) = (field.vx(cell) + field.phi(cell) * (x - centroid.x)) * window_ms;
            flow.v.at(x, y) = (field.vy(cell) + field.phi(cell) * (y - centroid.y)) * window_ms;
            if (include_phi) flow.phi.at(x, y) = field.phi(cell);
            flow.valid.at(x, y) = field.valid(cell);
        }
    }
    return flow;
}

void write_flow(const DenseFlow& flow, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    const int W = flow.u.width();
    const int H = flow.u.height();
    const float nan = std::numeric_limits<float>::quiet_NaN();

    std::string buf;
    buf.append("AQFL", 4);
    append_le16(buf, static_cast<std::uint16_t>(W));
    append_le16(buf, static_cast<std::uint16_t>(H));
    append_le32(buf, flow.has_phi ? kFlagHasPhi : 0u);

    const Image<double>* planes[3] = {&flow.u, &flow.v, flow.has_phi ? &flow.phi : nullptr};
    for (const Image<double>* plane : planes) {
        if (plane == nullptr) continue;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const bool ok = flow.valid.empty() || flow.valid.at(x, y) != 0;
                append_f32_le(buf, ok ? static_cast<float>(plane->at(x, y)) : nan);
            }
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw io_error("write failed: " + path.string());
}

DenseFlow read_flow(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    std::array<unsigned char, 12> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    if (!in || std::memcmp(header.data(), "AQFL", 4) != 0) {
        throw io_error(path.string() + ": bad flow header");
    }
    const int W = header[4] | (header[5] << 8);
    const int H = header[6] | (header[7] << 8);
    const std::uint32_t flags = static_cast<std::uint32_t>(header[8]) | (header[9] << 8) |
                                (static_cast<std::uint32_t>(header[10]) << 16) |
                                (static_cast<std::uint32_t>(header[11]) << 24);

    DenseFlow flow;
    flow.has_phi = (flags & kFlagHasPhi) != 0;
    flow.u = Image<double>(W, H);
    flow.v = Image<double>(W, H);
    if (flow.has_phi) flow.phi = Image<double>(W, H);
    flow.valid = Image<std::uint8_t>(W, H, 1);

    std::vector<unsigned char> raw(static_cast<std::size_t>(W) * H * 4);
    Image<double>* planes[3] = {&flow.u, &flow.v, flow.has_phi ? &flow.phi : nullptr};
    for (Image<double>* plane : planes) {
        if (plane == nullptr) continue;
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (!in) throw io_error(path.string() + ": truncated flow plane");
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                plane->at(x, y) = read_f32_le(raw.data() + (static_cast<std::size_t>(y) * W + x) * 4);
            }
        }
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (!std::isfinite(flow.u.at(x, y)) || !std::isfinite(flow.v.at(x, y))) {
                flow.valid.at(x, y) = 0;
            }
        }
    }
    return flow;
}

} // namespace aqflow
