#include "aqflow/warp.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "aqflow/error.hpp"
#include "aqflow/simd.hpp"

namespace aqflow {
namespace {

constexpr double kDenomEps = 1e-9;

void append_f32_le(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float read_f32_le(const unsigned char* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace

Centroid compute_centroid(const EventPartition& partition) {
    if (partition.empty()) throw std::invalid_argument("compute_centroid: empty partition");
    double sx = 0.0, sy = 0.0;
    for (const Event& e : partition.events) {
        sx += e.x;
        sy += e.y;
    }
    const double n = static_cast<double>(partition.size());
    return Centroid{sx / n, sy / n};
}

void warp_event(double x, double y, std::uint64_t t_us, double vx, double vy, double phi,
                const Centroid& centroid, std::uint64_t t_ref_us, double& out_x, double& out_y) {
    const double dt_ms = (static_cast<double>(t_ref_us) - static_cast<double>(t_us)) * 1e-3;
    out_x = x + (vx + phi * (x - centroid.x)) * dt_ms;
    out_y = y + (vy + phi * (y - centroid.y)) * dt_ms;
}

double normalized_timestamp(const EventPartition& partition, std::uint64_t t_us,
                            TimeDirection direction) {
    const double dur = static_cast<double>(partition.t_last) - static_cast<double>(partition.t0);
    double tn = 0.5;
    if (dur > 0.0) {
        tn = (static_cast<double>(t_us) - static_cast<double>(partition.t0)) / dur;
    }
    return direction == TimeDirection::Forward ? tn : 1.0 - tn;
}

namespace detail {

WarpBatch make_warp_batch(const EventPartition& partition, const MotionField& field,
                          const Centroid& centroid, std::uint64_t t_ref_us) {
    const std::size_t n = partition.size();
    WarpBatch b;
    b.x.resize(n);
    b.y.resize(n);
    b.dt_ms.resize(n);
    b.vx.resize(n);
    b.vy.resize(n);
    b.phi.resize(n);
    b.warped_x.resize(n);
    b.warped_y.resize(n);
    b.cell.resize(n);
    const double t_ref = static_cast<double>(t_ref_us);
    for (std::size_t i = 0; i < n; ++i) {
        const Event& e = partition.events[i];
        b.x[i] = e.x;
        b.y[i] = e.y;
        b.dt_ms[i] = (t_ref - static_cast<double>(e.t)) * 1e-3;
        const std::size_t cell = field.cell_for_pixel(e.x, e.y);
        b.cell[i] = cell;
        b.vx[i] = field.vx(cell);
        b.vy[i] = field.vy(cell);
        b.phi[i] = field.phi(cell);
    }
    simd::active_kernels().warp_batch(n, b.x.data(), b.y.data(), b.dt_ms.data(), b.vx.data(),
                                      b.vy.data(), b.phi.data(), centroid.x, centroid.y,
                                      b.warped_x.data(), b.warped_y.data());
    return b;
}

} // namespace detail

IWE build_iwe(const EventPartition& partition, const MotionField& field, const Centroid& centroid,
              SensorSize sensor, std::uint64_t t_ref_us, TimeDirection direction, bool tight) {
    const std::size_t n = partition.size();
    const detail::WarpBatch batch =
        n > 0 ? detail::make_warp_batch(partition, field, centroid, t_ref_us) : detail::WarpBatch{};

    // Grid region: full sensor, or the populated sub-rectangle in tight mode.
    int rx0 = 0, ry0 = 0, rx1 = sensor.width, ry1 = sensor.height;
    if (tight && n > 0) {
        double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
        for (std::size_t i = 0; i < n; ++i) {
            min_x = std::min(min_x, batch.warped_x[i]);
            max_x = std::max(max_x, batch.warped_x[i]);
            min_y = std::min(min_y, batch.warped_y[i]);
            max_y = std::max(max_y, batch.warped_y[i]);
        }
        rx0 = std::max(0, static_cast<int>(std::floor(min_x)));
        ry0 = std::max(0, static_cast<int>(std::floor(min_y)));
        rx1 = std::min(sensor.width, static_cast<int>(std::floor(max_x)) + 2);
        ry1 = std::min(sensor.height, static_cast<int>(std::floor(max_y)) + 2);
        rx0 = std::min(rx0, rx1);
        ry0 = std::min(ry0, ry1);
    }
    const int W = rx1 - rx0;
    const int H = ry1 - ry0;

    IWE iwe;
    iwe.origin_x = rx0;
    iwe.origin_y = ry0;
    iwe.t_pos = Image<double>(W, H, 0.0);
    iwe.t_neg = Image<double>(W, H, 0.0);
    iwe.delta = Image<double>(W, H, 0.0);
    iwe.num_pos = Image<double>(W, H, 0.0);
    iwe.den_pos = Image<double>(W, H, 0.0);
    iwe.num_neg = Image<double>(W, H, 0.0);
    iwe.den_neg = Image<double>(W, H, 0.0);
    iwe.total_mass = static_cast<double>(n);
    if (n == 0) return iwe;

    double in_bounds_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Event& e = partition.events[i];
        const double tau = normalized_timestamp(partition, e.t, direction);
        const int x0 = static_cast<int>(std::floor(batch.warped_x[i]));
        const int y0 = static_cast<int>(std::floor(batch.warped_y[i]));
        const double fx = batch.warped_x[i] - x0;
        const double fy = batch.warped_y[i] - y0;
        const double wgt[2][2] = {{(1.0 - fx) * (1.0 - fy), (1.0 - fx) * fy},
                                  {fx * (1.0 - fy), fx * fy}};
        Image<double>& num = e.p > 0 ? iwe.num_pos : iwe.num_neg;
        Image<double>& den = e.p > 0 ? iwe.den_pos : iwe.den_neg;
        for (int dx = 0; dx < 2; ++dx) {
            for (int dy = 0; dy < 2; ++dy) {
                const int px = x0 + dx;
                const int py = y0 + dy;
                const double w = wgt[dx][dy];
                if (w == 0.0 || px < 0 || px >= sensor.width || py < 0 || py >= sensor.height) {
                    continue;
                }
                num.at(px - rx0, py - ry0) += w * tau;
                den.at(px - rx0, py - ry0) += w;
                iwe.delta.at(px - rx0, py - ry0) += w;
                in_bounds_mass += w;
            }
        }
    }
    iwe.dropped_mass = iwe.total_mass - in_bounds_mass;

    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            iwe.t_pos.at(x, y) = iwe.num_pos.at(x, y) / (iwe.den_pos.at(x, y) + kDenomEps);
            iwe.t_neg.at(x, y) = iwe.num_neg.at(x, y) / (iwe.den_neg.at(x, y) + kDenomEps);
        }
    }
    return iwe;
}

void write_iwe(const IWE& iwe, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    std::string buf;
    buf.append("AQIW", 4);
    const int W = iwe.delta.width();
    const int H = iwe.delta.height();
    buf.push_back(static_cast<char>(W & 0xff));
    buf.push_back(static_cast<char>((W >> 8) & 0xff));
    buf.push_back(static_cast<char>(H & 0xff));
    buf.push_back(static_cast<char>((H >> 8) & 0xff));
    for (const Image<double>* plane : {&iwe.t_pos, &iwe.t_neg, &iwe.delta}) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) append_f32_le(buf, static_cast<float>(plane->at(x, y)));
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw io_error("write failed: " + path.string());
}

IWE read_iwe(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    std::array<unsigned char, 8> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    if (!in || std::memcmp(header.data(), "AQIW", 4) != 0) {
        throw io_error(path.string() + ": bad IWE header");
    }
    const int W = header[4] | (header[5] << 8);
    const int H = header[6] | (header[7] << 8);
    IWE iwe;
    iwe.t_pos = Image<double>(W, H);
    iwe.t_neg = Image<double>(W, H);
    iwe.delta = Image<double>(W, H);
    std::vector<unsigned char> raw(static_cast<std::size_t>(W) * H * 4);
    for (Image<double>* plane : {&iwe.t_pos, &iwe.t_neg, &iwe.delta}) {
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (!in) throw io_error(path.string() + ": truncated IWE plane");
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                plane->at(x, y) = read_f32_le(raw.data() + (static_cast<std::size_t>(y) * W + x) * 4);
            }
        }
    }
    return iwe;
}

} // namespace aqflow
