#include "aqflow/events.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aqflow/error.hpp"

namespace aqflow {
namespace {

constexpr std::array<char, 4> kEventMagic = {'A', 'Q', 'E', 'V'};
constexpr std::uint16_t kEventFormatVersion = 1;

void append_le16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_le64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint16_t read_le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint64_t read_le64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void check_sorted(const std::vector<Event>& events, const std::string& where) {
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i].t < events[i - 1].t) {
            throw io_error(where + ": timestamp regression at event " + std::to_string(i) +
                           " (" + std::to_string(events[i].t) + " < " +
                           std::to_string(events[i - 1].t) + ")");
        }
    }
}

void check_bounds(const std::vector<Event>& events, SensorSize sensor, const std::string& where) {
    for (std::size_t i = 0; i < events.size(); ++i) {
        const Event& e = events[i];
        if (e.x >= sensor.width || e.y >= sensor.height) {
            throw io_error(where + ": event " + std::to_string(i) + " at (" +
                           std::to_string(e.x) + "," + std::to_string(e.y) +
                           ") outside sensor " + std::to_string(sensor.width) + "x" +
                           std::to_string(sensor.height));
        }
    }
}

EventStream read_events_binary(std::ifstream& in, const std::filesystem::path& path) {
    std::array<unsigned char, 16> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    if (!in) throw io_error(path.string() + ": truncated binary header");
    if (std::memcmp(header.data(), kEventMagic.data(), 4) != 0) {
        throw io_error(path.string() + ": bad magic");
    }
    const std::uint16_t version = read_le16(header.data() + 4);
    if (version != kEventFormatVersion) {
        throw io_error(path.string() + ": unsupported version " + std::to_string(version));
    }
    EventStream stream;
    stream.sensor.width = read_le16(header.data() + 6);
    stream.sensor.height = read_le16(header.data() + 8);

    std::array<unsigned char, 13> rec{};
    while (in.read(reinterpret_cast<char*>(rec.data()), rec.size())) {
        Event e;
        e.t = read_le64(rec.data());
        e.x = read_le16(rec.data() + 8);
        e.y = read_le16(rec.data() + 10);
        const unsigned char p = rec[12];
        if (p > 1) {
            throw io_error(path.string() + ": bad polarity byte at offset " +
                           std::to_string(static_cast<long long>(in.tellg()) - 1));
        }
        e.p = p == 1 ? 1 : -1;
        stream.events.push_back(e);
    }
    if (in.gcount() != 0) {
        throw io_error(path.string() + ": trailing partial record (" +
                       std::to_string(in.gcount()) + " bytes)");
    }
    check_sorted(stream.events, path.string());
    check_bounds(stream.events, stream.sensor, path.string());
    return stream;
}

EventStream read_events_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    EventStream stream;
    std::string line;
    std::size_t line_no = 0;
    bool sensor_declared = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            // Optional geometry header: "# width,height"
            std::string body = line.substr(1);
            std::istringstream hs(body);
            int w = 0, h = 0;
            char comma = 0;
            if (hs >> w >> comma >> h && comma == ',' && w > 0 && h > 0 && !sensor_declared) {
                stream.sensor = {w, h};
                sensor_declared = true;
            }
            continue;
        }
        unsigned long long t = 0;
        long x = 0, y = 0, p = 0;
        char c1 = 0, c2 = 0, c3 = 0;
        std::istringstream ls(line);
        if (!(ls >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' || c2 != ',' || c3 != ',') {
            throw io_error(path.string() + ":" + std::to_string(line_no) + ": malformed record '" +
                           line + "'");
        }
        if (p != 0 && p != 1) {
            throw io_error(path.string() + ":" + std::to_string(line_no) + ": polarity must be 0 or 1");
        }
        if (x < 0 || y < 0 || x > 0xffff || y > 0xffff) {
            throw io_error(path.string() + ":" + std::to_string(line_no) + ": coordinate out of range");
        }
        Event e;
        e.t = t;
        e.x = static_cast<std::uint16_t>(x);
        e.y = static_cast<std::uint16_t>(y);
        e.p = p == 1 ? 1 : -1;
        stream.events.push_back(e);
    }
    check_sorted(stream.events, path.string());
    check_bounds(stream.events, stream.sensor, path.string());
    return stream;
}

} // namespace

PartitionResult partition_by_count(const EventStream& stream, std::size_t K) {
    if (K < 1) throw std::invalid_argument("partition_by_count: K must be >= 1");
    check_sorted(stream.events, "partition_by_count");

    PartitionResult result;
    const std::size_t n_full = stream.events.size() / K;
    result.partitions.reserve(n_full);
    for (std::size_t k = 0; k < n_full; ++k) {
        EventPartition part;
        part.events.assign(stream.events.begin() + static_cast<std::ptrdiff_t>(k * K),
                           stream.events.begin() + static_cast<std::ptrdiff_t>((k + 1) * K));
        part.t0 = part.events.front().t;
        part.t_last = part.events.back().t;
        result.partitions.push_back(std::move(part));
    }
    result.remainder.assign(stream.events.begin() + static_cast<std::ptrdiff_t>(n_full * K),
                            stream.events.end());
    return result;
}

EventPartition slice_rect(const EventPartition& partition, int x0, int y0, int w, int h,
                          bool shift_to_origin) {
    EventPartition out;
    out.t0 = partition.t0;
    out.t_last = partition.t_last;
    for (const Event& e : partition.events) {
        if (e.x >= x0 && e.x < x0 + w && e.y >= y0 && e.y < y0 + h) {
            Event copy = e;
            if (shift_to_origin) {
                copy.x = static_cast<std::uint16_t>(copy.x - x0);
                copy.y = static_cast<std::uint16_t>(copy.y - y0);
            }
            out.events.push_back(copy);
        }
    }
    return out;
}

EventCountImage count_encode(const EventPartition& partition, SensorSize sensor) {
    EventCountImage img;
    img.pos = Image<std::uint32_t>(sensor.width, sensor.height, 0);
    img.neg = Image<std::uint32_t>(sensor.width, sensor.height, 0);
    for (std::size_t i = 0; i < partition.events.size(); ++i) {
        const Event& e = partition.events[i];
        if (!img.pos.in_bounds(e.x, e.y)) {
            throw io_error("count_encode: event " + std::to_string(i) + " at (" +
                           std::to_string(e.x) + "," + std::to_string(e.y) + ") outside sensor");
        }
        if (e.p > 0) {
            ++img.pos.at(e.x, e.y);
        } else {
            ++img.neg.at(e.x, e.y);
        }
    }
    return img;
}

EventStream read_events(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (in && std::memcmp(magic.data(), kEventMagic.data(), 4) == 0) {
        in.seekg(0);
        return read_events_binary(in, path);
    }
    return read_events_text(path);
}

void write_events(const EventStream& stream, const std::filesystem::path& path,
                  EventFileFormat format) {
    check_bounds(stream.events, stream.sensor, "write_events");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    if (format == EventFileFormat::Binary) {
        std::string buf;
        buf.reserve(16 + stream.events.size() * 13);
        buf.append(kEventMagic.data(), 4);
        append_le16(buf, kEventFormatVersion);
        append_le16(buf, static_cast<std::uint16_t>(stream.sensor.width));
        append_le16(buf, static_cast<std::uint16_t>(stream.sensor.height));
        buf.append(6, '\0');
        for (const Event& e : stream.events) {
            append_le64(buf, e.t);
            append_le16(buf, e.x);
            append_le16(buf, e.y);
            buf.push_back(e.p > 0 ? 1 : 0);
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    } else {
        std::ostringstream buf;
        buf << "# " << stream.sensor.width << "," << stream.sensor.height << "\n";
        for (const Event& e : stream.events) {
            buf << e.t << "," << e.x << "," << e.y << "," << (e.p > 0 ? 1 : 0) << "\n";
        }
        const std::string s = buf.str();
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    if (!out) throw io_error("write failed: " + path.string());
}

} // namespace aqflow
