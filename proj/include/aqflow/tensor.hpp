#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace aqflow {

/// Dense (channels, height, width) tensor of doubles, contiguous per plane.
struct Tensor {
    int ch = 0;
    int h = 0;
    int w = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int ch_, int h_, int w_, double fill = 0.0)
        : ch(ch_), h(h_), w(w_),
          data(static_cast<std::size_t>(ch_) * h_ * w_, fill) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Tensor& o) const { return ch == o.ch && h == o.h && w == o.w; }

    double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * plane_size(); }
    const double* plane(int c) const {
        return data.data() + static_cast<std::size_t>(c) * plane_size();
    }
    double* row(int c, int y) { return plane(c) + static_cast<std::size_t>(y) * w; }
    const double* row(int c, int y) const { return plane(c) + static_cast<std::size_t>(y) * w; }

    double& at(int c, int y, int x) {
        assert(c >= 0 && c < ch && y >= 0 && y < h && x >= 0 && x < w);
        return data[(static_cast<std::size_t>(c) * h + y) * w + x];
    }
    double at(int c, int y, int x) const {
        assert(c >= 0 && c < ch && y >= 0 && y < h && x >= 0 && x < w);
        return data[(static_cast<std::size_t>(c) * h + y) * w + x];
    }

    void zero() { data.assign(data.size(), 0.0); }
};

} // namespace aqflow
