#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace aqflow {

/// Dense row-major raster, indexed as (x, y) with y*width + x storage.
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, T fill = T{})
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }

    T& at(int x, int y) {
        assert(in_bounds(x, y));
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }
    const T& at(int x, int y) const {
        assert(in_bounds(x, y));
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_; }
    const T* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_; }

    void fill(T value) { data_.assign(data_.size(), value); }

    bool operator==(const Image& other) const {
        return width_ == other.width_ && height_ == other.height_ && data_ == other.data_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

} // namespace aqflow
