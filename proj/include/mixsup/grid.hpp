#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mixsup {

/// Dense channel-major (CHW) raster. Used for images, masks and scalar maps.
template <class T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(int height, int width, int channels = 1, T fill = T{})
        : height_(height), width_(width), channels_(channels),
          data_(static_cast<std::size_t>(height) * width * channels, fill) {
        assert(height >= 0 && width >= 0 && channels >= 1);
    }

    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int channels() const noexcept { return channels_; }
    [[nodiscard]] std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(height_) * width_;
    }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] bool contains(int row, int col) const noexcept {
        return row >= 0 && row < height_ && col >= 0 && col < width_;
    }
    [[nodiscard]] bool same_shape(const Grid& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    T& operator()(int row, int col, int channel = 0) noexcept {
        return data_[index(row, col, channel)];
    }
    const T& operator()(int row, int col, int channel = 0) const noexcept {
        return data_[index(row, col, channel)];
    }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] std::span<T> plane(int channel) noexcept {
        return std::span<T>(data_).subspan(channel * plane_size(), plane_size());
    }
    [[nodiscard]] std::span<const T> plane(int channel) const noexcept {
        return std::span<const T>(data_).subspan(channel * plane_size(), plane_size());
    }

    [[nodiscard]] std::span<T> values() noexcept { return data_; }
    [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
    [[nodiscard]] std::vector<T>& storage() noexcept { return data_; }
    [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.same_shape(b) && a.data_ == b.data_;
    }

private:
    [[nodiscard]] std::size_t index(int row, int col, int channel) const noexcept {
        assert(contains(row, col) && channel >= 0 && channel < channels_);
        return (static_cast<std::size_t>(channel) * height_ + row) * width_ + col;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 1;
    std::vector<T> data_;
};

/// Image intensities in [0,1], CHW.
using ImageTensor = Grid<float>;

/// Counterclockwise rotation by `quarter_turns` * 90 degrees (any integer,
/// taken mod 4). Output is W×H for odd turns.
template <class T>
Grid<T> rotate90(const Grid<T>& in, int quarter_turns) {
    const int turns = ((quarter_turns % 4) + 4) % 4;
    if (turns == 0) return in;
    const int h = in.height();
    const int w = in.width();
    const bool swap = (turns % 2) == 1;
    Grid<T> out(swap ? w : h, swap ? h : w, in.channels());
    for (int c = 0; c < in.channels(); ++c) {
        for (int i = 0; i < out.height(); ++i) {
            for (int j = 0; j < out.width(); ++j) {
                switch (turns) {
                    case 1: out(i, j, c) = in(j, w - 1 - i, c); break;
                    case 2: out(i, j, c) = in(h - 1 - i, w - 1 - j, c); break;
                    default: out(i, j, c) = in(h - 1 - j, i, c); break;
                }
            }
        }
    }
    return out;
}

}  // namespace mixsup
