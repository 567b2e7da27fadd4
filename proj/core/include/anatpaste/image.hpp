#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace anatpaste {

/// Single-channel image with real intensities in [0,1], stored row-major.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, double fill = 0.0);

    /// Takes ownership of `data`; throws InvalidDimensions on size mismatch
    /// and InvalidArgument on any intensity outside [0,1] or non-finite.
    static GrayImage from_data(int width, int height, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double at(int x, int y) const { return data_[index(x, y)]; }
    double& at(int x, int y) { return data_[index(x, y)]; }

    std::span<const double> pixels() const noexcept { return data_; }
    std::span<double> pixels() noexcept { return data_; }

    bool same_shape(const GrayImage& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool fill = false);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }

    bool at(int x, int y) const { return data_[index(x, y)] != 0; }
    void set(int x, int y, bool value) { data_[index(x, y)] = value ? 1 : 0; }

    std::span<const std::uint8_t> pixels() const noexcept { return data_; }
    std::span<std::uint8_t> pixels() noexcept { return data_; }

    std::size_t count() const noexcept;
    bool any() const noexcept { return count() > 0; }

    bool same_shape(const BinaryMask& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }
    /// True when every foreground pixel of *this is foreground in `other`.
    bool subset_of(const BinaryMask& other) const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Connected-component labels: 0 is background, components are 1..K.
/// component_sizes[k] is the pixel count of label k (index 0 is unused and 0).
struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> labels;
    std::vector<std::size_t> component_sizes;

    std::size_t component_count() const noexcept {
        return component_sizes.empty() ? 0 : component_sizes.size() - 1;
    }
    std::int32_t at(int x, int y) const {
        return labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                      static_cast<std::size_t>(x)];
    }
};

}  // namespace anatpaste
