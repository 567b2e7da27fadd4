#include "anatpaste/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "anatpaste/error.hpp"

namespace anatpaste {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::InvalidDimensions: return "InvalidDimensions";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::Degenerate: return "Degenerate";
        case Errc::InvalidPlacement: return "InvalidPlacement";
        case Errc::NoLungRegion: return "NoLungRegion";
        case Errc::NoValidPlacement: return "NoValidPlacement";
        case Errc::EmptyDataset: return "EmptyDataset";
        case Errc::EmptyReferenceSet: return "EmptyReferenceSet";
        case Errc::EmptyQuerySet: return "EmptyQuerySet";
        case Errc::MisalignedEnsemble: return "MisalignedEnsemble";
        case Errc::SingleClass: return "SingleClass";
        case Errc::UndefinedF1: return "UndefinedF1";
        case Errc::GenerationFailed: return "GenerationFailed";
        case Errc::IoError: return "IoError";
        case Errc::ParseError: return "ParseError";
        case Errc::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

namespace {

void check_dims(int width, int height) {
    if (width < 1 || height < 1) {
        throw Error(Errc::InvalidDimensions,
                    "image dimensions must be positive, got " + std::to_string(width) + "x" +
                        std::to_string(height));
    }
}

}  // namespace

GrayImage::GrayImage(int width, int height, double fill)
    : width_(width), height_(height) {
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

GrayImage GrayImage::from_data(int width, int height, std::vector<double> data) {
    check_dims(width, height);
    if (data.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw Error(Errc::InvalidDimensions, "pixel buffer length does not match width*height");
    }
    for (double v : data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw Error(Errc::InvalidArgument, "intensity outside [0,1]: " + std::to_string(v));
        }
    }
    GrayImage img;
    img.width_ = width;
    img.height_ = height;
    img.data_ = std::move(data);
    return img;
}

BinaryMask::BinaryMask(int width, int height, bool fill)
    : width_(width), height_(height) {
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                 fill ? 1 : 0);
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

bool BinaryMask::subset_of(const BinaryMask& other) const {
    if (!same_shape(other)) throw Error(Errc::InvalidDimensions, "mask shapes differ");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (data_[i] && !other.data_[i]) return false;
    }
    return true;
}

}  // namespace anatpaste
