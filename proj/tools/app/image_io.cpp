#include "image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include <fmt/format.h>
#include <png.h>

#include "anatpaste/error.hpp"

namespace anatpaste::app {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void io_fail(const std::string& path, std::string_view why) {
    throw Error(Errc::IoError, fmt::format("{}: {}", path, why));
}

struct Raster {
    int width = 0;
    int height = 0;
    unsigned maxval = 255;
    std::vector<unsigned> values;  // row-major samples in [0, maxval]
};

Raster read_png(const std::string& path, std::FILE* fp) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) io_fail(path, "cannot allocate PNG reader");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        io_fail(path, "cannot allocate PNG reader");
    }
    Raster r;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        io_fail(path, "corrupt PNG data");
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color & PNG_COLOR_MASK_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if ((color & PNG_COLOR_MASK_COLOR) || (color & PNG_COLOR_MASK_PALETTE)) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    if (depth == 16) png_set_swap(png);  // little-endian 16-bit samples
    png_read_update_info(png, info);

    r.width = static_cast<int>(png_get_image_width(png, info));
    r.height = static_cast<int>(png_get_image_height(png, info));
    const int out_depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    if (channels != 1) {
        png_destroy_read_struct(&png, &info, nullptr);
        io_fail(path, "unsupported PNG channel layout");
    }
    r.maxval = out_depth == 16 ? 65535u : 255u;
    const std::size_t stride = png_get_rowbytes(png, info);
    buffer.resize(stride * static_cast<std::size_t>(r.height));
    rows.resize(static_cast<std::size_t>(r.height));
    for (int y = 0; y < r.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    r.values.resize(static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height));
    for (int y = 0; y < r.height; ++y) {
        const unsigned char* row = rows[static_cast<std::size_t>(y)];
        for (int x = 0; x < r.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(r.width) + static_cast<std::size_t>(x);
            r.values[i] = out_depth == 16 ? static_cast<unsigned>(row[2 * x] | (row[2 * x + 1] << 8)) : row[x];
        }
    }
    return r;
}

Raster read_pgm(const std::string& path, const std::string& bytes) {
    std::size_t pos = 2;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) io_fail(path, "truncated PGM header");
        return bytes.substr(start, pos - start);
    };
    auto next_uint = [&]() -> unsigned long {
        const std::string tok = next_token();
        if (tok.find_first_not_of("0123456789") != std::string::npos || tok.size() > 9) {
            io_fail(path, fmt::format("bad PGM header field '{}'", tok));
        }
        return std::stoul(tok);
    };
    const bool binary = bytes[1] == '5';
    Raster r;
    r.width = static_cast<int>(next_uint());
    r.height = static_cast<int>(next_uint());
    r.maxval = static_cast<unsigned>(next_uint());
    if (r.width <= 0 || r.height <= 0 || r.maxval == 0 || r.maxval > 65535) io_fail(path, "bad PGM header");
    const std::size_t n = static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height);
    r.values.resize(n);
    if (binary) {
        ++pos;  // single whitespace after maxval
        const std::size_t bpp = r.maxval > 255 ? 2 : 1;
        if (bytes.size() < pos + n * bpp) io_fail(path, "truncated PGM raster");
        for (std::size_t i = 0; i < n; ++i) {
            const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + i * bpp);
            r.values[i] = bpp == 2 ? static_cast<unsigned>((p[0] << 8) | p[1]) : p[0];
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) r.values[i] = static_cast<unsigned>(next_uint());
    }
    for (unsigned v : r.values) {
        if (v > r.maxval) io_fail(path, "PGM sample exceeds maxval");
    }
    return r;
}

Raster read_raster(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) io_fail(path, "cannot open file");
    unsigned char sig[8] = {};
    const std::size_t got = std::fread(sig, 1, sizeof sig, fp.get());
    if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) {
        std::rewind(fp.get());
        return read_png(path, fp.get());
    }
    if (got >= 2 && sig[0] == 'P' && (sig[1] == '5' || sig[1] == '2')) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return read_pgm(path, ss.str());
    }
    io_fail(path, "not a PNG or PGM file");
}

void write_png(const std::string& path, int width, int height, int depth, const std::vector<unsigned char>& data) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) io_fail(path, "cannot open file for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) io_fail(path, "cannot allocate PNG writer");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        io_fail(path, "cannot allocate PNG writer");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        io_fail(path, "PNG encoding failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(depth / 8);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(data.data() + stride * static_cast<std::size_t>(y)));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(fp.get()) != 0) io_fail(path, "write failed");
}

}  // namespace

GrayImage read_image(const std::string& path) {
    const Raster r = read_raster(path);
    std::vector<double> px(r.values.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(r.values[i]) / r.maxval;
    return GrayImage::from_data(r.width, r.height, std::move(px));
}

void write_image(const std::string& path, const GrayImage& img) {
    std::vector<unsigned char> data(img.pixels().size() * 2);
    for (std::size_t i = 0; i < img.pixels().size(); ++i) {
        const auto v = static_cast<unsigned>(std::lround(std::clamp(img.pixels()[i], 0.0, 1.0) * 65535.0));
        data[2 * i] = static_cast<unsigned char>(v >> 8);  // PNG stores big-endian
        data[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
    }
    write_png(path, img.width(), img.height(), 16, data);
}

BinaryMask read_mask(const std::string& path) {
    const Raster r = read_raster(path);
    BinaryMask m(r.width, r.height);
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            const unsigned v = r.values[static_cast<std::size_t>(y) * static_cast<std::size_t>(r.width) + static_cast<std::size_t>(x)];
            if (2u * v >= r.maxval) m.set(x, y, true);
        }
    }
    return m;
}

void write_mask(const std::string& path, const BinaryMask& mask) {
    std::vector<unsigned char> data(static_cast<std::size_t>(mask.width()) * static_cast<std::size_t>(mask.height()));
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            data[static_cast<std::size_t>(y) * static_cast<std::size_t>(mask.width()) + static_cast<std::size_t>(x)] =
                mask.at(x, y) ? 255 : 0;
        }
    }
    write_png(path, mask.width(), mask.height(), 8, data);
}

}  // namespace anatpaste::app
