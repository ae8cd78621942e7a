#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <png.h>

#include "dms/error.hpp"
#include "dms/grid.hpp"

namespace dms {

enum class ImageFormat { Pgm, Png };

inline ImageFormat format_from_path(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") return ImageFormat::Pgm;
    if (ext == ".png") return ImageFormat::Png;
    throw IoError("unsupported image extension '" + ext + "' (expected .pgm or .png)");
}

namespace detail {

inline std::uint32_t quantize(double v, std::uint32_t maxval) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint32_t>(std::lround(c * maxval));
}

inline void skip_pgm_space(std::istream& in) {
    for (;;) {
        const int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            return;
        }
    }
}

inline std::size_t read_pgm_number(std::istream& in) {
    skip_pgm_space(in);
    std::size_t v = 0;
    if (!(in >> v)) throw IoError("malformed PGM header");
    return v;
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    return f;
}

} // namespace detail

/// Binary PGM (P5), 8 or 16 bit. Values are mapped to [0, 1] by maxval.
inline Image read_pgm(std::istream& in) {
    char magic[2] = {};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') throw IoError("not a binary PGM (P5) stream");
    const std::size_t width = detail::read_pgm_number(in);
    const std::size_t height = detail::read_pgm_number(in);
    const std::size_t maxval = detail::read_pgm_number(in);
    if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) throw IoError("invalid PGM header values");
    in.get();
    Image out(height, width);
    const bool wide = maxval > 255;
    std::vector<unsigned char> raw(out.size() * (wide ? 2 : 1));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IoError("truncated PGM pixel data");
    for (std::size_t j = 0; j < out.size(); ++j) {
        const std::uint32_t v = wide ? (static_cast<std::uint32_t>(raw[2 * j]) << 8) | raw[2 * j + 1] : raw[j];
        out[j] = static_cast<double>(v) / static_cast<double>(maxval);
    }
    return out;
}

inline void write_pgm(std::ostream& os, const Image& img, unsigned bit_depth = 8) {
    if (bit_depth != 8 && bit_depth != 16) throw IoError("PGM bit depth must be 8 or 16");
    const std::uint32_t maxval = bit_depth == 8 ? 255u : 65535u;
    os << "P5\n" << img.width() << ' ' << img.height() << '\n' << maxval << '\n';
    std::vector<unsigned char> raw;
    raw.reserve(img.size() * (bit_depth / 8));
    for (std::size_t j = 0; j < img.size(); ++j) {
        const std::uint32_t v = detail::quantize(img[j], maxval);
        if (bit_depth == 16) raw.push_back(static_cast<unsigned char>(v >> 8));
        raw.push_back(static_cast<unsigned char>(v & 0xFF));
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw IoError("failed writing PGM data");
}

/// 8-bit grayscale PNG. Other PNG color types are converted to 8-bit gray on read.
inline Image read_png(const std::filesystem::path& path) {
    auto file = detail::open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialization failed");
    }
    std::vector<png_bytep> rows;
    std::vector<unsigned char> pixels;
    std::size_t width = 0;
    std::size_t height = 0;
    bool wide = false;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("cannot decode PNG '" + path.string() + "'");
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    wide = png_get_bit_depth(png, info) == 16;
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * height);
    rows.resize(height);
    for (std::size_t r = 0; r < height; ++r) rows[r] = pixels.data() + r * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image out(height, width);
    for (std::size_t r = 0; r < height; ++r) {
        const unsigned char* row = pixels.data() + r * stride;
        for (std::size_t c = 0; c < width; ++c) {
            out.at(r, c) = wide ? ((row[2 * c] << 8) | row[2 * c + 1]) / 65535.0 : row[c] / 255.0;
        }
    }
    return out;
}

inline void write_png(const std::filesystem::path& path, const Image& img, unsigned bit_depth = 8) {
    if (bit_depth != 8 && bit_depth != 16) throw IoError("PNG bit depth must be 8 or 16");
    auto file = detail::open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialization failed");
    }
    const std::size_t bytes = bit_depth / 8;
    std::vector<unsigned char> pixels(img.size() * bytes);
    for (std::size_t j = 0; j < img.size(); ++j) {
        if (bytes == 1) {
            pixels[j] = static_cast<unsigned char>(detail::quantize(img[j], 255));
        } else {
            const std::uint32_t v = detail::quantize(img[j], 65535);
            pixels[2 * j] = static_cast<unsigned char>(v >> 8);
            pixels[2 * j + 1] = static_cast<unsigned char>(v & 0xFF);
        }
    }
    std::vector<png_bytep> rows(img.height());
    for (std::size_t r = 0; r < img.height(); ++r) rows[r] = pixels.data() + r * img.width() * bytes;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("cannot encode PNG '" + path.string() + "'");
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
                 static_cast<int>(bit_depth),
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Image read_image(const std::filesystem::path& path) {
    if (format_from_path(path) == ImageFormat::Png) return read_png(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return read_pgm(in);
}

inline void write_image(const std::filesystem::path& path, const Image& img, unsigned bit_depth = 8) {
    if (format_from_path(path) == ImageFormat::Png) {
        write_png(path, img, bit_depth);
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_pgm(os, img, bit_depth);
}

/// Edge values as CSV: index, orientation (v/h), row, col, value. Vertical
/// edge (r, c) joins pixels (r, c) and (r+1, c); horizontal joins (r, c) and (r, c+1).
inline void write_edge_csv(std::ostream& os, const EdgeField& e) {
    os << "index,orientation,row,col,value\n";
    os.precision(17);
    const std::size_t nv = e.vertical_count();
    for (std::size_t i = 0; i < e.size(); ++i) {
        const bool vertical = i < nv;
        const std::size_t local = vertical ? i : i - nv;
        const std::size_t cols = vertical ? e.width() : e.width() - 1;
        os << i << ',' << (vertical ? 'v' : 'h') << ',' << local / cols << ',' << local % cols << ',' << e[i] << '\n';
    }
}

/// Pixel mask marking both endpoints of every edge with |e| > threshold.
inline Image contour_overlay(const EdgeField& e, double threshold = 0.5) {
    Image out(e.height(), e.width());
    const std::size_t w = e.width();
    const std::size_t nv = e.vertical_count();
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (!(std::abs(e[i]) > threshold)) continue;
        std::size_t p = 0;
        std::size_t q = 0;
        if (i < nv) {
            p = i;
            q = i + w;
        } else {
            const std::size_t local = i - nv;
            const std::size_t r = local / (w - 1);
            const std::size_t c = local % (w - 1);
            p = r * w + c;
            q = p + 1;
        }
        out[p] = 1.0;
        out[q] = 1.0;
    }
    return out;
}

} // namespace dms
