#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "reshape/image/image.hpp"

namespace reshape::image {

/// Undecodable or unwritable image data.
class ImageCodecError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

inline png_uint_32 format_for_channels(int channels) {
    switch (channels) {
        case 1: return PNG_FORMAT_GRAY;
        case 2: return PNG_FORMAT_GA;
        case 3: return PNG_FORMAT_RGB;
        case 4: return PNG_FORMAT_RGBA;
        default: throw ValueError("unsupported channel count " + std::to_string(channels));
    }
}

struct PngImage {
    png_image image;
    PngImage() {
        std::memset(&image, 0, sizeof image);
        image.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&image); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

template <typename T>
std::vector<std::uint8_t> encode(const Image<T>& img, png_uint_32 format) {
    if (img.width <= 0 || img.height <= 0) throw ValueError("cannot encode an empty image");
    PngImage png;
    png.image.width = static_cast<png_uint_32>(img.width);
    png.image.height = static_cast<png_uint_32>(img.height);
    png.image.format = format;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, img.data.data(), 0, nullptr)) {
        throw ImageCodecError(std::string("PNG encode failed: ") + png.image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, img.data.data(), 0, nullptr)) {
        throw ImageCodecError(std::string("PNG encode failed: ") + png.image.message);
    }
    out.resize(size);
    return out;
}

}  // namespace detail

/// Decodes to 8 bits per channel, keeping the file's channel layout
/// (gray, gray+alpha, RGB, RGBA); palettes expand to RGB(A).
inline Image8 decode_png(const std::vector<std::uint8_t>& bytes) {
    detail::PngImage png;
    if (bytes.empty() || !png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size())) {
        throw ImageCodecError(std::string("PNG decode failed: ") +
                              (bytes.empty() ? "empty input" : png.image.message));
    }
    png.image.format &= ~(PNG_FORMAT_FLAG_LINEAR | PNG_FORMAT_FLAG_COLORMAP);
    const int channels = static_cast<int>(PNG_IMAGE_SAMPLE_CHANNELS(png.image.format));
    Image8 out(static_cast<int>(png.image.width), static_cast<int>(png.image.height), channels);
    if (!png_image_finish_read(&png.image, nullptr, out.data.data(), 0, nullptr)) {
        throw ImageCodecError(std::string("PNG decode failed: ") + png.image.message);
    }
    return out;
}

/// Decodes a 16-bit grayscale PNG without any gamma transform.
inline Image16 decode_png16_gray(const std::vector<std::uint8_t>& bytes) {
    detail::PngImage png;
    if (bytes.empty() || !png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size())) {
        throw ImageCodecError(std::string("PNG decode failed: ") + png.image.message);
    }
    if (png.image.format != PNG_FORMAT_LINEAR_Y) throw ImageCodecError("not a 16-bit grayscale PNG");
    Image16 out(static_cast<int>(png.image.width), static_cast<int>(png.image.height), 1);
    if (!png_image_finish_read(&png.image, nullptr, out.data.data(), 0, nullptr)) {
        throw ImageCodecError(std::string("PNG decode failed: ") + png.image.message);
    }
    return out;
}

inline std::vector<std::uint8_t> encode_png(const Image8& img) {
    return detail::encode(img, detail::format_for_channels(img.channels));
}

/// 16-bit grayscale; sample values are stored verbatim.
inline std::vector<std::uint8_t> encode_png16(const Image16& img) {
    if (img.channels != 1) throw ValueError("16-bit export supports grayscale only");
    return detail::encode(img, PNG_FORMAT_LINEAR_Y);
}

inline Image8 read_png(const std::filesystem::path& path) { return decode_png(detail::read_bytes(path)); }

inline void write_png(const std::filesystem::path& path, const Image8& img) {
    detail::write_bytes(path, encode_png(img));
}

inline void write_png16(const std::filesystem::path& path, const Image16& img) {
    detail::write_bytes(path, encode_png16(img));
}

}  // namespace reshape::image
