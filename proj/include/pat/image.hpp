#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pat {

// 8-bit image, interleaved channels (1 = gray, 3 = RGB).
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
        return pixels[(y * width + x) * channels + c];
    }

    bool operator==(const Image&) const = default;
};

// Binary mask, one byte per pixel holding 0 or 1.
struct Mask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), bits(h * w, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
    std::size_t count() const;
    std::size_t size() const { return bits.size(); }

    bool operator==(const Mask&) const = default;
};

// Binary PGM (P5) for one channel, PPM (P6) for three. maxval 255.
void write_pnm(const std::string& path, const Image& image);
Image read_pnm(const std::string& path);

// Masks are stored as PGM with FG = 255 and BG = 0; on read any nonzero value is FG.
void write_mask_pgm(const std::string& path, const Mask& mask);
Mask read_mask_pgm(const std::string& path);

}  // namespace pat
