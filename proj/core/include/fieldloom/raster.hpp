#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fieldloom {

/// Row-major binary mask, one byte (0 or 1) per pixel.
class BinaryRaster {
public:
    BinaryRaster() = default;
    BinaryRaster(int width, int height, std::uint8_t fill = 0);
    BinaryRaster(int width, int height, std::vector<std::uint8_t> bits);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return bits_.size(); }

    std::uint8_t at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
    void set(int x, int y, bool on) { bits_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0; }

    const std::vector<std::uint8_t>& bits() const { return bits_; }
    std::size_t count_ones() const;

    // All pixels share one value.
    bool degenerate() const;

    friend bool operator==(const BinaryRaster&, const BinaryRaster&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Row-major per-pixel probabilities in [0,1].
struct ProbabilityImage {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    BinaryRaster threshold(double t) const;  // value >= t -> 1
};

/// Raw 8-bit graymap as stored on disk.
struct GrayImage {
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::vector<std::uint8_t> pixels;
};

// Accepts P2 (ASCII) and P5 (binary) graymaps with maxval <= 255.
GrayImage read_graymap(const std::filesystem::path& path);
void write_graymap(const GrayImage& image, const std::filesystem::path& path);

// Binarizes with value > 127 -> 1.
BinaryRaster read_raster(const std::filesystem::path& path);

// P5 with bits stored as 0/255.
void write_raster(const BinaryRaster& raster, const std::filesystem::path& path);

// P5 with probabilities scaled to 0..255, rounding half up.
void write_raster(const ProbabilityImage& image, const std::filesystem::path& path);

std::uint8_t probability_to_gray(double p);

}  // namespace fieldloom
