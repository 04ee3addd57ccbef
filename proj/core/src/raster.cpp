#include "fieldloom/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "fieldloom/errors.hpp"

namespace fieldloom {

BinaryRaster::BinaryRaster(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
    if (width < 1 || height < 1) throw UsageError("raster dimensions must be >= 1");
    bits_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

BinaryRaster::BinaryRaster(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
    if (width < 1 || height < 1) throw UsageError("raster dimensions must be >= 1");
    if (bits_.size() != static_cast<std::size_t>(width) * height)
        throw UsageError("raster bit count does not match dimensions");
    for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryRaster::count_ones() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool BinaryRaster::degenerate() const {
    const auto ones = count_ones();
    return ones == 0 || ones == bits_.size();
}

BinaryRaster ProbabilityImage::threshold(double t) const {
    std::vector<std::uint8_t> bits(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) bits[i] = values[i] >= t ? 1 : 0;
    return BinaryRaster(width, height, std::move(bits));
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
    std::string token;
    for (;;) {
        int c = in.get();
        if (c == EOF) break;
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
            if (!token.empty()) break;
            continue;
        }
        if (std::isspace(c)) {
            if (!token.empty()) break;
            continue;
        }
        token.push_back(static_cast<char>(c));
    }
    return token;
}

int header_int(std::istream& in, const char* what) {
    const std::string tok = header_token(in);
    if (tok.empty()) throw DataError(std::string("graymap: missing ") + what);
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw DataError(std::string("graymap: bad ") + what);
        return v;
    } catch (const std::logic_error&) {
        throw DataError(std::string("graymap: bad ") + what + " '" + tok + "'");
    }
}

}  // namespace

GrayImage read_graymap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open graymap " + path.string());

    const std::string magic = header_token(in);
    if (magic != "P2" && magic != "P5") throw DataError("graymap: unsupported magic '" + magic + "'");

    GrayImage img;
    img.width = header_int(in, "width");
    img.height = header_int(in, "height");
    img.maxval = header_int(in, "maxval");
    if (img.width < 1 || img.height < 1) throw DataError("graymap: empty image");
    if (img.maxval < 1 || img.maxval > 255) throw DataError("graymap: maxval must be in 1..255");

    const auto count = static_cast<std::size_t>(img.width) * img.height;
    img.pixels.resize(count);
    if (magic == "P5") {
        // header_token consumed exactly one whitespace byte after maxval
        in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count) throw DataError("graymap: truncated payload");
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            int v = 0;
            if (!(in >> v)) throw DataError("graymap: truncated payload");
            if (v < 0 || v > img.maxval) throw DataError("graymap: pixel out of range");
            img.pixels[i] = static_cast<std::uint8_t>(v);
        }
    }
    for (auto& p : img.pixels)
        if (p > img.maxval) throw DataError("graymap: pixel out of range");
    return img;
}

void write_graymap(const GrayImage& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "P5\n" << image.width << ' ' << image.height << '\n' << image.maxval << '\n';
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

BinaryRaster read_raster(const std::filesystem::path& path) {
    const GrayImage img = read_graymap(path);
    std::vector<std::uint8_t> bits(img.pixels.size());
    // Scale to 8 bits first so low-maxval files binarize consistently.
    for (std::size_t i = 0; i < bits.size(); ++i) {
        const int v8 = img.maxval == 255 ? img.pixels[i] : (img.pixels[i] * 255 + img.maxval / 2) / img.maxval;
        bits[i] = v8 > 127 ? 1 : 0;
    }
    return BinaryRaster(img.width, img.height, std::move(bits));
}

void write_raster(const BinaryRaster& raster, const std::filesystem::path& path) {
    GrayImage img{raster.width(), raster.height(), 255, {}};
    img.pixels.reserve(raster.size());
    for (auto b : raster.bits()) img.pixels.push_back(b ? 255 : 0);
    write_graymap(img, path);
}

std::uint8_t probability_to_gray(double p) {
    const double clamped = std::clamp(p, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

void write_raster(const ProbabilityImage& image, const std::filesystem::path& path) {
    GrayImage img{image.width, image.height, 255, {}};
    img.pixels.reserve(image.values.size());
    for (double p : image.values) img.pixels.push_back(probability_to_gray(p));
    write_graymap(img, path);
}

}  // namespace fieldloom
