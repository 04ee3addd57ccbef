#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fieldloom/raster.hpp"

namespace fieldloom {

enum class Source : std::uint8_t { presence, background, mask_pixel };

const char* to_string(Source s);
Source source_from_string(const std::string& s);

/// Labelled coordinate records, stored row-major (n x dim).
///
/// `geographic` sets carry lon/lat in degrees and, when dim == 3, day-of-year
/// as the third coordinate; range checks in clean() only apply to them.
/// Records that failed to parse stay in the set with valid == 0 until clean().
struct PointSet {
    int dim = 2;
    bool geographic = true;
    std::vector<double> coords;
    std::vector<std::uint8_t> labels;
    std::vector<Source> sources;
    std::vector<std::uint8_t> valid;

    explicit PointSet(int d = 2, bool geo = true) : dim(d), geographic(geo) {}

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }

    std::span<const double> point(std::size_t i) const {
        return {coords.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }

    void push_back(std::span<const double> x, std::uint8_t label, Source source, bool ok = true);

    std::size_t count_positive() const;

    PointSet subset(std::span<const std::size_t> indices) const;

    friend bool operator==(const PointSet&, const PointSet&) = default;
};

PointSet concat(const PointSet& a, const PointSet& b);

struct Bounds {
    double low = 0.0;
    double high = 0.0;
};

/// Column mapping for CSV ingestion. An empty label column marks every row
/// as a presence record.
struct Schema {
    std::vector<std::string> coord_columns{"lon", "lat"};
    std::string label_column = "label";
    bool geographic = true;

    static Schema parse(const std::string& coord_list, const std::string& label_column, bool geographic = true);
};

struct LoadResult {
    PointSet points;
    std::size_t bad_rows = 0;
};

LoadResult load_points(const std::filesystem::path& path, const Schema& schema = {});

// Writes `<coord columns>,label,source` with full precision.
void write_points(const PointSet& set, const std::filesystem::path& path,
                  const std::vector<std::string>& coord_names);

/// Drops invalid, non-finite and out-of-range records, then exact duplicate
/// coordinate vectors (first occurrence wins). Throws DataError when nothing
/// survives.
PointSet clean(const PointSet& set);

/// Uniform background draws over the presence bounding box, or over `domain`
/// when given. For 3-D geographic sets the day-of-year axis spans [1, 366].
PointSet sample_background(const PointSet& presences, std::size_t n, std::uint64_t seed,
                           const std::optional<std::vector<Bounds>>& domain = std::nullopt);

// Per-dimension affine map onto [-1, 1] fitted on training coordinates.
struct NormSpec {
    std::vector<Bounds> bounds;
    std::vector<std::uint8_t> degenerate;
    std::vector<std::string> warnings;

    int dim() const { return static_cast<int>(bounds.size()); }
    double scale(int k) const;
    double offset(int k) const;

    double apply(int k, double x) const;
    double invert(int k, double y) const;
    void apply(std::span<const double> raw, std::span<double> out) const;
};

NormSpec fit_normalizer(const PointSet& train);
PointSet apply_normalizer(const NormSpec& spec, const PointSet& set);

void write_normalizer(const NormSpec& spec, const std::filesystem::path& path);
NormSpec read_normalizer(const std::filesystem::path& path);

enum class Protocol : std::uint8_t { random, blocked };
enum class Partition : std::uint8_t { train, val, test };

const char* to_string(Protocol p);
const char* to_string(Partition p);
Protocol protocol_from_string(const std::string& s);
Partition partition_from_string(const std::string& s);

struct SplitAssignment {
    Protocol protocol = Protocol::random;
    std::vector<Partition> tags;
    std::vector<std::string> block_ids;  // empty under the random protocol
    double block_deg = 0.0;
    std::optional<int> doy_bin_days;

    std::vector<std::size_t> indices(Partition p) const;
    std::size_t count(Partition p) const;
};

SplitAssignment split_random(std::size_t n, double test_frac, double val_frac, std::uint64_t seed);
inline SplitAssignment split_random(const PointSet& set, double test_frac, double val_frac, std::uint64_t seed) {
    return split_random(set.size(), test_frac, val_frac, seed);
}

struct BlockedSplitOptions {
    double block_deg = 5.0;
    std::optional<int> doy_bin_days;
    double test_frac = 0.2;
    double val_frac = 0.1;
};

SplitAssignment split_blocked(const PointSet& set, const BlockedSplitOptions& options, std::uint64_t seed);

// "i:j" or "i:j:k" from raw coordinates.
std::string block_id(std::span<const double> raw, double block_deg, std::optional<int> doy_bin_days);

void write_split(const SplitAssignment& split, const std::filesystem::path& path);
SplitAssignment read_split(const std::filesystem::path& path);

/// Pixel-centre samples (x + 0.5, y + 0.5) labelled from the mask. Draws
/// without replacement when n fits in the image, with replacement otherwise.
PointSet sample_pixels_from_mask(const BinaryRaster& mask, std::size_t n, std::uint64_t seed);

}  // namespace fieldloom
