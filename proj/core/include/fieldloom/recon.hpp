#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fieldloom/dataset.hpp"
#include "fieldloom/fields.hpp"
#include "fieldloom/raster.hpp"

namespace fieldloom {

struct GridAxis {
    double min = 0.0;
    double max = 1.0;
    int resolution = 2;
    std::optional<double> fixed;  // held dimension, e.g. a day-of-year slice

    double cell_width() const { return (max - min) / resolution; }
    double center(int i) const { return min + (i + 0.5) * (max - min) / resolution; }
};

/// Regular cell-centre grid. Free axes vary with axis 0 fastest.
struct GridSpec {
    std::vector<GridAxis> axes;
    std::size_t max_points = 100'000'000;

    void validate() const;
    int dim() const { return static_cast<int>(axes.size()); }
    std::vector<int> free_axes() const;
    std::size_t count() const;

    /// From CLI-style strings: bbox "lo0,hi0,lo1,hi1" and res "R0,R1" cover the
    /// free axes in order; each slice "dim=value" inserts a held axis, where dim
    /// is an index or one of lon/lat/doy/x/y.
    static GridSpec parse(const std::string& bbox, const std::string& res, const std::vector<std::string>& slices);
};

struct ProbabilityField {
    GridSpec grid;
    std::vector<double> values;
};

// n x d row-major cell centres.
std::vector<double> make_grid(const GridSpec& spec);

/// sigmoid(forward(normalize(x))) at every cell centre. Work is split into
/// contiguous chunks over `threads` workers; the result does not depend on it.
ProbabilityField evaluate_grid(const FieldModel& model, const NormSpec& norm, const GridSpec& spec, int threads = 1);

// dim0,dim1[,dim2],p with a header row.
void write_field_csv(const ProbabilityField& field, const std::filesystem::path& path);
// Recovers the grid from the distinct cell centres of a written field.
ProbabilityField read_field_csv(const std::filesystem::path& path);

// 2 free axes required. With north_up the last row holds the lowest axis-1 cells.
ProbabilityImage field_image(const ProbabilityField& field, bool north_up);

ProbabilityImage reconstruct_probability(const FieldModel& model, const NormSpec& norm, int width, int height,
                                         int threads = 1);

// Evaluates pixel centres, then binarizes at p >= threshold; threshold must be in (0,1).
BinaryRaster reconstruct_mask(const FieldModel& model, const NormSpec& norm, int width, int height, double threshold,
                              int threads = 1);

struct BenchResult {
    std::size_t params = 0;
    std::size_t macs = 0;
    double throughput = 0.0;  // points / second
    double latency = 0.0;     // seconds / point
    std::size_t batch_size = 0;
    int repeats = 0;
    std::vector<double> seconds;  // per timed repeat
};

// Median wall time of `repeats` batched forward passes after one warm-up.
BenchResult bench(const FieldModel& model, std::size_t n_points = 50'000, int repeats = 3, std::uint64_t seed = 0,
                  int threads = 1);

}  // namespace fieldloom
