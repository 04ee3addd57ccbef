#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fieldloom/dataset.hpp"
#include "fieldloom/fields.hpp"
#include "fieldloom/metrics.hpp"
#include "fieldloom/optim.hpp"
#include "fieldloom/raster.hpp"

namespace fieldloom {

struct SegmentOptions {
    ArchSpec arch = ArchSpec::defaults(ArchKind::sine, 2);
    TrainConfig train = [] {
        TrainConfig c;
        c.max_epochs = 8;
        return c;
    }();
    std::size_t samples = 0;  // pixels per image; 0 samples every pixel
    double test_frac = 0.2;
    double val_frac = 0.1;
    std::uint64_t seed = 0;
    std::vector<int> tolerances{1, 2, 4, 8};
    int threads = 1;
};

struct SegmentedImage {
    std::size_t index = 0;  // position in the input sequence
    FieldModel model;
    NormSpec norm;
    ProbabilityImage probs;
    double t_star = 0.5;
    TrainTrace trace;
};

/// Pixel sampling, split, training and full-grid reconstruction of one mask.
SegmentedImage fit_mask(const BinaryRaster& mask, const SegmentOptions& options, std::size_t index = 0);

struct SegmentationResult {
    std::vector<SegmentedImage> images;
    std::vector<std::size_t> excluded;  // degenerate masks
    ThresholdSelection thresholds;
    std::vector<MetricReport> per_image;
    MetricReport summary;  // means over images, masks thresholded at t_global
};

SegmentationResult segment_masks(std::span<const BinaryRaster> masks, const SegmentOptions& options);

}  // namespace fieldloom
