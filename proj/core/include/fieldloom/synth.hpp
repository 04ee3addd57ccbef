#pragma once

#include <cstdint>

#include "fieldloom/dataset.hpp"
#include "fieldloom/raster.hpp"

namespace fieldloom {

/// Presences from two Gaussian bumps inside [0,10]^2 plus an equal number of
/// uniform background points. Planar coordinates.
PointSet synth_two_bump(std::size_t n, std::uint64_t seed);

struct ClusterOptions {
    int clusters = 40;
    std::size_t per_cluster = 60;
    double spread_deg = 1.5;
    std::size_t background = 3000;
    Bounds lon{-60.0, 60.0};
    Bounds lat{-30.0, 30.0};
};

// Gaussian presence clusters over a lon/lat box with uniform background.
PointSet synth_clusters(const ClusterOptions& options, std::uint64_t seed);

// Star-shaped, leaf-like foreground blob.
BinaryRaster synth_leaf_mask(int width, int height, std::uint64_t seed);

}  // namespace fieldloom
