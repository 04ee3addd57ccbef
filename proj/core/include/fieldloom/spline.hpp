#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fieldloom/dataset.hpp"

namespace fieldloom {

struct SplineSpec {
    int degree = 3;
    int basis_count = 12;       // per dimension
    std::vector<Bounds> bounds;  // knot bounds per input dimension
    double lambda = 1e-3;
    std::size_t max_features = 20'000;

    void validate() const;
    int dim() const { return static_cast<int>(bounds.size()); }
    std::size_t feature_count() const;  // basis_count^d, without the intercept
    std::vector<double> knots(int k) const;
};

// Bounds from the full coordinate range of `all` (taken before any split).
SplineSpec spline_spec_for(const PointSet& all, int basis_count = 12, double lambda = 1e-3, int degree = 3);

/// Clamped B-spline basis of dimension k at x; x outside the bounds is
/// clamped first.
std::vector<double> bspline_basis(const SplineSpec& spec, int k, double x);

/// Tensor-product design. Each row stores only its (degree+1)^d non-zero
/// columns; column = sum_k i_k * basis_count^(d-1-k), so the first dimension
/// varies slowest. The intercept is an implicit final column of ones.
struct SplineDesign {
    std::size_t rows = 0;
    std::size_t features = 0;
    std::size_t nnz_per_row = 0;
    std::vector<std::uint32_t> cols;
    std::vector<double> values;

    std::vector<double> dense_row(std::size_t i) const;  // features + 1 entries
    double dot(std::size_t i, std::span<const double> w) const;
};

SplineDesign tensor_design(const SplineSpec& spec, std::span<const double> X);

struct SplineModel {
    SplineSpec spec;
    std::vector<double> coefficients;  // features, then intercept
};

struct SplineFitOptions {
    int max_iterations = 10'000;
    double tolerance = 1e-6;                     // gradient norm
    std::optional<std::vector<double>> initial;  // zero when absent
};

struct SplineFit {
    SplineModel model;
    double loss = 0.0;  // mean BCE + lambda * |w|^2 at the returned coefficients
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Penalized objective; the intercept is not penalized.
double spline_objective(const SplineSpec& spec, const SplineDesign& design, std::span<const std::uint8_t> labels,
                        std::span<const double> w);

/// L-BFGS with backtracking line search. Needs both
/// classes. Non-convergence is reported through SplineFit, not thrown.
SplineFit fit_spline(const SplineSpec& spec, const PointSet& train, const SplineFitOptions& options = {});

std::vector<double> predict_spline(const SplineModel& model, std::span<const double> X);
std::vector<double> predict_spline(const SplineModel& model, const PointSet& set);

void save_spline(const SplineModel& model, const std::filesystem::path& path);
SplineModel load_spline(const std::filesystem::path& path);

}  // namespace fieldloom
