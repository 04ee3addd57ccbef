#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fieldloom/dataset.hpp"
#include "fieldloom/raster.hpp"

namespace fieldloom {

struct ProbabilityField;

/// Probabilities with binary labels. Views only; the caller owns the data.
struct ScoredSet {
    std::span<const double> scores;
    std::span<const std::uint8_t> labels;

    std::size_t size() const { return scores.size(); }
    std::size_t positives() const;
};

// Mann-Whitney form, ties count one half.
double roc_auc(const ScoredSet& s);

// Average precision over descending score, tie groups resolved together.
double pr_auc(const ScoredSet& s);

struct PointwiseMetrics {
    double logloss = 0.0;
    double brier = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Predicts positive when score >= threshold; logloss clamps to [1e-12, 1 - 1e-12].
PointwiseMetrics pointwise_metrics(const ScoredSet& s, double threshold = 0.5);

double ece(const ScoredSet& s, int bins = 10);

enum class Metric : std::uint8_t { roc_auc, pr_auc, logloss, brier, acc_at_05, f1_at_05, ece };
const char* to_string(Metric m);
Metric metric_from_string(const std::string& s);
double compute_metric(Metric m, const ScoredSet& s);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct BootstrapOptions {
    int resamples = 1000;
    std::uint64_t seed = 0;
    int max_redraws = 10000;  // single-class resamples tolerated in total
};

/// Percentile (2.5 / 97.5, linearly interpolated) bootstrap interval.
/// Resamples that lose a class are redrawn when the metric needs both.
Interval bootstrap_ci(const ScoredSet& s, Metric metric, const BootstrapOptions& options);

struct MetricEntry {
    std::string name;
    double value = 0.0;
    std::optional<Interval> ci;
};

struct MetricReport {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<MetricEntry> entries;

    void set(const std::string& name, double value, std::optional<Interval> ci = std::nullopt);
    const MetricEntry* find(const std::string& name) const;
    double value(const std::string& name) const;
    void set_meta(const std::string& key, const std::string& value);
    std::optional<std::string> meta(const std::string& key) const;
};

// '#key=value' metadata lines, then metric,value,ci_lo,ci_hi rows.
void write_report(const MetricReport& report, const std::filesystem::path& path);
MetricReport read_report(const std::filesystem::path& path);

struct ReportOptions {
    double threshold = 0.5;
    int ece_bins = 10;
    std::optional<BootstrapOptions> bootstrap;  // CI for roc_auc and pr_auc
};

// The full classification suite: roc_auc, pr_auc, logloss, brier, acc_at_05,
// f1_at_05, precision_at_05, recall_at_05, ece.
MetricReport classification_report(const ScoredSet& s, const ReportOptions& options = {});

/// Δ = random - blocked per metric; positive values mean the random split
/// looked better (for losses, negative means lower loss under random).
MetricReport leakage_gap(const MetricReport& random_report, const MetricReport& blocked_report);

struct OverlapMetrics {
    double dice = 0.0;
    double iou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

// Foreground overlap; two empty masks score 1.
OverlapMetrics dice_iou(const BinaryRaster& pred, const BinaryRaster& gt);

// Foreground pixels with a background 4-neighbour; outside the image counts as background.
BinaryRaster boundary_of(const BinaryRaster& mask);

/// F1 of boundary pixels matched within Euclidean distance <= tolerance_px.
double boundary_f1(const BinaryRaster& pred, const BinaryRaster& gt, int tolerance_px);

struct ThresholdSelection {
    std::vector<double> per_image;  // t* for each image
    double global = 0.0;            // median of per_image
};

// Grid 0.01..0.99; lowest threshold wins ties.
double best_dice_threshold(const ProbabilityImage& probs, const BinaryRaster& gt);
ThresholdSelection select_thresholds(std::span<const ProbabilityImage> probs, std::span<const BinaryRaster> gts);
double median(std::vector<double> values);

struct FieldSummary {
    double area_above_threshold = 0.0;
    double eoo = 0.0;
    double hit_at_1pct = 0.0;
    double hit_at_5pct = 0.0;
    std::size_t presences = 0;
    std::size_t outside_field = 0;
};

// Convex hull area (shoelace) of 2-D points, row-major pairs.
double convex_hull_area(std::span<const double> xy);

/// Area above threshold in squared coordinate units, presence convex-hull
/// area, and the share of presences inside the top 1% / 5% of cells.
/// Uses label-1 records of `presences`, projected onto the field's free axes.
FieldSummary field_summary(const ProbabilityField& field, const PointSet& presences, double threshold = 0.5);

}  // namespace fieldloom
