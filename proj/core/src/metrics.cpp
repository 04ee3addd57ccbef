#include "fieldloom/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "fieldloom/errors.hpp"
#include "fieldloom/recon.hpp"
#include "fieldloom/rng.hpp"
#include "text_util.hpp"

namespace fieldloom {

std::size_t ScoredSet::positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

namespace {

void check_scored(const ScoredSet& s) {
    if (s.scores.size() != s.labels.size()) throw UsageError("score and label counts differ");
    for (auto y : s.labels)
        if (y > 1) throw DataError("labels must be 0 or 1");
}

}  // namespace

double roc_auc(const ScoredSet& s) {
    check_scored(s);
    const std::size_t pos = s.positives();
    const std::size_t neg = s.size() - pos;
    if (pos == 0 || neg == 0) throw DataError("roc_auc needs at least one positive and one negative");

    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[a] < s.scores[b]; });

    // Twice the Mann-Whitney count, kept integral until the final division.
    std::uint64_t twice_wins = 0;
    std::uint64_t neg_below = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::uint64_t pos_g = 0, neg_g = 0;
        while (j < order.size() && s.scores[order[j]] == s.scores[order[i]]) {
            (s.labels[order[j]] ? pos_g : neg_g)++;
            ++j;
        }
        twice_wins += 2 * pos_g * neg_below + pos_g * neg_g;
        neg_below += neg_g;
        i = j;
    }
    return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double pr_auc(const ScoredSet& s) {
    check_scored(s);
    const std::size_t pos = s.positives();
    if (pos == 0) throw DataError("pr_auc needs at least one positive");

    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[a] > s.scores[b]; });

    double ap = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::size_t pos_g = 0;
        while (j < order.size() && s.scores[order[j]] == s.scores[order[i]]) {
            pos_g += s.labels[order[j]];
            ++j;
        }
        tp += pos_g;
        seen += j - i;
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        for (std::size_t k = 0; k < pos_g; ++k) ap += precision;
        i = j;
    }
    return ap / static_cast<double>(pos);
}

PointwiseMetrics pointwise_metrics(const ScoredSet& s, double threshold) {
    check_scored(s);
    PointwiseMetrics m;
    if (s.size() == 0) return m;
    constexpr double eps = 1e-12;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double ll = 0.0, brier = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double p = std::clamp(s.scores[i], eps, 1.0 - eps);
        const double y = s.labels[i];
        ll -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        brier += (s.scores[i] - y) * (s.scores[i] - y);
        const bool predicted = s.scores[i] >= threshold;
        if (predicted && s.labels[i]) ++tp;
        else if (predicted) ++fp;
        else if (s.labels[i]) ++fn;
        else ++tn;
    }
    const double n = static_cast<double>(s.size());
    m.logloss = ll / n;
    m.brier = brier / n;
    m.accuracy = static_cast<double>(tp + tn) / n;
    m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

double ece(const ScoredSet& s, int bins) {
    check_scored(s);
    if (bins < 1) throw UsageError("ece needs at least one bin");
    if (s.size() == 0) return 0.0;
    std::vector<double> conf(bins, 0.0), acc(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double p = std::clamp(s.scores[i], 0.0, 1.0);
        const int b = std::min(bins - 1, static_cast<int>(std::floor(p * bins)));
        conf[b] += s.scores[i];
        acc[b] += s.labels[i];
        ++count[b];
    }
    double total = 0.0;
    const double n = static_cast<double>(s.size());
    for (int b = 0; b < bins; ++b) {
        if (!count[b]) continue;
        const double nb = static_cast<double>(count[b]);
        total += nb / n * std::abs(acc[b] / nb - conf[b] / nb);
    }
    return total;
}

const char* to_string(Metric m) {
    switch (m) {
        case Metric::roc_auc: return "roc_auc";
        case Metric::pr_auc: return "pr_auc";
        case Metric::logloss: return "logloss";
        case Metric::brier: return "brier";
        case Metric::acc_at_05: return "acc_at_05";
        case Metric::f1_at_05: return "f1_at_05";
        case Metric::ece: return "ece";
    }
    return "?";
}

Metric metric_from_string(const std::string& s) {
    for (auto m : {Metric::roc_auc, Metric::pr_auc, Metric::logloss, Metric::brier, Metric::acc_at_05,
                   Metric::f1_at_05, Metric::ece})
        if (s == to_string(m)) return m;
    throw UsageError("unknown metric '" + s + "'");
}

double compute_metric(Metric m, const ScoredSet& s) {
    switch (m) {
        case Metric::roc_auc: return roc_auc(s);
        case Metric::pr_auc: return pr_auc(s);
        case Metric::logloss: return pointwise_metrics(s).logloss;
        case Metric::brier: return pointwise_metrics(s).brier;
        case Metric::acc_at_05: return pointwise_metrics(s).accuracy;
        case Metric::f1_at_05: return pointwise_metrics(s).f1;
        case Metric::ece: return ece(s);
    }
    return 0.0;
}

namespace {

double percentile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Interval bootstrap_ci(const ScoredSet& s, Metric metric, const BootstrapOptions& options) {
    check_scored(s);
    if (options.resamples < 1) throw UsageError("bootstrap needs at least one resample");
    if (s.size() == 0) throw DataError("bootstrap on an empty set");
    const bool needs_pos = metric == Metric::roc_auc || metric == Metric::pr_auc;
    const bool needs_neg = metric == Metric::roc_auc;
    compute_metric(metric, s);  // surfaces an uncomputable metric up front

    const std::size_t n = s.size();
    Rng rng(options.seed, Stream::bootstrap);
    std::vector<double> scores(n), values;
    std::vector<std::uint8_t> labels(n);
    values.reserve(static_cast<std::size_t>(options.resamples));
    int redraws = 0;
    while (static_cast<int>(values.size()) < options.resamples) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(rng.below(n));
            scores[i] = s.scores[k];
            labels[i] = s.labels[k];
            pos += labels[i];
        }
        if ((needs_pos && pos == 0) || (needs_neg && pos == n)) {
            if (++redraws > options.max_redraws)
                throw DataError("bootstrap: too many single-class resamples (" + std::to_string(redraws) + ")");
            continue;
        }
        values.push_back(compute_metric(metric, ScoredSet{scores, labels}));
    }
    std::sort(values.begin(), values.end());
    return {percentile(values, 0.025), percentile(values, 0.975)};
}

void MetricReport::set(const std::string& name, double value, std::optional<Interval> ci) {
    for (auto& e : entries)
        if (e.name == name) {
            e.value = value;
            e.ci = ci;
            return;
        }
    entries.push_back({name, value, ci});
}

const MetricEntry* MetricReport::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

double MetricReport::value(const std::string& name) const {
    const auto* e = find(name);
    if (!e) throw UsageError("report has no metric '" + name + "'");
    return e->value;
}

void MetricReport::set_meta(const std::string& key, const std::string& value) {
    for (auto& [k, v] : metadata)
        if (k == key) {
            v = value;
            return;
        }
    metadata.emplace_back(key, value);
}

std::optional<std::string> MetricReport::meta(const std::string& key) const {
    for (const auto& [k, v] : metadata)
        if (k == key) return v;
    return std::nullopt;
}

void write_report(const MetricReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& [k, v] : report.metadata) out << '#' << k << '=' << v << '\n';
    out << "metric,value,ci_lo,ci_hi\n";
    for (const auto& e : report.entries) {
        out << e.name << ',' << detail::fmt17(e.value) << ',';
        if (e.ci) out << detail::fmt17(e.ci->lo) << ',' << detail::fmt17(e.ci->hi);
        else out << ',';
        out << '\n';
    }
}

MetricReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report " + path.string());
    MetricReport report;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw DataError("malformed report metadata: " + line);
            report.metadata.emplace_back(line.substr(1, eq - 1), line.substr(eq + 1));
            continue;
        }
        if (!header) {
            if (detail::trim(line) != "metric,value,ci_lo,ci_hi") throw DataError("malformed report header");
            header = true;
            continue;
        }
        const auto f = detail::split(line);
        if (f.size() != 4) throw DataError("malformed report row: " + line);
        const auto v = detail::parse_double(f[1]);
        if (!v) throw DataError("bad metric value: " + line);
        std::optional<Interval> ci;
        if (!f[2].empty() || !f[3].empty()) {
            const auto lo = detail::parse_double(f[2]);
            const auto hi = detail::parse_double(f[3]);
            if (!lo || !hi) throw DataError("bad interval: " + line);
            ci = Interval{*lo, *hi};
        }
        report.entries.push_back({f[0], *v, ci});
    }
    if (!header) throw DataError("report has no metric table: " + path.string());
    return report;
}

MetricReport classification_report(const ScoredSet& s, const ReportOptions& options) {
    check_scored(s);
    MetricReport r;
    r.set_meta("n", std::to_string(s.size()));
    r.set_meta("positives", std::to_string(s.positives()));
    r.set_meta("threshold", detail::fmt17(options.threshold));
    r.set_meta("ece_bins", std::to_string(options.ece_bins));

    std::optional<Interval> roc_ci, pr_ci;
    if (options.bootstrap) {
        r.set_meta("bootstrap_resamples", std::to_string(options.bootstrap->resamples));
        r.set_meta("bootstrap_seed", std::to_string(options.bootstrap->seed));
        roc_ci = bootstrap_ci(s, Metric::roc_auc, *options.bootstrap);
        pr_ci = bootstrap_ci(s, Metric::pr_auc, *options.bootstrap);
    }
    r.set("roc_auc", roc_auc(s), roc_ci);
    r.set("pr_auc", pr_auc(s), pr_ci);
    const auto pm = pointwise_metrics(s, options.threshold);
    r.set("logloss", pm.logloss);
    r.set("brier", pm.brier);
    r.set("acc_at_05", pm.accuracy);
    r.set("f1_at_05", pm.f1);
    r.set("precision_at_05", pm.precision);
    r.set("recall_at_05", pm.recall);
    r.set("ece", ece(s, options.ece_bins));
    return r;
}

MetricReport leakage_gap(const MetricReport& random_report, const MetricReport& blocked_report) {
    std::set<std::string> a, b;
    for (const auto& e : random_report.entries) a.insert(e.name);
    for (const auto& e : blocked_report.entries) b.insert(e.name);
    if (a != b) throw DataError("leakage gap needs reports with identical metric keys");

    MetricReport gap;
    gap.set_meta("protocol", "random-blocked");
    for (const auto& key : {"model", "dataset"})
        if (auto v = random_report.meta(key)) gap.set_meta(key, *v);
    for (const auto& e : random_report.entries) gap.set(e.name, e.value - blocked_report.value(e.name));
    return gap;
}

OverlapMetrics dice_iou(const BinaryRaster& pred, const BinaryRaster& gt) {
    if (pred.width() != gt.width() || pred.height() != gt.height()) throw UsageError("mask shapes differ");
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    const auto& a = pred.bits();
    const auto& b = gt.bits();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] && b[i]) ++tp;
        else if (a[i]) ++fp;
        else if (b[i]) ++fn;
        else ++tn;
    }
    OverlapMetrics m;
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(a.size());
    if (tp + fp + fn == 0) {
        m.dice = m.iou = m.precision = m.recall = m.f1 = 1.0;
        return m;
    }
    m.dice = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    m.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.dice;
    return m;
}

BinaryRaster boundary_of(const BinaryRaster& mask) {
    const int w = mask.width(), h = mask.height();
    BinaryRaster out(w, h, 0);
    auto bg = [&](int x, int y) { return x < 0 || y < 0 || x >= w || y >= h || !mask.at(x, y); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(x, y) && (bg(x - 1, y) || bg(x + 1, y) || bg(x, y - 1) || bg(x, y + 1))) out.set(x, y, true);
    return out;
}

namespace {

// Share of `from` boundary pixels with a `to` boundary pixel within tolerance.
double matched_fraction(const BinaryRaster& from, const BinaryRaster& to, int tol) {
    const int w = from.width(), h = from.height();
    const long long tol2 = static_cast<long long>(tol) * tol;
    std::size_t total = 0, matched = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!from.at(x, y)) continue;
            ++total;
            bool hit = false;
            for (int dy = -tol; dy <= tol && !hit; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -tol; dx <= tol; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    if (static_cast<long long>(dx) * dx + static_cast<long long>(dy) * dy > tol2) continue;
                    if (to.at(xx, yy)) {
                        hit = true;
                        break;
                    }
                }
            }
            matched += hit;
        }
    return total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0;
}

}  // namespace

double boundary_f1(const BinaryRaster& pred, const BinaryRaster& gt, int tolerance_px) {
    if (tolerance_px < 0) throw UsageError("boundary tolerance must be >= 0");
    if (pred.width() != gt.width() || pred.height() != gt.height()) throw UsageError("mask shapes differ");
    const auto bp = boundary_of(pred);
    const auto bg = boundary_of(gt);
    const bool ep = bp.count_ones() == 0, eg = bg.count_ones() == 0;
    if (ep && eg) return 1.0;
    if (ep || eg) return 0.0;
    const double precision = matched_fraction(bp, bg, tolerance_px);
    const double recall = matched_fraction(bg, bp, tolerance_px);
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

double best_dice_threshold(const ProbabilityImage& probs, const BinaryRaster& gt) {
    if (probs.width != gt.width() || probs.height != gt.height()) throw UsageError("probability image and mask shapes differ");
    double best_t = 0.01, best = -1.0;
    for (int k = 1; k <= 99; ++k) {
        const double t = k / 100.0;
        const double dice = dice_iou(probs.threshold(t), gt).dice;
        if (dice > best) {
            best = dice;
            best_t = t;
        }
    }
    return best_t;
}

double median(std::vector<double> values) {
    if (values.empty()) throw UsageError("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

ThresholdSelection select_thresholds(std::span<const ProbabilityImage> probs, std::span<const BinaryRaster> gts) {
    if (probs.empty()) throw UsageError("threshold selection needs at least one image");
    if (probs.size() != gts.size()) throw UsageError("probability images and masks differ in count");
    ThresholdSelection sel;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (gts[i].degenerate()) throw DataError("degenerate mask passed to threshold selection");
        sel.per_image.push_back(best_dice_threshold(probs[i], gts[i]));
    }
    sel.global = median(sel.per_image);
    return sel;
}

double convex_hull_area(std::span<const double> xy) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i + 1 < xy.size(); i += 2) pts.emplace_back(xy[i], xy[i + 1]);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return 0.0;

    auto cross = [](const auto& o, const auto& a, const auto& b) {
        return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);

    double twice = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        twice += a.first * b.second - b.first * a.second;
    }
    return std::abs(twice) / 2.0;
}

FieldSummary field_summary(const ProbabilityField& field, const PointSet& presences, double threshold) {
    const auto free = field.grid.free_axes();
    if (free.size() != 2) throw UsageError("field summary needs a field with exactly two free axes");
    if (presences.dim != field.grid.dim()) throw UsageError("presence dimension does not match the field");
    const auto& ax = field.grid.axes[free[0]];
    const auto& ay = field.grid.axes[free[1]];
    const std::size_t M = field.values.size();
    if (M != static_cast<std::size_t>(ax.resolution) * ay.resolution) throw UsageError("field size does not match its grid");

    FieldSummary out;
    const double cell_area = ax.cell_width() * ay.cell_width();
    const auto above = std::count_if(field.values.begin(), field.values.end(), [&](double p) { return p >= threshold; });
    out.area_above_threshold = static_cast<double>(above) * cell_area;

    std::vector<double> xy;
    for (std::size_t i = 0; i < presences.size(); ++i) {
        if (!presences.labels[i]) continue;
        const auto p = presences.point(i);
        xy.push_back(p[free[0]]);
        xy.push_back(p[free[1]]);
    }
    out.presences = xy.size() / 2;
    out.eoo = convex_hull_area(xy);
    if (out.presences == 0) return out;

    std::vector<std::size_t> rank(M);
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](auto a, auto b) { return field.values[a] > field.values[b]; });
    auto top_mask = [&](std::size_t pct) {
        const std::size_t top = std::max<std::size_t>(1, (M * pct + 99) / 100);
        std::vector<std::uint8_t> mask(M, 0);
        for (std::size_t r = 0; r < top; ++r) mask[rank[r]] = 1;
        return mask;
    };
    const auto top1 = top_mask(1);
    const auto top5 = top_mask(5);

    auto cell_index = [](const GridAxis& a, double v) -> long long {
        if (v < a.min || v > a.max) return -1;
        const auto i = static_cast<long long>(std::floor((v - a.min) / a.cell_width()));
        return std::min<long long>(i, a.resolution - 1);
    };
    std::size_t hit1 = 0, hit5 = 0;
    for (std::size_t i = 0; i < out.presences; ++i) {
        const auto cx = cell_index(ax, xy[2 * i]);
        const auto cy = cell_index(ay, xy[2 * i + 1]);
        if (cx < 0 || cy < 0) {
            ++out.outside_field;
            continue;
        }
        const auto m = static_cast<std::size_t>(cy) * ax.resolution + static_cast<std::size_t>(cx);
        hit1 += top1[m];
        hit5 += top5[m];
    }
    out.hit_at_1pct = static_cast<double>(hit1) / static_cast<double>(out.presences);
    out.hit_at_5pct = static_cast<double>(hit5) / static_cast<double>(out.presences);
    return out;
}

}  // namespace fieldloom
