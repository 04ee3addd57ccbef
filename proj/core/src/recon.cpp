#include "fieldloom/recon.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "fieldloom/errors.hpp"
#include "fieldloom/metrics.hpp"
#include "fieldloom/optim.hpp"
#include "fieldloom/rng.hpp"
#include "text_util.hpp"

namespace fieldloom {

void GridSpec::validate() const {
    if (axes.empty()) throw UsageError("grid needs at least one axis");
    bool any_free = false;
    for (const auto& a : axes) {
        if (a.fixed) {
            if (!std::isfinite(*a.fixed)) throw UsageError("grid slice value must be finite");
            continue;
        }
        any_free = true;
        if (!(std::isfinite(a.min) && std::isfinite(a.max) && a.min < a.max)) throw UsageError("grid axis needs min < max");
        if (a.resolution < 2) throw UsageError("grid resolution must be >= 2 per free axis");
    }
    if (!any_free) throw UsageError("grid needs at least one free axis");
    if (count() > max_points) throw UsageError("grid has " + std::to_string(count()) + " points, above the cap");
}

std::vector<int> GridSpec::free_axes() const {
    std::vector<int> out;
    for (int k = 0; k < dim(); ++k)
        if (!axes[k].fixed) out.push_back(k);
    return out;
}

std::size_t GridSpec::count() const {
    std::size_t total = 1;
    for (const auto& a : axes)
        if (!a.fixed) total *= static_cast<std::size_t>(std::max(a.resolution, 0));
    return total;
}

namespace {

int axis_index(const std::string& name) {
    if (name == "lon" || name == "x") return 0;
    if (name == "lat" || name == "y") return 1;
    if (name == "doy") return 2;
    const auto v = detail::parse_int(name);
    if (!v || *v < 0 || *v > 16) throw UsageError("bad slice dimension '" + name + "'");
    return static_cast<int>(*v);
}

}  // namespace

GridSpec GridSpec::parse(const std::string& bbox, const std::string& res, const std::vector<std::string>& slices) {
    const auto b = detail::split(bbox);
    const auto r = detail::split(res);
    if (b.size() % 2 != 0 || b.empty()) throw UsageError("--bbox needs lo,hi pairs");
    const std::size_t free_count = b.size() / 2;
    if (r.size() != free_count) throw UsageError("--res needs one resolution per bbox pair");

    std::map<int, double> held;
    for (const auto& s : slices) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--slice expects dim=value, got '" + s + "'");
        const auto v = detail::parse_double(s.substr(eq + 1));
        if (!v) throw UsageError("bad slice value in '" + s + "'");
        held[axis_index(s.substr(0, eq))] = *v;
    }

    GridSpec spec;
    const int total = static_cast<int>(free_count + held.size());
    std::size_t next_free = 0;
    for (int k = 0; k < total; ++k) {
        GridAxis axis;
        if (auto it = held.find(k); it != held.end()) {
            axis.fixed = it->second;
        } else {
            if (next_free >= free_count) throw UsageError("slice dimensions leave a gap in the grid axes");
            const auto lo = detail::parse_double(b[2 * next_free]);
            const auto hi = detail::parse_double(b[2 * next_free + 1]);
            const auto R = detail::parse_int(r[next_free]);
            if (!lo || !hi || !R) throw UsageError("bad --bbox or --res value");
            axis.min = *lo;
            axis.max = *hi;
            axis.resolution = static_cast<int>(*R);
            ++next_free;
        }
        spec.axes.push_back(axis);
    }
    if (next_free != free_count) throw UsageError("slice dimensions do not fit the grid");
    spec.validate();
    return spec;
}

std::vector<double> make_grid(const GridSpec& spec) {
    spec.validate();
    const int d = spec.dim();
    const auto free = spec.free_axes();
    const std::size_t M = spec.count();
    std::vector<double> out(M * static_cast<std::size_t>(d));
    std::vector<int> idx(free.size(), 0);
    for (std::size_t m = 0; m < M; ++m) {
        double* x = out.data() + m * d;
        for (int k = 0; k < d; ++k)
            if (spec.axes[k].fixed) x[k] = *spec.axes[k].fixed;
        for (std::size_t f = 0; f < free.size(); ++f) x[free[f]] = spec.axes[free[f]].center(idx[f]);
        for (std::size_t f = 0; f < free.size(); ++f) {
            if (++idx[f] < spec.axes[free[f]].resolution) break;
            idx[f] = 0;
        }
    }
    return out;
}

namespace {

constexpr std::size_t kChunk = 8192;

// Normalized probabilities for raw points, chunked across workers.
std::vector<double> probabilities(const FieldModel& model, const NormSpec& norm, std::span<const double> raw, int threads) {
    const int d = model.spec.input_dim;
    const std::size_t n = raw.size() / d;
    std::vector<double> out(n);
    const std::size_t chunks = (n + kChunk - 1) / kChunk;

    auto work = [&](std::size_t first_chunk, std::size_t stride) {
        std::vector<double> x;
        for (std::size_t c = first_chunk; c < chunks; c += stride) {
            const std::size_t begin = c * kChunk, end = std::min(n, begin + kChunk);
            x.resize((end - begin) * d);
            for (std::size_t i = begin; i < end; ++i)
                norm.apply(raw.subspan(i * d, d), std::span<double>(x.data() + (i - begin) * d, d));
            const auto logits = forward_batch(model, x);
            for (std::size_t i = begin; i < end; ++i) out[i] = sigmoid(logits[i - begin]);
        }
    };

    const auto workers = static_cast<std::size_t>(std::clamp<std::size_t>(threads < 1 ? 1 : threads, 1, std::max<std::size_t>(chunks, 1)));
    if (workers <= 1) {
        work(0, 1);
        return out;
    }
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                work(w, workers);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    pool.clear();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace

ProbabilityField evaluate_grid(const FieldModel& model, const NormSpec& norm, const GridSpec& spec, int threads) {
    spec.validate();
    if (spec.dim() != model.spec.input_dim) throw UsageError("grid dimension does not match the model");
    if (norm.dim() != model.spec.input_dim) throw UsageError("normalizer dimension does not match the model");
    const auto raw = make_grid(spec);
    return {spec, probabilities(model, norm, raw, threads)};
}

void write_field_csv(const ProbabilityField& field, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    const int d = field.grid.dim();
    for (int k = 0; k < d; ++k) out << "dim" << k << ',';
    out << "p\n";
    const auto coords = make_grid(field.grid);
    for (std::size_t m = 0; m < field.values.size(); ++m) {
        for (int k = 0; k < d; ++k) out << detail::fmt17(coords[m * d + k]) << ',';
        out << detail::fmt17(field.values[m]) << '\n';
    }
}

ProbabilityField read_field_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open field " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty field file " + path.string());
    const auto header = detail::split(line);
    if (header.size() < 2 || header.back() != "p") throw DataError("malformed field header in " + path.string());
    const std::size_t d = header.size() - 1;

    std::vector<std::set<double>> distinct(d);
    ProbabilityField field;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split(line);
        if (f.size() != d + 1) throw DataError("malformed field row: " + line);
        for (std::size_t k = 0; k < d; ++k) {
            const auto v = detail::parse_double(f[k]);
            if (!v) throw DataError("bad field coordinate: " + line);
            distinct[k].insert(*v);
        }
        const auto p = detail::parse_double(f[d]);
        if (!p) throw DataError("bad field value: " + line);
        field.values.push_back(*p);
    }
    for (const auto& values : distinct) {
        GridAxis axis;
        if (values.size() == 1) {
            axis.fixed = *values.begin();
        } else {
            const double first = *values.begin(), last = *values.rbegin();
            axis.resolution = static_cast<int>(values.size());
            const double w = (last - first) / (axis.resolution - 1);
            axis.min = first - w / 2;
            axis.max = last + w / 2;
        }
        field.grid.axes.push_back(axis);
    }
    field.grid.validate();
    if (field.grid.count() != field.values.size()) throw DataError("field rows do not form a complete grid");
    return field;
}

ProbabilityImage field_image(const ProbabilityField& field, bool north_up) {
    const auto free = field.grid.free_axes();
    if (free.size() != 2) throw UsageError("field image needs exactly two free axes");
    ProbabilityImage img;
    img.width = field.grid.axes[free[0]].resolution;
    img.height = field.grid.axes[free[1]].resolution;
    img.values.resize(field.values.size());
    for (int r = 0; r < img.height; ++r) {
        const int src = north_up ? img.height - 1 - r : r;
        std::copy_n(field.values.begin() + static_cast<std::ptrdiff_t>(src) * img.width, img.width,
                    img.values.begin() + static_cast<std::ptrdiff_t>(r) * img.width);
    }
    return img;
}

ProbabilityImage reconstruct_probability(const FieldModel& model, const NormSpec& norm, int width, int height, int threads) {
    GridSpec spec;
    spec.axes = {GridAxis{0.0, static_cast<double>(width), width, {}},
                 GridAxis{0.0, static_cast<double>(height), height, {}}};
    return field_image(evaluate_grid(model, norm, spec, threads), false);
}

BinaryRaster reconstruct_mask(const FieldModel& model, const NormSpec& norm, int width, int height, double threshold,
                              int threads) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("mask threshold must lie in (0,1)");
    return reconstruct_probability(model, norm, width, height, threads).threshold(threshold);
}

BenchResult bench(const FieldModel& model, std::size_t n_points, int repeats, std::uint64_t seed, int threads) {
    if (n_points < 1) throw UsageError("benchmark needs at least one point");
    if (repeats < 1) throw UsageError("benchmark needs at least one repeat");
    const int d = model.spec.input_dim;
    Rng rng(seed, Stream::bench);
    std::vector<double> pts(n_points * d);
    for (auto& v : pts) v = rng.uniform(-1.0, 1.0);

    // Identity normalizer: points are already in [-1, 1].
    NormSpec identity;
    identity.bounds.assign(d, Bounds{-1.0, 1.0});
    identity.degenerate.assign(d, 0);

    BenchResult r;
    r.params = count_params(model.spec);
    r.macs = estimate_macs(model.spec);
    r.batch_size = n_points;
    r.repeats = repeats;
    probabilities(model, identity, pts, threads);  // warm-up
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto p = probabilities(model, identity, pts, threads);
        const auto t1 = std::chrono::steady_clock::now();
        r.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
        if (p.size() != n_points) throw NumericError("benchmark produced the wrong number of outputs");
    }
    const double t = median(r.seconds);
    r.throughput = static_cast<double>(n_points) / t;
    r.latency = t / static_cast<double>(n_points);
    return r;
}

}  // namespace fieldloom
