#include "fieldloom/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "fieldloom/errors.hpp"
#include "fieldloom/rng.hpp"
#include "text_util.hpp"

namespace fieldloom {

const char* to_string(Source s) {
    switch (s) {
        case Source::presence: return "presence";
        case Source::background: return "background";
        case Source::mask_pixel: return "mask-pixel";
    }
    return "?";
}

Source source_from_string(const std::string& s) {
    if (s == "presence") return Source::presence;
    if (s == "background") return Source::background;
    if (s == "mask-pixel") return Source::mask_pixel;
    throw DataError("unknown source tag '" + s + "'");
}

const char* to_string(Protocol p) { return p == Protocol::random ? "random" : "blocked"; }

const char* to_string(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::val: return "val";
        case Partition::test: return "test";
    }
    return "?";
}

Protocol protocol_from_string(const std::string& s) {
    if (s == "random") return Protocol::random;
    if (s == "blocked") return Protocol::blocked;
    throw UsageError("unknown protocol '" + s + "' (expected random or blocked)");
}

Partition partition_from_string(const std::string& s) {
    if (s == "train") return Partition::train;
    if (s == "val") return Partition::val;
    if (s == "test") return Partition::test;
    throw DataError("unknown partition '" + s + "'");
}

void PointSet::push_back(std::span<const double> x, std::uint8_t label, Source source, bool ok) {
    if (static_cast<int>(x.size()) != dim) throw UsageError("coordinate length does not match set dimension");
    coords.insert(coords.end(), x.begin(), x.end());
    labels.push_back(label ? 1 : 0);
    sources.push_back(source);
    valid.push_back(ok ? 1 : 0);
}

std::size_t PointSet::count_positive() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

PointSet PointSet::subset(std::span<const std::size_t> indices) const {
    PointSet out(dim, geographic);
    out.coords.reserve(indices.size() * static_cast<std::size_t>(dim));
    for (auto i : indices) out.push_back(point(i), labels[i], sources[i], valid[i] != 0);
    return out;
}

PointSet concat(const PointSet& a, const PointSet& b) {
    if (a.dim != b.dim) throw UsageError("cannot concatenate point sets of different dimension");
    PointSet out = a;
    out.coords.insert(out.coords.end(), b.coords.begin(), b.coords.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.sources.insert(out.sources.end(), b.sources.begin(), b.sources.end());
    out.valid.insert(out.valid.end(), b.valid.begin(), b.valid.end());
    return out;
}

Schema Schema::parse(const std::string& coord_list, const std::string& label_column, bool geographic) {
    Schema s;
    s.coord_columns = detail::split(coord_list);
    s.label_column = label_column;
    s.geographic = geographic;
    if (s.coord_columns.size() < 2 || s.coord_columns.size() > 3)
        throw UsageError("schema needs 2 or 3 coordinate columns, got '" + coord_list + "'");
    return s;
}

LoadResult load_points(const std::filesystem::path& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open points file " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw DataError("points file is empty: " + path.string());
    const auto header = detail::split(line);
    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };

    std::vector<std::size_t> coord_idx;
    for (const auto& name : schema.coord_columns) {
        const auto idx = column(name);
        if (!idx) throw DataError("missing column '" + name + "' in " + path.string());
        coord_idx.push_back(*idx);
    }
    std::optional<std::size_t> label_idx;
    if (!schema.label_column.empty()) {
        label_idx = column(schema.label_column);
        if (!label_idx) throw DataError("missing column '" + schema.label_column + "' in " + path.string());
    }
    const auto source_idx = column("source");

    LoadResult result{PointSet(static_cast<int>(schema.coord_columns.size()), schema.geographic), 0};
    std::vector<double> x(coord_idx.size());
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split(line);
        bool ok = true;
        for (std::size_t k = 0; k < coord_idx.size(); ++k) {
            std::optional<double> v;
            if (coord_idx[k] < fields.size()) v = detail::parse_double(fields[coord_idx[k]]);
            x[k] = v.value_or(std::numeric_limits<double>::quiet_NaN());
            ok = ok && v.has_value();
        }
        std::uint8_t label = 1;
        if (label_idx) {
            std::optional<double> v;
            if (*label_idx < fields.size()) v = detail::parse_double(fields[*label_idx]);
            if (v && (*v == 0.0 || *v == 1.0)) {
                label = *v == 1.0 ? 1 : 0;
            } else {
                ok = false;
                label = 0;
            }
        }
        Source source = label ? Source::presence : Source::background;
        if (source_idx && *source_idx < fields.size() && !fields[*source_idx].empty()) {
            try {
                source = source_from_string(fields[*source_idx]);
            } catch (const DataError&) {
                ok = false;
            }
        }
        if (!ok) ++result.bad_rows;
        result.points.push_back(x, label, source, ok);
    }
    if (result.points.empty()) throw DataError("no data rows after header in " + path.string());
    return result;
}

void write_points(const PointSet& set, const std::filesystem::path& path,
                  const std::vector<std::string>& coord_names) {
    if (static_cast<int>(coord_names.size()) != set.dim) throw UsageError("coordinate name count does not match dimension");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& name : coord_names) out << name << ',';
    out << "label,source\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (double v : set.point(i)) out << detail::fmt17(v) << ',';
        out << int(set.labels[i]) << ',' << to_string(set.sources[i]) << '\n';
    }
}

namespace {

bool in_geographic_range(std::span<const double> x) {
    if (x[0] < -180.0 || x[0] > 180.0) return false;
    if (x[1] < -90.0 || x[1] > 90.0) return false;
    if (x.size() > 2 && (x[2] < 1.0 || x[2] > 366.0)) return false;
    return true;
}

}  // namespace

PointSet clean(const PointSet& set) {
    PointSet out(set.dim, set.geographic);
    std::set<std::vector<double>> seen;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (!set.valid[i]) continue;
        const auto x = set.point(i);
        if (!std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) continue;
        if (set.geographic && !in_geographic_range(x)) continue;
        if (!seen.emplace(x.begin(), x.end()).second) continue;
        out.push_back(x, set.labels[i], set.sources[i]);
    }
    if (out.empty()) throw DataError("no usable records remain after cleaning");
    return out;
}

PointSet sample_background(const PointSet& presences, std::size_t n, std::uint64_t seed,
                           const std::optional<std::vector<Bounds>>& domain) {
    if (n < 1) throw UsageError("background sample count must be >= 1");

    std::vector<Bounds> box;
    if (domain) {
        box = *domain;
        if (static_cast<int>(box.size()) != presences.dim) throw UsageError("domain dimension does not match presences");
        for (const auto& b : box)
            if (!(b.low < b.high)) throw UsageError("explicit domain has empty extent");
    } else {
        if (presences.empty()) throw DataError("background sampling needs presences or an explicit domain");
        box.assign(presences.dim, {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
        for (std::size_t i = 0; i < presences.size(); ++i) {
            const auto x = presences.point(i);
            for (int k = 0; k < presences.dim; ++k) {
                box[k].low = std::min(box[k].low, x[k]);
                box[k].high = std::max(box[k].high, x[k]);
            }
        }
        if (presences.geographic && presences.dim == 3) box[2] = {1.0, 366.0};
        for (int k = 0; k < presences.dim; ++k)
            if (!(box[k].low < box[k].high))
                throw DataError("presence bounding box has zero extent in dimension " + std::to_string(k));
    }

    Rng rng(seed, Stream::background);
    PointSet out(presences.dim, presences.geographic);
    out.coords.reserve(n * static_cast<std::size_t>(presences.dim));
    std::vector<double> x(presences.dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < presences.dim; ++k) x[k] = rng.uniform(box[k].low, box[k].high);
        out.push_back(x, 0, Source::background);
    }
    return out;
}

double NormSpec::scale(int k) const { return degenerate[k] ? 0.0 : 2.0 / (bounds[k].high - bounds[k].low); }

double NormSpec::offset(int k) const {
    if (degenerate[k]) return 0.0;
    return -(bounds[k].high + bounds[k].low) / (bounds[k].high - bounds[k].low);
}

double NormSpec::apply(int k, double x) const {
    if (degenerate[k]) return 0.0;
    const auto& b = bounds[k];
    return (x - b.low) / (b.high - b.low) * 2.0 - 1.0;
}

double NormSpec::invert(int k, double y) const {
    const auto& b = bounds[k];
    if (degenerate[k]) return b.low;
    return b.low + (y + 1.0) * 0.5 * (b.high - b.low);
}

void NormSpec::apply(std::span<const double> raw, std::span<double> out) const {
    for (int k = 0; k < dim(); ++k) out[k] = apply(k, raw[k]);
}

NormSpec fit_normalizer(const PointSet& train) {
    if (train.empty()) throw DataError("cannot fit a normalizer on an empty set");
    NormSpec spec;
    spec.bounds.assign(train.dim, {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto x = train.point(i);
        for (int k = 0; k < train.dim; ++k) {
            spec.bounds[k].low = std::min(spec.bounds[k].low, x[k]);
            spec.bounds[k].high = std::max(spec.bounds[k].high, x[k]);
        }
    }
    spec.degenerate.assign(train.dim, 0);
    for (int k = 0; k < train.dim; ++k) {
        if (!(spec.bounds[k].low < spec.bounds[k].high)) {
            spec.degenerate[k] = 1;
            spec.warnings.push_back("dimension " + std::to_string(k) + " is constant; mapped to 0");
        }
    }
    return spec;
}

PointSet apply_normalizer(const NormSpec& spec, const PointSet& set) {
    if (spec.dim() != set.dim) throw UsageError("normalizer dimension does not match point set");
    PointSet out = set;
    out.geographic = false;
    for (std::size_t i = 0; i < set.size(); ++i) {
        std::span<double> dst(out.coords.data() + i * set.dim, static_cast<std::size_t>(set.dim));
        spec.apply(set.point(i), dst);
    }
    return out;
}

void write_normalizer(const NormSpec& spec, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "norm d=" << spec.dim() << '\n';
    for (int k = 0; k < spec.dim(); ++k)
        out << detail::fmt17(spec.bounds[k].low) << ',' << detail::fmt17(spec.bounds[k].high) << ','
            << int(spec.degenerate[k]) << '\n';
}

NormSpec read_normalizer(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open normalizer " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("norm d=", 0) != 0) throw DataError("malformed normalizer header in " + path.string());
    const auto d = detail::parse_int(line.substr(7));
    if (!d || *d < 1) throw DataError("malformed normalizer dimension");
    NormSpec spec;
    for (long long k = 0; k < *d; ++k) {
        if (!std::getline(in, line)) throw DataError("truncated normalizer file");
        const auto f = detail::split(line);
        if (f.size() != 3) throw DataError("malformed normalizer row");
        const auto lo = detail::parse_double(f[0]);
        const auto hi = detail::parse_double(f[1]);
        const auto deg = detail::parse_int(f[2]);
        if (!lo || !hi || !deg) throw DataError("malformed normalizer row");
        spec.bounds.push_back({*lo, *hi});
        spec.degenerate.push_back(*deg ? 1 : 0);
    }
    return spec;
}

std::vector<std::size_t> SplitAssignment::indices(Partition p) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tags.size(); ++i)
        if (tags[i] == p) out.push_back(i);
    return out;
}

std::size_t SplitAssignment::count(Partition p) const {
    return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), p));
}

namespace {

void check_fractions(double test_frac, double val_frac) {
    if (!(test_frac > 0.0 && test_frac < 1.0) || !(val_frac > 0.0 && val_frac < 1.0) || test_frac + val_frac >= 1.0)
        throw UsageError("split fractions must lie in (0,1) and sum to less than 1");
}

}  // namespace

SplitAssignment split_random(std::size_t n, double test_frac, double val_frac, std::uint64_t seed) {
    check_fractions(test_frac, val_frac);
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_frac));
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_frac));
    if (n_test == 0 || n_val == 0 || n_test + n_val >= n)
        throw DataError("set of " + std::to_string(n) + " records is too small for three non-empty partitions");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed, Stream::split);
    rng.shuffle(std::span<std::size_t>(order));

    SplitAssignment out;
    out.protocol = Protocol::random;
    out.tags.assign(n, Partition::train);
    for (std::size_t r = 0; r < n_test; ++r) out.tags[order[r]] = Partition::test;
    for (std::size_t r = n_test; r < n_test + n_val; ++r) out.tags[order[r]] = Partition::val;
    return out;
}

namespace {

std::vector<long long> block_key(std::span<const double> raw, double block_deg, std::optional<int> doy_bin_days) {
    std::vector<long long> key{static_cast<long long>(std::floor(raw[0] / block_deg)),
                               static_cast<long long>(std::floor(raw[1] / block_deg))};
    if (raw.size() > 2 && doy_bin_days) {
        // doy 366 shares the bin of doy 365
        const double doy = std::min(raw[2], 365.0);
        key.push_back(static_cast<long long>(std::floor((doy - 1.0) / *doy_bin_days)));
    }
    return key;
}

std::string key_string(const std::vector<long long>& key) {
    std::string s;
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (i) s += ':';
        s += std::to_string(key[i]);
    }
    return s;
}

}  // namespace

std::string block_id(std::span<const double> raw, double block_deg, std::optional<int> doy_bin_days) {
    return key_string(block_key(raw, block_deg, doy_bin_days));
}

SplitAssignment split_blocked(const PointSet& set, const BlockedSplitOptions& options, std::uint64_t seed) {
    check_fractions(options.test_frac, options.val_frac);
    if (!(options.block_deg > 0.0)) throw UsageError("block size must be positive");
    if (set.dim == 3 && !options.doy_bin_days) throw UsageError("3-D sets need a day-of-year bin width");
    if (set.dim != 3 && options.doy_bin_days) throw UsageError("day-of-year bins apply only to 3-D sets");
    if (options.doy_bin_days && *options.doy_bin_days < 1) throw UsageError("day-of-year bin width must be >= 1");

    std::vector<std::vector<long long>> keys(set.size());
    std::map<std::vector<long long>, std::size_t> block_index;
    for (std::size_t i = 0; i < set.size(); ++i) {
        keys[i] = block_key(set.point(i), options.block_deg, options.doy_bin_days);
        block_index.emplace(keys[i], 0);
    }
    const std::size_t nb = block_index.size();
    if (nb < 3) throw DataError("blocked split needs at least 3 occupied blocks, found " + std::to_string(nb));

    std::vector<std::size_t> order(nb);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed, Stream::split);
    rng.shuffle(std::span<std::size_t>(order));

    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(nb * options.test_frac)));
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(nb * options.val_frac)));
    if (n_test + n_val >= nb) throw DataError("too few blocks for three non-empty partitions");

    std::vector<Partition> block_tag(nb, Partition::train);
    for (std::size_t r = 0; r < n_test; ++r) block_tag[order[r]] = Partition::test;
    for (std::size_t r = n_test; r < n_test + n_val; ++r) block_tag[order[r]] = Partition::val;

    std::size_t ordinal = 0;
    for (auto& [key, idx] : block_index) idx = ordinal++;

    SplitAssignment out;
    out.protocol = Protocol::blocked;
    out.block_deg = options.block_deg;
    out.doy_bin_days = options.doy_bin_days;
    out.tags.resize(set.size());
    out.block_ids.resize(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        out.tags[i] = block_tag[block_index.at(keys[i])];
        out.block_ids[i] = key_string(keys[i]);
    }
    return out;
}

void write_split(const SplitAssignment& split, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "record_index,partition,block_id\n";
    for (std::size_t i = 0; i < split.tags.size(); ++i)
        out << i << ',' << to_string(split.tags[i]) << ',' << (split.block_ids.empty() ? "-" : split.block_ids[i]) << '\n';
}

SplitAssignment read_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split file " + path.string());
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "record_index,partition,block_id")
        throw DataError("malformed split header in " + path.string());
    SplitAssignment out;
    std::vector<std::string> blocks;
    bool blocked = false;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split(line);
        if (f.size() != 3) throw DataError("malformed split row: " + line);
        const auto idx = detail::parse_int(f[0]);
        if (!idx || *idx != static_cast<long long>(out.tags.size())) throw DataError("split rows must be in record order");
        out.tags.push_back(partition_from_string(f[1]));
        blocks.push_back(f[2]);
        blocked = blocked || f[2] != "-";
    }
    out.protocol = blocked ? Protocol::blocked : Protocol::random;
    if (blocked) out.block_ids = std::move(blocks);
    return out;
}

PointSet sample_pixels_from_mask(const BinaryRaster& mask, std::size_t n, std::uint64_t seed) {
    if (mask.size() == 0) throw DataError("mask is empty");
    if (mask.degenerate()) throw DataError("mask is degenerate (all pixels share one value)");
    if (n < 1) throw UsageError("pixel sample count must be >= 1");

    const std::size_t total = mask.size();
    Rng rng(seed, Stream::pixels);
    std::vector<std::size_t> picks;
    picks.reserve(n);
    if (n <= total) {
        std::vector<std::size_t> pool(total);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(total - i));
            std::swap(pool[i], pool[j]);
            picks.push_back(pool[i]);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) picks.push_back(static_cast<std::size_t>(rng.below(total)));
    }

    PointSet out(2, false);
    out.coords.reserve(2 * n);
    const auto w = static_cast<std::size_t>(mask.width());
    for (auto p : picks) {
        const int x = static_cast<int>(p % w);
        const int y = static_cast<int>(p / w);
        const double xy[2] = {x + 0.5, y + 0.5};
        out.push_back(xy, mask.at(x, y), Source::mask_pixel);
    }
    return out;
}

}  // namespace fieldloom
