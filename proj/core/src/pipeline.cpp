#include "fieldloom/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "fieldloom/errors.hpp"
#include "fieldloom/fields.hpp"
#include "fieldloom/optim.hpp"
#include "fieldloom/recon.hpp"
#include "fieldloom/spline.hpp"
#include "text_util.hpp"

#ifndef FIELDLOOM_VERSION
#define FIELDLOOM_VERSION "0.0.0"
#endif

namespace fieldloom {

const char* toolkit_version() { return FIELDLOOM_VERSION; }

Config Config::parse(std::istream& in, const std::string& origin) {
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key(detail::trim(t.substr(0, eq)));
        if (key.empty()) throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
        c.values_[key] = std::string(detail::trim(t.substr(eq + 1)));
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path.string());
    return parse(in, path.string());
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto v = detail::parse_double(get(key));
    if (!v) throw UsageError("config key '" + key + "' expects a number, got '" + get(key) + "'");
    return *v;
}

long long Config::get_int(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const auto v = detail::parse_int(get(key));
    if (!v) throw UsageError("config key '" + key + "' expects an integer, got '" + get(key) + "'");
    return *v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key, const std::string& fallback) const {
    const auto raw = get(key, fallback);
    if (detail::trim(raw).empty()) return {};
    auto items = detail::split(raw);
    std::erase_if(items, [](const std::string& s) { return s.empty(); });
    return items;
}

void Config::require_known(const std::set<std::string>& known) const {
    for (const auto& [k, v] : values_)
        if (!known.count(k)) throw UsageError("unknown config key '" + k + "'");
}

std::uint64_t file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void RunManifest::add_input(const std::filesystem::path& path) {
    inputs.emplace_back(path.string(), "fnv1a64=" + hex64(file_digest(path)));
}

std::string RunManifest::str() const {
    std::ostringstream out;
    out << "# fieldloom run manifest\n";
    out << "# command=" << command << '\n';
    out << "# version=" << toolkit_version() << '\n';
    for (const auto& [path, digest] : inputs) out << "# input " << path << ' ' << digest << '\n';
    for (const auto& [stage, outcome] : status) out << "# status " << stage << ' ' << outcome << '\n';
    for (const auto& [k, v] : settings) out << k << '=' << v << '\n';
    return out.str();
}

void RunManifest::write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << str();
}

PointSet build_dataset(const std::filesystem::path& path, const Schema& schema, std::size_t background,
                       std::uint64_t seed) {
    const auto loaded = load_points(path, schema);
    auto points = clean(loaded.points);
    const std::size_t pos = points.count_positive();
    if (pos == 0) throw DataError("no presence records in " + path.string());
    if (pos < points.size()) return points;
    const std::size_t nb = background ? background : points.size();
    return concat(points, sample_background(points, nb, seed));
}

const std::map<std::string, std::string>& pipeline_defaults() {
    static const std::map<std::string, std::string> defaults{
        {"data", ""},           {"coords", "lon,lat"},    {"label", "label"},      {"geographic", "true"},
        {"background", "0"},    {"archs", "sine"},        {"protocols", "random,blocked"},
        {"seed", "0"},          {"test_frac", "0.2"},     {"val_frac", "0.1"},     {"block_deg", "5"},
        {"doy_bin", "30"},      {"lr", "0.001"},          {"batch", "4096"},       {"epochs", "10"},
        {"patience", "3"},      {"depth", "0"},           {"width", "0"},          {"w0", "30"},
        {"fourier_k", "16"},    {"fourier_sigma", "10"},  {"rbf_centers", "64"},   {"spline_basis", "12"},
        {"spline_lambda", "0.001"}, {"spline_degree", "3"}, {"bootstrap", "1000"}, {"bbox", ""},
        {"res", "360,180"},     {"slice", ""},            {"threshold", "0.5"},    {"threads", "1"},
        {"out", ""},
    };
    return defaults;
}

namespace {

struct Settings {
    std::filesystem::path data;
    Schema schema;
    std::size_t background = 0;
    std::vector<std::string> models;
    std::vector<Protocol> protocols;
    std::uint64_t seed = 0;
    double test_frac = 0.2, val_frac = 0.1, block_deg = 5.0;
    int doy_bin = 30;
    TrainConfig train;
    int depth = 0, width = 0, fourier_k = 16, rbf_centers = 64;
    double w0 = 30.0, fourier_sigma = 10.0;
    int spline_basis = 12, spline_degree = 3;
    double spline_lambda = 1e-3;
    int bootstrap = 1000;
    std::vector<std::string> bbox, res, slices;
    double threshold = 0.5;
    int threads = 1;
};

std::string canonical_model(const std::string& name) {
    if (name == "spline") return name;
    return to_string(arch_from_string(name));
}

Settings resolve(const Config& c) {
    std::set<std::string> known;
    for (const auto& [k, v] : pipeline_defaults()) known.insert(k);
    c.require_known(known);

    Settings s;
    s.data = c.get("data");
    if (s.data.empty()) throw UsageError("pipeline config needs 'data'");
    s.schema = Schema::parse(c.get("coords", "lon,lat"), c.get("label", "label"), c.get_bool("geographic", true));
    const auto bg = c.get_int("background", 0);
    if (bg < 0) throw UsageError("background must be >= 0");
    s.background = static_cast<std::size_t>(bg);
    for (const auto& m : c.get_list("archs", "sine")) s.models.push_back(canonical_model(m));
    for (const auto& p : c.get_list("protocols", "random,blocked")) s.protocols.push_back(protocol_from_string(p));
    if (s.models.empty() || s.protocols.empty()) throw UsageError("pipeline needs at least one model and one protocol");
    s.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
    s.test_frac = c.get_double("test_frac", 0.2);
    s.val_frac = c.get_double("val_frac", 0.1);
    s.block_deg = c.get_double("block_deg", 5.0);
    s.doy_bin = static_cast<int>(c.get_int("doy_bin", 30));
    s.train.learning_rate = c.get_double("lr", 1e-3);
    s.train.batch_size = static_cast<std::size_t>(std::max<long long>(0, c.get_int("batch", 4096)));
    s.train.max_epochs = static_cast<int>(c.get_int("epochs", 10));
    s.train.patience = static_cast<int>(c.get_int("patience", 3));
    s.train.seed = s.seed;
    s.train.validate();
    s.depth = static_cast<int>(c.get_int("depth", 0));
    s.width = static_cast<int>(c.get_int("width", 0));
    s.w0 = c.get_double("w0", 30.0);
    s.fourier_k = static_cast<int>(c.get_int("fourier_k", 16));
    s.fourier_sigma = c.get_double("fourier_sigma", 10.0);
    s.rbf_centers = static_cast<int>(c.get_int("rbf_centers", 64));
    s.spline_basis = static_cast<int>(c.get_int("spline_basis", 12));
    s.spline_degree = static_cast<int>(c.get_int("spline_degree", 3));
    s.spline_lambda = c.get_double("spline_lambda", 1e-3);
    s.bootstrap = static_cast<int>(c.get_int("bootstrap", 1000));
    s.bbox = c.get_list("bbox");
    s.res = c.get_list("res", "360,180");
    s.slices = c.get_list("slice");
    s.threshold = c.get_double("threshold", 0.5);
    s.threads = static_cast<int>(c.get_int("threads", 1));
    if (s.threads < 1) throw UsageError("threads must be >= 1");
    return s;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    return out;
}

GridSpec make_field_grid(const Settings& s, const PointSet& data) {
    auto slices = s.slices;
    if (slices.empty() && data.dim == 3) slices.push_back("2=150");
    std::string bbox = join(s.bbox);
    if (bbox.empty()) {
        std::set<int> held;
        for (const auto& sl : slices) {
            const auto name = sl.substr(0, sl.find('='));
            held.insert(name == "lon" || name == "x" ? 0 : name == "lat" || name == "y" ? 1 : name == "doy" ? 2 : std::stoi(name));
        }
        std::vector<std::string> parts;
        for (int k = 0; k < data.dim; ++k) {
            if (held.count(k)) continue;
            double lo = INFINITY, hi = -INFINITY;
            for (std::size_t i = 0; i < data.size(); ++i) {
                lo = std::min(lo, data.point(i)[k]);
                hi = std::max(hi, data.point(i)[k]);
            }
            parts.push_back(detail::fmt17(lo));
            parts.push_back(detail::fmt17(hi));
        }
        bbox = join(parts);
    }
    auto grid = GridSpec::parse(bbox, join(s.res), slices);
    if (grid.dim() != data.dim) throw UsageError("grid dimension does not match the data");
    return grid;
}

PointSet presences_of(const PointSet& data) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data.labels[i] == 1) idx.push_back(i);
    return data.subset(idx);
}

struct Shared {
    const Settings& s;
    const PointSet& data;
    const PointSet& presences;
    const GridSpec& grid;
    const std::filesystem::path& out;
};

MetricReport run_cell(const Shared& sh, Protocol protocol, const SplitAssignment& split, const std::string& model,
                      const std::filesystem::path& dir) {
    const auto& s = sh.s;
    const auto train_raw = sh.data.subset(split.indices(Partition::train));
    const auto val_raw = sh.data.subset(split.indices(Partition::val));
    const auto test_raw = sh.data.subset(split.indices(Partition::test));
    if (train_raw.empty() || test_raw.empty()) throw DataError("empty train or test partition");

    MetricReport report;
    report.set_meta("protocol", to_string(protocol));
    report.set_meta("model", model);
    report.set_meta("seed", std::to_string(s.seed));
    report.set_meta("n_train", std::to_string(train_raw.size()));
    report.set_meta("n_val", std::to_string(val_raw.size()));
    report.set_meta("n_test", std::to_string(test_raw.size()));

    std::vector<double> probs;
    ProbabilityField field;
    if (model == "spline") {
        const auto spec = spline_spec_for(sh.data, s.spline_basis, s.spline_lambda, s.spline_degree);
        const auto fit = fit_spline(spec, train_raw);
        save_spline(fit.model, dir / "model.spline");
        report.set_meta("spline_converged", fit.converged ? "true" : "false");
        report.set_meta("spline_gradient_norm", detail::fmt17(fit.gradient_norm));
        probs = predict_spline(fit.model, test_raw);
        field.grid = sh.grid;
        field.values = predict_spline(fit.model, make_grid(sh.grid));
    } else {
        if (val_raw.empty()) throw DataError("empty validation partition");
        auto spec = ArchSpec::defaults(arch_from_string(model), sh.data.dim);
        if (s.depth > 0) spec.depth = s.depth;
        if (s.width > 0) spec.width = s.width;
        spec.w0 = s.w0;
        spec.fourier_features = s.fourier_k;
        spec.fourier_sigma = s.fourier_sigma;
        spec.rbf_centers = s.rbf_centers;
        const auto norm = fit_normalizer(train_raw);
        auto result = train(init_params(spec, s.seed), apply_normalizer(norm, train_raw),
                            apply_normalizer(norm, val_raw), s.train);
        save_checkpoint(result.model, dir / "model.ckpt");
        write_normalizer(norm, dir / "model.ckpt.norm");
        write_trace(result.trace, dir / "trace.csv");
        report.set_meta("best_epoch", std::to_string(result.trace.best_epoch + 1));
        report.set_meta("stop_reason", to_string(result.trace.stop_reason));
        const auto test = apply_normalizer(norm, test_raw);
        probs = forward_batch(result.model, test.coords);
        for (auto& p : probs) p = sigmoid(p);
        field = evaluate_grid(result.model, norm, sh.grid);
    }

    ReportOptions ro;
    if (s.bootstrap > 0) ro.bootstrap = BootstrapOptions{s.bootstrap, s.seed, 10000};
    const auto cls = classification_report(ScoredSet{probs, test_raw.labels}, ro);
    for (const auto& [k, v] : cls.metadata) report.set_meta(k, v);
    for (const auto& e : cls.entries) report.set(e.name, e.value, e.ci);

    write_field_csv(field, dir / "field.csv");
    if (sh.grid.free_axes().size() == 2) write_raster(field_image(field, true), dir / "field.pgm");
    const auto summary = field_summary(field, sh.presences, s.threshold);
    report.set_meta("area_threshold", detail::fmt17(s.threshold));
    report.set_meta("hit_denominator", "all_presences");
    report.set_meta("presences_outside_field", std::to_string(summary.outside_field));
    report.set("area_above", summary.area_above_threshold);
    report.set("eoo", summary.eoo);
    report.set("hit_at_1pct", summary.hit_at_1pct);
    report.set("hit_at_5pct", summary.hit_at_5pct);
    write_report(report, dir / "report.csv");
    return report;
}

}  // namespace

int PipelineResult::exit_code() const {
    for (const auto& c : cells)
        if (!c.ok) return c.exit_code ? c.exit_code : 3;
    return 0;
}

PipelineResult run_pipeline(const Config& config, const std::filesystem::path& out_dir, std::ostream* log) {
    const Settings s = resolve(config);
    std::filesystem::path out = out_dir.empty() ? std::filesystem::path(config.get("out")) : out_dir;
    if (out.empty()) throw UsageError("pipeline needs an output directory");
    std::filesystem::create_directories(out);

    PipelineResult result;
    auto& manifest = result.manifest;
    manifest.command = "pipeline";
    for (const auto& [k, def] : pipeline_defaults()) {
        if (k == "out") continue;
        manifest.settings.emplace_back(k, config.get(k, def));
    }
    manifest.add_input(s.data);

    const auto data = build_dataset(s.data, s.schema, s.background, s.seed);
    write_points(data, out / "dataset.csv", s.schema.coord_columns);
    const auto presences = presences_of(data);
    const auto grid = make_field_grid(s, data);
    if (log) *log << "dataset: " << data.size() << " records, " << presences.size() << " presences\n";

    struct Job {
        Protocol protocol;
        std::string model;
        const SplitAssignment* split;
        std::string split_error;
    };
    std::vector<SplitAssignment> splits(s.protocols.size());
    std::vector<std::string> split_errors(s.protocols.size());
    for (std::size_t p = 0; p < s.protocols.size(); ++p) {
        const auto name = std::string(to_string(s.protocols[p]));
        try {
            splits[p] = s.protocols[p] == Protocol::random
                            ? split_random(data, s.test_frac, s.val_frac, s.seed)
                            : split_blocked(data,
                                            BlockedSplitOptions{s.block_deg,
                                                                data.dim == 3 ? std::optional<int>(s.doy_bin) : std::nullopt,
                                                                s.test_frac, s.val_frac},
                                            s.seed);
            write_split(splits[p], out / ("split_" + name + ".csv"));
        } catch (const std::exception& e) {
            split_errors[p] = e.what();
            manifest.status.emplace_back("split/" + name, std::string("failed: ") + e.what());
        }
    }

    std::vector<Job> jobs;
    for (std::size_t p = 0; p < s.protocols.size(); ++p)
        for (const auto& m : s.models) jobs.push_back({s.protocols[p], m, &splits[p], split_errors[p]});
    result.cells.resize(jobs.size());

    const Shared shared{s, data, presences, grid, out};
    std::mutex log_mutex;
    auto run_job = [&](std::size_t j) {
        const auto& job = jobs[j];
        auto& cell = result.cells[j];
        cell.protocol = job.protocol;
        cell.model = job.model;
        if (!job.split_error.empty()) {
            cell.error = "split failed: " + job.split_error;
            cell.exit_code = 2;
            return;
        }
        const auto dir = out / to_string(job.protocol) / job.model;
        try {
            std::filesystem::create_directories(dir);
            cell.report = run_cell(shared, job.protocol, *job.split, job.model, dir);
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.error = e.what();
            cell.exit_code = exit_code_for(e);
        }
        if (log) {
            std::lock_guard lock(log_mutex);
            *log << to_string(job.protocol) << '/' << job.model << ": "
                 << (cell.ok ? "roc_auc " + detail::fmt17(cell.report.value("roc_auc")) : "failed: " + cell.error) << '\n';
        }
    };

    if (s.threads <= 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (int t = 0; t < s.threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t j; (j = next++) < jobs.size();) run_job(j);
            });
    }

    for (const auto& cell : result.cells)
        manifest.status.emplace_back(std::string(to_string(cell.protocol)) + "/" + cell.model,
                                     cell.ok ? "ok" : "failed: " + cell.error);

    for (const auto& m : s.models) {
        const CellResult* r = nullptr;
        const CellResult* b = nullptr;
        for (const auto& cell : result.cells) {
            if (cell.model != m || !cell.ok) continue;
            (cell.protocol == Protocol::random ? r : b) = &cell;
        }
        if (!r || !b) continue;
        try {
            write_report(leakage_gap(r->report, b->report), out / ("gap_" + m + ".csv"));
            result.gap_models.push_back(m);
            manifest.status.emplace_back("gap/" + m, "ok");
        } catch (const std::exception& e) {
            manifest.status.emplace_back("gap/" + m, std::string("failed: ") + e.what());
        }
    }

    manifest.write(out / "manifest.txt");
    for (const auto& cell : result.cells) {
        const auto dir = out / to_string(cell.protocol) / cell.model;
        if (std::filesystem::exists(dir)) manifest.write(dir / "manifest.txt");
    }
    return result;
}

}  // namespace fieldloom
