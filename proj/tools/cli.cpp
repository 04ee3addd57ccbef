#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <variant>

#include "fieldloom/dataset.hpp"
#include "fieldloom/errors.hpp"
#include "fieldloom/fields.hpp"
#include "fieldloom/metrics.hpp"
#include "fieldloom/optim.hpp"
#include "fieldloom/pipeline.hpp"
#include "fieldloom/raster.hpp"
#include "fieldloom/recon.hpp"
#include "fieldloom/segment.hpp"
#include "fieldloom/spline.hpp"
#include "fieldloom/synth.hpp"

namespace fieldloom::cli {
namespace {

namespace fs = std::filesystem;

struct DataFlags {
    std::string data;
    std::string coords = "lon,lat";
    std::string label = "label";
    bool planar = false;

    void add(CLI::App* app, bool required = true) {
        auto* o = app->add_option("--data", data, "Labelled points (comma-separated, header row)");
        if (required) o->required();
        app->add_option("--coords", coords, "Coordinate columns, in order");
        app->add_option("--label", label, "Label column; empty marks every row a presence");
        app->add_flag("--planar", planar, "Coordinates are not lon/lat degrees");
    }
    Schema schema() const { return Schema::parse(coords, label, !planar); }
    std::vector<std::string> coord_names() const { return schema().coord_columns; }

    PointSet load() const {
        auto r = load_points(data, schema());
        if (r.bad_rows) throw DataError(data + ": " + std::to_string(r.bad_rows) + " malformed rows; clean it with make-dataset");
        return std::move(r.points);
    }
};

struct ArchFlags {
    std::string arch = "sine";
    int depth = 0;
    int width = 0;
    double w0 = 30.0;
    int fourier_k = 16;
    double fourier_sigma = 10.0;
    int rbf_centers = 64;

    void add(CLI::App* app) {
        app->add_option("--arch", arch, "sine | fourier | relu | rbf");
        app->add_option("--depth", depth, "Hidden layers; 0 uses the architecture default");
        app->add_option("--width", width, "Units per hidden layer; 0 uses the default (128)");
        app->add_option("--w0", w0, "Sine frequency scale");
        app->add_option("--fourier-k", fourier_k, "Fourier feature count");
        app->add_option("--fourier-sigma", fourier_sigma, "Fourier projection scale");
        app->add_option("--rbf-centers", rbf_centers, "RBF centre count");
    }
    ArchSpec spec(int dim) const {
        auto s = ArchSpec::defaults(arch_from_string(arch), dim);
        if (depth > 0) s.depth = depth;
        if (width > 0) s.width = width;
        s.w0 = w0;
        s.fourier_features = fourier_k;
        s.fourier_sigma = fourier_sigma;
        s.rbf_centers = rbf_centers;
        s.validate();
        return s;
    }
};

struct TrainFlags {
    double lr = 1e-3;
    std::size_t batch = 4096;
    int epochs = 10;
    int patience = 3;

    void add(CLI::App* app, int default_epochs) {
        epochs = default_epochs;
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--batch", batch, "Mini-batch size");
        app->add_option("--epochs", epochs, "Maximum epochs");
        app->add_option("--patience", patience, "Early-stopping patience in epochs");
    }
    TrainConfig config(std::uint64_t seed) const {
        TrainConfig c;
        c.learning_rate = lr;
        c.batch_size = batch;
        c.max_epochs = epochs;
        c.patience = patience;
        c.seed = seed;
        c.validate();
        return c;
    }
};

struct SeedFlag {
    std::optional<std::uint64_t> value;

    void add(CLI::App* app) { app->add_option("--seed", value, "Random seed (falls back to FIELDLOOM_SEED, then 0)"); }
    std::uint64_t resolve() const {
        if (value) return *value;
        if (const char* env = std::getenv("FIELDLOOM_SEED"); env && *env) {
            try {
                std::size_t used = 0;
                const auto v = std::stoull(env, &used);
                if (used == std::string(env).size()) return v;
            } catch (const std::exception&) {
            }
            throw UsageError(std::string("FIELDLOOM_SEED is not an unsigned integer: ") + env);
        }
        return 0;
    }
};

void write_manifest(const CLI::App* sub, const fs::path& output, std::uint64_t seed, const std::vector<fs::path>& inputs) {
    RunManifest m;
    m.command = sub->get_name();
    for (const auto* opt : sub->get_options()) {
        const auto& name = opt->get_single_name();
        if (name.empty() || name == "help") continue;
        std::string value;
        if (opt->count()) {
            for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
        } else {
            value = opt->get_default_str();
        }
        m.settings.emplace_back(name, value);
    }
    m.settings.emplace_back("resolved_seed", std::to_string(seed));
    for (const auto& in : inputs)
        if (fs::is_regular_file(in)) m.add_input(in);
    m.write(fs::path(output.string() + ".manifest"));
}

struct LoadedModel {
    std::variant<FieldModel, SplineModel> model;
    NormSpec norm;

    int dim() const {
        return std::holds_alternative<FieldModel>(model) ? std::get<FieldModel>(model).spec.input_dim
                                                         : std::get<SplineModel>(model).spec.dim();
    }

    std::vector<double> probabilities(std::span<const double> raw) const {
        if (const auto* s = std::get_if<SplineModel>(&model)) return predict_spline(*s, raw);
        const auto& f = std::get<FieldModel>(model);
        const int d = f.spec.input_dim;
        std::vector<double> x(raw.size());
        for (std::size_t i = 0; i < raw.size() / d; ++i)
            norm.apply(raw.subspan(i * d, d), std::span<double>(x.data() + i * d, d));
        auto p = forward_batch(f, x);
        for (auto& v : p) v = sigmoid(v);
        return p;
    }

    ProbabilityField field(const GridSpec& grid, int threads) const {
        if (const auto* f = std::get_if<FieldModel>(&model)) return evaluate_grid(*f, norm, grid, threads);
        return {grid, probabilities(make_grid(grid))};
    }
};

LoadedModel load_model(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model " + path.string());
    std::string first;
    in >> first;
    LoadedModel m;
    if (first == "spline") {
        m.model = load_spline(path);
        return m;
    }
    m.model = load_checkpoint(path);
    const fs::path norm_path = path.string() + ".norm";
    if (!fs::exists(norm_path)) throw DataError("missing normalizer " + norm_path.string());
    m.norm = read_normalizer(norm_path);
    if (m.norm.dim() != m.dim()) throw DataError("normalizer dimension does not match the checkpoint");
    return m;
}

PointSet partition_of(const PointSet& data, const fs::path& split_path, Partition p) {
    const auto split = read_split(split_path);
    if (split.tags.size() != data.size())
        throw DataError("split has " + std::to_string(split.tags.size()) + " records, data has " + std::to_string(data.size()));
    return data.subset(split.indices(p));
}

void print_report(std::ostream& out, const MetricReport& r) {
    for (const auto& e : r.entries) {
        out << e.name << ' ' << e.value;
        if (e.ci) out << " [" << e.ci->lo << ", " << e.ci->hi << ']';
        out << '\n';
    }
}

// ---- subcommands ----

struct MakeDataset {
    DataFlags df;
    std::string synthetic;
    std::string mask;
    std::size_t n = 20000;
    std::size_t samples = 0;
    std::size_t background = 0;
    ClusterOptions clusters;
    int width = 128, height = 128;
    std::string domain;
    std::string out;
    SeedFlag seed;

    void add(CLI::App* app) {
        app->add_option("--presences", df.data, "Presence (or labelled) records to clean");
        app->add_option("--coords", df.coords, "Coordinate columns, in order");
        app->add_option("--label", df.label, "Label column; empty marks every row a presence");
        app->add_flag("--planar", df.planar, "Coordinates are not lon/lat degrees");
        app->add_option("--synthetic", synthetic, "Generate instead: two-bump | clusters | leaf")
            ->check(CLI::IsMember({"two-bump", "clusters", "leaf"}));
        app->add_option("--mask", mask, "Sample labelled pixels from a graymap mask");
        app->add_option("--samples", samples, "Pixel samples from --mask; 0 takes every pixel");
        app->add_option("--n", n, "Records for --synthetic two-bump");
        app->add_option("--background", background, "Background points; 0 draws one per presence");
        app->add_option("--domain", domain, "Background box lo0,hi0,lo1,hi1[,...]; default presence bounds");
        app->add_option("--clusters", clusters.clusters, "Clusters for --synthetic clusters");
        app->add_option("--per-cluster", clusters.per_cluster, "Presences per cluster");
        app->add_option("--spread", clusters.spread_deg, "Cluster standard deviation in degrees");
        app->add_option("--width", width, "Mask width for --synthetic leaf");
        app->add_option("--height", height, "Mask height for --synthetic leaf");
        app->add_option("--out", out, "Output file")->required();
        seed.add(app);
    }

    int run(const CLI::App* sub, std::ostream& os) {
        const auto s = seed.resolve();
        const int sources = !df.data.empty() + !synthetic.empty() + !mask.empty();
        if (sources != 1) throw UsageError("make-dataset needs exactly one of --presences, --synthetic, --mask");
        std::vector<fs::path> inputs;
        if (synthetic == "leaf") {
            write_raster(synth_leaf_mask(width, height, s), out);
            os << "wrote " << width << 'x' << height << " mask to " << out << '\n';
        } else {
            PointSet points;
            std::vector<std::string> names;
            if (synthetic == "two-bump") {
                points = synth_two_bump(n, s);
                names = {"x", "y"};
            } else if (synthetic == "clusters") {
                if (background) clusters.background = background;
                points = synth_clusters(clusters, s);
                names = {"lon", "lat"};
            } else if (!mask.empty()) {
                const auto m = read_raster(mask);
                points = sample_pixels_from_mask(m, samples ? samples : m.size(), s);
                names = {"x", "y"};
                inputs.push_back(mask);
            } else {
                const auto loaded = load_points(df.data, df.schema());
                if (loaded.bad_rows) std::cerr << "warning: skipped " << loaded.bad_rows << " malformed rows\n";
                points = clean(loaded.points);
                const std::size_t pos = points.count_positive();
                if (pos == 0) throw DataError("no presence records in " + df.data);
                if (pos == points.size()) {
                    std::optional<std::vector<Bounds>> box;
                    if (!domain.empty()) {
                        const auto parts = CLI::detail::split(domain, ',');
                        if (parts.size() != 2 * static_cast<std::size_t>(points.dim))
                            throw UsageError("--domain needs lo,hi per dimension");
                        box.emplace();
                        for (std::size_t k = 0; k < parts.size(); k += 2)
                            box->push_back({std::stod(parts[k]), std::stod(parts[k + 1])});
                    }
                    points = concat(points, sample_background(points, background ? background : points.size(), s, box));
                }
                names = df.coord_names();
                inputs.push_back(df.data);
            }
            write_points(points, out, names);
            os << "wrote " << points.size() << " records (" << points.count_positive() << " presences) to " << out << '\n';
        }
        write_manifest(sub, out, s, inputs);
        return 0;
    }
};

struct SplitCmd {
    DataFlags df;
    std::string protocol = "random";
    double test = 0.2, val = 0.1, block_deg = 5.0;
    int doy_bin = 30;
    std::string out;
    SeedFlag seed;

    void add(CLI::App* app) {
        df.add(app);
        app->add_option("--protocol", protocol, "random | blocked")->check(CLI::IsMember({"random", "blocked"}));
        app->add_option("--test", test, "Test fraction");
        app->add_option("--val", val, "Validation fraction");
        app->add_option("--block-deg", block_deg, "Block edge length in coordinate units");
        app->add_option("--doy-bin", doy_bin, "Day-of-year bin width for 3-D data");
        app->add_option("--out", out, "Output split file")->required();
        seed.add(app);
    }

    int run(const CLI::App* sub, std::ostream& os) {
        const auto s = seed.resolve();
        const auto data = df.load();
        const auto split = protocol_from_string(protocol) == Protocol::random
                               ? split_random(data, test, val, s)
                               : split_blocked(data,
                                               {block_deg, data.dim == 3 ? std::optional<int>(doy_bin) : std::nullopt, test, val},
                                               s);
        write_split(split, out);
        write_manifest(sub, out, s, {df.data});
        os << "train " << split.count(Partition::train) << " val " << split.count(Partition::val) << " test "
           << split.count(Partition::test) << '\n';
        return 0;
    }
};

struct TrainCmd {
    DataFlags df;
    ArchFlags af;
    TrainFlags tf;
    std::string split;
    std::string out;
    std::string trace;
    SeedFlag seed;

    void add(CLI::App* app) {
        df.add(app);
        af.add(app);
        tf.add(app, 10);
        app->add_option("--split", split, "Split file from `split`")->required();
        app->add_option("--out", out, "Checkpoint path; the normalizer goes to <out>.norm")->required();
        app->add_option("--trace", trace, "Loss trace path (default <out>.trace.csv)");
        seed.add(app);
    }

    int run(const CLI::App* sub, std::ostream& os) {
        const auto s = seed.resolve();
        const auto data = df.load();
        const auto train_raw = partition_of(data, split, Partition::train);
        const auto val_raw = partition_of(data, split, Partition::val);
        if (train_raw.empty() || val_raw.empty()) throw DataError("train and validation partitions must be non-empty");
        const auto norm = fit_normalizer(train_raw);
        for (const auto& w : norm.warnings) std::cerr << "warning: " << w << '\n';
        const auto result = train(init_params(af.spec(data.dim), s), apply_normalizer(norm, train_raw),
                                  apply_normalizer(norm, val_raw), tf.config(s));
        save_checkpoint(result.model, out);
        write_normalizer(norm, out + ".norm");
        write_trace(result.trace, trace.empty() ? out + ".trace.csv" : trace);
        write_manifest(sub, out, s, {df.data, split});
        os << "best epoch " << result.trace.best_epoch + 1 << " val_loss " << result.trace.best_val_loss() << " ("
           << to_string(result.trace.stop_reason) << ")\n";
        return 0;
    }
};

struct EvaluateCmd {
    DataFlags df;
    std::string split;
    std::string partition = "test";
    std::string model;
    int bootstrap = 1000;
    double threshold = 0.5;
    int ece_bins = 10;
    std::string out;
    SeedFlag seed;

    void add(CLI::App* app) {
        df.add(app);
        app->add_option("--split", split, "Split file; without it every record is scored");
        app->add_option("--partition", partition, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
        app->add_option("--model", model, "Checkpoint or spline model")->required();
        app->add_option("--bootstrap", bootstrap, "Bootstrap resamples for AUC intervals; 0 disables");
        app->add_option("--threshold", threshold, "Decision threshold for accuracy and F1");
        app->add_option("--ece-bins", ece_bins, "Calibration bins");
        app->add_option("--out", out, "Report path")->required();
        seed.add(app);
    }

    int run(const CLI::App* sub, std::ostream& os) {
        const auto s = seed.resolve();
        auto data = df.load();
        if (!split.empty()) data = partition_of(data, split, partition_from_string(partition));
        const auto m = load_model(model);
        if (m.dim() != data.dim) throw DataError("model and data dimensions differ");
        const auto probs = m.probabilities(data.coords);
        ReportOptions ro;
        ro.threshold = threshold;
        ro.ece_bins = ece_bins;
        if (bootstrap > 0) ro.bootstrap = BootstrapOptions{bootstrap, s, 10000};
        auto report = classification_report(ScoredSet{probs, data.labels}, ro);
        report.set_meta("partition", split.empty() ? "all" : partition);
        write_report(report, out);
        write_manifest(sub, out, s, {df.data, split, model});
        print_report(os, report);
        return 0;
    }
};

struct ReconstructCmd {
    std::string model;
    std::string bbox;
    std::string res = "360,180";
    std::vector<std::string> slices;
    std::string out;
    std::string pgm;
    bool south_up = false;
    int threads = 1;

    void add(CLI::App* app) {
        app->add_option("--model", model, "Checkpoint or spline model")->required();
        app->add_option("--bbox", bbox, "lo0,hi0,lo1,hi1 over the free axes")->required();
        app->add_option("--res", res, "Cells per free axis");
        app->add_option("--slice", slices, "Held dimension as dim=value, e.g. doy=150");
        app->add_option("--out", out, "Field path (dim0,dim1[,dim2],p)")->required();
        app->add_option("--pgm", pgm, "Also write a graymap heatmap (two free axes)");
        app->add_flag("--south-up", south_up, "First image row holds the lowest axis-1 cells");
        app->add_option("--threads", threads, "Worker threads");
    }

    int run(const CLI::App* sub, std::ostream& os) {
        const auto m = load_model(model);
        const auto grid = GridSpec::parse(bbox, res, slices);
        if (grid.dim() != m.dim()) throw UsageError("grid has " + std::to_string(grid.dim()) + " axes, model expects " +
                                                    std::to_string(m.dim()));
        const auto field = m.field(grid, threads);
        write_field_csv(field, out);
        if (!pgm.empty()) write_raster(field_image(field, !south_up), pgm);
        write_manifest(sub, out, 0, {model});
        os << "wrote " << field.values.size() << " cells to " << out << '\n';
        return 0;
    }
};

struct FieldSummaryCmd {
    DataFlags df;
    std::string field;
    double threshold = 0.5;
    std::string out;

    void add(CLI::App* app) {
        df.add(app);
        app->add_option("--field", field, "Field from `reconstruct`")->required();
        app->add_option("--threshold", threshold, "Probability threshold for the area");
        app->add_option("--out", out, "Report path");
    }

    int run(const CLI::App* sub, std::ostream& os) {
        const auto f = read_field_csv(field);
        const auto data = df.load();
        const auto s = field_summary(f, data, threshold);
        if (s.outside_field) std::cerr << "warning: " << s.outside_field << " presences fall outside the field\n";
        MetricReport r;
        r.set_meta("threshold", std::to_string(threshold));
        r.set_meta("presences", std::to_string(s.presences));
        r.set_meta("presences_outside_field", std::to_string(s.outside_field));
        r.set("area_above", s.area_above_threshold);
        r.set("eoo", s.eoo);
        r.set("hit_at_1pct", s.hit_at_1pct);
        r.set("hit_at_5pct", s.hit_at_5pct);
        if (!out.empty()) {
            write_report(r, out);
            write_manifest(sub, out, 0, {field, df.data});
        }
        print_report(os, r);
        return 0;
    }
};

struct SegmentCmd {
    std::vector<std::string> masks;
    ArchFlags af;
    TrainFlags tf;
    std::size_t samples = 0;
    double test = 0.2, val = 0.1;
    std::vector<int> tolerances{1, 2, 4, 8};
    int threads = 1;
    std::string out_dir;
    SeedFlag seed;

    void add(CLI::App* app) {
        app->add_option("--mask", masks, "Binary mask graymaps")->required();
        af.add(app);
        tf.add(app, 8);
        app->add_option("--samples", samples, "Pixels sampled per mask; 0 takes every pixel");
        app->add_option("--test", test, "Test fraction of sampled pixels");
        app->add_option("--val", val, "Validation fraction of sampled pixels");
        app->add_option("--tolerances", tolerances, "Boundary-F1 tolerances in pixels")->delimiter(',');
        app->add_option("--threads", threads, "Worker threads for reconstruction");
        app->add_option("--out-dir", out_dir, "Output directory")->required();
        seed.add(app);
    }

    int run(const CLI::App* sub, std::ostream& os) {
        const auto s = seed.resolve();
        SegmentOptions o;
        o.arch = af.spec(2);
        o.train = tf.config(s);
        o.samples = samples;
        o.test_frac = test;
        o.val_frac = val;
        o.seed = s;
        o.tolerances = tolerances;
        o.threads = threads;
        std::vector<BinaryRaster> rasters;
        for (const auto& m : masks) rasters.push_back(read_raster(m));
        const auto result = segment_masks(rasters, o);

        fs::create_directories(out_dir);
        const fs::path dir(out_dir);
        for (std::size_t i : result.excluded) std::cerr << "warning: " << masks[i] << " is degenerate, excluded\n";
        for (std::size_t k = 0; k < result.images.size(); ++k) {
            const auto& img = result.images[k];
            const auto stem = "image" + std::to_string(img.index);
            write_raster(img.probs, dir / (stem + "_prob.pgm"));
            write_raster(img.probs.threshold(result.thresholds.global), dir / (stem + "_mask.pgm"));
            write_report(result.per_image[k], dir / (stem + "_report.csv"));
        }
        write_report(result.summary, dir / "summary.csv");
        std::vector<fs::path> inputs(masks.begin(), masks.end());
        write_manifest(sub, dir / "summary.csv", s, inputs);
        print_report(os, result.summary);
        return 0;
    }
};

struct BenchCmd {
    ArchFlags af;
    int dim = 2;
    std::string model;
    std::size_t points = 50000;
    int repeats = 3;
    int threads = 1;
    std::string out;
    SeedFlag seed;

    void add(CLI::App* app) {
        af.add(app);
        app->add_option("--dim", dim, "Input dimension when no model is given");
        app->add_option("--model", model, "Benchmark a saved checkpoint instead");
        app->add_option("--points", points, "Points per timed pass");
        app->add_option("--repeats", repeats, "Timed passes; the median is reported");
        app->add_option("--threads", threads, "Worker threads");
        app->add_option("--out", out, "Optional result file (key,value rows)");
        seed.add(app);
    }

    int run(const CLI::App* sub, std::ostream& os) {
        const auto s = seed.resolve();
        const auto m = model.empty() ? init_params(af.spec(dim), s) : load_checkpoint(model);
        const auto r = bench(m, points, repeats, s, threads);
        std::ostringstream text;
        text << "arch," << to_string(m.spec.kind) << "\nparams," << r.params << "\nmacs," << r.macs << "\nbatch_size,"
             << r.batch_size << "\nrepeats," << r.repeats << "\nthroughput," << r.throughput << "\nlatency,"
             << r.latency << '\n';
        os << text.str();
        if (!out.empty()) {
            std::ofstream f(out);
            if (!f) throw DataError("cannot write " + out);
            f << "key,value\n" << text.str();
            write_manifest(sub, out, s, {model});
        }
        return 0;
    }
};

struct SplineCmd {
    DataFlags df;
    std::string split;
    int basis = 12;
    int degree = 3;
    double lambda = 1e-3;
    int max_iter = 10000;
    std::string out;
    std::string report;
    int bootstrap = 1000;
    SeedFlag seed;

    void add(CLI::App* app) {
        df.add(app);
        app->add_option("--split", split, "Split file; without it every record trains");
        app->add_option("--basis", basis, "B-spline basis functions per dimension");
        app->add_option("--degree", degree, "Spline degree");
        app->add_option("--lambda", lambda, "L2 penalty on spline coefficients");
        app->add_option("--max-iter", max_iter, "L-BFGS iteration cap");
        app->add_option("--out", out, "Model path")->required();
        app->add_option("--report", report, "Test-partition report (needs --split)");
        app->add_option("--bootstrap", bootstrap, "Bootstrap resamples for the report; 0 disables");
        seed.add(app);
    }

    int run(const CLI::App* sub, std::ostream& os) {
        const auto s = seed.resolve();
        const auto data = df.load();
        const auto spec = spline_spec_for(data, basis, lambda, degree);
        const auto train_set = split.empty() ? data : partition_of(data, split, Partition::train);
        SplineFitOptions fo;
        fo.max_iterations = max_iter;
        const auto fit = fit_spline(spec, train_set, fo);
        if (!fit.converged)
            std::cerr << "warning: spline fit stopped after " << fit.iterations << " iterations with gradient norm "
                      << fit.gradient_norm << '\n';
        save_spline(fit.model, out);
        os << "objective " << fit.loss << " after " << fit.iterations << " iterations\n";
        if (!report.empty()) {
            if (split.empty()) throw UsageError("--report needs --split");
            const auto test = partition_of(data, split, Partition::test);
            ReportOptions ro;
            if (bootstrap > 0) ro.bootstrap = BootstrapOptions{bootstrap, s, 10000};
            const auto probs = predict_spline(fit.model, test);
            auto r = classification_report(ScoredSet{probs, test.labels}, ro);
            r.set_meta("model", "spline");
            r.set_meta("spline_converged", fit.converged ? "true" : "false");
            write_report(r, report);
            print_report(os, r);
        }
        write_manifest(sub, out, s, {df.data, split});
        return 0;
    }
};

struct PipelineCmd {
    std::string config;
    std::string out;
    std::optional<int> threads;
    SeedFlag seed;

    void add(CLI::App* app) {
        app->add_option("--config", config, "key=value run configuration")->required();
        app->add_option("--out", out, "Output directory (overrides the config)");
        app->add_option("--threads", threads, "Concurrent (protocol, model) cells");
        seed.add(app);
    }

    int run(const CLI::App*, std::ostream& os) {
        auto c = Config::load(config);
        if (threads) c.set("threads", std::to_string(*threads));
        if (seed.value || !c.has("seed")) c.set("seed", std::to_string(seed.resolve()));
        const auto result = run_pipeline(c, out, &os);
        const auto ok = std::count_if(result.cells.begin(), result.cells.end(), [](const CellResult& c) { return c.ok; });
        os << ok << " of " << result.cells.size() << " reports, " << result.gap_models.size() << " gap reports\n";
        for (const auto& cell : result.cells)
            if (!cell.ok) std::cerr << "error: " << to_string(cell.protocol) << '/' << cell.model << ": " << cell.error << '\n';
        return result.exit_code();
    }
};

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"fieldloom: neural fields for sparse labelled coordinates", "fieldloom"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", std::string(toolkit_version()));

    MakeDataset make;
    SplitCmd split;
    TrainCmd train_cmd;
    EvaluateCmd evaluate;
    ReconstructCmd reconstruct;
    FieldSummaryCmd summary;
    SegmentCmd segment;
    BenchCmd bench_cmd;
    SplineCmd spline;
    PipelineCmd pipeline;

    struct Entry {
        CLI::App* app;
        std::function<int(const CLI::App*, std::ostream&)> run;
    };
    std::vector<Entry> entries;
    auto reg = [&](auto& cmd, const char* name, const char* help) {
        auto* sub = app.add_subcommand(name, help);
        cmd.add(sub);
        entries.push_back({sub, [&cmd](const CLI::App* s, std::ostream& o) { return cmd.run(s, o); }});
    };
    reg(make, "make-dataset", "Clean presences and add background, or generate synthetic data");
    reg(split, "split", "Assign records to train/val/test under a random or blocked protocol");
    reg(train_cmd, "train", "Fit a neural field");
    reg(evaluate, "evaluate", "Score a model on a partition");
    reg(reconstruct, "reconstruct", "Evaluate a model on a regular grid");
    reg(summary, "field-summary", "Area above threshold, EOO and Hit@k of a field");
    reg(segment, "segment", "Fit masks as coordinate fields and score the reconstructions");
    reg(bench_cmd, "bench", "Parameter, MAC and throughput report");
    reg(spline, "baseline-spline", "Fit the tensor B-spline logistic baseline");
    reg(pipeline, "pipeline", "Run every (protocol, model) cell from a config file");

    // Name unknown flags before CLI11 reports missing required options.
    CLI::App* chosen = nullptr;
    for (int i = 1; i < argc; ++i) {
        const std::string tok = argv[i];
        if (!chosen) {
            for (const auto& e : entries)
                if (e.app->get_name() == tok) chosen = e.app;
            continue;
        }
        if (tok.size() < 2 || tok[0] != '-' || std::isdigit(static_cast<unsigned char>(tok[1])) || tok[1] == '.') continue;
        if (tok == "--") break;
        const auto name = tok.substr(0, tok.find('='));
        if (!chosen->get_option_no_throw(name)) {
            err << "error: unknown flag " << name << " for " << chosen->get_name() << '\n';
            return 1;
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        if (app.get_subcommands().empty()) err << app.help();
        return 1;
    }

    for (const auto& entry : entries) {
        if (!entry.app->parsed()) continue;
        try {
            return entry.run(entry.app, out);
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return exit_code_for(e);
        }
    }
    err << app.help();
    return 1;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"fieldloom"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace fieldloom::cli
