#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fieldloom/dataset.hpp"
#include "fieldloom/metrics.hpp"

namespace fieldloom {

const char* toolkit_version();

/// Flat key=value settings, one per line; '#' starts a comment line.
class Config {
public:
    static Config parse(std::istream& in, const std::string& origin = "config");
    static Config load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get(const std::string& key, const std::string& fallback = "") const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key, const std::string& fallback = "") const;

    // Throws UsageError naming the first key outside `known`.
    void require_known(const std::set<std::string>& known) const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// 64-bit FNV-1a over the file bytes.
std::uint64_t file_digest(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// What produced a set of outputs. Settings are written as key=value lines so
/// a pipeline manifest can be fed back as its own config; everything else is
/// carried in '#' lines.
struct RunManifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> settings;
    std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
    std::vector<std::pair<std::string, std::string>> status;  // stage, outcome

    void add_input(const std::filesystem::path& path);
    std::string str() const;
    void write(const std::filesystem::path& path) const;
};

/// Assembles the presence-background table: load, clean, and sample uniform
/// background over the presence box when the input holds presences only
/// (`background` = 0 draws one background point per presence).
PointSet build_dataset(const std::filesystem::path& path, const Schema& schema, std::size_t background,
                       std::uint64_t seed);

struct CellResult {
    Protocol protocol = Protocol::random;
    std::string model;
    bool ok = false;
    std::string error;
    int exit_code = 0;
    MetricReport report;
};

struct PipelineResult {
    std::vector<CellResult> cells;
    std::vector<std::string> gap_models;
    RunManifest manifest;

    int exit_code() const;
};

/// For each protocol: split, then per model train, evaluate on the test
/// partition, reconstruct the field and summarize it. Writes one report per
/// (protocol, model), one gap report per model with both protocols, and a
/// manifest. A failing cell is recorded and the remaining cells still run.
PipelineResult run_pipeline(const Config& config, const std::filesystem::path& out_dir, std::ostream* log = nullptr);

// Keys accepted by run_pipeline with their defaults.
const std::map<std::string, std::string>& pipeline_defaults();

}  // namespace fieldloom
