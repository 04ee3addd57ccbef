#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fieldloom {

enum class ArchKind : std::uint8_t { sine, fourier, relu, rbf };

const char* to_string(ArchKind k);
ArchKind arch_from_string(const std::string& s);

/// Architecture descriptor for a scalar coordinate field.
///
/// Only the fields relevant to `kind` are meaningful: `w0` for sine,
/// `fourier_features` / `fourier_sigma` for fourier, `rbf_centers` for rbf.
struct ArchSpec {
    ArchKind kind = ArchKind::sine;
    int input_dim = 2;
    int depth = 4;    // hidden layers
    int width = 128;  // units per hidden layer
    double w0 = 30.0;
    int fourier_features = 16;
    double fourier_sigma = 10.0;
    int rbf_centers = 64;

    void validate() const;
    int encoded_dim() const;

    // Reference configurations: sine 4x128 (w0 = 30), fourier 3x128 (K = 16,
    // sigma = 10), relu 4x128, rbf 3x128 (64 centres).
    static ArchSpec defaults(ArchKind kind, int input_dim);

    friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// Trainable parameters plus the frozen encoding state.
///
/// Flat parameter layout, in order:
///   rbf only: C log-widths (s_j = exp(param))
///   for each affine layer (depth hidden layers, then the scalar output):
///     weights, input-major: weight from input k to unit o at k * out + o
///     biases: out values
/// `frozen` holds the K x d Fourier projection or the C x d rbf centres,
/// row-major; it is empty for sine and relu.
struct FieldModel {
    ArchSpec spec;
    std::uint64_t seed = 0;
    std::vector<double> frozen;
    std::vector<double> params;

    friend bool operator==(const FieldModel&, const FieldModel&) = default;
};

using Gradient = std::vector<double>;

std::size_t count_params(const ArchSpec& spec);
std::size_t estimate_macs(const ArchSpec& spec);

/// Deterministic initialisation from the `init` and `frozen` streams.
/// Sine: first layer U(-1/d, 1/d), later layers U(+-sqrt(6/fan_in)/w0).
/// Other kinds: U(+-1/sqrt(fan_in)) for weights and biases.
FieldModel init_params(const ArchSpec& spec, std::uint64_t seed);

std::vector<double> encode(const FieldModel& model, std::span<const double> x);

/// Intermediate values kept by a batched forward pass for backward().
struct ForwardTape {
    std::size_t n = 0;
    std::vector<double> input;                 // n x d
    std::vector<double> encoded;               // n x encoded_dim
    std::vector<double> sq_dist;               // rbf only, n x C
    std::vector<std::vector<double>> pre;      // per hidden layer, n x width
    std::vector<std::vector<double>> post;     // per hidden layer, n x width
};

double forward(const FieldModel& model, std::span<const double> x);

// X is n x d, row-major. Each output equals forward() on its row, bit for bit.
std::vector<double> forward_batch(const FieldModel& model, std::span<const double> X,
                                  ForwardTape* tape = nullptr);

// Gradient of sum_i upstream[i] * logit(x_i) with respect to `params`.
Gradient backward(const FieldModel& model, std::span<const double> X, std::span<const double> upstream);
Gradient backward(const FieldModel& model, const ForwardTape& tape, std::span<const double> upstream);

void save_checkpoint(const FieldModel& model, const std::filesystem::path& path);
FieldModel load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_header(const FieldModel& model);

}  // namespace fieldloom
