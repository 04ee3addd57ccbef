#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fieldloom/dataset.hpp"
#include "fieldloom/errors.hpp"
#include "fieldloom/fields.hpp"

namespace fieldloom {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 4096;
    int max_epochs = 10;  // 8 for mask reconstruction
    int patience = 3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

enum class StopReason : std::uint8_t { max_epochs, early_stop };
const char* to_string(StopReason r);

struct TrainTrace {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;  // zero-based
    StopReason stop_reason = StopReason::max_epochs;

    double best_val_loss() const { return val_loss.at(static_cast<std::size_t>(best_epoch)); }
};

// epoch,train_loss,val_loss,is_best with one-based epochs.
void write_trace(const TrainTrace& trace, const std::filesystem::path& path);

struct LossAndUpstream {
    double loss = 0.0;
    std::vector<double> upstream;
};

/// Mean binary cross-entropy on logits, evaluated as
/// max(z,0) - z*y + log1p(exp(-|z|)); upstream_i = (sigmoid(z_i) - y_i) / n.
LossAndUpstream bce_loss_and_upstream(std::span<const double> logits, std::span<const std::uint8_t> labels);
double bce_loss(std::span<const double> logits, std::span<const std::uint8_t> labels);

double sigmoid(double z);

// Bias-corrected Adam update in place; increments state.t.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state, const TrainConfig& cfg);

/// Patience bookkeeping: an epoch improves only with a strictly lower loss.
/// Training stops once `patience` consecutive epochs fail to improve
/// (patience 0 behaves like 1: stop at the first stale epoch).
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // Returns true when `val_loss` is a new best.
    bool update(double val_loss);
    bool should_stop() const { return stale_ > 0 && stale_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_; }

private:
    int patience_;
    int epoch_ = -1;
    int best_epoch_ = -1;
    int stale_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct TrainResult {
    FieldModel model;  // parameters from the best validation epoch
    TrainTrace trace;
};

class TrainingError : public NumericError {
public:
    TrainingError(const std::string& what, TrainTrace trace) : NumericError(what), trace_(std::move(trace)) {}
    const TrainTrace& trace() const { return trace_; }

private:
    TrainTrace trace_;
};

struct TrainHooks {
    // Replaces the computed validation loss of an epoch (zero-based). Testing only.
    std::function<double(int epoch, double computed)> val_loss_override;
};

/// Mini-batch Adam on mean BCE with per-epoch seeded shuffling and early
/// stopping on full-set validation loss. Inputs must already be normalized.
TrainResult train(const FieldModel& model, const PointSet& train_set, const PointSet& val_set,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace fieldloom
