#include "fieldloom/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fieldloom/rng.hpp"
#include "text_util.hpp"

namespace fieldloom {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
    if (max_epochs < 1) throw UsageError("max epochs must be >= 1");
    if (patience < 0) throw UsageError("patience must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("Adam betas must lie in [0,1)");
    if (!(epsilon > 0.0)) throw UsageError("Adam epsilon must be positive");
}

const char* to_string(StopReason r) { return r == StopReason::max_epochs ? "max_epochs" : "early_stop"; }

void write_trace(const TrainTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "epoch,train_loss,val_loss,is_best\n";
    for (std::size_t e = 0; e < trace.val_loss.size(); ++e)
        out << e + 1 << ',' << detail::fmt17(trace.train_loss[e]) << ',' << detail::fmt17(trace.val_loss[e]) << ','
            << (static_cast<int>(e) == trace.best_epoch ? 1 : 0) << '\n';
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

void check_labels(std::span<const double> logits, std::span<const std::uint8_t> labels) {
    if (logits.size() != labels.size()) throw UsageError("logit and label counts differ");
    if (logits.empty()) throw UsageError("loss needs at least one record");
    for (auto y : labels)
        if (y > 1) throw DataError("labels must be 0 or 1");
}

double bce_term(double z, double y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

LossAndUpstream bce_loss_and_upstream(std::span<const double> logits, std::span<const std::uint8_t> labels) {
    check_labels(logits, labels);
    const double n = static_cast<double>(logits.size());
    LossAndUpstream out;
    out.upstream.resize(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double y = labels[i];
        total += bce_term(logits[i], y);
        out.upstream[i] = (sigmoid(logits[i]) - y) / n;
    }
    out.loss = total / n;
    return out;
}

double bce_loss(std::span<const double> logits, std::span<const std::uint8_t> labels) {
    check_labels(logits, labels);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) total += bce_term(logits[i], labels[i]);
    return total / static_cast<double>(logits.size());
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state, const TrainConfig& cfg) {
    if (grad.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw UsageError("Adam: parameter, gradient and state lengths differ");
    for (double g : grad)
        if (!std::isfinite(g)) throw NumericError("Adam: non-finite gradient");

    ++state.t;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

bool EarlyStopper::update(double val_loss) {
    ++epoch_;
    if (val_loss < best_) {
        best_ = val_loss;
        best_epoch_ = epoch_;
        stale_ = 0;
        return true;
    }
    ++stale_;
    return false;
}

namespace {

double full_loss(const FieldModel& model, const PointSet& set) {
    const auto logits = forward_batch(model, set.coords);
    return bce_loss(logits, set.labels);
}

}  // namespace

TrainResult train(const FieldModel& model, const PointSet& train_set, const PointSet& val_set,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) throw UsageError("training and validation sets must be non-empty");
    if (train_set.dim != model.spec.input_dim || val_set.dim != model.spec.input_dim)
        throw UsageError("point set dimension does not match the model");

    const std::size_t n = train_set.size();
    FieldModel current = model;
    TrainResult result{model, {}};
    AdamState adam(current.params.size());
    EarlyStopper stopper(cfg.patience);

    std::vector<std::size_t> order(n);
    std::vector<double> batch_x;
    std::vector<std::uint8_t> batch_y;
    ForwardTape tape;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(cfg.seed, Stream::shuffle, static_cast<std::uint64_t>(epoch));
        rng.shuffle(std::span<std::size_t>(order));

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            batch_x.clear();
            batch_y.clear();
            for (std::size_t r = start; r < stop; ++r) {
                const auto x = train_set.point(order[r]);
                batch_x.insert(batch_x.end(), x.begin(), x.end());
                batch_y.push_back(train_set.labels[order[r]]);
            }
            try {
                const auto logits = forward_batch(current, batch_x, &tape);
                const auto [loss, upstream] = bce_loss_and_upstream(logits, batch_y);
                if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
                epoch_loss += loss * static_cast<double>(stop - start);
                adam_step(current.params, backward(current, tape, upstream), adam, cfg);
            } catch (const NumericError& e) {
                throw TrainingError("epoch " + std::to_string(epoch + 1) + ": " + e.what(), result.trace);
            }
        }

        double val = NAN;
        try {
            val = full_loss(current, val_set);
        } catch (const NumericError&) {
        }
        if (hooks.val_loss_override) val = hooks.val_loss_override(epoch, val);
        if (!std::isfinite(val))
            throw TrainingError("non-finite validation loss in epoch " + std::to_string(epoch + 1), result.trace);

        result.trace.train_loss.push_back(epoch_loss / static_cast<double>(n));
        result.trace.val_loss.push_back(val);
        if (stopper.update(val)) {
            result.model = current;
            result.trace.best_epoch = epoch;
        }
        if (stopper.should_stop()) {
            result.trace.stop_reason = StopReason::early_stop;
            break;
        }
    }
    return result;
}

}  // namespace fieldloom
