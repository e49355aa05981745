#ifndef RBFKAN_TRAINING_HPP
#define RBFKAN_TRAINING_HPP

#include <chrono>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbfkan/benchmarks.hpp"
#include "rbfkan/errors.hpp"
#include "rbfkan/tensor.hpp"

namespace rbfkan
{

/// Anything trainable by full-batch gradient descent: a flat parameter vector,
/// forward/backward free functions found by ADL and an optional shape parameter.
template <class M>
concept TrainableModel = requires(M &m, const M &cm, const Matrix &x) {
    { m.parameters() } -> std::convertible_to<std::span<double>>;
    { cm.shape_parameter() } -> std::convertible_to<std::optional<double>>;
    { forward(cm, x).outputs } -> std::convertible_to<Matrix>;
    forward(cm, x, std::declval<decltype(forward(cm, x)) &>());
    { backward(cm, forward(cm, x), x) } -> std::convertible_to<std::vector<double>>;
    { predict(cm, x) } -> std::convertible_to<std::vector<double>>;
};

struct TrainConfig
{
    double learning_rate = 1e-2;
    int epochs = 2000;
    int eval_every = 100;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const
    {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw DomainError("TrainConfig: learning_rate must be positive");
        }
        if (epochs < 1) {
            throw DomainError("TrainConfig: epochs must be >= 1");
        }
        if (eval_every < 1) {
            throw DomainError("TrainConfig: eval_every must be >= 1");
        }
        if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
            throw DomainError("TrainConfig: Adam betas must lie in (0, 1)");
        }
        if (!(adam_eps > 0.0)) {
            throw DomainError("TrainConfig: adam_eps must be positive");
        }
    }

    friend bool operator==(const TrainConfig &, const TrainConfig &) = default;
};

inline double mse_loss(std::span<const double> predictions, std::span<const double> targets)
{
    if (predictions.empty() || predictions.size() != targets.size()) {
        throw DomainError("mse_loss: inputs must be non-empty and of equal length");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = targets[i] - predictions[i];
        acc += d * d;
    }
    return acc / static_cast<double>(predictions.size());
}

/// ||predictions - targets||_2 / ||targets||_2.
inline double relative_l2(std::span<const double> predictions, std::span<const double> targets)
{
    if (predictions.size() != targets.size()) {
        throw DomainError("relative_l2: length mismatch");
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - targets[i];
        num += d * d;
        den += targets[i] * targets[i];
    }
    if (!(den > 0.0)) {
        throw DomainError("relative_l2: targets have zero norm");
    }
    return std::sqrt(num / den);
}

struct AdamState
{
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}

    friend bool operator==(const AdamState &, const AdamState &) = default;
};

/// One bias-corrected Adam update applied in place.
inline void adam_step(AdamState &state, std::span<double> params, std::span<const double> grads,
                      const TrainConfig &config)
{
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw DomainError("adam_step: parameter, gradient and state sizes differ");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) {
            throw NumericalDivergenceError("adam_step: non-finite gradient", -1, -1);
        }
    }
    ++state.step;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
}

struct TrainRecordEntry
{
    int epoch = 0;
    double train_mse = 0.0;   ///< loss of the forward pass of this epoch
    double test_rel_l2 = 0.0; ///< after this epoch's update
    std::optional<double> h;  ///< shape parameter after this epoch's update

    friend bool operator==(const TrainRecordEntry &, const TrainRecordEntry &) = default;
};

struct TrainRecord
{
    std::vector<TrainRecordEntry> entries;
    double first_train_mse = 0.0;
    double final_train_mse = 0.0;
    int epochs_completed = 0;
    double seconds = 0.0; ///< wall clock; excluded from equality

    friend bool operator==(const TrainRecord &a, const TrainRecord &b)
    {
        return a.entries == b.entries && a.first_train_mse == b.first_train_mse
               && a.final_train_mse == b.final_train_mse && a.epochs_completed == b.epochs_completed;
    }
};

/// Raised when training hits a non-finite value; carries everything recorded so far.
class TrainingDivergedError : public NumericalDivergenceError
{
public:
    TrainingDivergedError(const NumericalDivergenceError &cause, int epoch, TrainRecord partial)
        : NumericalDivergenceError(std::string(cause.what()) + " at epoch " + std::to_string(epoch), epoch,
                                   cause.layer()),
          partial_(std::move(partial))
    {
    }

    const TrainRecord &partial_record() const noexcept { return partial_; }

private:
    TrainRecord partial_;
};

template <class Model>
struct TrainResult
{
    Model model;
    TrainRecord record;
};

/// Full-batch Adam on the MSE of the training split. Every `eval_every` epochs
/// (and after the last one) records the test relative L2 error and current h.
template <TrainableModel Model>
TrainResult<Model> train(Model model, const Dataset &dataset, const TrainConfig &config)
{
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const Matrix x_train = dataset.train_inputs();
    const std::vector<double> y_train = dataset.train_targets();
    const Matrix x_test = dataset.test_inputs();
    const std::vector<double> y_test = dataset.test_targets();
    if (y_train.empty() || y_test.empty()) {
        throw DomainError("train: dataset needs non-empty train and test splits");
    }
    const std::size_t n = y_train.size();

    AdamState adam(model.parameters().size());
    TrainRecord record;
    Matrix out_grad(n, 1);
    decltype(forward(model, x_train)) trace;
    int epoch = 0;
    try {
        for (epoch = 1; epoch <= config.epochs; ++epoch) {
            forward(model, x_train, trace);
            if (trace.outputs.cols() != 1) {
                throw DomainError("train: model must have a single output");
            }
            const auto pred = trace.outputs.data();
            const double loss = mse_loss(pred, y_train);
            if (!std::isfinite(loss)) {
                throw NumericalDivergenceError("non-finite training loss", epoch, -1);
            }
            if (epoch == 1) {
                record.first_train_mse = loss;
            }
            record.final_train_mse = loss;
            const double scale = 2.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                out_grad(i, 0) = scale * (pred[i] - y_train[i]);
            }
            const auto grad = backward(model, trace, out_grad);
            adam_step(adam, model.parameters(), grad, config);
            record.epochs_completed = epoch;

            if (epoch % config.eval_every == 0 || epoch == config.epochs) {
                const auto test_pred = predict(model, x_test);
                TrainRecordEntry e;
                e.epoch = epoch;
                e.train_mse = loss;
                e.test_rel_l2 = relative_l2(test_pred, y_test);
                e.h = model.shape_parameter();
                if (!std::isfinite(e.test_rel_l2) || (e.h && !(std::isfinite(*e.h) && *e.h > 0.0))) {
                    throw NumericalDivergenceError("non-finite evaluation", epoch, -1);
                }
                record.entries.push_back(e);
            }
        }
    } catch (const NumericalDivergenceError &e) {
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        throw TrainingDivergedError(e, epoch, std::move(record));
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(model), std::move(record)};
}

} // namespace rbfkan

#endif
