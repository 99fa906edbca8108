#include "tucknet/trainer.hpp"

#include <algorithm>
#include <chrono>

#include "tucknet/batch.hpp"
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace tucknet {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Σ 0.5 * (pred - target)^2 family bookkeeping for evaluation: accumulates
/// raw squared residuals (optionally mapped through per-position stddevs)
/// and the element count.
struct MseAccumulator {
    const std::vector<double>* stddev = nullptr;
    double sum = 0.0;
    std::int64_t count = 0;

    void add(const DenseTensor& pred, const DenseTensor& target) {
        if (!pred.same_dims(target)) throw ShapeError("evaluate: prediction/target dims differ");
        if (stddev && stddev->size() != static_cast<std::size_t>(pred.size()))
            throw ShapeError("evaluate: scaler size mismatch");
        for (std::int64_t i = 0; i < pred.size(); ++i) {
            double r = pred[i] - target[i];
            if (stddev) r *= (*stddev)[static_cast<std::size_t>(i)];
            sum += r * r;
        }
        count += pred.size();
    }

    double mean() const { return count == 0 ? kNaN : sum / static_cast<double>(count); }
};

/// Walks the responsive steps of one case, feeding (prediction, target)
/// pairs to `acc`. `predict(t)` must return the forecast for step t.
template <typename Predict>
void accumulate_case(const SeriesCase& c, const LossSpec& spec, MseAccumulator& acc,
                     Predict&& predict) {
    const std::size_t steps = c.inputs.size();
    if (regime_is_last_step_only(spec.regime)) {
        acc.add(predict(steps - 1), c.targets.front());
    } else {
        for (std::size_t t = 0; t < steps; ++t) acc.add(predict(t), c.targets[t]);
    }
}

double evaluate_impl(const Model& m, const SeriesDataset& test, const LossSpec& spec,
                     const std::vector<double>* stddev) {
    spec.validate();
    MseAccumulator acc{stddev, 0.0, 0};
    for (const SeriesCase& c : test.cases) {
        const SeriesRun run = run_series(m, c.inputs);
        accumulate_case(c, spec, acc, [&run](std::size_t t) -> const DenseTensor& {
            return run.outputs[t];
        });
    }
    return acc.mean();
}

double persistence_impl(const SeriesDataset& test, const LossSpec& spec,
                        const std::vector<double>* stddev) {
    spec.validate();
    MseAccumulator acc{stddev, 0.0, 0};
    for (const SeriesCase& c : test.cases)
        accumulate_case(c, spec, acc, [&c](std::size_t t) -> const DenseTensor& {
            return c.inputs[t];
        });
    return acc.mean();
}

double dataset_loss(const Model& m, const SeriesDataset& data, const LossSpec& spec) {
    double total = 0.0;
    for (const SeriesCase& c : data.cases) {
        const SeriesRun run = run_series(m, c.inputs);
        total += case_loss(c, run.outputs, spec).first;
    }
    return total;
}

void clip_gradient(GradientSet& g, double clip_norm) {
    if (clip_norm <= 0.0) return;
    const double norm = global_norm(g);
    if (norm > clip_norm) scale_in_place(g, clip_norm / norm);
}

}  // namespace

void TrainConfig::validate() const {
    loss.validate();
    if (hidden_dims.empty()) throw ShapeError("config: hidden dims must be set");
    for (std::int64_t d : hidden_dims)
        if (d < 1) throw ShapeError("config: hidden dims must be positive");
    if (learning_rate < 0.0 || !std::isfinite(learning_rate))
        throw ShapeError("config: learning rate must be finite and non-negative");
    if (epochs < 1) throw ShapeError("config: epochs must be at least 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw ShapeError("config: split fraction must lie in (0, 1)");
    if (window < 1) throw ShapeError("config: window must be at least 1");
}

void sgd_step(Model& m, const GradientSet& grads, double rate, double lambda) {
    const auto gate_params = gates(m);
    if (grads.gates.size() != gate_params.size() || grads.v.size() != m.head.v.size())
        throw ShapeError("sgd_step: gradient structure mismatch");
    const auto apply = [rate](double* p, const double* g, std::int64_t n, double decay) {
        for (std::int64_t i = 0; i < n; ++i) p[i] -= rate * (g[i] + decay * p[i]);
    };
    for (std::size_t a = 0; a < gate_params.size(); ++a) {
        TuckerParams& gp = gate_params[a];
        const GateGradient& gg = grads.gates[a];
        for (std::size_t d = 0; d < gp.w.size(); ++d)
            apply(gp.w[d].data(), gg.w[d].data(), gp.w[d].size(), 2.0 * lambda);
        for (std::size_t d = 0; d < gp.u.size(); ++d)
            apply(gp.u[d].data(), gg.u[d].data(), gp.u[d].size(), 2.0 * lambda);
        apply(gp.b.data(), gg.b.data(), gp.b.size(), 0.0);
    }
    for (std::size_t d = 0; d < m.head.v.size(); ++d)
        apply(m.head.v[d].data(), grads.v[d].data(), m.head.v[d].size(), 0.0);
    apply(m.head.bias.data(), grads.head_bias.data(), m.head.bias.size(), 0.0);
}

void add_regularizer_gradient(GradientSet& g, const Model& m, double lambda) {
    if (lambda == 0.0) return;
    const auto gate_params = gates(m);
    if (g.gates.size() != gate_params.size())
        throw ShapeError("regularizer gradient: structure mismatch");
    for (std::size_t a = 0; a < gate_params.size(); ++a) {
        for (std::size_t d = 0; d < gate_params[a].w.size(); ++d)
            accumulate_scaled(g.gates[a].w[d], gate_params[a].w[d], 2.0 * lambda);
        for (std::size_t d = 0; d < gate_params[a].u.size(); ++d)
            accumulate_scaled(g.gates[a].u[d], gate_params[a].u[d], 2.0 * lambda);
    }
}

double evaluate(const Model& m, const SeriesDataset& test, const LossSpec& spec) {
    return evaluate_impl(m, test, spec, nullptr);
}

double evaluate(const Model& m, const SeriesDataset& test, const LossSpec& spec,
                const ElementScaler& scaler) {
    return evaluate_impl(m, test, spec, &scaler.stddev);
}

double persistence_mse(const SeriesDataset& test, const LossSpec& spec) {
    return persistence_impl(test, spec, nullptr);
}

double persistence_mse(const SeriesDataset& test, const LossSpec& spec,
                       const ElementScaler& scaler) {
    return persistence_impl(test, spec, &scaler.stddev);
}

CaseSplit build_cases(std::span<const DenseTensor> series, std::int64_t window,
                      LossRegime regime, double split_fraction) {
    if (window < 1) throw ShapeError("build_cases: window must be at least 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw ShapeError("build_cases: split fraction must lie in (0, 1)");
    if (regime == LossRegime::kSingleSeries)
        throw ShapeError("build_cases: the single-series regime does not window");
    for (std::size_t t = 1; t < series.size(); ++t)
        if (!series[t].same_dims(series[0]))
            throw ShapeError("build_cases: series steps must share one shape");

    const std::int64_t length = static_cast<std::int64_t>(series.size());
    const bool last_only = regime_is_last_step_only(regime);
    // Windows may start wherever every responsive step has a predecessor:
    // a last-step window of length >= 2 contains its own target, so it can
    // start at the first step; otherwise the earliest start is the second.
    const std::int64_t first = (last_only && window >= 2) ? 0 : 1;
    const std::int64_t last = length - window;  // inclusive start bound
    const std::int64_t total = last - first + 1;
    if (total < 2)
        throw ShapeError("build_cases: series too short for a train/test split (" +
                         std::to_string(std::max<std::int64_t>(total, 0)) + " windows)");

    const auto window_case = [&series, window, last_only](std::int64_t s) {
        SeriesCase c;
        c.inputs.assign(series.begin() + s, series.begin() + s + window);
        if (last_only) {
            c.targets.push_back(series[static_cast<std::size_t>(s + window - 2)]);
        } else {
            c.targets.assign(series.begin() + s - 1, series.begin() + s + window - 1);
        }
        return c;
    };

    CaseSplit split;
    split.window = window;
    split.total_windows = total;
    const std::int64_t n_train = std::clamp<std::int64_t>(
        static_cast<std::int64_t>(std::floor(split_fraction * static_cast<double>(total))), 1,
        total - 1);
    for (std::int64_t s = first; s <= last; ++s) {
        const bool is_train = (s - first) < n_train;
        (is_train ? split.train : split.test).cases.push_back(window_case(s));
        (is_train ? split.train_starts : split.test_starts).push_back(s);
    }
    return split;
}

TrainOutcome train(const SeriesDataset& train_set, const SeriesDataset& test_set,
                   const TrainConfig& config, const ElementScaler* scaler,
                   const std::function<void(std::int64_t, double)>& on_epoch) {
    config.validate();
    validate_dataset(train_set, config.loss.regime);
    if (!test_set.cases.empty() && config.loss.regime != LossRegime::kSingleSeries)
        validate_dataset(test_set, config.loss.regime);

    const Dims& input_dims = train_set.cases.front().inputs.front().dims();
    const Dims& response_dims = train_set.cases.front().targets.front().dims();

    TrainOutcome out{make_model(config.cell, input_dims, config.hidden_dims, response_dims,
                                config.seed),
                     {}};
    TrainReport& report = out.report;
    report.config = config;
    report.loss_history.reserve(static_cast<std::size_t>(config.epochs));
    report.epoch_wall_ms.reserve(static_cast<std::size_t>(config.epochs));

    double rate = config.learning_rate;
    const double lambda = config.loss.lambda;

    // Full-batch gradients over uniform squared-loss windows go through the
    // stacked evaluator: the windows are stacked once along a trailing batch
    // mode and every epoch's mode products then span a whole chunk.
    const bool stacked = config.batch == BatchPolicy::kFullBatch &&
                         config.loss.regime != LossRegime::kPanelLast &&
                         config.loss.regime != LossRegime::kPanelAll &&
                         config.loss.kind == LossKind::kSquared;
    const std::vector<StackedWindows> stacks =
        stacked ? stack_windows(train_set, config.loss.regime, config.stack_chunk)
                : std::vector<StackedWindows>{};

    for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        double objective;
        if (config.batch == BatchPolicy::kFullBatch) {
            DatasetGradient dg = stacked
                                     ? stacked_gradient(out.model, stacks, config.loss)
                                     : dataset_gradient(out.model, train_set, config.loss);
            objective = dg.loss + regularizer_value(out.model, lambda);
            if (!std::isfinite(objective))
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) +
                                      ": objective is not finite");
            if (!report.loss_history.empty() && objective > report.loss_history.back())
                rate *= 0.5;
            report.loss_history.push_back(objective);

            add_regularizer_gradient(dg.grads, out.model, lambda);
            clip_gradient(dg.grads, config.clip_norm);
            sgd_step(out.model, dg.grads, rate);
        } else {
            objective = dataset_loss(out.model, train_set, config.loss) +
                        regularizer_value(out.model, lambda);
            if (!std::isfinite(objective))
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) +
                                      ": objective is not finite");
            if (!report.loss_history.empty() && objective > report.loss_history.back())
                rate *= 0.5;
            report.loss_history.push_back(objective);

            for (const SeriesCase& c : train_set.cases) {
                const SeriesRun run = run_series(out.model, c.inputs);
                auto [value, adjoints] = case_loss(c, run.outputs, config.loss);
                if (!std::isfinite(value))
                    throw DivergenceError("training diverged at epoch " +
                                          std::to_string(epoch + 1) +
                                          ": case loss is not finite");
                GradientSet grads = backprop_series(out.model, run, adjoints);
                add_regularizer_gradient(grads, out.model, lambda);
                clip_gradient(grads, config.clip_norm);
                sgd_step(out.model, grads, rate);
            }
        }

        const auto t1 = std::chrono::steady_clock::now();
        report.epoch_wall_ms.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
        if (on_epoch) on_epoch(epoch + 1, objective);
    }

    report.final_learning_rate = rate;
    if (test_set.cases.empty()) {
        report.final_test_mse = kNaN;
        report.persistence_test_mse = kNaN;
    } else {
        report.final_test_mse = scaler ? evaluate(out.model, test_set, config.loss, *scaler)
                                       : evaluate(out.model, test_set, config.loss);
        if (input_dims == response_dims)
            report.persistence_test_mse = scaler
                                              ? persistence_mse(test_set, config.loss, *scaler)
                                              : persistence_mse(test_set, config.loss);
        else
            report.persistence_test_mse = kNaN;
    }
    return out;
}

}  // namespace tucknet
