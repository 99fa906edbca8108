#include "tucknet/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tucknet {

namespace {

bool is_one_hot(const DenseTensor& y) {
    std::int64_t ones = 0;
    for (std::int64_t i = 0; i < y.size(); ++i) {
        if (y[i] == 1.0)
            ++ones;
        else if (y[i] != 0.0)
            return false;
    }
    return ones == 1;
}

}  // namespace

bool regime_requires_uniform_length(LossRegime r) {
    return r == LossRegime::kLastStep || r == LossRegime::kAllSteps;
}

bool regime_is_last_step_only(LossRegime r) {
    return r == LossRegime::kLastStep || r == LossRegime::kPanelLast;
}

void LossSpec::validate() const {
    if (lambda < 0.0) throw ShapeError("loss spec: lambda must be nonnegative");
}

StepLoss step_loss(const DenseTensor& y, const DenseTensor& o_hat, LossKind kind) {
    if (!y.same_dims(o_hat)) throw ShapeError("step loss: target and output dims differ");
    StepLoss out;
    if (kind == LossKind::kSquared) {
        out.adjoint = DenseTensor(o_hat.dims());
        for (std::int64_t i = 0; i < y.size(); ++i) {
            const double d = o_hat[i] - y[i];
            out.value += 0.5 * d * d;
            out.adjoint[i] = d;
        }
        return out;
    }

    // Cross-entropy over the flattened tensor; o_hat carries logits.
    if (!is_one_hot(y))
        throw ShapeError("cross-entropy: target must be one-hot (exactly one 1, rest 0)");
    double mx = o_hat[0];
    for (std::int64_t i = 1; i < o_hat.size(); ++i) mx = std::max(mx, o_hat[i]);
    double z = 0.0;
    for (std::int64_t i = 0; i < o_hat.size(); ++i) z += std::exp(o_hat[i] - mx);
    const double log_z = std::log(z) + mx;

    out.adjoint = DenseTensor(o_hat.dims());
    for (std::int64_t i = 0; i < o_hat.size(); ++i) {
        const double p = std::exp(o_hat[i] - log_z);
        out.adjoint[i] = p - y[i];
        if (y[i] == 1.0) out.value = log_z - o_hat[i];  // -log p_target
    }
    return out;
}

void validate_dataset(const SeriesDataset& data, LossRegime regime) {
    if (data.cases.empty()) throw ShapeError("dataset: no cases");
    if (regime == LossRegime::kSingleSeries && data.cases.size() != 1)
        throw ShapeError("dataset: the single-series regime expects exactly one series");

    const std::size_t first_len = data.cases.front().inputs.size();
    for (std::size_t j = 0; j < data.cases.size(); ++j) {
        const SeriesCase& c = data.cases[j];
        const std::string where = "dataset case " + std::to_string(j);
        if (c.inputs.empty()) throw ShapeError(where + ": empty input window");
        if (regime_requires_uniform_length(regime) && c.inputs.size() != first_len)
            throw ShapeError(where + ": length differs; use a panel regime for ragged series");
        const std::size_t want_targets = regime_is_last_step_only(regime) ? 1 : c.inputs.size();
        if (c.targets.size() != want_targets)
            throw ShapeError(where + ": expected " + std::to_string(want_targets) +
                             " target(s), got " + std::to_string(c.targets.size()));
    }
}

std::pair<double, std::vector<DenseTensor>> case_loss(const SeriesCase& c,
                                                      std::span<const DenseTensor> outputs,
                                                      const LossSpec& spec) {
    if (outputs.size() != c.inputs.size())
        throw ShapeError("case loss: expected one output per step");
    double value = 0.0;
    std::vector<DenseTensor> adjoints(outputs.size());
    if (regime_is_last_step_only(spec.regime)) {
        if (c.targets.size() != 1) throw ShapeError("case loss: expected a single target");
        StepLoss sl = step_loss(c.targets[0], outputs.back(), spec.kind);
        value = sl.value;
        adjoints.back() = std::move(sl.adjoint);
    } else {
        if (c.targets.size() != outputs.size())
            throw ShapeError("case loss: expected one target per step");
        for (std::size_t t = 0; t < outputs.size(); ++t) {
            StepLoss sl = step_loss(c.targets[t], outputs[t], spec.kind);
            value += sl.value;
            adjoints[t] = std::move(sl.adjoint);
        }
    }
    return {value, std::move(adjoints)};
}

AggregateLoss aggregate_loss(const SeriesDataset& data,
                             std::span<const std::vector<DenseTensor>> outputs,
                             const LossSpec& spec) {
    spec.validate();
    validate_dataset(data, spec.regime);
    if (outputs.size() != data.cases.size())
        throw ShapeError("aggregate loss: output count != case count");

    AggregateLoss agg;
    agg.adjoints.resize(data.cases.size());
    for (std::size_t j = 0; j < data.cases.size(); ++j) {
        auto [value, adjoints] = case_loss(data.cases[j], outputs[j], spec);
        agg.value += value;
        agg.adjoints[j] = std::move(adjoints);
    }
    return agg;
}

double frobenius_squared(const Matrix& m) {
    double s = 0.0;
    for (double v : m.values()) s += v * v;
    return s;
}

double regularizer_value(const Model& m, double lambda) {
    if (lambda < 0.0) throw ShapeError("regularizer: lambda must be nonnegative");
    if (lambda == 0.0) return 0.0;
    double s = 0.0;
    for (const TuckerParams& g : gates(m)) {
        for (const Matrix& w : g.w) s += frobenius_squared(w);
        for (const Matrix& u : g.u) s += frobenius_squared(u);
    }
    return lambda * s;
}

Matrix regularizer_gradient(const Matrix& m, double lambda) {
    Matrix g(m.rows(), m.cols());
    for (std::int64_t i = 0; i < m.size(); ++i) g.data()[i] = 2.0 * lambda * m.data()[i];
    return g;
}

}  // namespace tucknet
