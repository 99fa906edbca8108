#pragma once

#include <span>
#include <utility>
#include <vector>

#include "tucknet/cells.hpp"
#include "tucknet/tensor.hpp"

namespace tucknet {

enum class LossKind { kSquared, kCrossEntropy };

/// Response layouts. kSingleSeries: one series with a response at every
/// step. kLastStep / kAllSteps: N equal-length windows with a response at
/// the final step only, or at every step. The panel variants are the same
/// two layouts but allow each series its own length.
enum class LossRegime { kSingleSeries, kLastStep, kAllSteps, kPanelLast, kPanelAll };

struct LossSpec {
    LossKind kind = LossKind::kSquared;
    LossRegime regime = LossRegime::kLastStep;
    double lambda = 0.0;  // Frobenius regularization weight, >= 0

    void validate() const;
};

/// One training case: an input window plus its responses. Regimes with a
/// response only at the end store exactly one target; every-step regimes
/// store one target per input step.
struct SeriesCase {
    std::vector<DenseTensor> inputs;
    std::vector<DenseTensor> targets;
};

struct SeriesDataset {
    std::vector<SeriesCase> cases;
};

struct StepLoss {
    double value = 0.0;
    DenseTensor adjoint;  // d(value)/d(o_hat), response dims
};

/// Squared: 0.5 * sum (y - o_hat)^2, adjoint (o_hat - y).
/// Cross-entropy: o_hat holds logits; softmax over the flattened tensor,
/// then negative log-likelihood against a one-hot y; adjoint is
/// softmax(o_hat) - y. Throws if y is not one-hot.
StepLoss step_loss(const DenseTensor& y, const DenseTensor& o_hat, LossKind kind);

struct AggregateLoss {
    double value = 0.0;
    /// adjoints[j][t] is the loss adjoint for case j at step t; empty
    /// tensors mark steps that carry no response.
    std::vector<std::vector<DenseTensor>> adjoints;
};

/// Sums step losses over the dataset per the regime and emits the per-step
/// adjoint schedule the backward pass consumes. outputs[j] must hold one
/// head output per input step of case j. Does not include the regularizer.
AggregateLoss aggregate_loss(const SeriesDataset& data,
                             std::span<const std::vector<DenseTensor>> outputs,
                             const LossSpec& spec);

/// Loss and adjoint schedule for one case (the per-case kernel behind
/// aggregate_loss; response layout comes from the regime, whole-dataset
/// validation is the caller's responsibility).
std::pair<double, std::vector<DenseTensor>> case_loss(const SeriesCase& c,
                                                      std::span<const DenseTensor> outputs,
                                                      const LossSpec& spec);

/// True when the regime carries a response only at each series' final step.
bool regime_is_last_step_only(LossRegime regime);
/// True when the regime requires all series to share one length.
bool regime_requires_uniform_length(LossRegime regime);

/// Checks case shapes against the regime (target counts, uniform lengths
/// where required, nonempty dataset). Throws ShapeError on violations.
void validate_dataset(const SeriesDataset& data, LossRegime regime);

double frobenius_squared(const Matrix& m);

/// lambda * (sum ||W||_F^2 + sum ||U||_F^2) over every gate of the model.
/// Biases and the output head are not part of the penalty. The gradient
/// contribution for each regularized matrix is 2*lambda*matrix (applied
/// where gradients are consumed; see regularizer_gradient).
double regularizer_value(const Model& m, double lambda);

/// 2*lambda*m, the derivative of lambda*||m||_F^2.
Matrix regularizer_gradient(const Matrix& m, double lambda);

}  // namespace tucknet
