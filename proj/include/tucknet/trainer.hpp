#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "tucknet/backprop.hpp"
#include "tucknet/cells.hpp"
#include "tucknet/data_io.hpp"
#include "tucknet/objectives.hpp"

namespace tucknet {

/// Raised when the training loss stops being finite.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// kFullBatch sums gradients over every case and updates once per epoch;
/// kPerSeries updates after each case, traversed in ascending case order.
enum class BatchPolicy { kFullBatch, kPerSeries };

struct TrainConfig {
    CellKind cell = CellKind::kTLSTM;
    Dims hidden_dims;
    LossSpec loss;
    double learning_rate = 0.01;  // 0 is the degenerate no-op (useful in tests)
    std::int64_t epochs = 1000;
    std::uint64_t seed = 0;
    BatchPolicy batch = BatchPolicy::kFullBatch;
    double split_fraction = 0.9;
    double clip_norm = 5.0;  // global-norm clip on the objective gradient; <= 0 disables
    std::int64_t window = 7;

    /// Windows per chunk on the stacked full-batch path; <= 0 stacks every
    /// window at once. Chunking bounds the forward tape's memory and keeps
    /// its working set cache-sized. The value only reassociates sums — any
    /// fixed choice gives bitwise-reproducible reruns.
    std::int64_t stack_chunk = 64;

    /// Throws ShapeError on out-of-range fields (negative rate, epochs < 1,
    /// split outside (0,1), window < 1, empty hidden dims).
    void validate() const;
};

struct TrainReport {
    /// Training objective (data loss + regularizer) measured at the
    /// parameters entering each epoch; length == epochs.
    std::vector<double> loss_history;
    /// Measured wall clock per epoch. Not part of the deterministic
    /// surface — reruns of one config agree on everything else bitwise.
    std::vector<double> epoch_wall_ms;
    /// Raw-space per-element test MSE (NaN when no test cases were given
    /// or the scaler was omitted on scaled data).
    double final_test_mse = 0.0;
    /// Same metric for the persistence forecast (predict the most recent
    /// input); NaN when undefined (no test cases, or response dims differ
    /// from input dims).
    double persistence_test_mse = 0.0;
    double final_learning_rate = 0.0;
    TrainConfig config;
};

struct TrainOutcome {
    Model model;
    TrainReport report;
};

/// theta <- theta - rate * (grads + regularizer gradient), where the
/// regularizer contributes 2*lambda*theta for every gate W and U matrix
/// and nothing for biases or the head.
void sgd_step(Model& m, const GradientSet& grads, double rate, double lambda = 0.0);

/// Adds the regularizer gradient (2*lambda*W per gate W and U) into g.
void add_regularizer_gradient(GradientSet& g, const Model& m, double lambda);

/// Mean per-element squared error of the model's head outputs against the
/// targets, over every responsive step the regime selects. The scaler
/// overload maps residuals back to raw units (multiplies by the per-
/// position standard deviation) before squaring, so datasets that were
/// standardized report their error in the original scale.
double evaluate(const Model& m, const SeriesDataset& test, const LossSpec& spec);
double evaluate(const Model& m, const SeriesDataset& test, const LossSpec& spec,
                const ElementScaler& scaler);

/// Same metric for the persistence forecast: the prediction at each
/// responsive step is that step's input. Requires input dims == response
/// dims.
double persistence_mse(const SeriesDataset& test, const LossSpec& spec);
double persistence_mse(const SeriesDataset& test, const LossSpec& spec,
                       const ElementScaler& scaler);

/// Sliding lag-1 windows over a base series, split chronologically.
struct CaseSplit {
    SeriesDataset train;
    SeriesDataset test;
    /// Window start offsets into the base series (0-based), recorded so
    /// callers can assert the chronological no-overlap property.
    std::vector<std::int64_t> train_starts;
    std::vector<std::int64_t> test_starts;
    std::int64_t window = 0;
    std::int64_t total_windows = 0;
};

/// Builds every admissible window of `window` consecutive inputs whose
/// responsive steps all have a lag-1 target (the value one step before the
/// input), then splits: first floor(split_fraction * N) windows train
/// (clamped so both sides stay nonempty), remainder test. Last-step-only
/// regimes admit windows starting at the first step (the final step's
/// target lies inside the window) except when window == 1; every-step
/// regimes start at the second step. Throws ShapeError when the series is
/// too short for two windows or the regime does not window (single-series).
CaseSplit build_cases(std::span<const DenseTensor> series, std::int64_t window,
                      LossRegime regime, double split_fraction = 0.9);

/// Full training loop: fan-in initialization from config.seed, per-epoch
/// objective recording, halving-on-increase learning-rate backoff,
/// global-norm clipping, and a final test evaluation. Deterministic given
/// the config (wall-clock fields aside). Throws DivergenceError when the
/// objective turns non-finite. `scaler`, when given, is only used to
/// report raw-space test metrics. `on_epoch`, when given, is invoked after
/// every epoch with the 1-based epoch index and the objective recorded for
/// that epoch (progress reporting; it does not affect the result).
TrainOutcome train(const SeriesDataset& train_set, const SeriesDataset& test_set,
                   const TrainConfig& config, const ElementScaler* scaler = nullptr,
                   const std::function<void(std::int64_t, double)>& on_epoch = {});

}  // namespace tucknet
