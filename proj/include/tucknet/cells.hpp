#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "tucknet/tensor.hpp"

namespace tucknet {

enum class CellKind { kTLSTM, kTGRU };

enum class Activation { kLogistic, kTanh, kIdentity };

/// Slots: `gate` squashes gate pre-activations, `candidate` squashes the
/// candidate state, `output` is applied to the cell state inside the LSTM
/// hidden update (the GRU has no use for it).
struct ActivationSet {
    Activation gate = Activation::kLogistic;
    Activation candidate = Activation::kTanh;
    Activation output = Activation::kTanh;
};

double activate_scalar(double x, Activation a);
/// Derivative expressed through the activated value: logistic' = y(1-y),
/// tanh' = 1-y^2, identity' = 1. All supported activations admit this form,
/// which lets the backward pass work from cached activations alone.
double activation_slope_from_value(double activated, Activation a);

DenseTensor activate(const DenseTensor& x, Activation a);

/// One gate's parameters: per-mode recurrent maps W (square, hidden side),
/// per-mode input maps U (hidden rows, input columns), and a bias tensor
/// with hidden dims. The pre-activation is
///   M = H x1 W[0] ... xD W[D-1] + X x1 U[0] ... xD U[D-1] + B.
struct TuckerParams {
    std::vector<Matrix> w;
    std::vector<Matrix> u;
    DenseTensor b;
};

namespace lstm_gate {
inline constexpr int kForget = 0;
inline constexpr int kInput = 1;
inline constexpr int kOutput = 2;
inline constexpr int kCandidate = 3;
inline constexpr int kCount = 4;
}  // namespace lstm_gate

namespace gru_gate {
inline constexpr int kReset = 0;
inline constexpr int kUpdate = 1;
inline constexpr int kCandidate = 2;
inline constexpr int kCount = 3;
}  // namespace gru_gate

struct LSTMCell {
    Dims input_dims;
    Dims hidden_dims;
    ActivationSet activations;
    std::array<TuckerParams, lstm_gate::kCount> gates;
};

struct GRUCell {
    Dims input_dims;
    Dims hidden_dims;
    ActivationSet activations;  // `output` unused
    std::array<TuckerParams, gru_gate::kCount> gates;
};

enum class HeadActivation { kIdentity, kSoftmax };

/// Linear readout from hidden dims to response dims: one matrix per mode
/// plus a bias. The softmax option produces class probabilities at
/// inference; training losses consume the linear output directly (the
/// cross-entropy loss applies its own softmax), so the training paths
/// require kIdentity.
struct OutputHead {
    std::vector<Matrix> v;  // v[d]: y_d x h_d
    DenseTensor bias;       // response dims
    HeadActivation activation = HeadActivation::kIdentity;
};

/// Throw ShapeError unless every gate conforms to the cell's dims.
void validate(const LSTMCell& cell);
void validate(const GRUCell& cell);
void validate(const OutputHead& head, const Dims& hidden_dims);

/// Cached forward intermediates of one gate, kept for the backward pass.
/// chain_prefix[j] is the gate's hidden-side operand with the first j
/// recurrent maps applied (chain_prefix[0] is the operand itself: H_prev,
/// or the reset-scaled state for the GRU candidate). input_prefix is the
/// same construction over X_t and the input maps. Both have length D; the
/// full products are folded into `pre` and not stored.
struct GateTape {
    DenseTensor pre;  // M before activation
    DenseTensor act;  // activated gate value
    std::vector<DenseTensor> chain_prefix;
    std::vector<DenseTensor> input_prefix;
};

/// Everything the backward pass needs from one forward step.
struct TapeStep {
    DenseTensor x;
    DenseTensor h_prev;
    DenseTensor h;
    std::vector<GateTape> gates;  // indexed by lstm_gate:: or gru_gate::

    // tLSTM only:
    DenseTensor c_prev;
    DenseTensor c;
    DenseTensor tanh_c;  // output activation of c, cached for Hadamards

    // tGRU only:
    DenseTensor r_hat;  // reset gate ∘ previous hidden state
};

/// M = chain(W, h_or_r) + chain(U, x) + B. `tape`, when non-null, receives
/// the prefix caches and the pre-activation.
DenseTensor gate_preactivation(const TuckerParams& params, const DenseTensor& h_or_r,
                               const DenseTensor& x, GateTape* tape = nullptr);

/// One tLSTM step. The returned tape carries the new state: `.h` and `.c`.
TapeStep lstm_step(const LSTMCell& cell, const DenseTensor& x, const DenseTensor& h_prev,
                   const DenseTensor& c_prev);

/// One tGRU step; the new hidden state is `.h` on the returned tape.
TapeStep gru_step(const GRUCell& cell, const DenseTensor& x, const DenseTensor& h_prev);

/// Readout for one hidden state.
DenseTensor output_head(const OutputHead& head, const DenseTensor& h);

struct SeriesRun {
    std::vector<DenseTensor> outputs;  // head output at every step
    std::vector<TapeStep> tapes;
};

/// Unroll the cell over inputs[0..T), emitting the head output at every
/// step. Empty initial states mean zeros. Throws on an empty series or
/// inconsistent per-step dims.
SeriesRun run_series(const LSTMCell& cell, const OutputHead& head,
                     std::span<const DenseTensor> inputs, const DenseTensor& h0 = {},
                     const DenseTensor& c0 = {});
SeriesRun run_series(const GRUCell& cell, const OutputHead& head,
                     std::span<const DenseTensor> inputs, const DenseTensor& h0 = {});

/// A cell paired with its readout: the unit the trainer, the gradient
/// code, and the serializer all operate on.
struct Model {
    std::variant<LSTMCell, GRUCell> cell;
    OutputHead head;

    CellKind kind() const {
        return std::holds_alternative<LSTMCell>(cell) ? CellKind::kTLSTM : CellKind::kTGRU;
    }
};

const Dims& input_dims(const Model& m);
const Dims& hidden_dims(const Model& m);

/// The cell's gate parameters in canonical order (forget, input, output,
/// candidate for the tLSTM; reset, update, candidate for the tGRU).
std::span<TuckerParams> gates(Model& m);
std::span<const TuckerParams> gates(const Model& m);

SeriesRun run_series(const Model& m, std::span<const DenseTensor> inputs);

/// Parameter initialization. kFanIn draws each matrix entry uniform on
/// [-s, s] with s = 1/sqrt(columns of that matrix); biases start at zero
/// except the forget-gate bias, which starts at +1 so early training does
/// not flush the cell state. kZero zeroes everything (useful in tests).
enum class InitScheme { kFanIn, kZero };

LSTMCell make_lstm(Dims input_dims, Dims hidden_dims, std::uint64_t seed,
                   InitScheme scheme = InitScheme::kFanIn, ActivationSet acts = {});
GRUCell make_gru(Dims input_dims, Dims hidden_dims, std::uint64_t seed,
                 InitScheme scheme = InitScheme::kFanIn, ActivationSet acts = {});
OutputHead make_head(const Dims& hidden_dims, Dims response_dims, std::uint64_t seed,
                     InitScheme scheme = InitScheme::kFanIn);

/// Cell parameters are drawn from Rng(seed), head parameters from
/// Rng(seed + 1), so a model is fully pinned by one seed.
Model make_model(CellKind kind, Dims input_dims, Dims hidden_dims, Dims response_dims,
                 std::uint64_t seed, InitScheme scheme = InitScheme::kFanIn,
                 ActivationSet acts = {});

}  // namespace tucknet
