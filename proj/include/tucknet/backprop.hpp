#pragma once

#include <functional>
#include <span>
#include <vector>

#include "tucknet/cells.hpp"
#include "tucknet/objectives.hpp"
#include "tucknet/tensor.hpp"

namespace tucknet {

/// Gradient of one gate's TuckerParams, same shapes as the parameters.
struct GateGradient {
    std::vector<Matrix> w;
    std::vector<Matrix> u;
    DenseTensor b;
};

/// Gradients for every trainable value of a model.
struct GradientSet {
    std::vector<GateGradient> gates;  // canonical gate order
    std::vector<Matrix> v;            // output head matrices
    DenseTensor head_bias;
};

GradientSet zero_gradients(const Model& m);
void accumulate(GradientSet& acc, const GradientSet& g);
void scale_in_place(GradientSet& g, double s);
/// sqrt of the sum of squares over every entry (used for norm clipping).
double global_norm(const GradientSet& g);

/// Visit every trainable buffer in canonical order: for each gate W_1..W_D,
/// U_1..U_D, B; then head V_1..V_D, head bias. The same order is used for
/// models and gradient sets, so zipping the two visitations pairs each
/// parameter with its gradient.
void visit_params(Model& m, const std::function<void(double*, std::int64_t)>& fn);
void visit_params(const Model& m, const std::function<void(const double*, std::int64_t)>& fn);
void visit_params(GradientSet& g, const std::function<void(double*, std::int64_t)>& fn);
void visit_params(const GradientSet& g, const std::function<void(const double*, std::int64_t)>& fn);
std::int64_t parameter_count(const Model& m);

/// Loss derivatives flowing into one step from the future and from the
/// step's own response.
struct AdjointState {
    DenseTensor dh;      // d(loss)/dH_t arriving from step t+1
    DenseTensor dc;      // d(loss)/dC_t arriving from step t+1 (tLSTM)
    DenseTensor dh_out;  // d(loss)/dH_t through the readout at t (empty = no response)
};

/// Adjoint of the recurrent Tucker map M(H) = H x1 W_1 ... xD W_D: pulls a
/// hidden-shaped gradient at M back to the operand. Equals multiplying
/// vec(g) by the transposed Kronecker chain, evaluated matrix-free as a
/// sequence of transposed mode products.
DenseTensor tucker_jacobian_hidden_adjoint(const TuckerParams& params, const DenseTensor& g);

/// d(loss)/dW_d of the pre-activation map, given dm = d(loss)/dM (with the
/// activation slope already folded in): unfold dm on mode d and multiply by
/// the unfolding of the partial product h_prev x_{k != d} W_k.
Matrix grad_wrt_W(const DenseTensor& dm, const TuckerParams& params, const DenseTensor& h_prev,
                  int mode);
/// Same with the input chain: partial product of x under the U maps.
Matrix grad_wrt_U(const DenseTensor& dm, const TuckerParams& params, const DenseTensor& x,
                  int mode);
/// The bias enters additively, so its per-step gradient is dm itself.
DenseTensor grad_wrt_B(const DenseTensor& dm);

/// Gradient variants for the tGRU hidden-state backpropagation. kFull
/// carries all four paths into H_{t-1}, including the route through the
/// reset-scaled state inside the candidate (H_{t-1} enters the candidate's
/// operand via the entrywise product with the reset gate). kNoResetPath
/// drops that route, treating the reset-scaled state as a constant; it is
/// kept selectable for comparison and fails finite-difference checks by
/// design. See docs/gru-gradient-variants.md for measured discrepancies.
enum class GruGradientVariant { kFull, kNoResetPath };

/// One tLSTM step of reverse-mode. Consumes the forward tape, returns the
/// adjoint state for step t-1, and accumulates this step's parameter
/// gradients into `grads` (pass a zeroed set to read one step alone).
AdjointState lstm_backstep(const LSTMCell& cell, const TapeStep& tape, const AdjointState& adj,
                           GradientSet& grads);

/// One tGRU step of reverse-mode; same conventions as lstm_backstep.
AdjointState gru_backstep(const GRUCell& cell, const TapeStep& tape, const AdjointState& adj,
                          GradientSet& grads,
                          GruGradientVariant variant = GruGradientVariant::kFull);

/// Reverse pass over a whole forward run. output_adjoints[t] is
/// d(loss)/d(head output at t) — empty at steps without a response. Head
/// gradients are accumulated at every responsive step; the head must use
/// the identity activation. Adds everything into `grads`.
void backprop_series(const Model& model, const SeriesRun& run,
                     std::span<const DenseTensor> output_adjoints, GradientSet& grads,
                     GruGradientVariant variant = GruGradientVariant::kFull);
GradientSet backprop_series(const Model& model, const SeriesRun& run,
                            std::span<const DenseTensor> output_adjoints,
                            GruGradientVariant variant = GruGradientVariant::kFull);

struct DatasetGradient {
    double loss = 0.0;  // data term only (no regularizer)
    GradientSet grads;
};

/// Forward + backward over every case, in ascending case order, one case
/// at a time (tapes are freed between cases). The workhorse behind both
/// training and gradient checking.
DatasetGradient dataset_gradient(const Model& model, const SeriesDataset& data,
                                 const LossSpec& spec,
                                 GruGradientVariant variant = GruGradientVariant::kFull);

/// Central-difference gradient (f(p+h) - f(p-h)) / (2h) of an arbitrary
/// scalar function of the model's parameters, one parameter at a time.
/// The reference oracle for every analytic gradient in the test suite.
GradientSet finite_difference_gradient(Model model,
                                       const std::function<double(const Model&)>& loss,
                                       double h = 1e-6);

}  // namespace tucknet
