#include "tucknet/backprop.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace tucknet {

namespace {

void check_same_dims(const DenseTensor& a, const Dims& dims, const char* what) {
    if (a.dims() != dims) throw ShapeError(std::string(what) + ": unexpected dims");
}

// Partial product: operand with every chain matrix applied except mode d,
// resumed from the forward pass's cached prefix (operand with modes < d
// already applied).
DenseTensor partial_from_prefix(const DenseTensor& prefix, std::span<const Matrix> mats, int d) {
    DenseTensor acc = prefix;
    for (int k = d + 1; k <= static_cast<int>(mats.size()); ++k)
        acc = mode_product(acc, mats[k - 1], k);
    return acc;
}

// All parameter gradients of one gate's pre-activation map, given
// dm = d(loss)/dM with the activation slope already folded in.
void accumulate_gate_gradients(const TuckerParams& p, const GateTape& gt, const DenseTensor& dm,
                               GateGradient& out) {
    const int order = static_cast<int>(p.w.size());
    for (int d = 1; d <= order; ++d) {
        const DenseTensor pw = partial_from_prefix(gt.chain_prefix[d - 1], p.w, d);
        accumulate(out.w[d - 1], unfold_product(dm, pw, d));
        const DenseTensor pu = partial_from_prefix(gt.input_prefix[d - 1], p.u, d);
        accumulate(out.u[d - 1], unfold_product(dm, pu, d));
    }
    accumulate(out.b, dm);
}

// Readout backward at one responsive step: accumulates head gradients and
// returns d(loss)/dH through the head.
DenseTensor head_backward(const OutputHead& head, const DenseTensor& out_adj,
                          const DenseTensor& h, GradientSet& grads) {
    const int order = static_cast<int>(head.v.size());
    for (int d = 1; d <= order; ++d) {
        DenseTensor partial = h;
        for (int k = 1; k <= order; ++k)
            if (k != d) partial = mode_product(partial, head.v[k - 1], k);
        accumulate(grads.v[d - 1], unfold_product(out_adj, partial, d));
    }
    accumulate(grads.head_bias, out_adj);
    return tucker_map_transposed(out_adj, head.v);
}

}  // namespace

GradientSet zero_gradients(const Model& m) {
    GradientSet g;
    for (const TuckerParams& gate : gates(m)) {
        GateGradient gg;
        for (const Matrix& w : gate.w) gg.w.emplace_back(w.rows(), w.cols());
        for (const Matrix& u : gate.u) gg.u.emplace_back(u.rows(), u.cols());
        gg.b = DenseTensor(gate.b.dims());
        g.gates.push_back(std::move(gg));
    }
    for (const Matrix& v : m.head.v) g.v.emplace_back(v.rows(), v.cols());
    g.head_bias = DenseTensor(m.head.bias.dims());
    return g;
}

void accumulate(GradientSet& acc, const GradientSet& g) {
    if (acc.gates.size() != g.gates.size() || acc.v.size() != g.v.size())
        throw ShapeError("gradient accumulate: structure mismatch");
    for (std::size_t i = 0; i < acc.gates.size(); ++i) {
        for (std::size_t d = 0; d < acc.gates[i].w.size(); ++d) {
            accumulate(acc.gates[i].w[d], g.gates[i].w[d]);
            accumulate(acc.gates[i].u[d], g.gates[i].u[d]);
        }
        accumulate(acc.gates[i].b, g.gates[i].b);
    }
    for (std::size_t d = 0; d < acc.v.size(); ++d) accumulate(acc.v[d], g.v[d]);
    accumulate(acc.head_bias, g.head_bias);
}

void visit_params(GradientSet& g, const std::function<void(double*, std::int64_t)>& fn) {
    for (GateGradient& gate : g.gates) {
        for (Matrix& w : gate.w) fn(w.data(), w.size());
        for (Matrix& u : gate.u) fn(u.data(), u.size());
        fn(gate.b.data(), gate.b.size());
    }
    for (Matrix& v : g.v) fn(v.data(), v.size());
    fn(g.head_bias.data(), g.head_bias.size());
}

void visit_params(const GradientSet& g,
                  const std::function<void(const double*, std::int64_t)>& fn) {
    for (const GateGradient& gate : g.gates) {
        for (const Matrix& w : gate.w) fn(w.data(), w.size());
        for (const Matrix& u : gate.u) fn(u.data(), u.size());
        fn(gate.b.data(), gate.b.size());
    }
    for (const Matrix& v : g.v) fn(v.data(), v.size());
    fn(g.head_bias.data(), g.head_bias.size());
}

void visit_params(Model& m, const std::function<void(double*, std::int64_t)>& fn) {
    for (TuckerParams& gate : gates(m)) {
        for (Matrix& w : gate.w) fn(w.data(), w.size());
        for (Matrix& u : gate.u) fn(u.data(), u.size());
        fn(gate.b.data(), gate.b.size());
    }
    for (Matrix& v : m.head.v) fn(v.data(), v.size());
    fn(m.head.bias.data(), m.head.bias.size());
}

void visit_params(const Model& m, const std::function<void(const double*, std::int64_t)>& fn) {
    for (const TuckerParams& gate : gates(m)) {
        for (const Matrix& w : gate.w) fn(w.data(), w.size());
        for (const Matrix& u : gate.u) fn(u.data(), u.size());
        fn(gate.b.data(), gate.b.size());
    }
    for (const Matrix& v : m.head.v) fn(v.data(), v.size());
    fn(m.head.bias.data(), m.head.bias.size());
}

std::int64_t parameter_count(const Model& m) {
    std::int64_t n = 0;
    visit_params(m, [&n](const double*, std::int64_t k) { n += k; });
    return n;
}

void scale_in_place(GradientSet& g, double s) {
    visit_params(g, [s](double* p, std::int64_t n) {
        for (std::int64_t i = 0; i < n; ++i) p[i] *= s;
    });
}

double global_norm(const GradientSet& g) {
    double sq = 0.0;
    visit_params(g, [&sq](const double* p, std::int64_t n) {
        for (std::int64_t i = 0; i < n; ++i) sq += p[i] * p[i];
    });
    return std::sqrt(sq);
}

DenseTensor tucker_jacobian_hidden_adjoint(const TuckerParams& params, const DenseTensor& g) {
    return tucker_map_transposed(g, params.w);
}

Matrix grad_wrt_W(const DenseTensor& dm, const TuckerParams& params, const DenseTensor& h_prev,
                  int mode) {
    const int order = static_cast<int>(params.w.size());
    if (mode < 1 || mode > order) throw ShapeError("grad_wrt_W: mode out of range");
    DenseTensor partial = h_prev;
    for (int k = 1; k <= order; ++k)
        if (k != mode) partial = mode_product(partial, params.w[k - 1], k);
    return unfold_product(dm, partial, mode);
}

Matrix grad_wrt_U(const DenseTensor& dm, const TuckerParams& params, const DenseTensor& x,
                  int mode) {
    const int order = static_cast<int>(params.u.size());
    if (mode < 1 || mode > order) throw ShapeError("grad_wrt_U: mode out of range");
    DenseTensor partial = x;
    for (int k = 1; k <= order; ++k)
        if (k != mode) partial = mode_product(partial, params.u[k - 1], k);
    return unfold_product(dm, partial, mode);
}

DenseTensor grad_wrt_B(const DenseTensor& dm) { return dm; }

AdjointState lstm_backstep(const LSTMCell& cell, const TapeStep& tape, const AdjointState& adj,
                           GradientSet& grads) {
    const Dims& hid = cell.hidden_dims;
    check_same_dims(adj.dh, hid, "lstm backstep: dh");
    check_same_dims(adj.dc, hid, "lstm backstep: dc");
    if (!adj.dh_out.empty()) check_same_dims(adj.dh_out, hid, "lstm backstep: dh_out");

    const DenseTensor& f = tape.gates[lstm_gate::kForget].act;
    const DenseTensor& i = tape.gates[lstm_gate::kInput].act;
    const DenseTensor& o = tape.gates[lstm_gate::kOutput].act;
    const DenseTensor& cand = tape.gates[lstm_gate::kCandidate].act;
    const std::int64_t n = f.size();

    // Combined hidden adjoint at t, then the cell-state adjoint. The state
    // reaches the loss through H_t = O_t ∘ σ_h(C_t), so the hidden-to-cell
    // pullback carries both the activation slope and the output gate.
    DenseTensor dhh(hid), s(hid);
    for (std::int64_t k = 0; k < n; ++k) {
        dhh[k] = adj.dh[k] + (adj.dh_out.empty() ? 0.0 : adj.dh_out[k]);
        s[k] = adj.dc[k] +
               dhh[k] * o[k] * activation_slope_from_value(tape.tanh_c[k], cell.activations.output);
    }

    // Gate adjoints at the pre-activations (activation slopes folded in).
    DenseTensor dm_f(hid), dm_i(hid), dm_o(hid), dm_c(hid);
    for (std::int64_t k = 0; k < n; ++k) {
        const Activation g = cell.activations.gate;
        dm_f[k] = s[k] * tape.c_prev[k] * activation_slope_from_value(f[k], g);
        dm_i[k] = s[k] * cand[k] * activation_slope_from_value(i[k], g);
        dm_o[k] = dhh[k] * tape.tanh_c[k] * activation_slope_from_value(o[k], g);
        dm_c[k] = s[k] * i[k] * activation_slope_from_value(cand[k], cell.activations.candidate);
    }

    const DenseTensor* dms[lstm_gate::kCount] = {nullptr, nullptr, nullptr, nullptr};
    dms[lstm_gate::kForget] = &dm_f;
    dms[lstm_gate::kInput] = &dm_i;
    dms[lstm_gate::kOutput] = &dm_o;
    dms[lstm_gate::kCandidate] = &dm_c;

    AdjointState prev;
    prev.dh = DenseTensor(hid);
    for (int g = 0; g < lstm_gate::kCount; ++g) {
        accumulate_gate_gradients(cell.gates[g], tape.gates[g], *dms[g], grads.gates[g]);
        accumulate(prev.dh, tucker_jacobian_hidden_adjoint(cell.gates[g], *dms[g]));
    }
    prev.dc = hadamard(s, f);
    return prev;
}

AdjointState gru_backstep(const GRUCell& cell, const TapeStep& tape, const AdjointState& adj,
                          GradientSet& grads, GruGradientVariant variant) {
    const Dims& hid = cell.hidden_dims;
    check_same_dims(adj.dh, hid, "gru backstep: dh");
    if (!adj.dh_out.empty()) check_same_dims(adj.dh_out, hid, "gru backstep: dh_out");

    const DenseTensor& r = tape.gates[gru_gate::kReset].act;
    const DenseTensor& z = tape.gates[gru_gate::kUpdate].act;
    const DenseTensor& cand = tape.gates[gru_gate::kCandidate].act;
    const std::int64_t n = z.size();

    DenseTensor dhh(hid);
    for (std::int64_t k = 0; k < n; ++k)
        dhh[k] = adj.dh[k] + (adj.dh_out.empty() ? 0.0 : adj.dh_out[k]);

    // Blend H_t = Z ∘ H_prev + (1-Z) ∘ candidate.
    DenseTensor dm_z(hid), dm_cand(hid), dh_prev(hid);
    for (std::int64_t k = 0; k < n; ++k) {
        const double d_cand = dhh[k] * (1.0 - z[k]);
        const double d_z = dhh[k] * (tape.h_prev[k] - cand[k]);
        dm_cand[k] = d_cand * activation_slope_from_value(cand[k], cell.activations.candidate);
        dm_z[k] = d_z * activation_slope_from_value(z[k], cell.activations.gate);
        dh_prev[k] = dhh[k] * z[k];  // direct blend path
    }

    // Candidate chain operand is the reset-scaled state; its adjoint splits
    // between the reset gate and (in the full variant) the previous state.
    const DenseTensor d_rhat =
        tucker_jacobian_hidden_adjoint(cell.gates[gru_gate::kCandidate], dm_cand);
    DenseTensor dm_r(hid);
    for (std::int64_t k = 0; k < n; ++k) {
        const double d_r = d_rhat[k] * tape.h_prev[k];
        dm_r[k] = d_r * activation_slope_from_value(r[k], cell.activations.gate);
        if (variant == GruGradientVariant::kFull) dh_prev[k] += d_rhat[k] * r[k];
    }

    accumulate_gate_gradients(cell.gates[gru_gate::kReset], tape.gates[gru_gate::kReset], dm_r,
                              grads.gates[gru_gate::kReset]);
    accumulate_gate_gradients(cell.gates[gru_gate::kUpdate], tape.gates[gru_gate::kUpdate], dm_z,
                              grads.gates[gru_gate::kUpdate]);
    accumulate_gate_gradients(cell.gates[gru_gate::kCandidate], tape.gates[gru_gate::kCandidate],
                              dm_cand, grads.gates[gru_gate::kCandidate]);

    accumulate(dh_prev, tucker_jacobian_hidden_adjoint(cell.gates[gru_gate::kReset], dm_r));
    accumulate(dh_prev, tucker_jacobian_hidden_adjoint(cell.gates[gru_gate::kUpdate], dm_z));

    AdjointState prev;
    prev.dh = std::move(dh_prev);
    return prev;
}

void backprop_series(const Model& model, const SeriesRun& run,
                     std::span<const DenseTensor> output_adjoints, GradientSet& grads,
                     GruGradientVariant variant) {
    if (model.head.activation != HeadActivation::kIdentity)
        throw ShapeError("backprop: the head must use the identity activation during training"
                         " (cross-entropy folds its own softmax into the loss)");
    if (output_adjoints.size() != run.tapes.size())
        throw ShapeError("backprop: need one output adjoint slot per step");

    const Dims& hid = hidden_dims(model);
    const bool is_lstm = model.kind() == CellKind::kTLSTM;

    AdjointState adj;
    adj.dh = DenseTensor(hid);
    if (is_lstm) adj.dc = DenseTensor(hid);

    for (std::size_t t = run.tapes.size(); t-- > 0;) {
        adj.dh_out = DenseTensor();
        if (!output_adjoints[t].empty())
            adj.dh_out = head_backward(model.head, output_adjoints[t], run.tapes[t].h, grads);

        AdjointState prev = is_lstm ? lstm_backstep(std::get<LSTMCell>(model.cell), run.tapes[t],
                                                    adj, grads)
                                    : gru_backstep(std::get<GRUCell>(model.cell), run.tapes[t],
                                                   adj, grads, variant);
        adj.dh = std::move(prev.dh);
        adj.dc = std::move(prev.dc);
    }
}

GradientSet backprop_series(const Model& model, const SeriesRun& run,
                            std::span<const DenseTensor> output_adjoints,
                            GruGradientVariant variant) {
    GradientSet grads = zero_gradients(model);
    backprop_series(model, run, output_adjoints, grads, variant);
    return grads;
}

DatasetGradient dataset_gradient(const Model& model, const SeriesDataset& data,
                                 const LossSpec& spec, GruGradientVariant variant) {
    spec.validate();
    validate_dataset(data, spec.regime);

    DatasetGradient out;
    out.grads = zero_gradients(model);
    for (const SeriesCase& c : data.cases) {
        const SeriesRun run = run_series(model, c.inputs);
        auto [value, adjoints] = case_loss(c, run.outputs, spec);
        out.loss += value;
        backprop_series(model, run, adjoints, out.grads, variant);
    }
    return out;
}

GradientSet finite_difference_gradient(Model model,
                                       const std::function<double(const Model&)>& loss,
                                       double h) {
    GradientSet out = zero_gradients(model);

    std::vector<std::pair<double*, std::int64_t>> pbufs, gbufs;
    visit_params(model, [&pbufs](double* p, std::int64_t n) { pbufs.emplace_back(p, n); });
    visit_params(out, [&gbufs](double* p, std::int64_t n) { gbufs.emplace_back(p, n); });

    for (std::size_t b = 0; b < pbufs.size(); ++b) {
        auto [p, n] = pbufs[b];
        double* g = gbufs[b].first;
        for (std::int64_t k = 0; k < n; ++k) {
            const double saved = p[k];
            p[k] = saved + h;
            const double fp = loss(model);
            p[k] = saved - h;
            const double fm = loss(model);
            p[k] = saved;
            g[k] = (fp - fm) / (2.0 * h);
        }
    }
    return out;
}

}  // namespace tucknet
