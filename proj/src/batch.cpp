#include "tucknet/batch.hpp"

#include <algorithm>
#include <cstddef>
#include <utility>
#include <variant>

namespace tucknet {

namespace {

Dims stacked_dims(const Dims& base, std::int64_t count) {
    Dims d = base;
    d.push_back(count);
    return d;
}

/// Gathers step t of every case into one [dims..., count] tensor; the batch
/// index is the trailing (fastest) one, so window b occupies the stride-count
/// lane starting at offset b.
DenseTensor stack_step(std::span<const SeriesCase> cases, bool from_inputs, std::size_t t) {
    const std::int64_t count = static_cast<std::int64_t>(cases.size());
    const DenseTensor& head = from_inputs ? cases[0].inputs[t] : cases[0].targets[t];
    DenseTensor out(stacked_dims(head.dims(), count));
    for (std::int64_t b = 0; b < count; ++b) {
        const DenseTensor& src = from_inputs ? cases[b].inputs[t] : cases[b].targets[t];
        if (!src.same_dims(head))
            throw ShapeError("stack windows: all cases must share tensor dims");
        const double* s = src.data();
        double* o = out.data() + b;
        for (std::int64_t i = 0; i < src.size(); ++i) o[i * count] = s[i];
    }
    return out;
}

/// m[i, b] += bias[i] for every batch lane b.
void add_bias_broadcast(DenseTensor& m, const DenseTensor& bias, std::int64_t count) {
    double* p = m.data();
    for (std::int64_t i = 0; i < bias.size(); ++i) {
        const double v = bias[i];
        double* lane = p + i * count;
        for (std::int64_t b = 0; b < count; ++b) lane[b] += v;
    }
}

/// acc[i] += sum_b dm[i, b] — the bias gradient over a stack.
void reduce_batch(DenseTensor& acc, const DenseTensor& dm, std::int64_t count) {
    const double* p = dm.data();
    for (std::int64_t i = 0; i < acc.size(); ++i) {
        const double* lane = p + i * count;
        double s = 0.0;
        for (std::int64_t b = 0; b < count; ++b) s += lane[b];
        acc[i] += s;
    }
}

/// Applies mats[d-1] at mode d for d = 1..mats.size(). The trailing batch
/// mode stays untouched, widening every product's inner extent.
DenseTensor chain_forward(const DenseTensor& x, std::span<const Matrix> mats) {
    DenseTensor acc = mode_product(x, mats[0], 1);
    for (std::size_t d = 1; d < mats.size(); ++d)
        acc = mode_product(acc, mats[d], static_cast<int>(d) + 1);
    return acc;
}

DenseTensor apply_elementwise(const DenseTensor& x, Activation a) {
    DenseTensor out(x.dims());
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = activate_scalar(x[i], a);
    return out;
}

/// Activated gate value: act(chain(W, h-side operand) + chain(U, x) + bias).
/// The bias add and the activation share one pass over the stack.
DenseTensor stacked_gate(const TuckerParams& g, const DenseTensor& h_operand,
                         const DenseTensor& x, std::int64_t count, Activation a) {
    DenseTensor m = chain_forward(h_operand, g.w);
    accumulate(m, chain_forward(x, g.u));
    double* p = m.data();
    for (std::int64_t i = 0; i < g.b.size(); ++i) {
        const double v = g.b[i];
        double* lane = p + i * count;
        for (std::int64_t b = 0; b < count; ++b) lane[b] = activate_scalar(lane[b] + v, a);
    }
    return m;
}

/// Accumulates one gate's W/U/bias gradients from the stacked pre-activation
/// adjoint `dm` and returns the adjoint of the gate's hidden-side operand.
/// The mode-d gradient splits into a transposed suffix of dm and a forward
/// prefix of the operand,
///   dW_d = [dm x_{k>d} W_k^T]_(d) . [op x_{k<d} W_k]_(d)^T,
/// so consecutive modes share their intermediates, the batch mode is
/// contracted away by the unfolding product (summing the per-window terms),
/// and the final suffix — every mode transposed — is the operand adjoint.
DenseTensor stacked_gate_gradients(const TuckerParams& g, const DenseTensor& h_operand,
                                   const DenseTensor& x, const DenseTensor& dm,
                                   std::int64_t count, GateGradient& out) {
    const int order = static_cast<int>(g.w.size());

    std::vector<DenseTensor> prefix;  // prefix[j] = operand with modes 1..j+1 applied
    prefix.reserve(static_cast<std::size_t>(order));
    for (int d = 1; d < order; ++d)
        prefix.push_back(mode_product(d == 1 ? h_operand : prefix.back(), g.w[d - 1], d));
    const auto pre_w = [&](int d) -> const DenseTensor& {
        return d == 1 ? h_operand : prefix[static_cast<std::size_t>(d) - 2];
    };

    DenseTensor sfx;
    for (int d = order; d >= 1; --d) {
        const DenseTensor& s = (d == order) ? dm : sfx;
        accumulate(out.w[d - 1], unfold_product(s, pre_w(d), d));
        sfx = mode_product_transposed(s, g.w[d - 1], d);
    }
    DenseTensor adj = std::move(sfx);

    prefix.clear();
    for (int d = 1; d < order; ++d)
        prefix.push_back(mode_product(d == 1 ? x : prefix.back(), g.u[d - 1], d));
    const auto pre_u = [&](int d) -> const DenseTensor& {
        return d == 1 ? x : prefix[static_cast<std::size_t>(d) - 2];
    };

    for (int d = order; d >= 1; --d) {
        const DenseTensor& s = (d == order) ? dm : sfx;
        accumulate(out.u[d - 1], unfold_product(s, pre_u(d), d));
        if (d > 1) sfx = mode_product_transposed(s, g.u[d - 1], d);
    }

    reduce_batch(out.b, dm, count);
    return adj;
}

/// Readout gradients over a stack plus the hidden-state adjoint, using the
/// same prefix/suffix split as the gates (the head maps are rectangular).
DenseTensor stacked_head_backward(const OutputHead& head, const DenseTensor& out_adj,
                                  const DenseTensor& h, std::int64_t count,
                                  GradientSet& grads) {
    const int order = static_cast<int>(head.v.size());

    std::vector<DenseTensor> prefix;
    prefix.reserve(static_cast<std::size_t>(order));
    for (int d = 1; d < order; ++d)
        prefix.push_back(mode_product(d == 1 ? h : prefix.back(), head.v[d - 1], d));
    const auto pre_at = [&](int d) -> const DenseTensor& {
        return d == 1 ? h : prefix[static_cast<std::size_t>(d) - 2];
    };

    DenseTensor sfx;
    for (int d = order; d >= 1; --d) {
        const DenseTensor& s = (d == order) ? out_adj : sfx;
        accumulate(grads.v[d - 1], unfold_product(s, pre_at(d), d));
        sfx = mode_product_transposed(s, head.v[d - 1], d);
    }
    reduce_batch(grads.head_bias, out_adj, count);
    return sfx;
}

/// Stacked forward intermediates for one step; the step's input lives in
/// the stack itself and is not copied here.
struct StepTape {
    DenseTensor h;
    std::vector<DenseTensor> acts;  // per gate, canonical order

    // tLSTM only:
    DenseTensor c;
    DenseTensor tanh_c;

    // tGRU only:
    DenseTensor r_hat;
};

struct StackRun {
    std::vector<StepTape> steps;
    std::vector<DenseTensor> outputs;  // responsive steps only; others stay empty
};

StackRun run_stack(const LSTMCell& cell, const OutputHead& head, const StackedWindows& stk,
                   bool last_only) {
    const std::int64_t count = stk.count;
    const Dims hdims = stacked_dims(cell.hidden_dims, count);
    const std::size_t steps = stk.inputs.size();

    StackRun run;
    run.steps.reserve(steps);
    run.outputs.resize(steps);

    const DenseTensor zero(hdims);
    const DenseTensor* h_prev = &zero;
    const DenseTensor* c_prev = &zero;

    for (std::size_t t = 0; t < steps; ++t) {
        const DenseTensor& x = stk.inputs[t];
        StepTape st;
        st.acts.reserve(lstm_gate::kCount);
        for (int g = 0; g < lstm_gate::kCount; ++g) {
            const Activation a = g == lstm_gate::kCandidate ? cell.activations.candidate
                                                            : cell.activations.gate;
            st.acts.push_back(stacked_gate(cell.gates[g], *h_prev, x, count, a));
        }
        const DenseTensor& f = st.acts[lstm_gate::kForget];
        const DenseTensor& i = st.acts[lstm_gate::kInput];
        const DenseTensor& o = st.acts[lstm_gate::kOutput];
        const DenseTensor& cand = st.acts[lstm_gate::kCandidate];

        st.c = DenseTensor(hdims);
        for (std::int64_t k = 0; k < st.c.size(); ++k)
            st.c[k] = f[k] * (*c_prev)[k] + i[k] * cand[k];
        st.tanh_c = apply_elementwise(st.c, cell.activations.output);
        st.h = hadamard(o, st.tanh_c);

        if (!last_only || t + 1 == steps) {
            DenseTensor y = chain_forward(st.h, head.v);
            add_bias_broadcast(y, head.bias, count);
            run.outputs[t] = std::move(y);
        }

        run.steps.push_back(std::move(st));
        h_prev = &run.steps.back().h;
        c_prev = &run.steps.back().c;
    }
    return run;
}

StackRun run_stack(const GRUCell& cell, const OutputHead& head, const StackedWindows& stk,
                   bool last_only) {
    const std::int64_t count = stk.count;
    const Dims hdims = stacked_dims(cell.hidden_dims, count);
    const std::size_t steps = stk.inputs.size();

    StackRun run;
    run.steps.reserve(steps);
    run.outputs.resize(steps);

    const DenseTensor zero(hdims);
    const DenseTensor* h_prev = &zero;

    for (std::size_t t = 0; t < steps; ++t) {
        const DenseTensor& x = stk.inputs[t];
        StepTape st;
        st.acts.resize(gru_gate::kCount);
        st.acts[gru_gate::kReset] =
            stacked_gate(cell.gates[gru_gate::kReset], *h_prev, x, count,
                         cell.activations.gate);
        st.acts[gru_gate::kUpdate] =
            stacked_gate(cell.gates[gru_gate::kUpdate], *h_prev, x, count,
                         cell.activations.gate);
        st.r_hat = hadamard(st.acts[gru_gate::kReset], *h_prev);
        st.acts[gru_gate::kCandidate] =
            stacked_gate(cell.gates[gru_gate::kCandidate], st.r_hat, x, count,
                         cell.activations.candidate);

        const DenseTensor& z = st.acts[gru_gate::kUpdate];
        const DenseTensor& cand = st.acts[gru_gate::kCandidate];
        st.h = DenseTensor(hdims);
        for (std::int64_t k = 0; k < st.h.size(); ++k)
            st.h[k] = z[k] * (*h_prev)[k] + (1.0 - z[k]) * cand[k];

        if (!last_only || t + 1 == steps) {
            DenseTensor y = chain_forward(st.h, head.v);
            add_bias_broadcast(y, head.bias, count);
            run.outputs[t] = std::move(y);
        }

        run.steps.push_back(std::move(st));
        h_prev = &run.steps.back().h;
    }
    return run;
}

void backprop_stack(const LSTMCell& cell, const OutputHead& head, const StackedWindows& stk,
                    const StackRun& run, std::span<const DenseTensor> adjoints,
                    GradientSet& grads) {
    const std::int64_t count = stk.count;
    const Dims hdims = stacked_dims(cell.hidden_dims, count);
    const DenseTensor zero(hdims);

    DenseTensor dh(hdims), dc(hdims);
    for (std::size_t t = run.steps.size(); t-- > 0;) {
        const StepTape& st = run.steps[t];
        const DenseTensor& h_prev = t > 0 ? run.steps[t - 1].h : zero;
        const DenseTensor& c_prev = t > 0 ? run.steps[t - 1].c : zero;

        DenseTensor with_head;  // only responsive steps pay for the copy
        const DenseTensor* dhh_p = &dh;
        if (!adjoints[t].empty()) {
            with_head = dh;
            accumulate(with_head, stacked_head_backward(head, adjoints[t], st.h, count, grads));
            dhh_p = &with_head;
        }
        const DenseTensor& dhh = *dhh_p;

        const DenseTensor& f = st.acts[lstm_gate::kForget];
        const DenseTensor& i = st.acts[lstm_gate::kInput];
        const DenseTensor& o = st.acts[lstm_gate::kOutput];
        const DenseTensor& cand = st.acts[lstm_gate::kCandidate];
        const Activation ga = cell.activations.gate;

        // The state reaches the loss through H_t = O_t ∘ σ_h(C_t), so the
        // hidden-to-cell pullback carries the slope and the output gate.
        DenseTensor s(hdims);
        for (std::int64_t k = 0; k < s.size(); ++k)
            s[k] = dc[k] +
                   dhh[k] * o[k] * activation_slope_from_value(st.tanh_c[k],
                                                               cell.activations.output);

        DenseTensor dm_f(hdims), dm_i(hdims), dm_o(hdims), dm_c(hdims);
        for (std::int64_t k = 0; k < s.size(); ++k) {
            dm_f[k] = s[k] * c_prev[k] * activation_slope_from_value(f[k], ga);
            dm_i[k] = s[k] * cand[k] * activation_slope_from_value(i[k], ga);
            dm_o[k] = dhh[k] * st.tanh_c[k] * activation_slope_from_value(o[k], ga);
            dm_c[k] =
                s[k] * i[k] * activation_slope_from_value(cand[k], cell.activations.candidate);
        }

        const DenseTensor* dms[lstm_gate::kCount] = {nullptr, nullptr, nullptr, nullptr};
        dms[lstm_gate::kForget] = &dm_f;
        dms[lstm_gate::kInput] = &dm_i;
        dms[lstm_gate::kOutput] = &dm_o;
        dms[lstm_gate::kCandidate] = &dm_c;

        DenseTensor dh_prev(hdims);
        for (int g = 0; g < lstm_gate::kCount; ++g)
            accumulate(dh_prev, stacked_gate_gradients(cell.gates[g], h_prev, stk.inputs[t],
                                                       *dms[g], count, grads.gates[g]));

        for (std::int64_t k = 0; k < dc.size(); ++k) dc[k] = s[k] * f[k];
        dh = std::move(dh_prev);
    }
}

void backprop_stack(const GRUCell& cell, const OutputHead& head, const StackedWindows& stk,
                    const StackRun& run, std::span<const DenseTensor> adjoints,
                    GradientSet& grads, GruGradientVariant variant) {
    const std::int64_t count = stk.count;
    const Dims hdims = stacked_dims(cell.hidden_dims, count);
    const DenseTensor zero(hdims);

    DenseTensor dh(hdims);
    for (std::size_t t = run.steps.size(); t-- > 0;) {
        const StepTape& st = run.steps[t];
        const DenseTensor& h_prev = t > 0 ? run.steps[t - 1].h : zero;

        DenseTensor with_head;  // only responsive steps pay for the copy
        const DenseTensor* dhh_p = &dh;
        if (!adjoints[t].empty()) {
            with_head = dh;
            accumulate(with_head, stacked_head_backward(head, adjoints[t], st.h, count, grads));
            dhh_p = &with_head;
        }
        const DenseTensor& dhh = *dhh_p;

        const DenseTensor& r = st.acts[gru_gate::kReset];
        const DenseTensor& z = st.acts[gru_gate::kUpdate];
        const DenseTensor& cand = st.acts[gru_gate::kCandidate];

        // Blend H_t = Z ∘ H_prev + (1-Z) ∘ candidate.
        DenseTensor dm_z(hdims), dm_cand(hdims), dh_prev(hdims);
        for (std::int64_t k = 0; k < dhh.size(); ++k) {
            dm_cand[k] = dhh[k] * (1.0 - z[k]) *
                         activation_slope_from_value(cand[k], cell.activations.candidate);
            dm_z[k] = dhh[k] * (h_prev[k] - cand[k]) *
                      activation_slope_from_value(z[k], cell.activations.gate);
            dh_prev[k] = dhh[k] * z[k];  // direct blend path
        }

        // The candidate chain's operand is the reset-scaled state; its
        // adjoint splits between the reset gate and (in the full variant)
        // the previous state.
        const DenseTensor d_rhat =
            stacked_gate_gradients(cell.gates[gru_gate::kCandidate], st.r_hat, stk.inputs[t],
                                   dm_cand, count, grads.gates[gru_gate::kCandidate]);
        DenseTensor dm_r(hdims);
        for (std::int64_t k = 0; k < dhh.size(); ++k) {
            dm_r[k] = d_rhat[k] * h_prev[k] *
                      activation_slope_from_value(r[k], cell.activations.gate);
            if (variant == GruGradientVariant::kFull) dh_prev[k] += d_rhat[k] * r[k];
        }

        accumulate(dh_prev,
                   stacked_gate_gradients(cell.gates[gru_gate::kReset], h_prev, stk.inputs[t],
                                          dm_r, count, grads.gates[gru_gate::kReset]));
        accumulate(dh_prev,
                   stacked_gate_gradients(cell.gates[gru_gate::kUpdate], h_prev, stk.inputs[t],
                                          dm_z, count, grads.gates[gru_gate::kUpdate]));

        dh = std::move(dh_prev);
    }
}

}  // namespace

std::vector<StackedWindows> stack_windows(const SeriesDataset& data, LossRegime regime,
                                          std::int64_t chunk) {
    validate_dataset(data, regime);
    if (regime == LossRegime::kPanelLast || regime == LossRegime::kPanelAll)
        throw ShapeError("stack windows: panel regimes keep per-series evaluation");

    const std::int64_t n = static_cast<std::int64_t>(data.cases.size());
    if (chunk <= 0) chunk = n;
    const std::size_t steps = data.cases.front().inputs.size();
    const std::size_t target_steps = data.cases.front().targets.size();

    std::vector<StackedWindows> out;
    out.reserve(static_cast<std::size_t>((n + chunk - 1) / chunk));
    for (std::int64_t first = 0; first < n; first += chunk) {
        const std::int64_t count = std::min(chunk, n - first);
        const std::span<const SeriesCase> slice(data.cases.data() + first,
                                                static_cast<std::size_t>(count));
        StackedWindows stk;
        stk.count = count;
        stk.inputs.reserve(steps);
        stk.targets.reserve(target_steps);
        for (std::size_t t = 0; t < steps; ++t) stk.inputs.push_back(stack_step(slice, true, t));
        for (std::size_t t = 0; t < target_steps; ++t)
            stk.targets.push_back(stack_step(slice, false, t));
        out.push_back(std::move(stk));
    }
    return out;
}

DatasetGradient stacked_gradient(const Model& model, std::span<const StackedWindows> stacks,
                                 const LossSpec& spec, GruGradientVariant variant) {
    spec.validate();
    if (spec.kind != LossKind::kSquared)
        throw ShapeError("stacked gradient: squared loss only (the cross-entropy normalizer"
                         " couples the elements of one window)");
    if (model.head.activation != HeadActivation::kIdentity)
        throw ShapeError("backprop: the head must use the identity activation during training"
                         " (cross-entropy folds its own softmax into the loss)");
    if (stacks.empty()) throw ShapeError("stacked gradient: no stacks");

    const bool last_only = regime_is_last_step_only(spec.regime);
    const bool is_lstm = model.kind() == CellKind::kTLSTM;

    DatasetGradient out;
    out.grads = zero_gradients(model);
    for (const StackedWindows& stk : stacks) {
        if (stk.inputs.empty() || stk.count <= 0)
            throw ShapeError("stacked gradient: empty stack");
        const std::size_t steps = stk.inputs.size();
        if (stk.targets.size() != (last_only ? 1 : steps))
            throw ShapeError("stacked gradient: target count does not match the regime");

        const StackRun run =
            is_lstm ? run_stack(std::get<LSTMCell>(model.cell), model.head, stk, last_only)
                    : run_stack(std::get<GRUCell>(model.cell), model.head, stk, last_only);

        std::vector<DenseTensor> adjoints(steps);
        if (last_only) {
            StepLoss sl = step_loss(stk.targets[0], run.outputs.back(), spec.kind);
            out.loss += sl.value;
            adjoints.back() = std::move(sl.adjoint);
        } else {
            for (std::size_t t = 0; t < steps; ++t) {
                StepLoss sl = step_loss(stk.targets[t], run.outputs[t], spec.kind);
                out.loss += sl.value;
                adjoints[t] = std::move(sl.adjoint);
            }
        }

        if (is_lstm)
            backprop_stack(std::get<LSTMCell>(model.cell), model.head, stk, run, adjoints,
                           out.grads);
        else
            backprop_stack(std::get<GRUCell>(model.cell), model.head, stk, run, adjoints,
                           out.grads, variant);
    }
    return out;
}

}  // namespace tucknet
