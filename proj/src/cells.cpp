#include "tucknet/cells.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tucknet/rng.hpp"

namespace tucknet {

namespace {

std::string dims_str(const Dims& dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ',';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

void validate_params(const TuckerParams& p, const Dims& operand_dims, const Dims& input_dims,
                     const Dims& hidden_dims, const char* what) {
    const std::size_t order = hidden_dims.size();
    if (p.w.size() != order || p.u.size() != order)
        throw ShapeError(std::string(what) + ": expected one W and one U per mode");
    for (std::size_t d = 0; d < order; ++d) {
        if (p.w[d].rows() != hidden_dims[d] || p.w[d].cols() != operand_dims[d])
            throw ShapeError(std::string(what) + ": W mode " + std::to_string(d + 1) +
                             " must be " + std::to_string(hidden_dims[d]) + "x" +
                             std::to_string(operand_dims[d]));
        if (p.u[d].rows() != hidden_dims[d] || p.u[d].cols() != input_dims[d])
            throw ShapeError(std::string(what) + ": U mode " + std::to_string(d + 1) +
                             " must be " + std::to_string(hidden_dims[d]) + "x" +
                             std::to_string(input_dims[d]));
    }
    if (p.b.dims() != hidden_dims)
        throw ShapeError(std::string(what) + ": bias dims " + dims_str(p.b.dims()) +
                         " != hidden dims " + dims_str(hidden_dims));
}

TuckerParams init_gate(const Dims& input_dims, const Dims& hidden_dims, Rng& rng,
                       InitScheme scheme, double bias_fill) {
    TuckerParams p;
    const std::size_t order = hidden_dims.size();
    p.w.reserve(order);
    p.u.reserve(order);
    for (std::size_t d = 0; d < order; ++d) {
        Matrix w(hidden_dims[d], hidden_dims[d]);
        if (scheme == InitScheme::kFanIn) {
            const double s = 1.0 / std::sqrt(static_cast<double>(w.cols()));
            for (std::int64_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-s, s);
        }
        p.w.push_back(std::move(w));

        Matrix u(hidden_dims[d], input_dims[d]);
        if (scheme == InitScheme::kFanIn) {
            const double s = 1.0 / std::sqrt(static_cast<double>(u.cols()));
            for (std::int64_t i = 0; i < u.size(); ++i) u.data()[i] = rng.uniform(-s, s);
        }
        p.u.push_back(std::move(u));
    }
    p.b = DenseTensor::constant(hidden_dims, bias_fill);
    return p;
}

void check_cell_dims(const Dims& input_dims, const Dims& hidden_dims) {
    checked_volume(input_dims);
    checked_volume(hidden_dims);
    if (input_dims.size() != hidden_dims.size())
        throw ShapeError("input and hidden tensors must have the same number of modes, got " +
                         dims_str(input_dims) + " vs " + dims_str(hidden_dims));
}

// Applies the mode-product chain with prefix caching into `prefixes` when
// requested: prefixes[j] = operand with mats[0..j) applied, j = 0..D-1.
DenseTensor apply_chain(const DenseTensor& operand, std::span<const Matrix> mats,
                        std::vector<DenseTensor>* prefixes) {
    DenseTensor acc = operand;
    const int order = static_cast<int>(mats.size());
    for (int d = 0; d < order; ++d) {
        if (prefixes) prefixes->push_back(acc);
        acc = mode_product(acc, mats[d], d + 1);
    }
    return acc;
}

DenseTensor zeros_like_or(const DenseTensor& given, const Dims& dims, const char* what) {
    if (given.empty()) return DenseTensor(dims);
    if (given.dims() != dims)
        throw ShapeError(std::string(what) + ": dims " + dims_str(given.dims()) +
                         " != " + dims_str(dims));
    return given;
}

}  // namespace

double activate_scalar(double x, Activation a) {
    switch (a) {
        case Activation::kLogistic:
            // Split on sign so exp never overflows.
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        case Activation::kTanh:
            return std::tanh(x);
        case Activation::kIdentity:
            return x;
    }
    return x;
}

double activation_slope_from_value(double activated, Activation a) {
    switch (a) {
        case Activation::kLogistic:
            return activated * (1.0 - activated);
        case Activation::kTanh:
            return 1.0 - activated * activated;
        case Activation::kIdentity:
            return 1.0;
    }
    return 1.0;
}

DenseTensor activate(const DenseTensor& x, Activation a) {
    DenseTensor y(x.dims());
    for (std::int64_t i = 0; i < x.size(); ++i) y[i] = activate_scalar(x[i], a);
    return y;
}

void validate(const LSTMCell& cell) {
    check_cell_dims(cell.input_dims, cell.hidden_dims);
    const char* names[] = {"forget gate", "input gate", "output gate", "candidate gate"};
    for (int g = 0; g < lstm_gate::kCount; ++g)
        validate_params(cell.gates[g], cell.hidden_dims, cell.input_dims, cell.hidden_dims,
                        names[g]);
}

void validate(const GRUCell& cell) {
    check_cell_dims(cell.input_dims, cell.hidden_dims);
    const char* names[] = {"reset gate", "update gate", "candidate gate"};
    for (int g = 0; g < gru_gate::kCount; ++g)
        validate_params(cell.gates[g], cell.hidden_dims, cell.input_dims, cell.hidden_dims,
                        names[g]);
}

void validate(const OutputHead& head, const Dims& hidden_dims) {
    if (head.v.size() != hidden_dims.size())
        throw ShapeError("output head: expected one matrix per hidden mode");
    if (head.bias.order() != static_cast<int>(hidden_dims.size()))
        throw ShapeError("output head: bias order must match hidden order");
    for (std::size_t d = 0; d < head.v.size(); ++d)
        if (head.v[d].rows() != head.bias.dims()[d] || head.v[d].cols() != hidden_dims[d])
            throw ShapeError("output head: matrix for mode " + std::to_string(d + 1) +
                             " must be " + std::to_string(head.bias.dims()[d]) + "x" +
                             std::to_string(hidden_dims[d]));
}

DenseTensor gate_preactivation(const TuckerParams& params, const DenseTensor& h_or_r,
                               const DenseTensor& x, GateTape* tape) {
    if (params.w.size() != static_cast<std::size_t>(h_or_r.order()) ||
        params.u.size() != static_cast<std::size_t>(x.order()))
        throw ShapeError("gate pre-activation: operand order does not match parameter count");
    DenseTensor m = apply_chain(h_or_r, params.w, tape ? &tape->chain_prefix : nullptr);
    const DenseTensor xin = apply_chain(x, params.u, tape ? &tape->input_prefix : nullptr);
    accumulate(m, xin);
    accumulate(m, params.b);
    if (tape) tape->pre = m;
    return m;
}

TapeStep lstm_step(const LSTMCell& cell, const DenseTensor& x, const DenseTensor& h_prev,
                   const DenseTensor& c_prev) {
    TapeStep tape;
    tape.x = x;
    tape.h_prev = h_prev;
    tape.c_prev = c_prev;
    tape.gates.resize(lstm_gate::kCount);

    for (int g = 0; g < lstm_gate::kCount; ++g) {
        GateTape& gt = tape.gates[g];
        const DenseTensor pre = gate_preactivation(cell.gates[g], h_prev, x, &gt);
        const Activation a = g == lstm_gate::kCandidate ? cell.activations.candidate
                                                        : cell.activations.gate;
        gt.act = activate(pre, a);
    }

    const DenseTensor& f = tape.gates[lstm_gate::kForget].act;
    const DenseTensor& i = tape.gates[lstm_gate::kInput].act;
    const DenseTensor& o = tape.gates[lstm_gate::kOutput].act;
    const DenseTensor& cand = tape.gates[lstm_gate::kCandidate].act;

    tape.c = add(hadamard(f, c_prev), hadamard(i, cand));
    tape.tanh_c = activate(tape.c, cell.activations.output);
    tape.h = hadamard(o, tape.tanh_c);
    return tape;
}

TapeStep gru_step(const GRUCell& cell, const DenseTensor& x, const DenseTensor& h_prev) {
    TapeStep tape;
    tape.x = x;
    tape.h_prev = h_prev;
    tape.gates.resize(gru_gate::kCount);

    for (int g : {gru_gate::kReset, gru_gate::kUpdate}) {
        GateTape& gt = tape.gates[g];
        const DenseTensor pre = gate_preactivation(cell.gates[g], h_prev, x, &gt);
        gt.act = activate(pre, cell.activations.gate);
    }

    const DenseTensor& r = tape.gates[gru_gate::kReset].act;
    const DenseTensor& z = tape.gates[gru_gate::kUpdate].act;
    tape.r_hat = hadamard(r, h_prev);

    GateTape& hg = tape.gates[gru_gate::kCandidate];
    const DenseTensor pre = gate_preactivation(cell.gates[gru_gate::kCandidate], tape.r_hat, x, &hg);
    hg.act = activate(pre, cell.activations.candidate);

    // H_t = Z ∘ H_prev + (1 - Z) ∘ candidate: an entrywise convex blend.
    DenseTensor h(cell.hidden_dims);
    if (h.size() != z.size()) throw ShapeError("gru step: hidden dims mismatch");
    for (std::int64_t k = 0; k < h.size(); ++k)
        h[k] = z[k] * h_prev[k] + (1.0 - z[k]) * hg.act[k];
    tape.h = std::move(h);
    return tape;
}

DenseTensor output_head(const OutputHead& head, const DenseTensor& h) {
    DenseTensor o = tucker_map(h, head.v);
    accumulate(o, head.bias);
    if (head.activation == HeadActivation::kSoftmax) {
        double mx = o[0];
        for (std::int64_t i = 1; i < o.size(); ++i) mx = std::max(mx, o[i]);
        double z = 0.0;
        for (std::int64_t i = 0; i < o.size(); ++i) {
            o[i] = std::exp(o[i] - mx);
            z += o[i];
        }
        for (std::int64_t i = 0; i < o.size(); ++i) o[i] /= z;
    }
    return o;
}

SeriesRun run_series(const LSTMCell& cell, const OutputHead& head,
                     std::span<const DenseTensor> inputs, const DenseTensor& h0,
                     const DenseTensor& c0) {
    if (inputs.empty()) throw ShapeError("run_series: empty input series");
    SeriesRun run;
    run.outputs.reserve(inputs.size());
    run.tapes.reserve(inputs.size());
    DenseTensor h = zeros_like_or(h0, cell.hidden_dims, "run_series: H_0");
    DenseTensor c = zeros_like_or(c0, cell.hidden_dims, "run_series: C_0");
    for (const DenseTensor& x : inputs) {
        if (x.dims() != cell.input_dims)
            throw ShapeError("run_series: input dims " + dims_str(x.dims()) +
                             " != " + dims_str(cell.input_dims));
        TapeStep tape = lstm_step(cell, x, h, c);
        h = tape.h;
        c = tape.c;
        run.outputs.push_back(output_head(head, h));
        run.tapes.push_back(std::move(tape));
    }
    return run;
}

SeriesRun run_series(const GRUCell& cell, const OutputHead& head,
                     std::span<const DenseTensor> inputs, const DenseTensor& h0) {
    if (inputs.empty()) throw ShapeError("run_series: empty input series");
    SeriesRun run;
    run.outputs.reserve(inputs.size());
    run.tapes.reserve(inputs.size());
    DenseTensor h = zeros_like_or(h0, cell.hidden_dims, "run_series: H_0");
    for (const DenseTensor& x : inputs) {
        if (x.dims() != cell.input_dims)
            throw ShapeError("run_series: input dims " + dims_str(x.dims()) +
                             " != " + dims_str(cell.input_dims));
        TapeStep tape = gru_step(cell, x, h);
        h = tape.h;
        run.outputs.push_back(output_head(head, h));
        run.tapes.push_back(std::move(tape));
    }
    return run;
}

const Dims& input_dims(const Model& m) {
    return std::visit([](const auto& c) -> const Dims& { return c.input_dims; }, m.cell);
}

const Dims& hidden_dims(const Model& m) {
    return std::visit([](const auto& c) -> const Dims& { return c.hidden_dims; }, m.cell);
}

std::span<TuckerParams> gates(Model& m) {
    return std::visit([](auto& c) { return std::span<TuckerParams>(c.gates); }, m.cell);
}

std::span<const TuckerParams> gates(const Model& m) {
    return std::visit([](const auto& c) { return std::span<const TuckerParams>(c.gates); },
                      m.cell);
}

SeriesRun run_series(const Model& m, std::span<const DenseTensor> inputs) {
    if (m.kind() == CellKind::kTLSTM)
        return run_series(std::get<LSTMCell>(m.cell), m.head, inputs);
    return run_series(std::get<GRUCell>(m.cell), m.head, inputs);
}

LSTMCell make_lstm(Dims input_dims, Dims hidden_dims, std::uint64_t seed, InitScheme scheme,
                   ActivationSet acts) {
    check_cell_dims(input_dims, hidden_dims);
    LSTMCell cell;
    cell.input_dims = std::move(input_dims);
    cell.hidden_dims = std::move(hidden_dims);
    cell.activations = acts;
    Rng rng(seed);
    for (int g = 0; g < lstm_gate::kCount; ++g) {
        const double bias_fill =
            (g == lstm_gate::kForget && scheme != InitScheme::kZero) ? 1.0 : 0.0;
        cell.gates[g] = init_gate(cell.input_dims, cell.hidden_dims, rng, scheme, bias_fill);
    }
    return cell;
}

GRUCell make_gru(Dims input_dims, Dims hidden_dims, std::uint64_t seed, InitScheme scheme,
                 ActivationSet acts) {
    check_cell_dims(input_dims, hidden_dims);
    GRUCell cell;
    cell.input_dims = std::move(input_dims);
    cell.hidden_dims = std::move(hidden_dims);
    cell.activations = acts;
    Rng rng(seed);
    for (int g = 0; g < gru_gate::kCount; ++g)
        cell.gates[g] = init_gate(cell.input_dims, cell.hidden_dims, rng, scheme, 0.0);
    return cell;
}

OutputHead make_head(const Dims& hidden_dims, Dims response_dims, std::uint64_t seed,
                     InitScheme scheme) {
    checked_volume(hidden_dims);
    checked_volume(response_dims);
    if (hidden_dims.size() != response_dims.size())
        throw ShapeError("output head: hidden and response tensors must have equal order");
    OutputHead head;
    Rng rng(seed);
    head.v.reserve(hidden_dims.size());
    for (std::size_t d = 0; d < hidden_dims.size(); ++d) {
        Matrix v(response_dims[d], hidden_dims[d]);
        if (scheme == InitScheme::kFanIn) {
            const double s = 1.0 / std::sqrt(static_cast<double>(v.cols()));
            for (std::int64_t i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(-s, s);
        }
        head.v.push_back(std::move(v));
    }
    head.bias = DenseTensor(std::move(response_dims));
    return head;
}

Model make_model(CellKind kind, Dims input_dims, Dims hidden_dims, Dims response_dims,
                 std::uint64_t seed, InitScheme scheme, ActivationSet acts) {
    Model m;
    if (kind == CellKind::kTLSTM)
        m.cell = make_lstm(std::move(input_dims), hidden_dims, seed, scheme, acts);
    else
        m.cell = make_gru(std::move(input_dims), hidden_dims, seed, scheme, acts);
    m.head = make_head(hidden_dims, std::move(response_dims), seed + 1, scheme);
    return m;
}

}  // namespace tucknet
