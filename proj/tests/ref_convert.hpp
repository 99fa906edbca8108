#pragma once

// Bridges between the library's one-mode cells and the reference vector
// nets, used by the reduction tests (order-1 tensors are plain vectors, so
// the two parameterizations correspond matrix-for-matrix).

#include <vector>

#include "reference_rnn.hpp"
#include "tucknet/cells.hpp"

namespace testsup {

inline refnet::Mat to_ref(const tucknet::Matrix& m) {
    refnet::Mat out(m.rows(), refnet::Vec(m.cols()));
    for (std::int64_t r = 0; r < m.rows(); ++r)
        for (std::int64_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    return out;
}

inline refnet::Vec to_ref(const tucknet::DenseTensor& t) {
    return refnet::Vec(t.values().begin(), t.values().end());
}

inline refnet::Gate to_ref(const tucknet::TuckerParams& p) {
    return refnet::Gate{to_ref(p.w[0]), to_ref(p.u[0]), to_ref(p.b)};
}

inline refnet::LSTM to_ref(const tucknet::LSTMCell& cell, const tucknet::OutputHead& head) {
    refnet::LSTM net;
    net.f = to_ref(cell.gates[tucknet::lstm_gate::kForget]);
    net.i = to_ref(cell.gates[tucknet::lstm_gate::kInput]);
    net.o = to_ref(cell.gates[tucknet::lstm_gate::kOutput]);
    net.c = to_ref(cell.gates[tucknet::lstm_gate::kCandidate]);
    net.v = to_ref(head.v[0]);
    net.vb = to_ref(head.bias);
    return net;
}

inline refnet::GRU to_ref(const tucknet::GRUCell& cell, const tucknet::OutputHead& head) {
    refnet::GRU net;
    net.r = to_ref(cell.gates[tucknet::gru_gate::kReset]);
    net.z = to_ref(cell.gates[tucknet::gru_gate::kUpdate]);
    net.h = to_ref(cell.gates[tucknet::gru_gate::kCandidate]);
    net.v = to_ref(head.v[0]);
    net.vb = to_ref(head.bias);
    return net;
}

}  // namespace testsup
