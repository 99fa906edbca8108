#pragma once

// Self-contained, loop-based vector LSTM/GRU written straight from the
// classic per-element equations. Deliberately shares no code with the
// library under test: plain nested std::vector matrices, no Eigen, no
// tensor machinery. Serves as the independent reference for the
// one-mode-reduction checks (forward values and every gradient).

#include <vector>

namespace refnet {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // Mat[r][c]

Mat zeros(int rows, int cols);

struct Gate {
    Mat w;  // hid x hid
    Mat u;  // hid x in
    Vec b;  // hid
};

struct LSTM {
    Gate f, i, o, c;
    Mat v;   // out x hid readout
    Vec vb;  // out
};

struct GRU {
    Gate r, z, h;
    Mat v;
    Vec vb;
};

struct GateGrad {
    Mat dw, du;
    Vec db;
};

struct LSTMGrad {
    GateGrad f, i, o, c;
    Mat dv;
    Vec dvb;
};

struct GRUGrad {
    GateGrad r, z, h;
    Mat dv;
    Vec dvb;
};

struct LSTMRun {
    std::vector<Vec> h;  // hidden state per step
    std::vector<Vec> y;  // readout per step
    double loss = 0.0;   // sum over steps of weight * 0.5*||y - target||^2
    LSTMGrad grad;
};

struct GRURun {
    std::vector<Vec> h;
    std::vector<Vec> y;
    double loss = 0.0;
    GRUGrad grad;
};

/// Forward + backward over one window from zero initial state. step_weight
/// scales the squared loss at each step (0 = no response there), so the
/// last-step regime is {0,...,0,1} and the every-step regime is all ones.
LSTMRun run_lstm(const LSTM& net, const std::vector<Vec>& xs, const std::vector<Vec>& targets,
                 const Vec& step_weight);
GRURun run_gru(const GRU& net, const std::vector<Vec>& xs, const std::vector<Vec>& targets,
               const Vec& step_weight);

}  // namespace refnet
