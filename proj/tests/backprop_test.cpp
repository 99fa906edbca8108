#include "tucknet/backprop.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <vector>

#include "grad_compare.hpp"
#include "ref_convert.hpp"
#include "reference_rnn.hpp"
#include "test_support.hpp"
#include "tucknet/cells.hpp"
#include "tucknet/objectives.hpp"
#include "tucknet/tensor.hpp"

using tucknet::DenseTensor;
using tucknet::Dims;
using tucknet::GradientSet;
using tucknet::Matrix;
using tucknet::Model;

namespace {

/// Plain triple-loop matrix product, oracle-grade.
Matrix mul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::int64_t r = 0; r < a.rows(); ++r)
        for (std::int64_t k = 0; k < a.cols(); ++k)
            for (std::int64_t c = 0; c < b.cols(); ++c) out(r, c) += a(r, k) * b(k, c);
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::int64_t r = 0; r < m.rows(); ++r)
        for (std::int64_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
    return out;
}

/// Kronecker chain over every matrix except index `skip` (0-based), in the
/// reversed order that matches the unfolding's column layout.
Matrix kron_skipping(std::span<const Matrix> mats, std::size_t skip) {
    std::vector<Matrix> rest;
    for (std::size_t d = 0; d < mats.size(); ++d)
        if (d != skip) rest.push_back(mats[d]);
    return testsup::kron_chain_reversed(rest);
}

tucknet::SeriesCase make_case(const Dims& in_dims, const Dims& resp_dims, int steps,
                              tucknet::LossRegime regime, std::uint64_t seed) {
    tucknet::SeriesCase c;
    for (int t = 0; t < steps; ++t)
        c.inputs.push_back(testsup::random_tensor(in_dims, seed + 10 * t));
    const int responses = tucknet::regime_is_last_step_only(regime) ? 1 : steps;
    for (int t = 0; t < responses; ++t)
        c.targets.push_back(testsup::random_tensor(resp_dims, seed + 1000 + 17 * t));
    return c;
}

double dataset_value(const Model& m, const tucknet::SeriesDataset& data,
                     const tucknet::LossSpec& spec) {
    double total = 0.0;
    for (const auto& c : data.cases) {
        const auto run = tucknet::run_series(m, c.inputs);
        total += tucknet::case_loss(c, run.outputs, spec).first;
    }
    return total;
}

DenseTensor one_hot(Dims dims, std::int64_t hot) {
    DenseTensor t(std::move(dims));
    t[hot] = 1.0;
    return t;
}

void expect_matrix_near(const Matrix& a, const refnet::Mat& b, double tol) {
    ASSERT_EQ(a.rows(), static_cast<std::int64_t>(b.size()));
    std::vector<double> flat;
    for (const auto& row : b) flat.insert(flat.end(), row.begin(), row.end());
    EXPECT_LE(testsup::rel_diff({a.data(), static_cast<std::size_t>(a.size())}, flat), tol);
}

void expect_tensor_near(const DenseTensor& a, const refnet::Vec& b, double tol) {
    ASSERT_EQ(a.size(), static_cast<std::int64_t>(b.size()));
    EXPECT_LE(testsup::rel_diff(a.values(), b), tol);
}

void expect_gate_near(const tucknet::GateGradient& g, const refnet::GateGrad& r, double tol) {
    expect_matrix_near(g.w[0], r.dw, tol);
    expect_matrix_near(g.u[0], r.du, tol);
    expect_tensor_near(g.b, r.db, tol);
}

/// Collects the model's parameter values in visitation order.
std::vector<double> snapshot(const Model& m) {
    std::vector<double> out;
    tucknet::visit_params(m, [&out](const double* p, std::int64_t n) {
        out.insert(out.end(), p, p + n);
    });
    return out;
}

std::vector<double> snapshot(const GradientSet& g) {
    std::vector<double> out;
    tucknet::visit_params(g, [&out](const double* p, std::int64_t n) {
        out.insert(out.end(), p, p + n);
    });
    return out;
}

}  // namespace

// --- the finite-difference oracle itself -----------------------------------

TEST(FiniteDifferenceTest, RecoversQuadraticGradient) {
    const Model m = tucknet::make_model(tucknet::CellKind::kTLSTM, {2}, {3}, {2}, 11);
    const auto quadratic = [](const Model& model) {
        double s = 0.0;
        tucknet::visit_params(model, [&s](const double* p, std::int64_t n) {
            for (std::int64_t i = 0; i < n; ++i) s += 0.5 * p[i] * p[i];
        });
        return s;
    };
    const GradientSet fd = tucknet::finite_difference_gradient(m, quadratic);
    const std::vector<double> theta = snapshot(m);
    const std::vector<double> got = snapshot(fd);
    ASSERT_EQ(theta.size(), got.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i)
        worst = std::max(worst, testsup::fd_score(theta[i], got[i]));
    EXPECT_LE(worst, 1e-6);
}

TEST(FiniteDifferenceTest, RecoversLinearCoefficients) {
    const Model m = tucknet::make_model(tucknet::CellKind::kTGRU, {2}, {2}, {2}, 13);
    const auto coeff = [](std::size_t k) { return static_cast<double>(k % 7) - 3.5; };
    const auto linear = [&coeff](const Model& model) {
        double s = 0.0;
        std::size_t k = 0;
        tucknet::visit_params(model, [&](const double* p, std::int64_t n) {
            for (std::int64_t i = 0; i < n; ++i) s += coeff(k++) * p[i];
        });
        return s;
    };
    const std::vector<double> got = snapshot(tucknet::finite_difference_gradient(m, linear));
    double worst = 0.0;
    for (std::size_t k = 0; k < got.size(); ++k)
        worst = std::max(worst, testsup::fd_score(coeff(k), got[k]));
    EXPECT_LE(worst, 1e-6);
}

// --- adjoint of the recurrent map, against explicit Kronecker algebra ------

TEST(HiddenAdjointTest, IdentityMapsPassGradientThrough) {
    const Dims dims{2, 3, 2};
    tucknet::TuckerParams p;
    for (std::int64_t n : dims) p.w.push_back(Matrix::identity(n));
    const DenseTensor g = testsup::random_tensor(dims, 31);
    const DenseTensor back = tucknet::tucker_jacobian_hidden_adjoint(p, g);
    EXPECT_EQ(testsup::max_abs_diff(back.values(), g.values()), 0.0);
}

TEST(HiddenAdjointTest, OneModeCaseIsTransposeTimesGradient) {
    tucknet::TuckerParams p;
    p.w.push_back(testsup::random_matrix(5, 5, 37));
    const DenseTensor g = testsup::random_tensor({5}, 41);
    const DenseTensor back = tucknet::tucker_jacobian_hidden_adjoint(p, g);
    const std::vector<double> expected = testsup::matvec(transpose(p.w[0]), g.values());
    EXPECT_LE(testsup::rel_diff(back.values(), expected), 1e-14);
}

TEST(HiddenAdjointTest, MatchesTransposedKroneckerChain) {
    const Dims dims{2, 3, 2};
    tucknet::TuckerParams p;
    for (std::size_t d = 0; d < dims.size(); ++d)
        p.w.push_back(testsup::random_matrix(dims[d], dims[d], 43 + d));
    const DenseTensor g = testsup::random_tensor(dims, 47);

    const Matrix chain = testsup::kron_chain_reversed(p.w);
    const std::vector<double> expected_vec = testsup::matvec(transpose(chain), tucknet::vec(g));
    const DenseTensor expected = tucknet::ivec(expected_vec, dims);

    const DenseTensor back = tucknet::tucker_jacobian_hidden_adjoint(p, g);
    EXPECT_LE(testsup::rel_diff(back.values(), expected.values()), 1e-12);
}

// --- per-mode parameter gradients vs the literal matrix calculus forms -----

TEST(GateGradientTest, RecurrentMapMatchesExplicitKroneckerForm) {
    const Dims hidden{2, 3, 2};
    tucknet::TuckerParams p;
    for (std::size_t d = 0; d < hidden.size(); ++d)
        p.w.push_back(testsup::random_matrix(hidden[d], hidden[d], 53 + d));
    const DenseTensor h = testsup::random_tensor(hidden, 59);
    const DenseTensor dm = testsup::random_tensor(hidden, 61);

    for (int mode = 1; mode <= 3; ++mode) {
        const Matrix got = tucknet::grad_wrt_W(dm, p, h, mode);
        const Matrix expected =
            mul(mul(tucknet::matricize(dm, mode), kron_skipping(p.w, mode - 1)),
                transpose(tucknet::matricize(h, mode)));
        ASSERT_EQ(got.rows(), expected.rows());
        ASSERT_EQ(got.cols(), expected.cols());
        EXPECT_LE(testsup::rel_diff({got.data(), static_cast<std::size_t>(got.size())},
                                    {expected.data(), static_cast<std::size_t>(expected.size())}),
                  1e-12)
            << "mode " << mode;
    }
}

TEST(GateGradientTest, OneModeRecurrentGradientIsOuterProduct) {
    tucknet::TuckerParams p;
    p.w.push_back(testsup::random_matrix(4, 4, 67));
    const DenseTensor h = testsup::random_tensor({4}, 71);
    const DenseTensor dm = testsup::random_tensor({4}, 73);
    const Matrix got = tucknet::grad_wrt_W(dm, p, h, 1);
    for (std::int64_t r = 0; r < 4; ++r)
        for (std::int64_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(got(r, c), dm[r] * h[c]);
}

TEST(GateGradientTest, InputMapMatchesExplicitKroneckerForm) {
    const Dims input{3, 2};
    const Dims hidden{2, 4};
    tucknet::TuckerParams p;
    for (std::size_t d = 0; d < hidden.size(); ++d)
        p.u.push_back(testsup::random_matrix(hidden[d], input[d], 79 + d));
    const DenseTensor x = testsup::random_tensor(input, 83);
    const DenseTensor dm = testsup::random_tensor(hidden, 89);

    for (int mode = 1; mode <= 2; ++mode) {
        const Matrix got = tucknet::grad_wrt_U(dm, p, x, mode);
        const Matrix expected =
            mul(mul(tucknet::matricize(dm, mode), kron_skipping(p.u, mode - 1)),
                transpose(tucknet::matricize(x, mode)));
        ASSERT_EQ(got.rows(), expected.rows());
        ASSERT_EQ(got.cols(), expected.cols());
        EXPECT_LE(testsup::rel_diff({got.data(), static_cast<std::size_t>(got.size())},
                                    {expected.data(), static_cast<std::size_t>(expected.size())}),
                  1e-12)
            << "mode " << mode;
    }
}

TEST(GateGradientTest, BiasGradientIsTheIncomingAdjoint) {
    const DenseTensor dm = testsup::random_tensor({2, 3}, 97);
    const DenseTensor got = tucknet::grad_wrt_B(dm);
    ASSERT_TRUE(got.same_dims(dm));
    EXPECT_EQ(testsup::max_abs_diff(got.values(), dm.values()), 0.0);
}

// --- one-mode reduction: gradients must match the loop-based reference -----

namespace {

struct ReductionSetup {
    Model model;
    std::vector<DenseTensor> inputs;
    std::vector<DenseTensor> targets;  // one per step
    std::vector<refnet::Vec> ref_xs;
    std::vector<refnet::Vec> ref_targets;
};

ReductionSetup reduction_setup(tucknet::CellKind kind, int steps, std::uint64_t seed) {
    ReductionSetup s{tucknet::make_model(kind, {4}, {3}, {2}, seed), {}, {}, {}, {}};
    for (int t = 0; t < steps; ++t) {
        s.inputs.push_back(testsup::random_tensor({4}, seed + 100 + t));
        s.targets.push_back(testsup::random_tensor({2}, seed + 200 + t));
        s.ref_xs.push_back(testsup::to_ref(s.inputs.back()));
        s.ref_targets.push_back(testsup::to_ref(s.targets.back()));
    }
    return s;
}

tucknet::SeriesDataset reduction_dataset(const ReductionSetup& s, tucknet::LossRegime regime) {
    tucknet::SeriesCase c;
    c.inputs = s.inputs;
    if (tucknet::regime_is_last_step_only(regime))
        c.targets = {s.targets.back()};
    else
        c.targets = s.targets;
    return tucknet::SeriesDataset{{c}};
}

refnet::Vec reduction_weights(int steps, tucknet::LossRegime regime) {
    refnet::Vec w(steps, 1.0);
    if (tucknet::regime_is_last_step_only(regime)) {
        std::fill(w.begin(), w.end(), 0.0);
        w.back() = 1.0;
    }
    return w;
}

}  // namespace

TEST(OneModeReductionTest, LstmGradientsMatchReferenceNet) {
    for (const auto regime : {tucknet::LossRegime::kLastStep, tucknet::LossRegime::kAllSteps}) {
        const ReductionSetup s = reduction_setup(tucknet::CellKind::kTLSTM, 4, 101);
        const auto& cell = std::get<tucknet::LSTMCell>(s.model.cell);
        const refnet::LSTM net = testsup::to_ref(cell, s.model.head);
        const refnet::LSTMRun ref =
            refnet::run_lstm(net, s.ref_xs, s.ref_targets, reduction_weights(4, regime));

        const tucknet::LossSpec spec{tucknet::LossKind::kSquared, regime, 0.0};
        const auto got = tucknet::dataset_gradient(s.model, reduction_dataset(s, regime), spec);

        EXPECT_LE(testsup::fd_score(got.loss, ref.loss, 1e-15, 1e-12), 1e-12);
        expect_gate_near(got.grads.gates[tucknet::lstm_gate::kForget], ref.grad.f, 1e-12);
        expect_gate_near(got.grads.gates[tucknet::lstm_gate::kInput], ref.grad.i, 1e-12);
        expect_gate_near(got.grads.gates[tucknet::lstm_gate::kOutput], ref.grad.o, 1e-12);
        expect_gate_near(got.grads.gates[tucknet::lstm_gate::kCandidate], ref.grad.c, 1e-12);
        expect_matrix_near(got.grads.v[0], ref.grad.dv, 1e-12);
        expect_tensor_near(got.grads.head_bias, ref.grad.dvb, 1e-12);
    }
}

TEST(OneModeReductionTest, GruGradientsMatchReferenceNet) {
    for (const auto regime : {tucknet::LossRegime::kLastStep, tucknet::LossRegime::kAllSteps}) {
        const ReductionSetup s = reduction_setup(tucknet::CellKind::kTGRU, 4, 103);
        const auto& cell = std::get<tucknet::GRUCell>(s.model.cell);
        const refnet::GRU net = testsup::to_ref(cell, s.model.head);
        const refnet::GRURun ref =
            refnet::run_gru(net, s.ref_xs, s.ref_targets, reduction_weights(4, regime));

        const tucknet::LossSpec spec{tucknet::LossKind::kSquared, regime, 0.0};
        const auto got = tucknet::dataset_gradient(s.model, reduction_dataset(s, regime), spec);

        EXPECT_LE(testsup::fd_score(got.loss, ref.loss, 1e-15, 1e-12), 1e-12);
        expect_gate_near(got.grads.gates[tucknet::gru_gate::kReset], ref.grad.r, 1e-12);
        expect_gate_near(got.grads.gates[tucknet::gru_gate::kUpdate], ref.grad.z, 1e-12);
        expect_gate_near(got.grads.gates[tucknet::gru_gate::kCandidate], ref.grad.h, 1e-12);
        expect_matrix_near(got.grads.v[0], ref.grad.dv, 1e-12);
        expect_tensor_near(got.grads.head_bias, ref.grad.dvb, 1e-12);
    }
}

// --- whole-model gradient checks against central differences ----------------

namespace {

void expect_fd_agreement(tucknet::CellKind kind, tucknet::LossKind loss_kind,
                         tucknet::LossRegime regime, const std::vector<int>& lengths,
                         std::uint64_t seed) {
    const Dims input{2, 3};
    const Dims response{2, 1};
    const Model m = tucknet::make_model(kind, input, {2, 2}, response, seed);

    tucknet::SeriesDataset data;
    std::uint64_t s = seed + 5;
    for (int len : lengths) {
        tucknet::SeriesCase c = make_case(input, response, len, regime, s);
        if (loss_kind == tucknet::LossKind::kCrossEntropy)
            for (auto& t : c.targets) t = one_hot(response, static_cast<std::int64_t>(s % 2));
        data.cases.push_back(std::move(c));
        s += 977;
    }
    const tucknet::LossSpec spec{loss_kind, regime, 0.0};
    tucknet::validate_dataset(data, regime);

    const auto analytic = tucknet::dataset_gradient(m, data, spec);
    const GradientSet fd = tucknet::finite_difference_gradient(
        m, [&](const Model& model) { return dataset_value(model, data, spec); });

    EXPECT_LE(testsup::max_fd_score(analytic.grads, fd), 1e-6);
}

}  // namespace

TEST(GradCheckTest, LstmSquaredLastStepMatchesFiniteDifferences) {
    expect_fd_agreement(tucknet::CellKind::kTLSTM, tucknet::LossKind::kSquared,
                        tucknet::LossRegime::kLastStep, {3, 3}, 211);
}

TEST(GradCheckTest, LstmSquaredAllStepsMatchesFiniteDifferences) {
    expect_fd_agreement(tucknet::CellKind::kTLSTM, tucknet::LossKind::kSquared,
                        tucknet::LossRegime::kAllSteps, {3, 3}, 223);
}

TEST(GradCheckTest, LstmSingleStepWindowMatchesFiniteDifferences) {
    expect_fd_agreement(tucknet::CellKind::kTLSTM, tucknet::LossKind::kSquared,
                        tucknet::LossRegime::kLastStep, {1, 1}, 227);
}

TEST(GradCheckTest, GruSquaredLastStepMatchesFiniteDifferences) {
    expect_fd_agreement(tucknet::CellKind::kTGRU, tucknet::LossKind::kSquared,
                        tucknet::LossRegime::kLastStep, {3, 3}, 229);
}

TEST(GradCheckTest, GruSquaredAllStepsMatchesFiniteDifferences) {
    expect_fd_agreement(tucknet::CellKind::kTGRU, tucknet::LossKind::kSquared,
                        tucknet::LossRegime::kAllSteps, {3, 3}, 233);
}

TEST(GradCheckTest, SingleSeriesRegimeMatchesFiniteDifferences) {
    expect_fd_agreement(tucknet::CellKind::kTLSTM, tucknet::LossKind::kSquared,
                        tucknet::LossRegime::kSingleSeries, {5}, 239);
}

TEST(GradCheckTest, PanelRegimesMatchFiniteDifferences) {
    expect_fd_agreement(tucknet::CellKind::kTLSTM, tucknet::LossKind::kSquared,
                        tucknet::LossRegime::kPanelLast, {2, 4}, 241);
    expect_fd_agreement(tucknet::CellKind::kTGRU, tucknet::LossKind::kSquared,
                        tucknet::LossRegime::kPanelAll, {2, 4}, 251);
}

TEST(GradCheckTest, CrossEntropyMatchesFiniteDifferences) {
    expect_fd_agreement(tucknet::CellKind::kTLSTM, tucknet::LossKind::kCrossEntropy,
                        tucknet::LossRegime::kLastStep, {3, 3}, 257);
    expect_fd_agreement(tucknet::CellKind::kTGRU, tucknet::LossKind::kCrossEntropy,
                        tucknet::LossRegime::kAllSteps, {2, 2}, 263);
}

// --- structural properties of the reverse pass ------------------------------

namespace {

struct SeriesFixture {
    Model model;
    std::vector<DenseTensor> inputs;
    tucknet::SeriesRun run;
    Dims response;
};

SeriesFixture series_fixture(tucknet::CellKind kind, int steps, std::uint64_t seed) {
    SeriesFixture f{tucknet::make_model(kind, {2, 3}, {2, 2}, {2, 2}, seed), {}, {}, {2, 2}};
    for (int t = 0; t < steps; ++t)
        f.inputs.push_back(testsup::random_tensor({2, 3}, seed + 300 + t));
    f.run = tucknet::run_series(f.model, f.inputs);
    return f;
}

std::vector<DenseTensor> random_schedule(const Dims& response, int steps, std::uint64_t seed) {
    std::vector<DenseTensor> sched;
    for (int t = 0; t < steps; ++t)
        sched.push_back(testsup::random_tensor(response, seed + 400 + t));
    return sched;
}

}  // namespace

TEST(BackpropSeriesTest, GradientIsLinearInTheSeedAdjoints) {
    for (const auto kind : {tucknet::CellKind::kTLSTM, tucknet::CellKind::kTGRU}) {
        const SeriesFixture f = series_fixture(kind, 3, 271);
        const auto a = random_schedule(f.response, 3, 277);
        const auto b = random_schedule(f.response, 3, 281);
        std::vector<DenseTensor> ab;
        for (int t = 0; t < 3; ++t) ab.push_back(tucknet::add(a[t], b[t]));

        GradientSet ga = tucknet::backprop_series(f.model, f.run, a);
        const GradientSet gb = tucknet::backprop_series(f.model, f.run, b);
        const GradientSet gab = tucknet::backprop_series(f.model, f.run, ab);
        tucknet::accumulate(ga, gb);
        EXPECT_LE(testsup::max_fd_score(ga, gab, 1e-15, 1e-12), 1e-12);
    }
}

TEST(BackpropSeriesTest, SeriesGradientIsSumOfPerStepGradients) {
    for (const auto kind : {tucknet::CellKind::kTLSTM, tucknet::CellKind::kTGRU}) {
        const SeriesFixture f = series_fixture(kind, 4, 283);
        const auto sched = random_schedule(f.response, 4, 293);
        const GradientSet whole = tucknet::backprop_series(f.model, f.run, sched);

        GradientSet acc = tucknet::zero_gradients(f.model);
        for (int t = 0; t < 4; ++t) {
            std::vector<DenseTensor> only(4);  // empty tensors: no response
            only[t] = sched[t];
            tucknet::accumulate(acc, tucknet::backprop_series(f.model, f.run, only));
        }
        EXPECT_LE(testsup::max_fd_score(acc, whole, 1e-15, 1e-12), 1e-12);
    }
}

TEST(BackpropSeriesTest, NoResponsesMeansZeroGradients) {
    const SeriesFixture f = series_fixture(tucknet::CellKind::kTGRU, 3, 307);
    const std::vector<DenseTensor> empty_schedule(3);
    const GradientSet g = tucknet::backprop_series(f.model, f.run, empty_schedule);
    EXPECT_EQ(tucknet::global_norm(g), 0.0);
}

TEST(BackpropSeriesTest, RejectsSoftmaxHeadDuringTraining) {
    SeriesFixture f = series_fixture(tucknet::CellKind::kTLSTM, 2, 311);
    f.model.head.activation = tucknet::HeadActivation::kSoftmax;
    const auto run = tucknet::run_series(f.model, f.inputs);
    const auto sched = random_schedule(f.response, 2, 313);
    EXPECT_THROW(tucknet::backprop_series(f.model, run, sched), tucknet::ShapeError);
}

TEST(BackpropSeriesTest, RejectsMismatchedScheduleLength) {
    const SeriesFixture f = series_fixture(tucknet::CellKind::kTLSTM, 3, 317);
    const auto sched = random_schedule(f.response, 2, 331);
    EXPECT_THROW(tucknet::backprop_series(f.model, f.run, sched), tucknet::ShapeError);
}

// --- update-gate recurrent path: full vs truncated hidden adjoint ----------

namespace {

/// Squared-loss dataset on which the two gradient variants disagree: the
/// truncated form drops the route into H_{t-1} through the reset-scaled
/// candidate operand, which only matters once the state is nonzero (T >= 2).
struct VariantFixture {
    Model model;
    tucknet::SeriesDataset data;
    tucknet::LossSpec spec;
};

VariantFixture variant_fixture() {
    VariantFixture f{tucknet::make_model(tucknet::CellKind::kTGRU, {2}, {3}, {2}, 347),
                     {},
                     {tucknet::LossKind::kSquared, tucknet::LossRegime::kAllSteps, 0.0}};
    f.data.cases.push_back(make_case({2}, {2}, 3, f.spec.regime, 349));
    return f;
}

}  // namespace

TEST(GruVariantTest, FullVariantPassesGradientCheck) {
    const VariantFixture f = variant_fixture();
    const auto analytic =
        tucknet::dataset_gradient(f.model, f.data, f.spec, tucknet::GruGradientVariant::kFull);
    const GradientSet fd = tucknet::finite_difference_gradient(
        f.model, [&](const Model& m) { return dataset_value(m, f.data, f.spec); });
    EXPECT_LE(testsup::max_fd_score(analytic.grads, fd), 1e-6);
}

TEST(GruVariantTest, TruncatedVariantFailsGradientCheck) {
    const VariantFixture f = variant_fixture();
    const auto truncated = tucknet::dataset_gradient(f.model, f.data, f.spec,
                                                     tucknet::GruGradientVariant::kNoResetPath);
    const GradientSet fd = tucknet::finite_difference_gradient(
        f.model, [&](const Model& m) { return dataset_value(m, f.data, f.spec); });

    const double score = testsup::max_fd_score(truncated.grads, fd);
    double max_abs_dev = 0.0;
    const auto tb = testsup::buffers(truncated.grads);
    const auto fb = testsup::buffers(fd);
    for (std::size_t i = 0; i < tb.size(); ++i)
        for (std::int64_t k = 0; k < tb[i].second; ++k)
            max_abs_dev = std::max(max_abs_dev, std::abs(tb[i].first[k] - fb[i].first[k]));
    std::cout << "[ measured ] truncated-variant deviation: max score " << score
              << ", max abs " << max_abs_dev << "\n";
    EXPECT_GT(score, 1e-4);
}

// --- gradient-set bookkeeping ------------------------------------------------

TEST(GradientSetTest, VisitationCoversEveryParameterExactlyOnce) {
    const Model m = tucknet::make_model(tucknet::CellKind::kTLSTM, {2, 3}, {2, 2}, {2, 1}, 353);
    const GradientSet g = tucknet::zero_gradients(m);
    std::int64_t model_total = 0;
    tucknet::visit_params(m, [&](const double*, std::int64_t n) { model_total += n; });
    std::int64_t grad_total = 0;
    tucknet::visit_params(g, [&](const double*, std::int64_t n) { grad_total += n; });
    EXPECT_EQ(model_total, tucknet::parameter_count(m));
    EXPECT_EQ(grad_total, model_total);
    EXPECT_GT(model_total, 0);
}

TEST(GradientSetTest, NormScaleAndAccumulateBehave) {
    const Model m = tucknet::make_model(tucknet::CellKind::kTGRU, {2}, {2}, {2}, 359);
    const std::int64_t n = tucknet::parameter_count(m);

    GradientSet g = tucknet::zero_gradients(m);
    EXPECT_EQ(tucknet::global_norm(g), 0.0);
    tucknet::visit_params(g, [](double* p, std::int64_t len) {
        for (std::int64_t i = 0; i < len; ++i) p[i] = 2.0;
    });
    EXPECT_NEAR(tucknet::global_norm(g), 2.0 * std::sqrt(static_cast<double>(n)), 1e-12);

    tucknet::scale_in_place(g, 0.5);
    EXPECT_NEAR(tucknet::global_norm(g), std::sqrt(static_cast<double>(n)), 1e-12);

    GradientSet other = tucknet::zero_gradients(m);
    tucknet::visit_params(other, [](double* p, std::int64_t len) {
        for (std::int64_t i = 0; i < len; ++i) p[i] = 3.0;
    });
    tucknet::accumulate(g, other);
    tucknet::visit_params(g, [](double* p, std::int64_t len) {
        for (std::int64_t i = 0; i < len; ++i) EXPECT_DOUBLE_EQ(p[i], 4.0);
    });
}

TEST(GradientSetTest, AccumulateRejectsMismatchedStructure) {
    const Model a = tucknet::make_model(tucknet::CellKind::kTGRU, {2}, {2}, {2}, 367);
    const Model b = tucknet::make_model(tucknet::CellKind::kTGRU, {2}, {3}, {2}, 373);
    GradientSet ga = tucknet::zero_gradients(a);
    const GradientSet gb = tucknet::zero_gradients(b);
    EXPECT_THROW(tucknet::accumulate(ga, gb), tucknet::ShapeError);
}
