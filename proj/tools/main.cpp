/// Command-line front end for the tucknet library. Subcommands:
///
///   gen        draw a synthetic tensor time series and write it as TTSR
///   train      fit a model on a TTSR file; writes model + convergence CSV
///   eval       score a saved model (and/or the persistence baseline)
///   gradcheck  compare analytic gradients against finite differences
///   replicate  canned end-to-end pipelines (case 1 / case 2)
///
/// Every subcommand is deterministic given its full flag set; the only
/// non-deterministic outputs are the wall-clock fields inside the JSON
/// summary. Exit codes: 0 success, 1 usage error, 2 data/format error,
/// 3 gradient-check failure, 4 divergence during training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tucknet/backprop.hpp"
#include "tucknet/cells.hpp"
#include "tucknet/data_io.hpp"
#include "tucknet/model_io.hpp"
#include "tucknet/objectives.hpp"
#include "tucknet/rng.hpp"
#include "tucknet/tensor.hpp"
#include "tucknet/trainer.hpp"

namespace {

using nlohmann::json;
using namespace tucknet;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitGradcheck = 3;
constexpr int kExitDivergence = 4;

/// Command-line or config-file values that do not make sense (unknown
/// enum spellings, malformed dim lists, missing required inputs).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Enum spellings shared by flags, config files, and the echoed config.

CellKind cell_from_string(const std::string& s) {
    if (s == "tlstm") return CellKind::kTLSTM;
    if (s == "tgru") return CellKind::kTGRU;
    throw UsageError("unknown cell '" + s + "' (expected tlstm or tgru)");
}

const char* cell_name(CellKind k) { return k == CellKind::kTLSTM ? "tlstm" : "tgru"; }

LossRegime regime_from_string(const std::string& s) {
    if (s == "last") return LossRegime::kLastStep;
    if (s == "all") return LossRegime::kAllSteps;
    if (s == "panel-last") return LossRegime::kPanelLast;
    if (s == "panel-all") return LossRegime::kPanelAll;
    throw UsageError("unknown regime '" + s +
                     "' (expected last, all, panel-last, or panel-all)");
}

const char* regime_name(LossRegime r) {
    switch (r) {
        case LossRegime::kSingleSeries: return "single-series";
        case LossRegime::kLastStep: return "last";
        case LossRegime::kAllSteps: return "all";
        case LossRegime::kPanelLast: return "panel-last";
        case LossRegime::kPanelAll: return "panel-all";
    }
    return "?";
}

LossKind loss_from_string(const std::string& s) {
    if (s == "squared") return LossKind::kSquared;
    if (s == "cross-entropy") return LossKind::kCrossEntropy;
    throw UsageError("unknown loss '" + s + "' (expected squared or cross-entropy)");
}

const char* loss_name(LossKind k) {
    return k == LossKind::kSquared ? "squared" : "cross-entropy";
}

BatchPolicy batch_from_string(const std::string& s) {
    if (s == "full") return BatchPolicy::kFullBatch;
    if (s == "per-series") return BatchPolicy::kPerSeries;
    throw UsageError("unknown batch policy '" + s + "' (expected full or per-series)");
}

const char* batch_name(BatchPolicy b) {
    return b == BatchPolicy::kFullBatch ? "full" : "per-series";
}

GruGradientVariant variant_from_string(const std::string& s) {
    if (s == "full") return GruGradientVariant::kFull;
    if (s == "truncated") return GruGradientVariant::kNoResetPath;
    throw UsageError("unknown gradient variant '" + s + "' (expected full or truncated)");
}

Dims parse_dims(const std::string& s) {
    Dims dims;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(item, &pos);
            if (pos != item.size() || v < 1) throw std::invalid_argument(item);
            dims.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("bad dimension list '" + s +
                             "' (expected comma-separated positive integers)");
        }
    }
    if (dims.empty()) throw UsageError("empty dimension list");
    return dims;
}

std::string dims_to_string(const Dims& dims) {
    std::string out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(dims[i]);
    }
    return out;
}

json dims_to_json(const Dims& dims) {
    json a = json::array();
    for (auto d : dims) a.push_back(d);
    return a;
}

// ---------------------------------------------------------------------------
// Training settings: built-in defaults, overlaid by the JSON config file,
// overlaid by explicit flags (flags win).

/// One optional slot per knob; unset means "keep the previous layer".
struct TrainOptions {
    std::optional<std::string> data, out, cell, hidden, regime, loss, batch;
    std::optional<double> lr, lambda, split, clip;
    std::optional<std::int64_t> epochs, window;
    std::optional<std::uint64_t> seed;
    std::optional<bool> scale;
};

/// Fully resolved settings for `train` (and, with canned defaults, for
/// `replicate`).
struct TrainSettings {
    std::string data;
    std::string out = "model";
    CellKind cell = CellKind::kTLSTM;
    std::optional<Dims> hidden;  // default: match the input dims
    LossRegime regime = LossRegime::kLastStep;
    LossKind loss = LossKind::kSquared;
    BatchPolicy batch = BatchPolicy::kFullBatch;
    double lr = 0.01;
    double lambda = 0.0;
    double split = 0.9;
    double clip = 5.0;
    std::int64_t epochs = 1000;
    std::int64_t window = 7;
    std::uint64_t seed = 0;
    bool scale = true;
};

void apply_options(TrainSettings& s, const TrainOptions& o) {
    if (o.data) s.data = *o.data;
    if (o.out) s.out = *o.out;
    if (o.cell) s.cell = cell_from_string(*o.cell);
    if (o.hidden) s.hidden = parse_dims(*o.hidden);
    if (o.regime) s.regime = regime_from_string(*o.regime);
    if (o.loss) s.loss = loss_from_string(*o.loss);
    if (o.batch) s.batch = batch_from_string(*o.batch);
    if (o.lr) s.lr = *o.lr;
    if (o.lambda) s.lambda = *o.lambda;
    if (o.split) s.split = *o.split;
    if (o.clip) s.clip = *o.clip;
    if (o.epochs) s.epochs = *o.epochs;
    if (o.window) s.window = *o.window;
    if (o.seed) s.seed = *o.seed;
    if (o.scale) s.scale = *o.scale;
}

/// Reads a flat-key JSON config file into the option layer. Unknown keys
/// are errors, matching the treatment of unknown flags.
TrainOptions read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot open config file '" + path + "'");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw UsageError("config file must hold a JSON object");

    TrainOptions o;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "data") o.data = value.get<std::string>();
            else if (key == "out") o.out = value.get<std::string>();
            else if (key == "cell") o.cell = value.get<std::string>();
            else if (key == "hidden") {
                if (value.is_array()) {
                    Dims dims;
                    for (const auto& d : value) dims.push_back(d.get<std::int64_t>());
                    o.hidden = dims_to_string(dims);
                } else {
                    o.hidden = value.get<std::string>();
                }
            } else if (key == "regime") o.regime = value.get<std::string>();
            else if (key == "loss") o.loss = value.get<std::string>();
            else if (key == "batch") o.batch = value.get<std::string>();
            else if (key == "lr") o.lr = value.get<double>();
            else if (key == "lambda") o.lambda = value.get<double>();
            else if (key == "split") o.split = value.get<double>();
            else if (key == "clip") o.clip = value.get<double>();
            else if (key == "epochs") o.epochs = value.get<std::int64_t>();
            else if (key == "window") o.window = value.get<std::int64_t>();
            else if (key == "seed") o.seed = value.get<std::uint64_t>();
            else if (key == "scale") o.scale = value.get<bool>();
            else throw UsageError("unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw UsageError("config file '" + path + "': " + e.what());
    }
    return o;
}

json settings_to_json(const TrainSettings& s, const Dims& hidden_used) {
    json j;
    j["data"] = s.data;
    j["out"] = s.out;
    j["cell"] = cell_name(s.cell);
    j["hidden"] = dims_to_json(hidden_used);
    j["regime"] = regime_name(s.regime);
    j["loss"] = loss_name(s.loss);
    j["batch"] = batch_name(s.batch);
    j["lr"] = s.lr;
    j["lambda"] = s.lambda;
    j["split"] = s.split;
    j["clip"] = s.clip;
    j["epochs"] = s.epochs;
    j["window"] = s.window;
    j["seed"] = s.seed;
    j["scale"] = s.scale;
    return j;
}

// ---------------------------------------------------------------------------
// Report writers.

void write_convergence_csv(const std::filesystem::path& path,
                           const std::vector<double>& history) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + path.string() + "' for writing");
    f << "epoch,loss\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        f << (i + 1) << ',' << g17(history[i]) << '\n';
    f.flush();
    if (!f) throw FormatError("failed writing '" + path.string() + "'");
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + path.string() + "' for writing");
    f << j.dump(2) << '\n';
    f.flush();
    if (!f) throw FormatError("failed writing '" + path.string() + "'");
}

double fraction_non_increasing(const std::vector<double>& history) {
    if (history.size() < 2) return 1.0;
    std::size_t good = 0;
    for (std::size_t i = 1; i < history.size(); ++i)
        if (history[i] <= history[i - 1]) ++good;
    return static_cast<double>(good) / static_cast<double>(history.size() - 1);
}

// ---------------------------------------------------------------------------
// Shared pipeline: cases -> train -> artifacts. Used by train and replicate.

int run_training(const TrainSettings& s, const TensorSeries& series, json extra_config) {
    const Dims hidden = s.hidden ? *s.hidden : series.dims;
    if (hidden.size() != series.dims.size())
        throw UsageError("hidden dims " + dims_to_string(hidden) + " and input dims " +
                         dims_to_string(series.dims) + " must have the same number of modes");

    json config_echo = settings_to_json(s, hidden);
    for (auto& [key, value] : extra_config.items()) config_echo[key] = value;
    std::cout << "config " << config_echo.dump() << '\n';

    std::vector<DenseTensor> steps = series.steps;
    std::optional<ElementScaler> scaler;
    if (s.scale) {
        scaler = ElementScaler::fit(series.steps);
        for (DenseTensor& x : steps) x = scaler->transform(x);
    }

    const CaseSplit cases = build_cases(steps, s.window, s.regime, s.split);
    std::cout << "windows total " << cases.total_windows << " train "
              << cases.train.cases.size() << " test " << cases.test.cases.size() << '\n';

    TrainConfig cfg;
    cfg.cell = s.cell;
    cfg.hidden_dims = hidden;
    cfg.loss = LossSpec{s.loss, s.regime, s.lambda};
    cfg.learning_rate = s.lr;
    cfg.epochs = s.epochs;
    cfg.seed = s.seed;
    cfg.batch = s.batch;
    cfg.split_fraction = s.split;
    cfg.clip_norm = s.clip;
    cfg.window = s.window;

    const std::int64_t stride = std::max<std::int64_t>(1, s.epochs / 40);
    auto progress = [&](std::int64_t epoch, double objective) {
        if (epoch == 1 || epoch == s.epochs || epoch % stride == 0)
            std::cout << "epoch " << epoch << '/' << s.epochs << " objective "
                      << g17(objective) << std::endl;
    };

    const TrainOutcome outcome =
        train(cases.train, cases.test, cfg, scaler ? &*scaler : nullptr, progress);

    ModelBundle bundle{outcome.model, ElementScaler{}, false};
    if (scaler) {
        bundle.scaler = *scaler;
        bundle.has_scaler = true;
    }
    const std::filesystem::path model_path = s.out + ".tmdl";
    const std::filesystem::path csv_path = s.out + "_convergence.csv";
    const std::filesystem::path summary_path = s.out + "_summary.json";
    write_model(bundle, model_path);
    write_convergence_csv(csv_path, outcome.report.loss_history);

    const TrainReport& r = outcome.report;
    double total_ms = 0.0;
    for (double ms : r.epoch_wall_ms) total_ms += ms;
    const bool beats = r.final_test_mse < r.persistence_test_mse;

    json summary;
    summary["config"] = config_echo;
    summary["train_windows"] = cases.train.cases.size();
    summary["test_windows"] = cases.test.cases.size();
    summary["first_objective"] = r.loss_history.empty() ? 0.0 : r.loss_history.front();
    summary["final_objective"] = r.loss_history.empty() ? 0.0 : r.loss_history.back();
    summary["nonincreasing_fraction"] = fraction_non_increasing(r.loss_history);
    summary["final_test_mse"] = r.final_test_mse;
    summary["persistence_test_mse"] = r.persistence_test_mse;
    summary["beats_persistence"] = beats;
    summary["final_learning_rate"] = r.final_learning_rate;
    summary["total_wall_ms"] = total_ms;
    write_json_file(summary_path, summary);

    std::cout << "wrote " << model_path.string() << ' ' << csv_path.string() << ' '
              << summary_path.string() << '\n';
    std::cout << "final objective " << g17(summary["final_objective"].get<double>())
              << " test_mse " << g17(r.final_test_mse) << " persistence_mse "
              << g17(r.persistence_test_mse) << " beats_persistence "
              << (beats ? "true" : "false") << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gen

struct GenOptions {
    std::string dims = "25,25,4";
    std::int64_t len = 543;
    std::uint64_t seed = 0;
    double noise = 0.1;
    double radius = 0.95;
    std::string out = "series.ttsr";
};

int cmd_gen(const GenOptions& o) {
    SyntheticSpec spec;
    spec.dims = parse_dims(o.dims);
    spec.length = o.len;
    spec.seed = o.seed;
    spec.noise_scale = o.noise;
    spec.spectral_radius = o.radius;
    const TensorSeries series = generate_synthetic(spec);
    write_series(series, o.out);
    std::cout << "wrote " << o.out << " dims [" << dims_to_string(spec.dims) << "] steps "
              << o.len << " seed " << o.seed << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::string model;
    std::string data;
    std::string regime = "last";
    std::int64_t window = 7;
    std::optional<double> split;
    bool persistence = false;
};

int cmd_eval(const EvalOptions& o) {
    if (o.model.empty() && !o.persistence)
        throw UsageError("eval needs --model, --persistence, or both");

    const TensorSeries series = read_series(o.data);
    std::optional<ModelBundle> bundle;
    if (!o.model.empty()) bundle = read_model(o.model);

    std::vector<DenseTensor> steps = series.steps;
    const ElementScaler* scaler = nullptr;
    if (bundle && bundle->has_scaler) {
        scaler = &bundle->scaler;
        for (DenseTensor& x : steps) x = scaler->transform(x);
    }

    const LossRegime regime = regime_from_string(o.regime);
    // Without --split every admissible window is scored; with it, only the
    // chronologically-last test share (mirroring train's holdout).
    const CaseSplit cases = build_cases(steps, o.window, regime, o.split.value_or(0.5));
    SeriesDataset ds;
    if (o.split) {
        ds = cases.test;
    } else {
        ds = cases.train;
        ds.cases.insert(ds.cases.end(), cases.test.cases.begin(), cases.test.cases.end());
    }
    std::cout << "windows " << ds.cases.size() << " of " << cases.total_windows << '\n';

    const LossSpec spec{LossKind::kSquared, regime, 0.0};
    if (bundle) {
        const double mse = scaler ? evaluate(bundle->model, ds, spec, *scaler)
                                  : evaluate(bundle->model, ds, spec);
        std::cout << "test_mse " << g17(mse) << '\n';
    }
    if (o.persistence) {
        const double base =
            scaler ? persistence_mse(ds, spec, *scaler) : persistence_mse(ds, spec);
        std::cout << "persistence_mse " << g17(base) << '\n';
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOptions {
    std::string cell = "tlstm";
    std::string dims = "2,3";
    std::string hidden = "2,2";
    std::string response;  // default: same as dims
    std::string regime = "last";
    std::string variant = "full";
    std::int64_t window = 3;
    std::uint64_t seed = 0;
};

DenseTensor random_tensor(const Dims& dims, Rng& rng) {
    DenseTensor t(dims);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

int cmd_gradcheck(const GradcheckOptions& o) {
    const CellKind cell = cell_from_string(o.cell);
    const LossRegime regime = regime_from_string(o.regime);
    const GruGradientVariant variant = variant_from_string(o.variant);
    const Dims in = parse_dims(o.dims);
    const Dims hid = parse_dims(o.hidden);
    const Dims resp = o.response.empty() ? in : parse_dims(o.response);
    if (o.window < 1) throw UsageError("--window must be at least 1");

    Model model = make_model(cell, in, hid, resp, o.seed);
    Rng rng(o.seed + 2);

    const bool panel = regime == LossRegime::kPanelLast || regime == LossRegime::kPanelAll;
    const bool last_only = regime_is_last_step_only(regime);
    SeriesDataset data;
    const int n_cases = panel ? 2 : 1;
    for (int j = 0; j < n_cases; ++j) {
        const std::int64_t len = o.window + j;
        SeriesCase c;
        for (std::int64_t t = 0; t < len; ++t) c.inputs.push_back(random_tensor(in, rng));
        const std::int64_t n_targets = last_only ? 1 : len;
        for (std::int64_t t = 0; t < n_targets; ++t)
            c.targets.push_back(random_tensor(resp, rng));
        data.cases.push_back(std::move(c));
    }

    const LossSpec spec{LossKind::kSquared, regime, 0.0};
    const DatasetGradient analytic = dataset_gradient(model, data, spec, variant);
    const GradientSet fd = finite_difference_gradient(
        model,
        [&](const Model& m) {
            double total = 0.0;
            for (const SeriesCase& c : data.cases) {
                const SeriesRun run = run_series(m, c.inputs);
                total += case_loss(c, run.outputs, spec).first;
            }
            return total;
        },
        1e-6);

    std::vector<std::pair<const double*, std::int64_t>> a_bufs, f_bufs;
    visit_params(analytic.grads,
                 [&](const double* p, std::int64_t n) { a_bufs.emplace_back(p, n); });
    visit_params(fd, [&](const double* p, std::int64_t n) { f_bufs.emplace_back(p, n); });

    std::vector<std::string> gate_names;
    if (cell == CellKind::kTLSTM) gate_names = {"forget", "input", "output", "candidate"};
    else gate_names = {"reset", "update", "candidate"};
    const std::size_t n_gates = gate_names.size();
    const std::size_t order = in.size();

    std::vector<std::string> labels;
    for (const std::string& g : gate_names) {
        labels.push_back(g + ".W");
        labels.push_back(g + ".U");
        labels.push_back(g + ".B");
    }
    labels.push_back("head.V");
    labels.push_back("head.bias");

    // Buffer visitation order per gate is W_1..W_D, U_1..U_D, B, then the
    // head's V_1..V_D and bias; fold each run of buffers into its group.
    auto group_of = [&](std::size_t buf) -> std::size_t {
        const std::size_t per_gate = 2 * order + 1;
        if (buf < n_gates * per_gate) {
            const std::size_t gate = buf / per_gate;
            const std::size_t offset = buf % per_gate;
            if (offset < order) return 3 * gate;
            if (offset < 2 * order) return 3 * gate + 1;
            return 3 * gate + 2;
        }
        const std::size_t rest = buf - n_gates * per_gate;
        return rest < order ? labels.size() - 2 : labels.size() - 1;
    };

    constexpr double kAtol = 1e-8, kRtol = 1e-6;
    std::vector<double> worst(labels.size(), 0.0);
    for (std::size_t b = 0; b < a_bufs.size(); ++b) {
        const std::size_t g = group_of(b);
        for (std::int64_t i = 0; i < a_bufs[b].second; ++i) {
            const double a = a_bufs[b].first[i];
            const double f = f_bufs[b].first[i];
            const double score =
                std::abs(a - f) / std::max({std::abs(a), std::abs(f), kAtol / kRtol});
            worst[g] = std::max(worst[g], score);
        }
    }

    std::cout << "gradcheck cell " << o.cell << " dims [" << dims_to_string(in)
              << "] hidden [" << dims_to_string(hid) << "] response ["
              << dims_to_string(resp) << "] window " << o.window << " regime " << o.regime
              << " variant " << o.variant << " seed " << o.seed << '\n';
    std::printf("%-16s  %-12s  %s\n", "group", "max_rel_err", "status");
    double overall = 0.0;
    for (std::size_t g = 0; g < labels.size(); ++g) {
        overall = std::max(overall, worst[g]);
        std::printf("%-16s  %-12.3e  %s\n", labels[g].c_str(), worst[g],
                    worst[g] <= kRtol ? "ok" : "FAIL");
    }
    const bool pass = overall <= kRtol;
    std::printf("%-16s  %-12.3e  %s\n", "overall", overall, pass ? "PASS" : "FAIL");
    return pass ? kExitOk : kExitGradcheck;
}

// ---------------------------------------------------------------------------
// replicate

struct ReplicateOptions {
    int which = 0;  // 1 or 2
    TrainOptions overrides;
    std::optional<std::string> dims;
    std::optional<std::int64_t> len;
    std::optional<std::uint64_t> data_seed;
    std::optional<double> noise, radius;
};

int cmd_replicate(const ReplicateOptions& o) {
    if (o.which != 1 && o.which != 2) throw UsageError("--case must be 1 or 2");

    TrainSettings s;
    s.out = "replicate_case" + std::to_string(o.which);
    s.cell = CellKind::kTLSTM;
    s.hidden = o.which == 1 ? Dims{50, 50, 4} : Dims{14, 14, 4};
    s.regime = o.which == 1 ? LossRegime::kLastStep : LossRegime::kAllSteps;
    s.lambda = 0.01;
    s.lr = o.which == 1 ? 1e-4 : 1e-4;
    s.epochs = 1000;
    s.window = 7;
    s.seed = 1;
    apply_options(s, o.overrides);
    s.data = "(synthetic)";

    SyntheticSpec gen;
    gen.dims = o.dims ? parse_dims(*o.dims) : Dims{25, 25, 4};
    gen.length = o.len.value_or(543);
    gen.seed = o.data_seed.value_or(101);
    gen.noise_scale = o.noise.value_or(0.1);
    gen.spectral_radius = o.radius.value_or(0.95);

    json extra;
    extra["case"] = o.which;
    extra["dims"] = dims_to_json(gen.dims);
    extra["len"] = gen.length;
    extra["data_seed"] = gen.seed;
    extra["noise"] = gen.noise_scale;
    extra["radius"] = gen.spectral_radius;

    const TensorSeries series = generate_synthetic(gen);
    write_series(series, s.out + "_data.ttsr");
    std::cout << "wrote " << s.out << "_data.ttsr dims [" << dims_to_string(gen.dims)
              << "] steps " << gen.length << " seed " << gen.seed << '\n';

    return run_training(s, series, extra);
}

// ---------------------------------------------------------------------------
// train

struct TrainCliOptions {
    std::string config;
    TrainOptions flags;
};

int cmd_train(const TrainCliOptions& o) {
    TrainSettings s;
    if (!o.config.empty()) apply_options(s, read_config_file(o.config));
    apply_options(s, o.flags);
    if (s.data.empty()) throw UsageError("train needs --data (or a 'data' config key)");

    const TensorSeries series = read_series(s.data);
    return run_training(s, series, json::object());
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Training churns through multi-megabyte tensors every step; keep freed
    // blocks in the allocator's arena instead of returning them to the
    // kernel, or the epoch loop spends its time in mmap and page faults.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif

    CLI::App app{"tucknet: tensorial recurrent network training tool"};
    app.require_subcommand(1);

    GenOptions gen_opts;
    CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic TTSR series");
    gen->add_option("--dims", gen_opts.dims, "Tensor dims, e.g. 25,25,4");
    gen->add_option("--len", gen_opts.len, "Number of time steps");
    gen->add_option("--seed", gen_opts.seed, "RNG seed");
    gen->add_option("--noise", gen_opts.noise, "Innovation noise scale");
    gen->add_option("--radius", gen_opts.radius, "Transition spectral radius");
    gen->add_option("--out", gen_opts.out, "Output TTSR path");

    TrainCliOptions train_opts;
    CLI::App* train = app.add_subcommand("train", "Train a model on a TTSR series");
    train->add_option("--config", train_opts.config, "JSON config file (flags override)");
    train->add_option("--data", train_opts.flags.data, "Input TTSR path");
    train->add_option("--out", train_opts.flags.out, "Output stem (model/CSV/summary)");
    train->add_option("--cell", train_opts.flags.cell, "Cell kind: tlstm or tgru");
    train->add_option("--hidden", train_opts.flags.hidden, "Hidden dims, e.g. 50,50,4");
    train->add_option("--regime", train_opts.flags.regime,
                      "Loss regime: last, all, panel-last, panel-all");
    train->add_option("--loss", train_opts.flags.loss, "Loss kind: squared or cross-entropy");
    train->add_option("--batch", train_opts.flags.batch, "Batch policy: full or per-series");
    train->add_option("--lr", train_opts.flags.lr, "Learning rate");
    train->add_option("--lambda", train_opts.flags.lambda, "L2 penalty on gate W/U");
    train->add_option("--split", train_opts.flags.split, "Train fraction of windows");
    train->add_option("--clip", train_opts.flags.clip, "Global-norm gradient clip (<=0 off)");
    train->add_option("--epochs", train_opts.flags.epochs, "Training epochs");
    train->add_option("--window", train_opts.flags.window, "Window length T");
    train->add_option("--seed", train_opts.flags.seed, "Model init seed");
    train->add_option("--scale", train_opts.flags.scale,
                      "Standardize inputs per element (true/false)");

    EvalOptions eval_opts;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a model and/or the baseline");
    eval->add_option("--model", eval_opts.model, "Model file (.tmdl)");
    eval->add_option("--data", eval_opts.data, "Input TTSR path")->required();
    eval->add_option("--regime", eval_opts.regime,
                     "Loss regime: last, all, panel-last, panel-all");
    eval->add_option("--window", eval_opts.window, "Window length T");
    eval->add_option("--split", eval_opts.split,
                     "Score only the held-out tail of this train fraction");
    eval->add_flag("--persistence", eval_opts.persistence,
                   "Also report the persistence baseline");

    GradcheckOptions gc_opts;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Compare analytic gradients to finite differences");
    gradcheck->add_option("--cell", gc_opts.cell, "Cell kind: tlstm or tgru");
    gradcheck->add_option("--dims", gc_opts.dims, "Input dims");
    gradcheck->add_option("--hidden", gc_opts.hidden, "Hidden dims");
    gradcheck->add_option("--response", gc_opts.response, "Response dims (default: input)");
    gradcheck->add_option("--regime", gc_opts.regime,
                          "Loss regime: last, all, panel-last, panel-all");
    gradcheck->add_option("--window", gc_opts.window, "Sequence length T");
    gradcheck->add_option("--seed", gc_opts.seed, "RNG seed");
    gradcheck->add_option("--variant", gc_opts.variant,
                          "GRU backward variant: full or truncated");

    ReplicateOptions rep_opts;
    CLI::App* replicate =
        app.add_subcommand("replicate", "Run a canned generate/train/evaluate pipeline");
    replicate->add_option("--case", rep_opts.which, "Pipeline: 1 (many-to-one) or 2")
        ->required();
    replicate->add_option("--out", rep_opts.overrides.out, "Output stem");
    replicate->add_option("--cell", rep_opts.overrides.cell, "Cell kind: tlstm or tgru");
    replicate->add_option("--hidden", rep_opts.overrides.hidden, "Hidden dims");
    replicate->add_option("--lr", rep_opts.overrides.lr, "Learning rate");
    replicate->add_option("--lambda", rep_opts.overrides.lambda, "L2 penalty on gate W/U");
    replicate->add_option("--split", rep_opts.overrides.split, "Train fraction of windows");
    replicate->add_option("--clip", rep_opts.overrides.clip, "Global-norm gradient clip");
    replicate->add_option("--epochs", rep_opts.overrides.epochs, "Training epochs");
    replicate->add_option("--window", rep_opts.overrides.window, "Window length T");
    replicate->add_option("--seed", rep_opts.overrides.seed, "Model init seed");
    replicate->add_option("--scale", rep_opts.overrides.scale,
                          "Standardize inputs per element (true/false)");
    replicate->add_option("--dims", rep_opts.dims, "Synthetic tensor dims");
    replicate->add_option("--len", rep_opts.len, "Synthetic series length");
    replicate->add_option("--data-seed", rep_opts.data_seed, "Synthetic generator seed");
    replicate->add_option("--noise", rep_opts.noise, "Innovation noise scale");
    replicate->add_option("--radius", rep_opts.radius, "Transition spectral radius");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (app.got_subcommand(gen)) return cmd_gen(gen_opts);
        if (app.got_subcommand(train)) return cmd_train(train_opts);
        if (app.got_subcommand(eval)) return cmd_eval(eval_opts);
        if (app.got_subcommand(gradcheck)) return cmd_gradcheck(gc_opts);
        if (app.got_subcommand(replicate)) return cmd_replicate(rep_opts);
        std::cerr << "usage error: no subcommand\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
