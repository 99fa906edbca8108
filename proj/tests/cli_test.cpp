/// End-to-end tests for the command-line tool: every subcommand is invoked
/// as a child process and judged on its exit code, its printed output, and
/// the artifacts it leaves behind. TUCKNET_CLI_PATH is injected by the
/// build so the tests always exercise the freshly built binary.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"
#include "tucknet/data_io.hpp"
#include "tucknet/model_io.hpp"
#include "tucknet/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        std::mt19937_64 rng(std::random_device{}());
        dir_ = fs::temp_directory_path() / ("tucknet_cli_" + std::to_string(rng()));
        fs::create_directories(dir_);
    }
    void TearDown() override {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }

    /// Runs the CLI with `args` inside the test's scratch directory and
    /// captures exit code plus both streams (POSIX status decoding).
    CmdResult run(const std::string& args) const {
        const std::string cmd = "cd '" + dir_.string() + "' && '" + TUCKNET_CLI_PATH + "' " +
                                args + " > cli_stdout.txt 2> cli_stderr.txt";
        const int rc = std::system(cmd.c_str());
        CmdResult r;
        r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
        r.out = slurp(dir_ / "cli_stdout.txt");
        r.err = slurp(dir_ / "cli_stderr.txt");
        return r;
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    fs::path dir_;
};

TEST_F(CliTest, GenIsDeterministicAndReadable) {
    ASSERT_EQ(run("gen --dims 3,2 --len 20 --seed 9 --out a.ttsr").exit_code, 0);
    ASSERT_EQ(run("gen --dims 3,2 --len 20 --seed 9 --out b.ttsr").exit_code, 0);
    EXPECT_EQ(slurp(path("a.ttsr")), slurp(path("b.ttsr")));

    const tucknet::TensorSeries s = tucknet::read_series(path("a.ttsr"));
    EXPECT_EQ(s.dims, (tucknet::Dims{3, 2}));
    EXPECT_EQ(s.steps.size(), 20u);
}

TEST_F(CliTest, TrainWritesModelCsvAndSummary) {
    ASSERT_EQ(run("gen --dims 3,2 --len 40 --seed 7 --out d.ttsr").exit_code, 0);
    const CmdResult r =
        run("train --data d.ttsr --hidden 2,2 --epochs 3 --window 4 --lr 0.001 --out m");
    ASSERT_EQ(r.exit_code, 0) << r.err;

    const std::string csv = slurp(path("m_convergence.csv"));
    EXPECT_EQ(csv.rfind("epoch,loss\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);  // header + 3 epochs

    const json summary = json::parse(slurp(path("m_summary.json")));
    EXPECT_EQ(summary.at("config").at("epochs").get<int>(), 3);
    EXPECT_EQ(summary.at("config").at("hidden"), json::array({2, 2}));
    EXPECT_EQ(summary.at("train_windows").get<int>(), 33);
    EXPECT_EQ(summary.at("test_windows").get<int>(), 4);
    EXPECT_TRUE(summary.at("final_test_mse").is_number());

    const tucknet::ModelBundle bundle = tucknet::read_model(path("m.tmdl"));
    EXPECT_TRUE(bundle.has_scaler);
    EXPECT_EQ(bundle.model.kind(), tucknet::CellKind::kTLSTM);
}

TEST_F(CliTest, TrainRerunsAreBitwiseIdentical) {
    ASSERT_EQ(run("gen --dims 2,2 --len 30 --seed 3 --out d.ttsr").exit_code, 0);
    const std::string flags = "train --data d.ttsr --hidden 2,2 --epochs 4 --window 3 "
                              "--lr 0.001 --seed 11 --out ";
    ASSERT_EQ(run(flags + "r1").exit_code, 0);
    ASSERT_EQ(run(flags + "r2").exit_code, 0);
    EXPECT_EQ(slurp(path("r1_convergence.csv")), slurp(path("r2_convergence.csv")));
    EXPECT_EQ(slurp(path("r1.tmdl")), slurp(path("r2.tmdl")));
}

TEST_F(CliTest, ConfigFileValuesAreOverriddenByFlags) {
    ASSERT_EQ(run("gen --dims 2,2 --len 30 --seed 3 --out d.ttsr").exit_code, 0);
    {
        std::ofstream f(path("cfg.json"));
        f << R"({"data":"d.ttsr","hidden":[2,2],"epochs":5,"window":3,"lr":0.001,"out":"c"})";
    }
    ASSERT_EQ(run("train --config cfg.json --epochs 2").exit_code, 0);
    const json summary = json::parse(slurp(path("c_summary.json")));
    EXPECT_EQ(summary.at("config").at("epochs").get<int>(), 2);   // flag wins
    EXPECT_EQ(summary.at("config").at("window").get<int>(), 3);   // file value kept
}

TEST_F(CliTest, UnknownConfigKeyIsAUsageError) {
    {
        std::ofstream f(path("bad.json"));
        f << R"({"data":"x.ttsr","banana":1})";
    }
    const CmdResult r = run("train --config bad.json");
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.err.find("banana"), std::string::npos);
}

TEST_F(CliTest, EvalScoresModelAndBaseline) {
    ASSERT_EQ(run("gen --dims 3,2 --len 40 --seed 7 --out d.ttsr").exit_code, 0);
    ASSERT_EQ(
        run("train --data d.ttsr --hidden 2,2 --epochs 2 --window 4 --lr 0.001 --out m")
            .exit_code,
        0);
    const CmdResult r = run("eval --model m.tmdl --data d.ttsr --window 4 --persistence");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("test_mse "), std::string::npos);
    EXPECT_NE(r.out.find("persistence_mse "), std::string::npos);
}

TEST_F(CliTest, PersistenceIsExactOnAConstantSeries) {
    tucknet::TensorSeries s;
    s.dims = {2, 2};
    for (int t = 0; t < 10; ++t)
        s.steps.push_back(tucknet::DenseTensor::constant({2, 2}, 1.5));
    tucknet::write_series(s, path("const.ttsr"));

    const CmdResult r = run("eval --data const.ttsr --window 3 --persistence");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("persistence_mse 0\n"), std::string::npos);
}

TEST_F(CliTest, GradcheckPassesForBothCells) {
    EXPECT_EQ(run("gradcheck --cell tlstm --window 3").exit_code, 0);
    EXPECT_EQ(run("gradcheck --cell tgru --regime all --window 3").exit_code, 0);
}

TEST_F(CliTest, TruncatedGruVariantFailsGradcheck) {
    const CmdResult r = run("gradcheck --cell tgru --window 3 --variant truncated");
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST_F(CliTest, ReplicateQuickModeWritesAllArtifacts) {
    const CmdResult r = run("replicate --case 1 --dims 3,3 --len 24 --hidden 3,3 "
                            "--window 3 --epochs 2 --lr 0.001 --out rep");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_TRUE(fs::exists(path("rep_data.ttsr")));
    EXPECT_TRUE(fs::exists(path("rep.tmdl")));
    EXPECT_TRUE(fs::exists(path("rep_convergence.csv")));
    const json summary = json::parse(slurp(path("rep_summary.json")));
    EXPECT_EQ(summary.at("config").at("case").get<int>(), 1);
    EXPECT_EQ(summary.at("config").at("regime").get<std::string>(), "last");
}

TEST_F(CliTest, ExitCodesFollowTheContract) {
    EXPECT_EQ(run("--help").exit_code, 0);
    EXPECT_EQ(run("train --bogus-flag 1").exit_code, 1);        // unknown flag
    EXPECT_EQ(run("frobnicate").exit_code, 1);                  // unknown subcommand
    EXPECT_EQ(run("eval --persistence").exit_code, 1);          // missing required --data
    EXPECT_EQ(run("replicate --case 5").exit_code, 1);          // out-of-range case

    {
        std::ofstream f(path("junk.ttsr"), std::ios::binary);
        f << "not a tensor series";
    }
    EXPECT_EQ(run("eval --data junk.ttsr --persistence").exit_code, 2);
    EXPECT_EQ(run("train --data missing.ttsr").exit_code, 2);

    ASSERT_EQ(run("gen --dims 2,2 --len 20 --seed 1 --out d.ttsr").exit_code, 0);
    const CmdResult diverged = run(
        "train --data d.ttsr --hidden 2,2 --epochs 6 --window 3 --lr 1e14 --clip 0 --out dv");
    EXPECT_EQ(diverged.exit_code, 4);
}

}  // namespace
