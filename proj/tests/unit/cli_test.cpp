#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include <json.hpp>

#include "fasw/cli.hpp"
#include "fasw/io.hpp"
#include "fasw/plot.hpp"
#include "fasw/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fasw {
namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("fasw_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Runs the tool with stderr captured; returns the exit code.
int run_quietly(const std::vector<std::string>& args, std::string* err = nullptr) {
    ::testing::internal::CaptureStderr();
    ::testing::internal::CaptureStdout();
    const int code = run_cli(args);
    const std::string e = ::testing::internal::GetCapturedStderr();
    ::testing::internal::GetCapturedStdout();
    if (err) *err = e;
    return code;
}

const std::vector<std::string> kTiny{"--preset", "quick", "--quiet",
                                     "--set", "data.image_size=16",
                                     "--set", "data.n_live=16",
                                     "--set", "data.n_spoof=16",
                                     "--set", "data.n_subjects=4",
                                     "--set", "model.levels=2",
                                     "--set", "model.channels=4,6",
                                     "--set", "pretrain.epochs=1",
                                     "--set", "pretrain.batches_per_epoch=2",
                                     "--set", "baseline.head_epochs=1"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

TEST(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(run_quietly({}), 2);
    EXPECT_EQ(run_quietly({"no-such-command"}), 2);
    EXPECT_EQ(run_quietly({"pretrain-source", "--out", "x"}), 2);
    EXPECT_EQ(run_quietly({"evaluate", "--manifest", "m.csv", "--bogus-flag"}), 2);
}

TEST(Cli, RuntimeFailureWritesErrorRecord) {
    const fs::path dir = fresh_dir("missing");
    std::string err;
    // failing input checks happen before the run directory exists
    int code = run_quietly(
        with({"pretrain-source", "--train-manifest", (dir / "absent.csv").string(), "--out", (dir / "run0").string()},
             kTiny),
        &err);
    EXPECT_EQ(code, 1);
    json rec = json::parse(err.substr(err.rfind('{', err.find("\"error\""))));
    EXPECT_EQ(rec.at("command"), "pretrain-source");
    EXPECT_FALSE(rec.at("error").get<std::string>().empty());
    EXPECT_FALSE(rec.at("message").get<std::string>().empty());
    EXPECT_FALSE(fs::exists(dir / "run0"));

    // a failure after the run directory exists also lands in error.json
    ASSERT_EQ(run_quietly(with({"generate-synthetic", "--out", (dir / "data").string()}, kTiny)), 0);
    code = run_quietly(with({"pretrain-source", "--train-manifest", (dir / "data" / "A" / "train.csv").string(),
                             "--out", (dir / "run1").string(), "--eval", "X=" + (dir / "absent.csv").string()},
                            kTiny),
                       &err);
    EXPECT_EQ(code, 1);
    ASSERT_TRUE(fs::exists(dir / "run1" / "error.json"));
    rec = json::parse(io::read_text(dir / "run1" / "error.json"));
    EXPECT_EQ(rec.at("command"), "pretrain-source");
    EXPECT_EQ(json::parse(io::read_text(dir / "run1" / "run.json")).at("status"), "failed");
    fs::remove_all(dir);
}

TEST(Cli, UnknownConfigKeyIsARuntimeError) {
    const fs::path dir = fresh_dir("badkey");
    EXPECT_EQ(run_quietly({"generate-synthetic", "--out", dir.string(), "--set", "data.nope=1"}), 1);
    fs::remove_all(dir);
}

TEST(Cli, GeneratePretrainEvaluateAndRefuseReuse) {
    const fs::path dir = fresh_dir("pipeline");
    const fs::path data = dir / "data";
    ASSERT_EQ(run_quietly(with({"generate-synthetic", "--out", data.string()}, kTiny)), 0);
    for (const char* s : {"A", "B", "C", "D", "E"}) {
        EXPECT_TRUE(fs::exists(data / s / "train.csv")) << s;
        EXPECT_TRUE(fs::exists(data / s / "test.csv")) << s;
    }
    EXPECT_TRUE(fs::exists(data / "pool.csv"));

    const fs::path run = dir / "pre";
    const auto pre = with({"pretrain-source", "--train-manifest", (data / "A" / "train.csv").string(), "--out",
                           run.string(), "--eval", "A=" + (data / "A" / "test.csv").string()},
                          kTiny);
    ASSERT_EQ(run_quietly(pre), 0);
    EXPECT_TRUE(fs::exists(run / "checkpoints" / "source" / "params.fasw"));
    const json report = read_report(run / "report.json");
    EXPECT_EQ(report.at("schema_version"), kReportSchemaVersion);
    const json& m = report.at("metrics").at("A");
    for (const char* key : {"apcer", "bpcer", "acer", "auc", "eer", "hter"}) EXPECT_TRUE(m.contains(key)) << key;
    EXPECT_TRUE(m.at("rounded").contains("acer"));
    EXPECT_EQ(json::parse(io::read_text(run / "run.json")).at("status"), "ok");

    // run directories are write-once
    EXPECT_EQ(run_quietly(pre), 1);

    const fs::path eval = dir / "eval.json";
    ASSERT_EQ(run_quietly({"evaluate", "--run", run.string(), "--manifest", "B=" + (data / "B" / "test.csv").string(),
                           "--out", eval.string()}),
              0);
    EXPECT_TRUE(read_report(eval).at("metrics").contains("B"));
    fs::remove_all(dir);
}

TEST(Cli, DataRootResolvesRelativePaths) {
    const fs::path dir = fresh_dir("root");
    ::setenv("FASW_DATA_ROOT", dir.c_str(), 1);
    EXPECT_EQ(resolve_data_path("A/train.csv"), dir / "A" / "train.csv");
    EXPECT_EQ(resolve_data_path("/abs/x.csv"), fs::path("/abs/x.csv"));
    ::unsetenv("FASW_DATA_ROOT");
    EXPECT_EQ(resolve_data_path("A/train.csv"), fs::path("A/train.csv"));
    fs::remove_all(dir);
}

TEST(Plot, DataRangeHoldsEveryFinitePoint) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> d(0.0, 50.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<plot::Series> series(1 + trial % 3);
        for (auto& s : series)
            for (int i = 0; i < 1 + trial % 7; ++i) {
                s.x.push_back(d(rng));
                s.y.push_back(trial % 5 == 0 ? 3.0 : d(rng));
            }
        series[0].y[0] = std::nan("");
        const plot::AxisRange r = plot::data_range(series);
        EXPECT_LT(r.xmin, r.xmax);
        EXPECT_LT(r.ymin, r.ymax);
        for (const auto& s : series)
            for (std::size_t i = 0; i < s.x.size(); ++i)
                if (std::isfinite(s.y[i])) EXPECT_TRUE(r.contains(s.x[i], s.y[i]));
    }
}

TEST(Report, RocCsvRoundTrip) {
    const fs::path dir = fresh_dir("roc");
    RocAnalysis roc;
    roc.points = {{2.0, 0.0, 0.0}, {0.7, 0.25, 0.5}, {0.1, 1.0, 1.0}};
    write_roc_csv(dir / "roc.csv", roc);
    const auto back = read_roc_csv(dir / "roc.csv");
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].threshold, roc.points[i].threshold);
        EXPECT_EQ(back[i].fpr, roc.points[i].fpr);
        EXPECT_EQ(back[i].tpr, roc.points[i].tpr);
    }
    fs::remove_all(dir);
}

}  // namespace
}  // namespace fasw
