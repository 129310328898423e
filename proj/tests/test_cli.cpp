#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "aga/checkpoint.hpp"
#include "aga/cli.hpp"

using namespace aga;
namespace fs = std::filesystem;

namespace {

std::string file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

std::string test_config_text(int horizon) {
    return std::string("[generator]\n") +
           "regimes = 2\n" +
           "transition = 0.97 0.03 / 0.03 0.97\n" +
           "intensity = 5 30\n" +
           "volatility = 0.4 3\n" +
           "horizon = " + std::to_string(horizon) + "\n" +
           "seed = 11\n" +
           "feature_window = 16\n" +
           "zscore_window = 64\n" +
           "[model]\n" +
           "states = 2\n" +
           "hidden = 8\n" +
           "heads = 2\n" +
           "lookback = 6\n" +
           "flow_layers = 2\n" +
           "flow_hidden = 6\n" +
           "embed_dim = 4\n" +
           "gru_hidden = 4\n" +
           "gru_mlp_hidden = 4\n" +
           "kernel = 3\n" +
           "dilations = 1 2\n" +
           "wavelet_levels = 2\n" +
           "adaptation_window = 8\n" +
           "[train]\n" +
           "epochs = 2\n" +
           "batch = 16\n" +
           "tbptt = 16\n" +
           "patience = 10\n" +
           "seed = 5\n" +
           "[eval]\n" +
           "fee_bps = 1\n" +
           "latency_steps = 2000\n";
}

struct TempDir {
    std::string path;
    explicit TempDir(const std::string& name) : path("/tmp/aga_cli_" + name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const TempDir& dir, int horizon) {
    std::string p = dir.path + "/run.ini";
    std::ofstream os(p);
    os << test_config_text(horizon);
    return p;
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(AGA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("generate then train then evaluate end to end", "[cli]") {
    TempDir dir("e2e");
    std::string cfg = write_config(dir, 1400);

    CliOptions gen;
    gen.config_path = cfg;
    gen.out_dir = dir.path + "/data";
    REQUIRE(cmd_generate(gen) == 0);
    REQUIRE(fs::exists(dir.path + "/data/dataset.tsv"));
    REQUIRE(fs::exists(dir.path + "/data/resolved.ini"));

    CliOptions tr;
    tr.config_path = cfg;
    tr.data_path = dir.path + "/data/dataset.tsv";
    tr.out_dir = dir.path + "/run";
    REQUIRE(cmd_train(tr) == 0);
    REQUIRE(fs::exists(dir.path + "/run/checkpoint.aga"));
    REQUIRE(fs::exists(dir.path + "/run/history.tsv"));

    // checkpoint loads and verifies its checksum
    Model model = load_checkpoint(dir.path + "/run/checkpoint.aga");
    REQUIRE(model.cfg.states == 2);

    CliOptions ev;
    ev.config_path = cfg;
    ev.data_path = tr.data_path;
    ev.checkpoint_path = dir.path + "/run/checkpoint.aga";
    ev.out_dir = dir.path + "/eval";
    REQUIRE(cmd_evaluate(ev) == 0);
    std::string metrics = file_bytes(dir.path + "/eval/metrics.txt");
    REQUIRE(metrics.find("accuracy ") != std::string::npos);
    REQUIRE(metrics.find("mcc ") != std::string::npos);
    REQUIRE(metrics.find("regime_f1 ") != std::string::npos);
    REQUIRE(metrics.find("latency_p99_ms ") != std::string::npos);
    REQUIRE(fs::exists(dir.path + "/eval/pnl.tsv"));

    CliOptions pr = ev;
    pr.out_dir = dir.path + "/pred";
    REQUIRE(cmd_predict(pr) == 0);
    // one prediction row per post-warm-up frame plus the header
    auto frames = load_dataset(tr.data_path);
    std::ifstream is(dir.path + "/pred/predictions.tsv");
    std::string line;
    long rows = -1;  // discount the header
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == static_cast<long>(frames.size()) - model.cfg.warmup());

    CliOptions insp = ev;
    insp.out_dir = dir.path + "/inspect";
    REQUIRE(cmd_inspect(insp) == 0);
    std::string head;
    {
        std::ifstream ii(dir.path + "/inspect/inspect.tsv");
        std::getline(ii, head);
    }
    REQUIRE(head.find("sigma") != std::string::npos);
    REQUIRE(head.find("mean_gate") != std::string::npos);
    REQUIRE(head.find("tau") != std::string::npos);
    REQUIRE(head.find("viterbi") != std::string::npos);
}

TEST_CASE("generation and training are byte-deterministic", "[cli]") {
    TempDir dir("det");
    std::string cfg = write_config(dir, 1200);
    for (int run = 0; run < 2; ++run) {
        CliOptions gen;
        gen.config_path = cfg;
        gen.out_dir = dir.path + "/data" + std::to_string(run);
        REQUIRE(cmd_generate(gen) == 0);
    }
    REQUIRE(file_bytes(dir.path + "/data0/dataset.tsv") == file_bytes(dir.path + "/data1/dataset.tsv"));

    for (int run = 0; run < 2; ++run) {
        CliOptions tr;
        tr.config_path = cfg;
        tr.data_path = dir.path + "/data0/dataset.tsv";
        tr.out_dir = dir.path + "/run" + std::to_string(run);
        REQUIRE(cmd_train(tr) == 0);
    }
    REQUIRE(file_bytes(dir.path + "/run0/checkpoint.aga") == file_bytes(dir.path + "/run1/checkpoint.aga"));
}

TEST_CASE("binary dataset format works through the cli", "[cli]") {
    TempDir dir("bin");
    std::string cfg = write_config(dir, 1200);
    CliOptions gen;
    gen.config_path = cfg;
    gen.out_dir = dir.path + "/data";
    gen.format = "binary";
    REQUIRE(cmd_generate(gen) == 0);
    REQUIRE(fs::exists(dir.path + "/data/dataset.bin"));
    auto frames = load_dataset(dir.path + "/data/dataset.bin");
    REQUIRE(frames.size() > 900);

    CliOptions tr;
    tr.config_path = cfg;
    tr.data_path = dir.path + "/data/dataset.bin";
    tr.out_dir = dir.path + "/run";
    REQUIRE(cmd_train(tr) == 0);
}

TEST_CASE("zero horizon produces an empty dataset with a valid header", "[cli]") {
    TempDir dir("zero");
    std::string cfg = write_config(dir, 0);
    CliOptions gen;
    gen.config_path = cfg;
    gen.out_dir = dir.path;
    REQUIRE(cmd_generate(gen) == 0);
    auto frames = load_dataset(dir.path + "/dataset.tsv");
    REQUIRE(frames.empty());
}

TEST_CASE("ablation flags flow through training", "[cli]") {
    TempDir dir("abl");
    std::string cfg = write_config(dir, 1200);
    CliOptions gen;
    gen.config_path = cfg;
    gen.out_dir = dir.path + "/data";
    REQUIRE(cmd_generate(gen) == 0);

    CliOptions tr;
    tr.config_path = cfg;
    tr.data_path = dir.path + "/data/dataset.tsv";
    tr.out_dir = dir.path + "/full";
    REQUIRE(cmd_train(tr) == 0);
    tr.out_dir = dir.path + "/gauss";
    tr.ablate = {"gaussian_emissions"};
    REQUIRE(cmd_train(tr) == 0);

    Model full = load_checkpoint(dir.path + "/full/checkpoint.aga");
    Model gauss = load_checkpoint(dir.path + "/gauss/checkpoint.aga");
    REQUIRE(gauss.cfg.gaussian_emissions);
    REQUIRE(full.param_count() != gauss.param_count());
    // the resolved config echo records the flag
    std::string echo = file_bytes(dir.path + "/gauss/resolved.ini");
    REQUIRE(echo.find("gaussian_emissions = true") != std::string::npos);
}

TEST_CASE("predictions are causal under dataset truncation", "[cli]") {
    TempDir dir("causal");
    std::string cfg = write_config(dir, 1300);
    CliOptions gen;
    gen.config_path = cfg;
    gen.out_dir = dir.path + "/data";
    REQUIRE(cmd_generate(gen) == 0);
    CliOptions tr;
    tr.config_path = cfg;
    tr.data_path = dir.path + "/data/dataset.tsv";
    tr.out_dir = dir.path + "/run";
    REQUIRE(cmd_train(tr) == 0);

    auto frames = load_dataset(tr.data_path);
    std::vector<FeatureFrame> truncated(frames.begin(), frames.end() - 200);
    write_dataset_text(dir.path + "/data/truncated.tsv", truncated);

    CliOptions pa;
    pa.checkpoint_path = dir.path + "/run/checkpoint.aga";
    pa.data_path = tr.data_path;
    pa.out_dir = dir.path + "/pred_full";
    REQUIRE(cmd_predict(pa) == 0);
    pa.data_path = dir.path + "/data/truncated.tsv";
    pa.out_dir = dir.path + "/pred_trunc";
    REQUIRE(cmd_predict(pa) == 0);

    std::ifstream fa(dir.path + "/pred_full/predictions.tsv");
    std::ifstream fb(dir.path + "/pred_trunc/predictions.tsv");
    std::string la, lb;
    long compared = 0;
    while (std::getline(fb, lb)) {
        REQUIRE(std::getline(fa, la));
        REQUIRE(la == lb);
        ++compared;
    }
    REQUIRE(compared > 500);
}

TEST_CASE("cli exit codes distinguish error classes", "[cli]") {
    TempDir dir("codes");
    std::string cfg = write_config(dir, 600);
    // config error: missing file
    REQUIRE(run_cli("generate --config " + dir.path + "/absent.ini --out " + dir.path) == 2);
    // config error: malformed key
    {
        std::ofstream os(dir.path + "/bad.ini");
        os << "[model]\nnot_a_key = 1\n";
    }
    REQUIRE(run_cli("generate --config " + dir.path + "/bad.ini --out " + dir.path) == 2);
    // data error: missing dataset for training
    REQUIRE(run_cli("train --config " + cfg + " --data " + dir.path + "/none.tsv --out " +
                    dir.path) == 3);
    // happy path through the real binary
    REQUIRE(run_cli("generate --config " + cfg + " --out " + dir.path + "/data") == 0);
    // schema mismatch: evaluate with a checkpoint of different feature_dim is
    // impossible here, but a dataset/model mismatch surfaces as a data error
    {
        std::ofstream os(dir.path + "/tiny.tsv");
        os << "ts_ns\twrong\n";
    }
    REQUIRE(run_cli("train --config " + cfg + " --data " + dir.path + "/tiny.tsv --out " +
                    dir.path) == 3);
    REQUIRE(run_cli("nosuchcommand") != 0);
}
