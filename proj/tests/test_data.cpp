#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "aga/data.hpp"
#include "aga/rng.hpp"

using namespace aga;

namespace {

GeneratorConfig small_config(uint64_t seed = 1) {
    GeneratorConfig cfg;
    cfg.regime_count = 3;
    cfg.transition = Tensor(3, 3, {0.96, 0.02, 0.02, 0.02, 0.96, 0.02, 0.02, 0.02, 0.96});
    cfg.intensity = {2.0, 10.0, 40.0};
    cfg.volatility = {0.3, 1.5, 6.0};
    cfg.horizon = 3000;
    cfg.seed = seed;
    cfg.feature_window = 16;
    cfg.zscore_window = 64;
    return cfg;
}

// brute-force stationary distribution by power iteration
Vec stationary(const Tensor& p) {
    int k = p.rows;
    Vec pi(static_cast<size_t>(k), 1.0 / k);
    for (int it = 0; it < 10000; ++it) {
        Vec next(static_cast<size_t>(k), 0.0);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) next[j] += pi[i] * p.at(i, j);
        pi = next;
    }
    return pi;
}

std::string file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generator is deterministic given the seed", "[data]") {
    GeneratorConfig cfg = small_config(77);
    GeneratedData a = generate(cfg);
    GeneratedData b = generate(cfg);
    REQUIRE(a.frames.size() == b.frames.size());
    REQUIRE(a.events.size() == b.events.size());
    for (size_t i = 0; i < a.frames.size(); ++i) {
        REQUIRE(a.frames[i].mid == b.frames[i].mid);
        REQUIRE(a.frames[i].label == b.frames[i].label);
        for (size_t j = 0; j < a.frames[i].x.size(); ++j)
            REQUIRE(a.frames[i].x[j] == b.frames[i].x[j]);
    }
    for (size_t i = 0; i < a.events.size(); ++i) {
        REQUIRE(a.events[i].timestamp_ns == b.events[i].timestamp_ns);
        REQUIRE(a.events[i].size == b.events[i].size);
    }
    GeneratedData c = generate(small_config(78));
    REQUIRE(c.snapshots[100].mid != a.snapshots[100].mid);
}

TEST_CASE("zero volatility freezes the mid price within the regime", "[data]") {
    GeneratorConfig cfg = small_config(5);
    cfg.regime_count = 1;
    cfg.transition = Tensor(1, 1, {1.0});
    cfg.intensity = {5.0};
    cfg.volatility = {0.0};
    cfg.horizon = 500;
    GeneratedData d = generate(cfg);
    for (const BookSnapshot& s : d.snapshots) REQUIRE(s.mid == cfg.mid0);
}

TEST_CASE("long-run regime frequencies match the stationary distribution", "[data]") {
    GeneratorConfig cfg;
    cfg.regime_count = 3;
    cfg.transition = Tensor(3, 3, {0.90, 0.07, 0.03, 0.02, 0.93, 0.05, 0.10, 0.05, 0.85});
    cfg.intensity = {0.5, 0.5, 0.5};
    cfg.volatility = {0.1, 0.2, 0.3};
    cfg.horizon = 1000000;
    cfg.seed = 42;
    cfg.feature_window = 2;
    cfg.zscore_window = 4;
    GeneratedData d = generate(cfg);
    Vec pi = stationary(cfg.transition);
    Vec freq(3, 0.0);
    for (const BookSnapshot& s : d.snapshots) freq[static_cast<size_t>(s.regime)] += 1.0;
    for (double& f : freq) f /= static_cast<double>(d.snapshots.size());
    for (int i = 0; i < 3; ++i)
        REQUIRE(std::fabs(freq[static_cast<size_t>(i)] - pi[static_cast<size_t>(i)]) < 0.02);
}

TEST_CASE("regime dwell times match 1/(1-p_ii)", "[data]") {
    GeneratorConfig cfg;
    cfg.regime_count = 2;
    cfg.transition = Tensor(2, 2, {0.95, 0.05, 0.05, 0.95});
    cfg.intensity = {0.5, 0.5};
    cfg.volatility = {0.1, 0.2};
    cfg.horizon = 400000;
    cfg.seed = 9;
    cfg.feature_window = 2;
    cfg.zscore_window = 4;
    GeneratedData d = generate(cfg);
    long dwells = 0, steps = 0;
    int cur = d.snapshots[0].regime;
    long run = 1;
    for (size_t t = 1; t < d.snapshots.size(); ++t) {
        if (d.snapshots[t].regime == cur) {
            ++run;
        } else {
            ++dwells;
            steps += run;
            run = 1;
            cur = d.snapshots[t].regime;
        }
    }
    double mean_dwell = static_cast<double>(steps) / static_cast<double>(dwells);
    REQUIRE(std::fabs(mean_dwell - 20.0) / 20.0 < 0.05);
}

TEST_CASE("generator validates its configuration", "[data]") {
    GeneratorConfig cfg = small_config();
    cfg.transition.at(0, 0) = 0.0;  // row no longer sums to 1
    REQUIRE_THROWS_AS(generate(cfg), ConfigError);
    cfg = small_config();
    cfg.intensity[1] = 0.0;
    REQUIRE_THROWS_AS(generate(cfg), ConfigError);
    cfg = small_config();
    cfg.volatility[0] = -1.0;
    REQUIRE_THROWS_AS(generate(cfg), ConfigError);
}

TEST_CASE("feature pipeline is causal in the snapshots", "[data]") {
    GeneratedData d = generate(small_config(31));
    const int cut = 120;
    std::vector<BookSnapshot> mutated = d.snapshots;
    for (size_t t = static_cast<size_t>(cut) + 1; t < mutated.size(); ++t) {
        mutated[t].mid += 50.0;
        mutated[t].arrivals += 10;
        mutated[t].signed_flow -= 3.0;
    }
    auto base = compute_features(d.snapshots, 16);
    auto pert = compute_features(mutated, 16);
    for (int t = 0; t <= cut; ++t)
        for (int j = 0; j < kFeatureDim; ++j)
            REQUIRE(base[static_cast<size_t>(t)].x[static_cast<size_t>(j)] ==
                    pert[static_cast<size_t>(t)].x[static_cast<size_t>(j)]);
}

TEST_CASE("volatility feature follows the windowed std of mid changes", "[data]") {
    // constant mid -> zero volatility
    std::vector<BookSnapshot> snaps(40);
    for (size_t t = 0; t < snaps.size(); ++t) {
        snaps[t].timestamp_ns = static_cast<int64_t>(t) * 100000000;
        snaps[t].mid = 100.0;
        snaps[t].spread = 1.0;
        snaps[t].bid_depth = snaps[t].ask_depth = 10.0;
        snaps[t].bid_queue = snaps[t].ask_queue = 5.0;
    }
    auto frames = compute_features(snaps, 4);
    REQUIRE(frames[20].x[4] == 0.0);

    // alternating changes {1,-1,1,-1} with mean 0 -> sigma 1
    for (size_t t = 0; t < snaps.size(); ++t) snaps[t].mid = 100.0 + (t % 2 == 1 ? 1.0 : 0.0);
    frames = compute_features(snaps, 4);
    REQUIRE(frames[21].x[4] == Catch::Approx(1.0).margin(1e-12));

    // arrival counting: 5 events in the window, 1 second window -> rate 5/s
    for (auto& s : snaps) s.arrivals = 0;
    snaps[18].arrivals = 2;
    snaps[19].arrivals = 3;
    frames = compute_features(snaps, 10);
    REQUIRE(frames[19].arrival_count == 5.0);
}

TEST_CASE("rolling z-score on constant input is zero", "[data]") {
    Vec z = rolling_zscore(Vec(100, 3.5), 16);
    for (double v : z) REQUIRE(v == 0.0);
}

TEST_CASE("rolling z-score normalizes iid gaussian input", "[data]") {
    double total = 0.0, total_sq = 0.0;
    long n = 0;
    for (int seed = 0; seed < 100; ++seed) {
        Rng rng(static_cast<uint64_t>(seed) + 1000);
        Vec x(1200);
        for (double& v : x) v = rng.normal();
        Vec z = rolling_zscore(x, 256);
        for (size_t t = 256; t < z.size(); ++t) {
            total += z[t];
            total_sq += z[t] * z[t];
            ++n;
        }
    }
    double mean = total / n;
    double sd = std::sqrt(total_sq / n - mean * mean);
    REQUIRE(std::fabs(mean) < 0.05);
    REQUIRE(std::fabs(sd - 1.0) < 0.05);
}

TEST_CASE("rolling z-score outlier matches the direct formula", "[data]") {
    Rng rng(4);
    Vec x(600);
    for (double& v : x) v = rng.normal();
    const size_t t = 500;
    x[t] = 10.0;
    Vec z = rolling_zscore(x, 256);
    // independent direct evaluation at the outlier index
    double mean = 0.0;
    for (size_t i = t - 255; i <= t; ++i) mean += x[i];
    mean /= 256.0;
    double var = 0.0;
    for (size_t i = t - 255; i <= t; ++i) var += (x[i] - mean) * (x[i] - mean);
    double expected = (x[t] - mean) / std::max(std::sqrt(var / 256.0), 1e-8);
    REQUIRE(z[t] == Catch::Approx(expected).margin(1e-12));
    REQUIRE(z[t] > 7.0);  // large and positive: magnitude preserved
}

TEST_CASE("labels follow the half-sigma rule with inclusive boundaries", "[data]") {
    Vec mid = {100.0, 100.0};
    mid[1] = 100.0 + 0.6;  // delta = 0.6 sigma with sigma_roll = 1
    REQUIRE(label_move(mid, 0, 1, 1.0) == kUp);
    mid[1] = 100.0;
    REQUIRE(label_move(mid, 0, 1, 1.0) == kNeutral);
    mid[1] = 100.0 - 0.5;  // exactly -0.5 sigma
    REQUIRE(label_move(mid, 0, 1, 1.0) == kDown);
    mid[1] = 100.0 + 0.5;  // exactly +0.5 sigma
    REQUIRE(label_move(mid, 0, 1, 1.0) == kUp);
    // degenerate sigma: sign of delta decides, zero delta neutral
    mid[1] = 100.25;
    REQUIRE(label_move(mid, 0, 1, 0.0) == kUp);
    mid[1] = 99.75;
    REQUIRE(label_move(mid, 0, 1, 0.0) == kDown);
    mid[1] = 100.0;
    REQUIRE(label_move(mid, 0, 1, 0.0) == kNeutral);
    REQUIRE_THROWS_AS(label_move(mid, 1, 1, 1.0), std::invalid_argument);
}

TEST_CASE("label distribution is symmetric on a symmetric walk", "[data]") {
    GeneratorConfig cfg;
    cfg.regime_count = 1;
    cfg.transition = Tensor(1, 1, {1.0});
    cfg.intensity = {2.0};
    cfg.volatility = {1.0};
    cfg.horizon = 110000;
    cfg.seed = 13;
    cfg.feature_window = 8;
    cfg.zscore_window = 64;
    GeneratedData d = generate(cfg);
    REQUIRE(d.frames.size() > 100000);
    double up = 0, down = 0;
    for (const FeatureFrame& f : d.frames) {
        up += f.label == kUp;
        down += f.label == kDown;
    }
    double n = static_cast<double>(d.frames.size());
    REQUIRE(std::fabs(up / n - down / n) < 0.02);
}

TEST_CASE("dataset files round-trip and are byte-stable", "[data]") {
    GeneratorConfig cfg = small_config(3);
    cfg.horizon = 400;
    GeneratedData d = generate(cfg);
    REQUIRE(!d.frames.empty());

    std::string t1 = "/tmp/aga_test_ds1.tsv", t2 = "/tmp/aga_test_ds2.tsv";
    write_dataset_text(t1, d.frames);
    write_dataset_text(t2, d.frames);
    REQUIRE(file_bytes(t1) == file_bytes(t2));
    auto loaded = load_dataset(t1);
    REQUIRE(loaded.size() == d.frames.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        REQUIRE(loaded[i].timestamp_ns == d.frames[i].timestamp_ns);
        REQUIRE(loaded[i].mid == d.frames[i].mid);
        REQUIRE(loaded[i].label == d.frames[i].label);
        REQUIRE(loaded[i].true_regime == d.frames[i].true_regime);
        for (size_t j = 0; j < loaded[i].x.size(); ++j) REQUIRE(loaded[i].x[j] == d.frames[i].x[j]);
    }

    std::string b1 = "/tmp/aga_test_ds1.bin";
    write_dataset_binary(b1, d.frames);
    auto bin = load_dataset(b1);
    REQUIRE(bin.size() == d.frames.size());
    for (size_t i = 0; i < bin.size(); ++i) {
        REQUIRE(bin[i].mid == d.frames[i].mid);
        for (size_t j = 0; j < bin[i].x.size(); ++j) REQUIRE(bin[i].x[j] == d.frames[i].x[j]);
    }
    std::remove(t1.c_str());
    std::remove(t2.c_str());
    std::remove(b1.c_str());
}

TEST_CASE("dataset loader rejects malformed files", "[data]") {
    std::string path = "/tmp/aga_test_bad.tsv";
    {
        std::ofstream os(path);
        os << "ts_ns\twrong_name\n";
    }
    REQUIRE_THROWS_AS(load_dataset(path), DataError);
    REQUIRE_THROWS_AS(load_dataset("/tmp/definitely_missing_aga.tsv"), DataError);
    std::remove(path.c_str());
}
