#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "aga/error.hpp"
#include "aga/rng.hpp"
#include "aga/tensor.hpp"

namespace aga {

enum class Side : uint8_t { kBid = 0, kAsk = 1 };
enum class EventKind : uint8_t { kSubmit = 0, kCancel = 1, kExecute = 2 };

// Movement classes for the 500ms-ahead mid-price target.
enum Label : int { kDown = 0, kNeutral = 1, kUp = 2 };

struct EventRecord {
    int64_t timestamp_ns = 0;
    Side side = Side::kBid;
    EventKind kind = EventKind::kSubmit;
    int64_t price_ticks = 0;
    double size = 0.0;
};

// Book state sampled at the end of each snapshot interval.
struct BookSnapshot {
    int64_t timestamp_ns = 0;
    double mid = 0.0;
    double spread = 0.0;
    double bid_depth = 0.0;   // aggregate bid-side depth
    double ask_depth = 0.0;
    double bid_queue = 0.0;   // queue at the best bid
    double ask_queue = 0.0;
    int arrivals = 0;         // events inside this interval
    double signed_flow = 0.0; // size-weighted net buying pressure this interval
    int regime = -1;
};

// Feature column order for datasets; fixed at m = 7.
inline const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = {
        "price_imb", "vol_imb", "ofi", "wmid_d1", "rv_vol", "depth", "spread"};
    return names;
}
constexpr int kFeatureDim = 7;

struct FeatureFrame {
    int64_t timestamp_ns = 0;
    Vec x;                      // feature vector (z-scored in datasets)
    double mid = 0.0;
    double arrival_count = 0.0; // events in the trailing feature window
    int true_regime = -1;
    int label = -1;             // Label enum; -1 = unlabeled
    bool warmup = false;
};

struct GeneratorConfig {
    int regime_count = 3;
    Tensor transition;          // row-stochastic regime_count x regime_count
    Vec intensity;              // events per second, per regime
    Vec volatility;             // price units per sqrt(step), per regime
    int snapshot_ms = 100;
    int64_t horizon = 0;        // snapshot steps to simulate
    uint64_t seed = 1;
    int feature_window = 64;    // w, in steps
    int zscore_window = 2048;   // rolling normalization window, in steps
    double zscore_eps = 1e-8;
    int label_horizon_ms = 500;
    double mid0 = 1000.0;
    double tick = 0.5;
    double depth_mean = 500.0;
    double depth_rev = 0.05;
    double depth_noise = 25.0;
    double queue_mean = 100.0;
    double queue_rev = 0.2;
    double queue_noise = 20.0;
    double spread_mean = 2.0;
    double spread_rev = 0.1;
    double spread_noise = 0.15;

    int label_horizon_steps() const {
        int h = label_horizon_ms / snapshot_ms;
        return h < 1 ? 1 : h;
    }

    void validate() const {
        if (regime_count < 1) throw ConfigError("generator: regime_count must be >= 1");
        if (transition.rows != regime_count || transition.cols != regime_count)
            throw ConfigError("generator: transition matrix must be KxK");
        for (int i = 0; i < regime_count; ++i) {
            double s = 0.0;
            for (int j = 0; j < regime_count; ++j) {
                double p = transition.at(i, j);
                if (p < 0.0) throw ConfigError("generator: negative transition probability");
                s += p;
            }
            if (std::fabs(s - 1.0) > 1e-12)
                throw ConfigError("generator: transition row " + std::to_string(i) +
                                  " sums to " + std::to_string(s) + ", expected 1");
        }
        if (static_cast<int>(intensity.size()) != regime_count ||
            static_cast<int>(volatility.size()) != regime_count)
            throw ConfigError("generator: intensity/volatility must have one entry per regime");
        for (double v : intensity)
            if (!(v > 0.0)) throw ConfigError("generator: intensities must be > 0");
        for (double v : volatility)
            if (!(v >= 0.0)) throw ConfigError("generator: volatilities must be >= 0");
        if (snapshot_ms <= 0) throw ConfigError("generator: snapshot_ms must be > 0");
        if (horizon < 0) throw ConfigError("generator: negative horizon");
        if (feature_window < 2) throw ConfigError("generator: feature_window must be >= 2");
        if (zscore_window < 2) throw ConfigError("generator: zscore_window must be >= 2");
    }
};

// Population standard deviation of one-step mid changes over the window of
// `w` changes ending at index t (uses mids[t-w] .. mids[t]).
inline double windowed_std_of_changes(const Vec& mids, int t, int w) {
    double mean = 0.0;
    for (int i = t - w + 1; i <= t; ++i) mean += mids[i] - mids[i - 1];
    mean /= w;
    double acc = 0.0;
    for (int i = t - w + 1; i <= t; ++i) {
        double d = (mids[i] - mids[i - 1]) - mean;
        acc += d * d;
    }
    return std::sqrt(acc / w);
}

// out_t = (x_t - mean_window) / max(std_window, eps), trailing window of
// `window` samples including t; leading samples use the partial window.
inline Vec rolling_zscore(const Vec& series, int window, double eps = 1e-8) {
    if (window < 2) throw std::invalid_argument("rolling_zscore: window must be >= 2");
    Vec out(series.size());
    for (size_t t = 0; t < series.size(); ++t) {
        size_t lo = t + 1 >= static_cast<size_t>(window) ? t + 1 - window : 0;
        size_t n = t - lo + 1;
        double mean = 0.0;
        for (size_t i = lo; i <= t; ++i) mean += series[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (size_t i = lo; i <= t; ++i) {
            double d = series[i] - mean;
            var += d * d;
        }
        double sd = std::sqrt(var / static_cast<double>(n));
        out[t] = (series[t] - mean) / std::max(sd, eps);
    }
    return out;
}

// 3-class movement label. Boundaries inclusive: up iff delta >= 0.5*sigma,
// down iff delta <= -0.5*sigma. Degenerate sigma = 0: sign of delta decides,
// zero delta is neutral.
inline int label_move(const Vec& mid, int t, int horizon, double sigma_roll) {
    if (t + horizon >= static_cast<int>(mid.size()))
        throw std::invalid_argument("label_move: t + horizon out of range");
    double delta = mid[t + horizon] - mid[t];
    if (sigma_roll <= 0.0) {
        if (delta > 0.0) return kUp;
        if (delta < 0.0) return kDown;
        return kNeutral;
    }
    if (delta >= 0.5 * sigma_roll) return kUp;
    if (delta <= -0.5 * sigma_roll) return kDown;
    return kNeutral;
}

// Raw (pre-normalization) features from snapshots. Frame t uses only
// snapshots <= t; the first `w` frames are flagged as warm-up.
inline std::vector<FeatureFrame> compute_features(const std::vector<BookSnapshot>& snaps, int w) {
    if (w < 2) throw std::invalid_argument("compute_features: window must be >= 2");
    std::vector<FeatureFrame> frames(snaps.size());
    Vec mids(snaps.size());
    for (size_t i = 0; i < snaps.size(); ++i) mids[i] = snaps[i].mid;

    for (size_t t = 0; t < snaps.size(); ++t) {
        const BookSnapshot& s = snaps[t];
        FeatureFrame& f = frames[t];
        f.timestamp_ns = s.timestamp_ns;
        f.mid = s.mid;
        f.true_regime = s.regime;
        f.warmup = t < static_cast<size_t>(w);
        f.x.assign(kFeatureDim, 0.0);

        double qsum = s.bid_queue + s.ask_queue;
        f.x[0] = qsum > 0.0 ? (s.bid_queue - s.ask_queue) / qsum : 0.0;
        double dsum = s.bid_depth + s.ask_depth;
        f.x[1] = dsum > 0.0 ? (s.bid_depth - s.ask_depth) / dsum : 0.0;

        double ofi = 0.0;
        double arrivals = 0.0;
        size_t lo = t + 1 >= static_cast<size_t>(w) ? t + 1 - w : 0;
        for (size_t i = lo; i <= t; ++i) {
            ofi += snaps[i].signed_flow;
            arrivals += snaps[i].arrivals;
        }
        f.x[2] = ofi;
        f.arrival_count = arrivals;

        auto microprice = [](const BookSnapshot& b) {
            double bid = b.mid - 0.5 * b.spread;
            double ask = b.mid + 0.5 * b.spread;
            double q = b.bid_queue + b.ask_queue;
            return q > 0.0 ? (bid * b.ask_queue + ask * b.bid_queue) / q : b.mid;
        };
        f.x[3] = t > 0 ? microprice(s) - microprice(snaps[t - 1]) : 0.0;
        f.x[4] = t >= static_cast<size_t>(w) ? windowed_std_of_changes(mids, static_cast<int>(t), w) : 0.0;
        f.x[5] = dsum;
        f.x[6] = s.spread;
    }
    return frames;
}

inline double dataset_dt_sec(const std::vector<FeatureFrame>& frames) {
    if (frames.size() < 2) return 0.1;
    return static_cast<double>(frames[1].timestamp_ns - frames[0].timestamp_ns) * 1e-9;
}

struct GeneratedData {
    std::vector<EventRecord> events;
    std::vector<BookSnapshot> snapshots;
    std::vector<FeatureFrame> frames;  // normalized, labeled, warm-up dropped
};

// Markov-modulated Poisson/Gaussian order-flow simulator. Stands in for
// exchange feeds; exposes the ground-truth regime path so regime recovery
// can be scored. Fully deterministic given config.seed.
inline GeneratedData generate(const GeneratorConfig& cfg) {
    cfg.validate();
    GeneratedData out;
    const double dt_sec = cfg.snapshot_ms * 1e-3;
    const int64_t dt_ns = static_cast<int64_t>(cfg.snapshot_ms) * 1000000;

    Rng rng(cfg.seed);
    int regime = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.regime_count)));
    double mid = cfg.mid0;
    double spread = cfg.spread_mean;
    double bid_depth = cfg.depth_mean, ask_depth = cfg.depth_mean;
    double bid_queue = cfg.queue_mean, ask_queue = cfg.queue_mean;

    out.snapshots.reserve(static_cast<size_t>(cfg.horizon));
    std::vector<double> offsets;
    for (int64_t t = 0; t < cfg.horizon; ++t) {
        // regime step
        if (t > 0) {
            double u = rng.uniform();
            double acc = 0.0;
            int next = cfg.regime_count - 1;
            for (int j = 0; j < cfg.regime_count; ++j) {
                acc += cfg.transition.at(regime, j);
                if (u < acc) {
                    next = j;
                    break;
                }
            }
            regime = next;
        }

        // events inside the interval, timestamps sorted
        int nev = rng.poisson(cfg.intensity[regime] * dt_sec);
        offsets.resize(static_cast<size_t>(nev));
        for (int e = 0; e < nev; ++e) offsets[e] = rng.uniform();
        std::sort(offsets.begin(), offsets.end());
        double flow = 0.0;
        double bid_px = mid - 0.5 * spread;
        double ask_px = mid + 0.5 * spread;
        for (int e = 0; e < nev; ++e) {
            EventRecord ev;
            ev.timestamp_ns = t * dt_ns + static_cast<int64_t>(offsets[e] * dt_ns);
            ev.side = rng.uniform() < 0.5 ? Side::kBid : Side::kAsk;
            double uk = rng.uniform();
            ev.kind = uk < 0.55 ? EventKind::kSubmit : (uk < 0.85 ? EventKind::kCancel : EventKind::kExecute);
            double base = ev.side == Side::kBid ? bid_px : ask_px;
            double away = ev.kind == EventKind::kExecute ? 0.0 : cfg.tick * static_cast<double>(rng.below(5));
            double px = ev.side == Side::kBid ? base - away : base + away;
            ev.price_ticks = static_cast<int64_t>(std::llround(px / cfg.tick));
            ev.size = std::exp(rng.normal(0.0, 0.8));
            // net buying pressure: bid submits, ask cancels and lifted asks
            // count positive; mirror events count negative.
            bool buying = (ev.side == Side::kBid && ev.kind == EventKind::kSubmit) ||
                          (ev.side == Side::kAsk && ev.kind != EventKind::kSubmit);
            flow += buying ? ev.size : -ev.size;
            out.events.push_back(ev);
        }

        // state evolution
        mid += cfg.volatility[regime] * rng.normal();
        spread = std::max(cfg.tick, spread + cfg.spread_rev * (cfg.spread_mean - spread) +
                                        cfg.spread_noise * rng.normal());
        bid_depth = std::max(1.0, bid_depth + cfg.depth_rev * (cfg.depth_mean - bid_depth) +
                                      cfg.depth_noise * rng.normal());
        ask_depth = std::max(1.0, ask_depth + cfg.depth_rev * (cfg.depth_mean - ask_depth) +
                                      cfg.depth_noise * rng.normal());
        bid_queue = std::max(1.0, bid_queue + cfg.queue_rev * (cfg.queue_mean - bid_queue) +
                                      cfg.queue_noise * rng.normal());
        ask_queue = std::max(1.0, ask_queue + cfg.queue_rev * (cfg.queue_mean - ask_queue) +
                                      cfg.queue_noise * rng.normal());

        BookSnapshot snap;
        snap.timestamp_ns = (t + 1) * dt_ns;
        snap.mid = mid;
        snap.spread = spread;
        snap.bid_depth = bid_depth;
        snap.ask_depth = ask_depth;
        snap.bid_queue = bid_queue;
        snap.ask_queue = ask_queue;
        snap.arrivals = nev;
        snap.signed_flow = flow;
        snap.regime = regime;
        out.snapshots.push_back(snap);
    }

    // feature pipeline: raw features -> rolling z-score -> labels
    std::vector<FeatureFrame> frames = compute_features(out.snapshots, cfg.feature_window);
    const int n = static_cast<int>(frames.size());
    for (int j = 0; j < kFeatureDim; ++j) {
        Vec col(static_cast<size_t>(n));
        for (int t = 0; t < n; ++t) col[t] = frames[t].x[j];
        Vec z = rolling_zscore(col, cfg.zscore_window, cfg.zscore_eps);
        for (int t = 0; t < n; ++t) frames[t].x[j] = z[t];
    }

    Vec mids(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t) mids[t] = frames[t].mid;
    const int h = cfg.label_horizon_steps();
    const int warm = std::max(cfg.feature_window, cfg.zscore_window);
    for (int t = warm; t + h < n; ++t) {
        double sig1 = windowed_std_of_changes(mids, t, std::min(t, cfg.zscore_window));
        double sigma_roll = sig1 * std::sqrt(static_cast<double>(h));
        FeatureFrame f = frames[t];
        f.label = label_move(mids, t, h, sigma_roll);
        f.warmup = false;
        out.frames.push_back(std::move(f));
    }
    return out;
}

// ---- dataset files ----------------------------------------------------
//
// Text: header line with column names, one TAB-separated record per line,
// doubles printed with %.17g (lossless round-trip). Binary twin: magic
// "AGAD", u32 version, u32 column count, u64 row count, little-endian
// row-major doubles in the same column order.

inline std::vector<std::string> dataset_columns() {
    std::vector<std::string> cols = {"ts_ns"};
    for (const std::string& f : feature_names()) cols.push_back(f);
    cols.insert(cols.end(), {"mid", "arrival_count", "true_regime", "label"});
    return cols;
}

inline Vec frame_to_row(const FeatureFrame& f) {
    Vec row;
    row.reserve(5 + f.x.size());
    row.push_back(static_cast<double>(f.timestamp_ns));
    for (double v : f.x) row.push_back(v);
    row.push_back(f.mid);
    row.push_back(f.arrival_count);
    row.push_back(static_cast<double>(f.true_regime));
    row.push_back(static_cast<double>(f.label));
    return row;
}

inline FeatureFrame frame_from_row(const Vec& row) {
    const int m = static_cast<int>(row.size()) - 5;
    if (m < 1) throw DataError("dataset row has too few columns");
    FeatureFrame f;
    f.timestamp_ns = static_cast<int64_t>(row[0]);
    f.x.assign(row.begin() + 1, row.begin() + 1 + m);
    f.mid = row[1 + m];
    f.arrival_count = row[2 + m];
    f.true_regime = static_cast<int>(row[3 + m]);
    f.label = static_cast<int>(row[4 + m]);
    return f;
}

inline void write_dataset_text(const std::string& path, const std::vector<FeatureFrame>& frames) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    const auto cols = dataset_columns();
    for (size_t i = 0; i < cols.size(); ++i) os << (i ? "\t" : "") << cols[i];
    os << "\n";
    char buf[32];
    for (const FeatureFrame& f : frames) {
        Vec row = frame_to_row(f);
        for (size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
            os << (i ? "\t" : "") << buf;
        }
        os << "\n";
    }
    if (!os) throw DataError("write failed: " + path);
}

inline void write_dataset_binary(const std::string& path, const std::vector<FeatureFrame>& frames) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    const uint32_t version = 1;
    const uint32_t cols = static_cast<uint32_t>(dataset_columns().size());
    const uint64_t rows = frames.size();
    os.write("AGAD", 4);
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&cols), 4);
    os.write(reinterpret_cast<const char*>(&rows), 8);
    for (const FeatureFrame& f : frames) {
        Vec row = frame_to_row(f);
        if (row.size() != cols) throw DataError("inconsistent column count in frames");
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!os) throw DataError("write failed: " + path);
}

inline std::vector<FeatureFrame> load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open dataset: " + path);
    char magic[4] = {0, 0, 0, 0};
    is.read(magic, 4);
    std::vector<FeatureFrame> frames;
    if (is.gcount() == 4 && std::memcmp(magic, "AGAD", 4) == 0) {
        uint32_t version = 0, cols = 0;
        uint64_t rows = 0;
        is.read(reinterpret_cast<char*>(&version), 4);
        is.read(reinterpret_cast<char*>(&cols), 4);
        is.read(reinterpret_cast<char*>(&rows), 8);
        if (!is || version != 1) throw DataError("bad AGAD header in " + path);
        if (cols < 6) throw DataError("AGAD column count too small in " + path);
        Vec row(cols);
        frames.reserve(rows);
        for (uint64_t r = 0; r < rows; ++r) {
            is.read(reinterpret_cast<char*>(row.data()),
                    static_cast<std::streamsize>(cols * sizeof(double)));
            if (!is) throw DataError("truncated AGAD file: " + path);
            frames.push_back(frame_from_row(row));
        }
        return frames;
    }

    is.clear();
    is.seekg(0);
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty dataset file: " + path);
    // validate header columns
    {
        std::vector<std::string> names;
        size_t pos = 0;
        while (pos <= line.size()) {
            size_t tab = line.find('\t', pos);
            if (tab == std::string::npos) {
                names.push_back(line.substr(pos));
                break;
            }
            names.push_back(line.substr(pos, tab - pos));
            pos = tab + 1;
        }
        const auto expected = dataset_columns();
        if (names.size() != expected.size())
            throw DataError("dataset header has " + std::to_string(names.size()) +
                            " columns, expected " + std::to_string(expected.size()));
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] != expected[i])
                throw DataError("dataset column " + std::to_string(i) + " is '" + names[i] +
                                "', expected '" + expected[i] + "'");
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        Vec row;
        const char* p = line.c_str();
        char* end = nullptr;
        while (true) {
            double v = std::strtod(p, &end);
            if (end == p) throw DataError("unparsable numeric field in " + path);
            row.push_back(v);
            p = end;
            while (*p == '\t' || *p == ' ') ++p;
            if (*p == '\0' || *p == '\r') break;
        }
        frames.push_back(frame_from_row(row));
    }
    return frames;
}

}  // namespace aga
