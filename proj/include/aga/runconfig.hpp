#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aga/data.hpp"
#include "aga/error.hpp"
#include "aga/metrics.hpp"
#include "aga/model.hpp"
#include "aga/train.hpp"

namespace aga {

struct EvalConfig {
    double fee_bps = 1.0;
    double annualization = 1.0;
    long latency_steps = 10000;
};

struct RunConfig {
    GeneratorConfig gen;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
};

namespace cfgio {

struct Entry {
    std::string section, key, value;
    int line = 0;
};

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<Entry> parse_ini(const std::string& text) {
    std::vector<Entry> out;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("config line " + std::to_string(lineno) +
                                                   ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        Entry e;
        e.section = section;
        e.key = trim(t.substr(0, eq));
        e.value = trim(t.substr(eq + 1));
        e.line = lineno;
        if (e.key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        out.push_back(std::move(e));
    }
    return out;
}

inline double to_double(const Entry& e) {
    try {
        size_t pos = 0;
        double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (...) {
        throw ConfigError("config line " + std::to_string(e.line) + ": bad number for " + e.key);
    }
}

inline long to_long(const Entry& e) {
    try {
        size_t pos = 0;
        long v = std::stol(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (...) {
        throw ConfigError("config line " + std::to_string(e.line) + ": bad integer for " + e.key);
    }
}

inline uint64_t to_u64(const Entry& e) {
    try {
        size_t pos = 0;
        unsigned long long v = std::stoull(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (...) {
        throw ConfigError("config line " + std::to_string(e.line) + ": bad integer for " + e.key);
    }
}

inline bool to_bool(const Entry& e) {
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    throw ConfigError("config line " + std::to_string(e.line) + ": bad bool for " + e.key);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

inline Vec to_vec(const Entry& e) {
    Vec out;
    for (const std::string& t : split_ws(e.value)) {
        try {
            out.push_back(std::stod(t));
        } catch (...) {
            throw ConfigError("config line " + std::to_string(e.line) + ": bad vector for " + e.key);
        }
    }
    return out;
}

inline std::vector<int> to_ivec(const Entry& e) {
    std::vector<int> out;
    for (double v : to_vec(e)) out.push_back(static_cast<int>(v));
    return out;
}

// rows separated by '/', entries by whitespace
inline Tensor to_matrix(const Entry& e) {
    std::vector<Vec> rows;
    std::string cur;
    std::istringstream is(e.value);
    std::string tok;
    rows.emplace_back();
    while (is >> tok) {
        if (tok == "/") {
            rows.emplace_back();
            continue;
        }
        try {
            rows.back().push_back(std::stod(tok));
        } catch (...) {
            throw ConfigError("config line " + std::to_string(e.line) + ": bad matrix for " + e.key);
        }
    }
    if (rows.empty() || rows[0].empty())
        throw ConfigError("config line " + std::to_string(e.line) + ": empty matrix for " + e.key);
    Tensor t(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size())
            throw ConfigError("config line " + std::to_string(e.line) + ": ragged matrix for " + e.key);
        for (size_t c = 0; c < rows[r].size(); ++c) t.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
    }
    return t;
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_vec(const Vec& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
    return s;
}

inline std::string fmt_ivec(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
    return s;
}

inline std::string fmt_matrix(const Tensor& t) {
    std::string s;
    for (int r = 0; r < t.rows; ++r) {
        if (r) s += " / ";
        for (int c = 0; c < t.cols; ++c) s += (c ? " " : "") + fmt(t.at(r, c));
    }
    return s;
}

inline std::string fmt_strs(const std::vector<std::string>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + v[i];
    return s;
}

}  // namespace cfgio

inline void apply_model_entry(ModelConfig& m, const cfgio::Entry& e) {
    using namespace cfgio;
    if (e.section == "model") {
        if (e.key == "states") m.states = static_cast<int>(to_long(e));
        else if (e.key == "feature_dim") m.feature_dim = static_cast<int>(to_long(e));
        else if (e.key == "hidden") m.hidden = static_cast<int>(to_long(e));
        else if (e.key == "heads") m.heads = static_cast<int>(to_long(e));
        else if (e.key == "lookback") m.lookback = static_cast<int>(to_long(e));
        else if (e.key == "flow_layers") m.flow_layers = static_cast<int>(to_long(e));
        else if (e.key == "flow_hidden") m.flow_hidden = static_cast<int>(to_long(e));
        else if (e.key == "embed_dim") m.embed_dim = static_cast<int>(to_long(e));
        else if (e.key == "gru_hidden") m.gru_hidden = static_cast<int>(to_long(e));
        else if (e.key == "gru_mlp_hidden") m.gru_mlp_hidden = static_cast<int>(to_long(e));
        else if (e.key == "kernel") m.kernel = static_cast<int>(to_long(e));
        else if (e.key == "dilations") m.dilations = to_ivec(e);
        else if (e.key == "wavelet_levels") m.wavelet_levels = static_cast<int>(to_long(e));
        else if (e.key == "wavelet_length") m.wavelet_length = static_cast<int>(to_long(e));
        else if (e.key == "adaptation_window") m.adaptation_window = static_cast<int>(to_long(e));
        else if (e.key == "scale_clamp") m.scale_clamp = to_double(e);
        else if (e.key == "per_state_stacks") m.per_state_stacks = to_bool(e);
        else if (e.key == "gate_inputs") m.gate_inputs = split_ws(e.value);
        else throw ConfigError("config line " + std::to_string(e.line) + ": unknown key [model] " + e.key);
    } else if (e.section == "flags") {
        if (e.key == "no_aga") m.no_aga = to_bool(e);
        else if (e.key == "no_dilated") m.no_dilated = to_bool(e);
        else if (e.key == "no_wavelet_lstm") m.no_wavelet_lstm = to_bool(e);
        else if (e.key == "gaussian_emissions") m.gaussian_emissions = to_bool(e);
        else if (e.key == "fixed_transitions") m.fixed_transitions = to_bool(e);
        else if (e.key == "literal_eq14") m.literal_eq14 = to_bool(e);
        else if (e.key == "wavelet_details") m.wavelet_details = to_bool(e);
        else throw ConfigError("config line " + std::to_string(e.line) + ": unknown key [flags] " + e.key);
    } else {
        throw ConfigError("config line " + std::to_string(e.line) + ": unknown section [" + e.section + "]");
    }
}

inline std::string model_config_to_ini(const ModelConfig& m) {
    using namespace cfgio;
    std::string s;
    s += "[model]\n";
    s += "states = " + std::to_string(m.states) + "\n";
    s += "feature_dim = " + std::to_string(m.feature_dim) + "\n";
    s += "hidden = " + std::to_string(m.hidden) + "\n";
    s += "heads = " + std::to_string(m.heads) + "\n";
    s += "lookback = " + std::to_string(m.lookback) + "\n";
    s += "flow_layers = " + std::to_string(m.flow_layers) + "\n";
    s += "flow_hidden = " + std::to_string(m.flow_hidden) + "\n";
    s += "embed_dim = " + std::to_string(m.embed_dim) + "\n";
    s += "gru_hidden = " + std::to_string(m.gru_hidden) + "\n";
    s += "gru_mlp_hidden = " + std::to_string(m.gru_mlp_hidden) + "\n";
    s += "kernel = " + std::to_string(m.kernel) + "\n";
    s += "dilations = " + fmt_ivec(m.dilations) + "\n";
    s += "wavelet_levels = " + std::to_string(m.wavelet_levels) + "\n";
    s += "wavelet_length = " + std::to_string(m.wavelet_length) + "\n";
    s += "adaptation_window = " + std::to_string(m.adaptation_window) + "\n";
    s += "scale_clamp = " + fmt(m.scale_clamp) + "\n";
    s += std::string("per_state_stacks = ") + (m.per_state_stacks ? "true" : "false") + "\n";
    s += "gate_inputs = " + fmt_strs(m.gate_inputs) + "\n";
    s += "[flags]\n";
    s += std::string("no_aga = ") + (m.no_aga ? "true" : "false") + "\n";
    s += std::string("no_dilated = ") + (m.no_dilated ? "true" : "false") + "\n";
    s += std::string("no_wavelet_lstm = ") + (m.no_wavelet_lstm ? "true" : "false") + "\n";
    s += std::string("gaussian_emissions = ") + (m.gaussian_emissions ? "true" : "false") + "\n";
    s += std::string("fixed_transitions = ") + (m.fixed_transitions ? "true" : "false") + "\n";
    s += std::string("literal_eq14 = ") + (m.literal_eq14 ? "true" : "false") + "\n";
    s += std::string("wavelet_details = ") + (m.wavelet_details ? "true" : "false") + "\n";
    return s;
}

inline ModelConfig model_config_from_ini(const std::string& text) {
    ModelConfig m;
    for (const cfgio::Entry& e : cfgio::parse_ini(text)) apply_model_entry(m, e);
    return m;
}

inline RunConfig parse_run_config(const std::string& text) {
    using namespace cfgio;
    RunConfig rc;
    for (const Entry& e : parse_ini(text)) {
        if (e.section == "model" || e.section == "flags") {
            apply_model_entry(rc.model, e);
        } else if (e.section == "generator") {
            GeneratorConfig& g = rc.gen;
            if (e.key == "regimes") g.regime_count = static_cast<int>(to_long(e));
            else if (e.key == "transition") g.transition = to_matrix(e);
            else if (e.key == "intensity") g.intensity = to_vec(e);
            else if (e.key == "volatility") g.volatility = to_vec(e);
            else if (e.key == "snapshot_ms") g.snapshot_ms = static_cast<int>(to_long(e));
            else if (e.key == "horizon") g.horizon = to_long(e);
            else if (e.key == "seed") g.seed = to_u64(e);
            else if (e.key == "feature_window") g.feature_window = static_cast<int>(to_long(e));
            else if (e.key == "zscore_window") g.zscore_window = static_cast<int>(to_long(e));
            else if (e.key == "zscore_eps") g.zscore_eps = to_double(e);
            else if (e.key == "label_horizon_ms") g.label_horizon_ms = static_cast<int>(to_long(e));
            else if (e.key == "mid0") g.mid0 = to_double(e);
            else if (e.key == "tick") g.tick = to_double(e);
            else if (e.key == "depth_mean") g.depth_mean = to_double(e);
            else if (e.key == "depth_rev") g.depth_rev = to_double(e);
            else if (e.key == "depth_noise") g.depth_noise = to_double(e);
            else if (e.key == "queue_mean") g.queue_mean = to_double(e);
            else if (e.key == "queue_rev") g.queue_rev = to_double(e);
            else if (e.key == "queue_noise") g.queue_noise = to_double(e);
            else if (e.key == "spread_mean") g.spread_mean = to_double(e);
            else if (e.key == "spread_rev") g.spread_rev = to_double(e);
            else if (e.key == "spread_noise") g.spread_noise = to_double(e);
            else throw ConfigError("config line " + std::to_string(e.line) + ": unknown key [generator] " + e.key);
        } else if (e.section == "train") {
            TrainConfig& t = rc.train;
            if (e.key == "epochs") t.epochs = static_cast<int>(to_long(e));
            else if (e.key == "batch") t.batch = static_cast<int>(to_long(e));
            else if (e.key == "lr") t.lr = to_double(e);
            else if (e.key == "lr_floor") t.lr_floor = to_double(e);
            else if (e.key == "patience") t.patience = static_cast<int>(to_long(e));
            else if (e.key == "tbptt") t.tbptt = static_cast<int>(to_long(e));
            else if (e.key == "clip_norm") t.clip_norm = to_double(e);
            else if (e.key == "lambda_ce") t.weights.lambda_ce = to_double(e);
            else if (e.key == "lambda_l2") t.weights.lambda_l2 = to_double(e);
            else if (e.key == "lambda_wavelet") t.weights.lambda_w = to_double(e);
            else if (e.key == "split_train") t.split_train = to_double(e);
            else if (e.key == "split_val") t.split_val = to_double(e);
            else if (e.key == "seed") t.seed = to_u64(e);
            else throw ConfigError("config line " + std::to_string(e.line) + ": unknown key [train] " + e.key);
        } else if (e.section == "eval") {
            EvalConfig& v = rc.eval;
            if (e.key == "fee_bps") v.fee_bps = to_double(e);
            else if (e.key == "annualization") v.annualization = to_double(e);
            else if (e.key == "latency_steps") v.latency_steps = to_long(e);
            else throw ConfigError("config line " + std::to_string(e.line) + ": unknown key [eval] " + e.key);
        } else {
            throw ConfigError("config line " + std::to_string(e.line) + ": unknown section [" +
                              e.section + "]");
        }
    }
    // default generator matrices for the configured regime count
    if (rc.gen.transition.rows == 0) {
        int K = rc.gen.regime_count;
        rc.gen.transition = Tensor(K, K);
        for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j) rc.gen.transition.at(i, j) = i == j ? 0.99 : 0.01 / (K - 1);
    }
    if (rc.gen.intensity.empty()) rc.gen.intensity.assign(static_cast<size_t>(rc.gen.regime_count), 10.0);
    if (rc.gen.volatility.empty()) {
        rc.gen.volatility.resize(static_cast<size_t>(rc.gen.regime_count));
        for (int i = 0; i < rc.gen.regime_count; ++i) rc.gen.volatility[static_cast<size_t>(i)] = 0.5 * std::pow(3.0, i);
    }
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str());
}

inline std::string run_config_to_ini(const RunConfig& rc) {
    using namespace cfgio;
    std::string s;
    const GeneratorConfig& g = rc.gen;
    s += "[generator]\n";
    s += "regimes = " + std::to_string(g.regime_count) + "\n";
    s += "transition = " + fmt_matrix(g.transition) + "\n";
    s += "intensity = " + fmt_vec(g.intensity) + "\n";
    s += "volatility = " + fmt_vec(g.volatility) + "\n";
    s += "snapshot_ms = " + std::to_string(g.snapshot_ms) + "\n";
    s += "horizon = " + std::to_string(g.horizon) + "\n";
    s += "seed = " + std::to_string(g.seed) + "\n";
    s += "feature_window = " + std::to_string(g.feature_window) + "\n";
    s += "zscore_window = " + std::to_string(g.zscore_window) + "\n";
    s += "zscore_eps = " + fmt(g.zscore_eps) + "\n";
    s += "label_horizon_ms = " + std::to_string(g.label_horizon_ms) + "\n";
    s += "mid0 = " + fmt(g.mid0) + "\n";
    s += "tick = " + fmt(g.tick) + "\n";
    s += "depth_mean = " + fmt(g.depth_mean) + "\n";
    s += "depth_rev = " + fmt(g.depth_rev) + "\n";
    s += "depth_noise = " + fmt(g.depth_noise) + "\n";
    s += "queue_mean = " + fmt(g.queue_mean) + "\n";
    s += "queue_rev = " + fmt(g.queue_rev) + "\n";
    s += "queue_noise = " + fmt(g.queue_noise) + "\n";
    s += "spread_mean = " + fmt(g.spread_mean) + "\n";
    s += "spread_rev = " + fmt(g.spread_rev) + "\n";
    s += "spread_noise = " + fmt(g.spread_noise) + "\n";
    s += model_config_to_ini(rc.model);
    const TrainConfig& t = rc.train;
    s += "[train]\n";
    s += "epochs = " + std::to_string(t.epochs) + "\n";
    s += "batch = " + std::to_string(t.batch) + "\n";
    s += "lr = " + fmt(t.lr) + "\n";
    s += "lr_floor = " + fmt(t.lr_floor) + "\n";
    s += "patience = " + std::to_string(t.patience) + "\n";
    s += "tbptt = " + std::to_string(t.tbptt) + "\n";
    s += "clip_norm = " + fmt(t.clip_norm) + "\n";
    s += "lambda_ce = " + fmt(t.weights.lambda_ce) + "\n";
    s += "lambda_l2 = " + fmt(t.weights.lambda_l2) + "\n";
    s += "lambda_wavelet = " + fmt(t.weights.lambda_w) + "\n";
    s += "split_train = " + fmt(t.split_train) + "\n";
    s += "split_val = " + fmt(t.split_val) + "\n";
    s += "seed = " + std::to_string(t.seed) + "\n";
    const EvalConfig& v = rc.eval;
    s += "[eval]\n";
    s += "fee_bps = " + fmt(v.fee_bps) + "\n";
    s += "annualization = " + fmt(v.annualization) + "\n";
    s += "latency_steps = " + std::to_string(v.latency_steps) + "\n";
    return s;
}

}  // namespace aga
