#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "aga/data.hpp"
#include "aga/error.hpp"
#include "aga/graph.hpp"
#include "aga/model.hpp"
#include "aga/optimizer.hpp"
#include "aga/rng.hpp"

namespace aga {

struct TrainConfig {
    int epochs = 200;
    int batch = 256;          // windows per optimizer step
    double lr = 3e-4;
    double lr_floor = 1e-6;
    int patience = 10;        // early stopping, epochs without val improvement
    int tbptt = 128;          // truncated-backprop window (loss steps)
    double clip_norm = 5.0;
    LossWeights weights;
    double split_train = 0.8;  // fraction (<= 1) or absolute step count
    double split_val = 0.2;
    uint64_t seed = 1;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch < 1) throw ConfigError("train: batch must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
        if (patience < 1) throw ConfigError("train: patience must be >= 1");
        if (tbptt < 2) throw ConfigError("train: tbptt must be >= 2");
        if (!(split_train > 0.0) || !(split_val > 0.0))
            throw ConfigError("train: split spans must be positive");
    }
};

struct EpochStats {
    int epoch = 0;
    LossBreakdown train;
    LossBreakdown val;
    double lr = 0.0;
    double wall_sec = 0.0;
    int clip_events = 0;
    bool best = false;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val = 0.0;
    long steps = 0;
};

inline SignalStats compute_signal_stats(const std::vector<FeatureFrame>& frames, int begin,
                                        int end, int window, double dt_sec) {
    Vec mids;
    mids.reserve(static_cast<size_t>(end - begin));
    for (int t = begin; t < end; ++t) mids.push_back(frames[static_cast<size_t>(t)].mid);
    const double window_sec = window * dt_sec;
    Vec sig, lam;
    for (int t = 0; t < end - begin; ++t) {
        sig.push_back(sigma_at(mids, t, window));
        lam.push_back(window_sec > 0.0 ? frames[static_cast<size_t>(begin + t)].arrival_count / window_sec
                                       : 0.0);
    }
    auto mean_std = [](const Vec& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= std::max<size_t>(1, v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        double sd = std::sqrt(var / std::max<size_t>(1, v.size()));
        return std::pair<double, double>(mean, std::max(sd, 1e-12));
    };
    auto [ms, ss] = mean_std(sig);
    auto [ml, sl] = mean_std(lam);
    return {ms, ss, ml, sl};
}

struct SplitSpans {
    int train_begin = 0, train_end = 0;
    int val_begin = 0, val_end = 0;
};

inline SplitSpans chronological_split(int n, const TrainConfig& cfg, int stride) {
    auto span = [&](double v, int total) {
        return v <= 1.0 ? static_cast<int>(v * total) : static_cast<int>(v);
    };
    int n_train = span(cfg.split_train, n);
    int n_val = span(cfg.split_val, n);
    if (cfg.split_train <= 1.0 && cfg.split_val <= 1.0 && n_train + n_val > n)
        n_val = n - n_train;
    if (n_train + n_val > n)
        throw ConfigError("train: split spans exceed dataset length");
    SplitSpans s;
    s.train_begin = 0;
    s.train_end = n_train;
    // validation strictly after training data, aligned to the coarse clock
    s.val_begin = ((n_train + stride - 1) / stride) * stride;
    s.val_end = std::min(n, s.val_begin + n_val);
    return s;
}

inline std::vector<WindowInput> make_windows(const std::vector<FeatureFrame>& frames, int begin,
                                             int end, const ModelConfig& mcfg, int tbptt,
                                             double dt_sec) {
    const int T = mcfg.warmup() + tbptt;
    std::vector<WindowInput> out;
    for (int s = begin; s + T <= end; s += tbptt)
        out.push_back(make_window(frames, s, T, mcfg, dt_sec));
    return out;
}

namespace detail {

inline LossBreakdown eval_loss(Model& model, const std::vector<WindowInput>& windows, int batch,
                               const LossWeights& lw) {
    LossBreakdown acc;
    acc.lambda_ce = lw.lambda_ce;
    acc.lambda_l2 = lw.lambda_l2;
    acc.lambda_w = lw.lambda_w;
    size_t done = 0;
    double weight_sum = 0.0;
    for (size_t i = 0; i < windows.size(); i += static_cast<size_t>(batch)) {
        size_t hi = std::min(windows.size(), i + static_cast<size_t>(batch));
        std::vector<WindowInput> chunk(windows.begin() + static_cast<long>(i),
                                       windows.begin() + static_cast<long>(hi));
        LossBreakdown b = sequence_loss(model, chunk, lw);
        double w = static_cast<double>(hi - i);
        acc.nll += b.nll * w;
        acc.ce += b.ce * w;
        acc.l2 = b.l2;
        acc.wavelet = b.wavelet;
        weight_sum += w;
        done = hi;
    }
    (void)done;
    if (weight_sum > 0.0) {
        acc.nll /= weight_sum;
        acc.ce /= weight_sum;
    }
    acc.total = acc.nll + lw.lambda_ce * acc.ce + lw.lambda_l2 * acc.l2 + lw.lambda_w * acc.wavelet;
    return acc;
}

}  // namespace detail

// End-to-end training: chronological split, Adam with cosine decay and
// global-norm clipping, early stopping on validation total loss, best
// parameters restored on exit.
inline TrainHistory train(Model& model, const std::vector<FeatureFrame>& frames,
                          const TrainConfig& cfg) {
    cfg.validate();
    const ModelConfig& mcfg = model.cfg;
    const int n = static_cast<int>(frames.size());
    const int stride = mcfg.coarse_stride();
    const double dt_sec = dataset_dt_sec(frames);
    SplitSpans split = chronological_split(n, cfg, stride);

    model.set_signal_stats(compute_signal_stats(frames, split.train_begin, split.train_end,
                                                mcfg.adaptation_window, dt_sec));

    std::vector<WindowInput> train_windows =
        make_windows(frames, split.train_begin, split.train_end, mcfg, cfg.tbptt, dt_sec);
    std::vector<WindowInput> val_windows =
        make_windows(frames, split.val_begin, split.val_end, mcfg, cfg.tbptt, dt_sec);
    if (train_windows.empty())
        throw DataError("train: training span shorter than one window (" +
                        std::to_string(mcfg.warmup() + cfg.tbptt) + " steps)");
    if (val_windows.empty())
        throw DataError("train: validation span shorter than one window");

    std::vector<std::string> names;
    std::vector<Tensor*> params;
    model.visit([&](const std::string& nm, Tensor& t) {
        names.push_back(nm);
        params.push_back(&t);
    });
    OptimizerState opt = OptimizerState::for_params(params);
    const long batches_per_epoch =
        static_cast<long>((train_windows.size() + cfg.batch - 1) / cfg.batch);
    Schedule sched{cfg.lr, cfg.lr_floor, std::max<long>(1, cfg.epochs * batches_per_epoch)};

    Rng rng(Rng(cfg.seed).fork(0x7261696Eull).seed());
    TrainHistory hist;
    std::vector<Tensor> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    long step = 0;
    double last_finite = 0.0;

    std::vector<size_t> order(train_windows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        // seeded shuffle, new derangement each epoch
        Rng erng = rng.fork(static_cast<uint64_t>(epoch) + 1);
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(erng.below(i));
            std::swap(order[i - 1], order[j]);
        }

        LossBreakdown train_acc;
        double weight_sum = 0.0;
        int clip_events = 0;
        double lr = cfg.lr;
        for (size_t i = 0; i < order.size(); i += static_cast<size_t>(cfg.batch)) {
            size_t hi = std::min(order.size(), i + static_cast<size_t>(cfg.batch));
            Tape tape;
            ModelLeaves lv = insert_leaves(tape, model, true);
            std::vector<const WindowInput*> batch;
            for (size_t b = i; b < hi; ++b) batch.push_back(&train_windows[order[b]]);
            BuiltLoss loss = build_batch_loss(tape, model, lv, std::move(batch), cfg.weights);
            if (!std::isfinite(loss.values.total))
                throw NumericError("train: loss diverged at epoch " + std::to_string(epoch) +
                                   ", last finite loss " + std::to_string(last_finite));
            last_finite = loss.values.total;
            tape.backward(loss.total);
            std::vector<Tensor> grads;
            grads.reserve(lv.ordered.size());
            for (const auto& [nm, leaf] : lv.ordered) grads.push_back(tape.grad(leaf));
            double norm = clip_global_norm(grads, cfg.clip_norm);
            if (norm > cfg.clip_norm) ++clip_events;
            lr = schedule_rate(step, sched);
            adam_step(params, names, grads, opt, lr);
            ++step;

            double w = static_cast<double>(hi - i);
            train_acc.nll += loss.values.nll * w;
            train_acc.ce += loss.values.ce * w;
            train_acc.l2 = loss.values.l2;
            train_acc.wavelet = loss.values.wavelet;
            weight_sum += w;
        }
        train_acc.lambda_ce = cfg.weights.lambda_ce;
        train_acc.lambda_l2 = cfg.weights.lambda_l2;
        train_acc.lambda_w = cfg.weights.lambda_w;
        if (weight_sum > 0.0) {
            train_acc.nll /= weight_sum;
            train_acc.ce /= weight_sum;
        }
        train_acc.total = train_acc.nll + cfg.weights.lambda_ce * train_acc.ce +
                          cfg.weights.lambda_l2 * train_acc.l2 +
                          cfg.weights.lambda_w * train_acc.wavelet;

        LossBreakdown val = detail::eval_loss(model, val_windows, cfg.batch, cfg.weights);
        if (!std::isfinite(val.total))
            throw NumericError("train: validation loss diverged at epoch " + std::to_string(epoch));

        EpochStats es;
        es.epoch = epoch;
        es.train = train_acc;
        es.val = val;
        es.lr = lr;
        es.clip_events = clip_events;
        es.wall_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (val.total < best_val) {
            best_val = val.total;
            hist.best_epoch = epoch;
            since_best = 0;
            es.best = true;
            best_params.clear();
            for (Tensor* p : params) best_params.push_back(*p);
        } else {
            ++since_best;
        }
        hist.epochs.push_back(es);
        if (since_best >= cfg.patience) break;
    }
    hist.steps = step;
    hist.best_val = best_val;
    if (!best_params.empty())
        for (size_t p = 0; p < params.size(); ++p) *params[p] = best_params[p];
    return hist;
}

}  // namespace aga
