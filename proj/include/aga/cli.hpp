#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "aga/checkpoint.hpp"
#include "aga/data.hpp"
#include "aga/hmm.hpp"
#include "aga/metrics.hpp"
#include "aga/model.hpp"
#include "aga/predictor.hpp"
#include "aga/runconfig.hpp"
#include "aga/train.hpp"

namespace aga {

struct CliOptions {
    std::string config_path;
    std::string data_path;
    std::string checkpoint_path;
    std::string out_dir = ".";
    uint64_t seed = 0;
    bool seed_set = false;
    std::vector<std::string> ablate;
    std::string format = "text";  // dataset output: text | binary
};

namespace cliio {

inline void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory: " + dir);
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << text;
    if (!os) throw DataError("write failed: " + path);
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void apply_ablations(ModelConfig& m, const std::vector<std::string>& ablate) {
    for (const std::string& a : ablate) {
        if (a == "no_aga") m.no_aga = true;
        else if (a == "no_dilated") m.no_dilated = true;
        else if (a == "no_wavelet_lstm") m.no_wavelet_lstm = true;
        else if (a == "gaussian_emissions") m.gaussian_emissions = true;
        else if (a == "fixed_transitions") m.fixed_transitions = true;
        else if (a == "literal_eq14") m.literal_eq14 = true;
        else if (a == "wavelet_details") m.wavelet_details = true;
        else throw ConfigError("unknown ablation flag: " + a);
    }
}

inline void check_schema(const std::vector<FeatureFrame>& frames, const ModelConfig& cfg) {
    if (frames.empty()) throw DataError("dataset is empty");
    const int m = static_cast<int>(frames[0].x.size());
    if (m != cfg.feature_dim)
        throw DataError("dataset has " + std::to_string(m) + " feature columns (" +
                        feature_names()[0] + "..), model feature_dim is " +
                        std::to_string(cfg.feature_dim));
}

}  // namespace cliio

inline int cmd_generate(const CliOptions& opt) {
    RunConfig rc = load_run_config(opt.config_path);
    if (opt.seed_set) rc.gen.seed = opt.seed;
    cliio::ensure_out_dir(opt.out_dir);
    GeneratedData data = generate(rc.gen);
    std::string base = opt.out_dir + "/dataset";
    std::string path;
    if (opt.format == "binary") {
        path = base + ".bin";
        write_dataset_binary(path, data.frames);
    } else if (opt.format == "text") {
        path = base + ".tsv";
        write_dataset_text(path, data.frames);
    } else {
        throw ConfigError("unknown dataset format: " + opt.format);
    }
    cliio::write_text(opt.out_dir + "/resolved.ini", run_config_to_ini(rc));

    std::vector<long> regime_counts(static_cast<size_t>(rc.gen.regime_count), 0);
    long labels[3] = {0, 0, 0};
    for (const FeatureFrame& f : data.frames) {
        if (f.true_regime >= 0 && f.true_regime < rc.gen.regime_count)
            ++regime_counts[static_cast<size_t>(f.true_regime)];
        if (f.label >= 0 && f.label < 3) ++labels[f.label];
    }
    std::cout << "dataset: " << path << "\n";
    std::cout << "steps: " << data.frames.size() << " (of " << rc.gen.horizon
              << " simulated, warm-up and label tail dropped)\n";
    std::cout << "events: " << data.events.size() << "\n";
    std::cout << "regime_freq:";
    for (long c : regime_counts)
        std::cout << " " << (data.frames.empty() ? 0.0 : static_cast<double>(c) / data.frames.size());
    std::cout << "\nlabel_balance: down=" << labels[0] << " neutral=" << labels[1]
              << " up=" << labels[2] << "\n";
    return 0;
}

inline int cmd_train(const CliOptions& opt) {
    RunConfig rc = load_run_config(opt.config_path);
    cliio::apply_ablations(rc.model, opt.ablate);
    if (opt.seed_set) rc.train.seed = opt.seed;
    cliio::ensure_out_dir(opt.out_dir);
    std::vector<FeatureFrame> frames = load_dataset(opt.data_path);
    cliio::check_schema(frames, rc.model);

    Model model(rc.model, rc.train.seed);
    TrainHistory hist = train(model, frames, rc.train);
    save_checkpoint(opt.out_dir + "/checkpoint.aga", model);
    cliio::write_text(opt.out_dir + "/resolved.ini", run_config_to_ini(rc));

    std::string h;
    h += "epoch\ttrain_nll\ttrain_ce\ttrain_l2\ttrain_wavelet\ttrain_total\tval_nll\tval_ce\t"
         "val_l2\tval_wavelet\tval_total\tlr\twall_sec\tclip_events\tbest\n";
    for (const EpochStats& e : hist.epochs) {
        h += std::to_string(e.epoch) + "\t" + cliio::fmt(e.train.nll) + "\t" + cliio::fmt(e.train.ce) +
             "\t" + cliio::fmt(e.train.l2) + "\t" + cliio::fmt(e.train.wavelet) + "\t" +
             cliio::fmt(e.train.total) + "\t" + cliio::fmt(e.val.nll) + "\t" + cliio::fmt(e.val.ce) +
             "\t" + cliio::fmt(e.val.l2) + "\t" + cliio::fmt(e.val.wavelet) + "\t" +
             cliio::fmt(e.val.total) + "\t" + cliio::fmt(e.lr) + "\t" + cliio::fmt(e.wall_sec) + "\t" +
             std::to_string(e.clip_events) + "\t" + (e.best ? "1" : "0") + "\n";
    }
    cliio::write_text(opt.out_dir + "/history.tsv", h);
    std::cout << "checkpoint: " << opt.out_dir << "/checkpoint.aga\n";
    std::cout << "epochs: " << hist.epochs.size() << " best_epoch: " << hist.best_epoch
              << " best_val: " << (hist.best_epoch >= 0 ? cliio::fmt(hist.best_val) : "n/a") << "\n";
    return 0;
}

struct StreamRun {
    std::vector<StreamingPredictor::Output> outputs;             // post-warm-up only
    std::vector<StreamingPredictor::Diagnostics> diagnostics;    // aligned with outputs
    std::vector<int> predictions;
    std::vector<int> labels;
    std::vector<int> regimes;
    Vec mids;          // one per output plus one trailing price when available
    Vec sigmas;
    Vec gate_means;
    std::vector<int> viterbi_path;
    Vec log_pi;
};

inline StreamRun run_stream(const Model& model, const std::vector<FeatureFrame>& frames,
                            bool collect_diag) {
    StreamRun run;
    StreamingPredictor pred(model, dataset_dt_sec(frames), true);
    pred.reserve(frames.size());
    for (const FeatureFrame& f : frames) {
        StreamingPredictor::Output o = pred.step(f);
        if (o.warm) continue;
        run.predictions.push_back(o.pred_class);
        run.labels.push_back(f.label);
        run.regimes.push_back(f.true_regime);
        run.mids.push_back(f.mid);
        run.sigmas.push_back(pred.diagnostics().sigma);
        run.gate_means.push_back(pred.diagnostics().gate_mean);
        if (collect_diag) run.diagnostics.push_back(pred.diagnostics());
        run.outputs.push_back(std::move(o));
    }
    run.log_pi = pred.log_pi();
    const auto& logb = pred.collected_logb();
    if (!logb.empty()) {
        Tensor lb(static_cast<int>(logb.size()), model.cfg.states);
        for (size_t t = 0; t < logb.size(); ++t)
            for (int j = 0; j < model.cfg.states; ++j) lb.at(static_cast<int>(t), j) = logb[t][static_cast<size_t>(j)];
        run.viterbi_path = viterbi_log(lb, pred.collected_log_trans(), run.log_pi);
    }
    return run;
}

inline MetricsReport evaluate_metrics(const Model& model, const std::vector<FeatureFrame>& frames,
                                      const EvalConfig& ecfg) {
    StreamRun run = run_stream(model, frames, false);
    if (run.outputs.empty()) throw DataError("dataset shorter than the model warm-up");
    MetricsReport rep;
    rep.samples = static_cast<long>(run.outputs.size());
    for (size_t i = 0; i < run.predictions.size(); ++i)
        if (run.labels[i] >= 0) rep.confusion.add(run.labels[i], run.predictions[i]);
    rep.accuracy = accuracy(rep.confusion);
    rep.mcc = mcc(rep.confusion);

    bool have_truth = true;
    for (int r : run.regimes) have_truth = have_truth && r >= 0;
    std::vector<int> truth;
    if (have_truth) {
        truth = run.regimes;
    } else {
        // volatile regime = top-quintile realized volatility
        Vec sorted = run.sigmas;
        std::sort(sorted.begin(), sorted.end());
        double cut = sorted[static_cast<size_t>(0.8 * (sorted.size() - 1))];
        for (double s : run.sigmas) truth.push_back(s >= cut ? 1 : 0);
    }
    RegimeF1 rf = regime_f1(run.viterbi_path, truth, model.cfg.states);
    rep.regime_f1 = rf.f1;
    rep.regime_mapping = rf.mapping;

    int truth_classes = 0;
    for (int t : truth) truth_classes = std::max(truth_classes, t + 1);
    rep.per_regime_accuracy.assign(static_cast<size_t>(truth_classes), 0.0);
    std::vector<long> per_regime_n(static_cast<size_t>(truth_classes), 0);
    for (size_t i = 0; i < run.predictions.size(); ++i) {
        if (run.labels[i] < 0) continue;
        int r = truth[i];
        ++per_regime_n[static_cast<size_t>(r)];
        if (run.predictions[i] == run.labels[i]) rep.per_regime_accuracy[static_cast<size_t>(r)] += 1.0;
    }
    for (size_t r = 0; r < rep.per_regime_accuracy.size(); ++r)
        if (per_regime_n[r] > 0) rep.per_regime_accuracy[r] /= static_cast<double>(per_regime_n[r]);

    TradeSimConfig tc{ecfg.fee_bps, ecfg.annualization};
    if (run.mids.size() >= 2) {
        std::vector<int> preds(run.predictions.begin(), run.predictions.end() - 1);
        rep.sharpe = sharpe_sim(preds, run.mids, tc).sharpe;
    }
    rep.annualization = ecfg.annualization;
    rep.gate_sigma_spearman = spearman(run.sigmas, run.gate_means);

    LatencyReport lat = latency_p99(model, frames, static_cast<size_t>(ecfg.latency_steps));
    rep.p50_ms = lat.p50_ms;
    rep.p99_ms = lat.p99_ms;
    return rep;
}

inline std::string metrics_to_text(const MetricsReport& rep) {
    std::string s;
    s += "samples " + std::to_string(rep.samples) + "\n";
    s += "accuracy " + cliio::fmt(rep.accuracy) + "\n";
    s += "mcc " + cliio::fmt(rep.mcc) + "\n";
    s += "regime_f1 " + cliio::fmt(rep.regime_f1) + "\n";
    s += "regime_mapping";
    for (int m : rep.regime_mapping) s += " " + std::to_string(m);
    s += "\n";
    s += "sharpe " + cliio::fmt(rep.sharpe) + "\n";
    s += "sharpe_annualization_factor " + cliio::fmt(rep.annualization) + "\n";
    s += "latency_p50_ms " + cliio::fmt(rep.p50_ms) + "\n";
    s += "latency_p99_ms " + cliio::fmt(rep.p99_ms) + "\n";
    s += "gate_sigma_spearman " + cliio::fmt(rep.gate_sigma_spearman) + "\n";
    for (size_t r = 0; r < rep.per_regime_accuracy.size(); ++r)
        s += "regime" + std::to_string(r) + "_accuracy " + cliio::fmt(rep.per_regime_accuracy[r]) + "\n";
    s += "confusion_rows_truth_cols_pred\n";
    for (int i = 0; i < rep.confusion.classes; ++i) {
        for (int j = 0; j < rep.confusion.classes; ++j)
            s += (j ? " " : "") + std::to_string(rep.confusion.at(i, j));
        s += "\n";
    }
    return s;
}

inline int cmd_evaluate(const CliOptions& opt) {
    EvalConfig ecfg;
    if (!opt.config_path.empty()) ecfg = load_run_config(opt.config_path).eval;
    Model model = load_checkpoint(opt.checkpoint_path);
    std::vector<FeatureFrame> frames = load_dataset(opt.data_path);
    cliio::check_schema(frames, model.cfg);
    cliio::ensure_out_dir(opt.out_dir);
    MetricsReport rep = evaluate_metrics(model, frames, ecfg);
    cliio::write_text(opt.out_dir + "/metrics.txt", metrics_to_text(rep));

    StreamRun run = run_stream(model, frames, false);
    if (run.mids.size() >= 2) {
        std::vector<int> preds(run.predictions.begin(), run.predictions.end() - 1);
        TradeSimResult sim = sharpe_sim(preds, run.mids, {ecfg.fee_bps, ecfg.annualization});
        std::string pnl = "step\treturn\tpnl\n";
        for (size_t t = 0; t < sim.returns.size(); ++t)
            pnl += std::to_string(t) + "\t" + cliio::fmt(sim.returns[t]) + "\t" +
                   cliio::fmt(sim.pnl[t]) + "\n";
        cliio::write_text(opt.out_dir + "/pnl.tsv", pnl);
    }
    std::cout << metrics_to_text(rep);
    return 0;
}

inline int cmd_predict(const CliOptions& opt) {
    Model model = load_checkpoint(opt.checkpoint_path);
    std::vector<FeatureFrame> frames = load_dataset(opt.data_path);
    cliio::check_schema(frames, model.cfg);
    cliio::ensure_out_dir(opt.out_dir);
    StreamingPredictor pred(model, dataset_dt_sec(frames));
    pred.reserve(frames.size());
    std::ofstream os(opt.out_dir + "/predictions.tsv", std::ios::binary);
    if (!os) throw DataError("cannot open predictions.tsv for writing");
    os << "step\tts_ns\tpred_class";
    for (int j = 0; j < model.cfg.states; ++j) os << "\tposterior" << j;
    os << "\n";
    for (const FeatureFrame& f : frames) {
        StreamingPredictor::Output o = pred.step(f);
        if (o.warm) continue;
        os << o.step << "\t" << f.timestamp_ns << "\t" << o.pred_class;
        for (double p : o.filtered) os << "\t" << cliio::fmt(p);
        os << "\n";
    }
    if (!os) throw DataError("write failed: predictions.tsv");
    std::cout << "predictions: " << opt.out_dir << "/predictions.tsv\n";
    return 0;
}

inline int cmd_inspect(const CliOptions& opt) {
    Model model = load_checkpoint(opt.checkpoint_path);
    std::vector<FeatureFrame> frames = load_dataset(opt.data_path);
    cliio::check_schema(frames, model.cfg);
    cliio::ensure_out_dir(opt.out_dir);
    StreamRun run = run_stream(model, frames, true);
    const int K = model.cfg.states;
    const int H = model.cfg.has_attention() ? model.cfg.heads : 0;
    std::ofstream os(opt.out_dir + "/inspect.tsv", std::ios::binary);
    if (!os) throw DataError("cannot open inspect.tsv for writing");
    os << "step\tsigma\tlambda\tmean_gate";
    for (int h = 0; h < H; ++h) os << "\thead" << h << "_entropy";
    os << "\ttau";
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) os << "\ttrans_" << i << "_" << j;
    os << "\tviterbi\n";
    for (size_t t = 0; t < run.outputs.size(); ++t) {
        const auto& d = run.diagnostics[t];
        os << run.outputs[t].step << "\t" << cliio::fmt(d.sigma) << "\t" << cliio::fmt(d.lambda)
           << "\t" << cliio::fmt(d.gate_mean);
        for (int h = 0; h < H; ++h)
            os << "\t" << cliio::fmt(h < static_cast<int>(d.head_entropy.size()) ? d.head_entropy[static_cast<size_t>(h)] : 0.0);
        os << "\t" << cliio::fmt(d.tau);
        for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j)
                os << "\t" << cliio::fmt(d.log_trans.data.empty() ? (i == j ? 1.0 : 0.0)
                                                                  : std::exp(d.log_trans.at(i, j)));
        os << "\t" << (t < run.viterbi_path.size() ? run.viterbi_path[t] : -1) << "\n";
    }
    if (!os) throw DataError("write failed: inspect.tsv");
    std::cout << "inspect: " << opt.out_dir << "/inspect.tsv\n";
    return 0;
}

}  // namespace aga
