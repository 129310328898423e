#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "aga/attention.hpp"
#include "aga/autodiff.hpp"
#include "aga/encoder.hpp"
#include "aga/error.hpp"
#include "aga/flow.hpp"
#include "aga/rng.hpp"
#include "aga/tensor.hpp"
#include "aga/transitions.hpp"
#include "aga/wavelet.hpp"

namespace aga {

struct ModelConfig {
    int states = 4;         // K hidden regimes
    int feature_dim = 7;    // m; also the flow dimension D
    int hidden = 32;        // k, shared by both pathways and the context
    int heads = 4;
    int lookback = 32;      // attention window l
    int flow_layers = 4;
    int flow_hidden = 24;
    int embed_dim = 8;
    int gru_hidden = 16;
    int gru_mlp_hidden = 16;
    int kernel = 5;
    std::vector<int> dilations = {1, 2, 4, 8};
    int wavelet_levels = 3;
    int wavelet_length = 2;
    int adaptation_window = 64;  // w for sigma/lambda
    double scale_clamp = 5.0;
    bool per_state_stacks = true;
    std::vector<std::string> gate_inputs = {"sigma", "lambda"};

    // ablations (Table-2 style variants)
    bool no_aga = false;
    bool no_dilated = false;
    bool no_wavelet_lstm = false;
    bool gaussian_emissions = false;
    bool fixed_transitions = false;
    bool literal_eq14 = false;
    bool wavelet_details = false;

    int head_dim() const { return hidden / heads; }
    int coarse_stride() const { return no_wavelet_lstm ? 1 : (1 << wavelet_levels); }

    int receptive_field() const {
        if (no_dilated) return 1;
        int rf = 1;
        for (int d : dilations) rf += (kernel - 1) * d;
        return rf;
    }

    int lstm_input_dim() const { return wavelet_details ? 2 * feature_dim : feature_dim; }

    // Steps excluded from the loss and from predictions: enough history for
    // the convolution stack, the wavelet cascade and the adaptation window,
    // rounded up so window starts stay aligned with the coarse clock.
    int warmup() const {
        int s = coarse_stride();
        int w = std::max({receptive_field(), s, adaptation_window});
        return ((w + s - 1) / s) * s;
    }

    void validate() const {
        if (states < 2) throw ConfigError("model: states must be >= 2");
        if (feature_dim < 1) throw ConfigError("model: feature_dim must be >= 1");
        if (hidden < 1) throw ConfigError("model: hidden must be >= 1");
        if (!no_aga && (heads < 1 || hidden % heads != 0))
            throw ConfigError("model: heads must divide hidden");
        if (!no_aga && lookback < 1) throw ConfigError("model: lookback must be >= 1");
        if (flow_layers < 1) throw ConfigError("model: flow_layers must be >= 1");
        if (!no_dilated && dilations.empty()) throw ConfigError("model: dilations empty");
        if (!no_dilated)
            for (size_t i = 1; i < dilations.size(); ++i)
                if (dilations[i] != 2 * dilations[i - 1])
                    throw ConfigError("model: dilation rates must double per layer");
        if (wavelet_levels < 1) throw ConfigError("model: wavelet_levels must be >= 1");
        if (wavelet_length != 2)
            throw ConfigError("model: the model path supports wavelet_length 2");
        if (adaptation_window < 2) throw ConfigError("model: adaptation_window must be >= 2");
        if (no_dilated && no_wavelet_lstm)
            throw ConfigError("model: cannot ablate both pathways");
        for (const std::string& g : gate_inputs) {
            if (g == "sigma" || g == "lambda") continue;
            if (std::find(feature_names().begin(), feature_names().end(), g) ==
                feature_names().end())
                throw ConfigError("model: unknown gate input '" + g + "'");
        }
        if (gate_inputs.empty()) throw ConfigError("model: gate_inputs empty");
    }

    bool has_fine() const { return !no_dilated; }
    bool has_coarse() const { return !no_wavelet_lstm; }
    bool has_gate() const { return !no_aga && has_fine() && has_coarse(); }
    bool has_attention() const { return !no_aga; }
    int context_input_dim() const {
        return (has_fine() ? hidden : 0) + (has_coarse() ? hidden : 0);
    }
};

// Standardization of the raw gate inputs, estimated on the training split
// and carried with the checkpoint.
struct SignalStats {
    double sigma_mean = 0.0, sigma_std = 1.0;
    double lambda_mean = 0.0, lambda_std = 1.0;

    double std_sigma(double s) const { return (s - sigma_mean) / sigma_std; }
    double std_lambda(double l) const { return (l - lambda_mean) / lambda_std; }
};

class Model {
  public:
    ModelConfig cfg;
    FinePathParams fine;
    WaveletParams wavelet;
    LstmParams lstm;
    GateParams gate;
    AttentionParams attn;
    Tensor no_aga_proj;  // fixed buffer, context_input_dim x hidden
    FlowParams flow;
    GaussianEmissionParams gauss;
    TransitionParams trans;
    Tensor pi_logits;  // 1 x K
    Tensor head_w;     // (hidden + K) x 3
    Tensor head_b;     // 1 x 3
    Tensor signal_stats_raw;  // 1 x 4 buffer: sigma mean/std, lambda mean/std

    Model() = default;

    Model(ModelConfig config, uint64_t seed) : cfg(std::move(config)) {
        cfg.validate();
        allocate();
        init_params(seed);
    }

    static Model skeleton(ModelConfig config) {
        Model m;
        m.cfg = std::move(config);
        m.cfg.validate();
        m.allocate();
        return m;
    }

    SignalStats signal_stats() const {
        return {signal_stats_raw.data[0], signal_stats_raw.data[1], signal_stats_raw.data[2],
                signal_stats_raw.data[3]};
    }
    void set_signal_stats(const SignalStats& s) {
        signal_stats_raw.data = {s.sigma_mean, s.sigma_std, s.lambda_mean, s.lambda_std};
    }

    // Enumerates every tensor in a fixed order. Buffers (non-trainable) are
    // visited only when include_buffers is set.
    template <class F>
    void visit(F&& f, bool include_buffers = false) {
        if (cfg.has_fine())
            for (size_t l = 0; l < fine.weights.size(); ++l) {
                f("fine.l" + std::to_string(l) + ".w", fine.weights[l]);
                f("fine.l" + std::to_string(l) + ".b", fine.biases[l]);
            }
        if (cfg.has_coarse()) {
            f("wavelet.h", wavelet.lowpass);
            f("lstm.wi", lstm.wi);
            f("lstm.wf", lstm.wf);
            f("lstm.wg", lstm.wg);
            f("lstm.wo", lstm.wo);
            f("lstm.bi", lstm.bi);
            f("lstm.bf", lstm.bf);
            f("lstm.bg", lstm.bg);
            f("lstm.bo", lstm.bo);
        }
        if (cfg.has_gate()) {
            f("gate.w", gate.w);
            f("gate.b", gate.b);
        }
        if (cfg.has_attention()) {
            f("attn.wq", attn.wq);
            f("attn.wk", attn.wk);
            f("attn.wv", attn.wv);
            f("attn.wo", attn.wo);
        }
        if (!cfg.gaussian_emissions) {
            f("flow.emb", flow.embeddings);
            for (size_t s = 0; s < flow.stacks.size(); ++s)
                for (size_t l = 0; l < flow.stacks[s].size(); ++l) {
                    std::string base = "flow.z" + std::to_string(s) + ".l" + std::to_string(l);
                    CouplingLayer& cl = flow.stacks[s][l];
                    f(base + ".scale.w1", cl.scale_net.w1);
                    f(base + ".scale.b1", cl.scale_net.b1);
                    f(base + ".scale.w2", cl.scale_net.w2);
                    f(base + ".scale.b2", cl.scale_net.b2);
                    f(base + ".shift.w1", cl.shift_net.w1);
                    f(base + ".shift.b1", cl.shift_net.b1);
                    f(base + ".shift.w2", cl.shift_net.w2);
                    f(base + ".shift.b2", cl.shift_net.b2);
                }
        } else {
            f("gauss.emb", gauss.embeddings);
            for (size_t s = 0; s < gauss.mean_nets.size(); ++s) {
                std::string base = "gauss.z" + std::to_string(s);
                f(base + ".mean.w1", gauss.mean_nets[s].w1);
                f(base + ".mean.b1", gauss.mean_nets[s].b1);
                f(base + ".mean.w2", gauss.mean_nets[s].w2);
                f(base + ".mean.b2", gauss.mean_nets[s].b2);
                f(base + ".logvar.w1", gauss.logvar_nets[s].w1);
                f(base + ".logvar.b1", gauss.logvar_nets[s].b1);
                f(base + ".logvar.w2", gauss.logvar_nets[s].w2);
                f(base + ".logvar.b2", gauss.logvar_nets[s].b2);
            }
        }
        for (size_t i = 0; i < trans.proj.size(); ++i)
            f("trans.u" + std::to_string(i), trans.proj[i]);
        f("trans.emb", trans.embeddings);
        f("trans.bias", trans.bias);
        f("trans.pair", trans.pair_bias);
        if (!cfg.fixed_transitions) {
            f("trans.alpha", trans.alpha_raw);
            f("trans.gru.wz", trans.gru.wz);
            f("trans.gru.wr", trans.gru.wr);
            f("trans.gru.wh", trans.gru.wh);
            f("trans.gru.bz", trans.gru.bz);
            f("trans.gru.br", trans.gru.br);
            f("trans.gru.bh", trans.gru.bh);
            f("trans.mlp.w1", trans.offset_mlp.w1);
            f("trans.mlp.b1", trans.offset_mlp.b1);
            f("trans.mlp.w2", trans.offset_mlp.w2);
            f("trans.mlp.b2", trans.offset_mlp.b2);
        }
        f("pi", pi_logits);
        f("head.w", head_w);
        f("head.b", head_b);
        if (include_buffers) {
            f("buf.signal_stats", signal_stats_raw);
            if (cfg.no_aga) f("buf.no_aga_proj", no_aga_proj);
        }
    }

    size_t param_count() {
        size_t n = 0;
        visit([&](const std::string&, Tensor& t) { n += t.size(); });
        return n;
    }

  private:
    void allocate() {
        const int k = cfg.hidden;
        const int m = cfg.feature_dim;
        const int K = cfg.states;
        if (cfg.has_fine())
            fine = FinePathParams::zeros(m, k, cfg.kernel, cfg.dilations);
        if (cfg.has_coarse()) {
            wavelet = WaveletParams::haar(cfg.wavelet_levels);
            lstm = LstmParams::zeros(cfg.lstm_input_dim(), k);
        }
        if (cfg.has_gate()) {
            gate.w = Tensor(static_cast<int>(cfg.gate_inputs.size()), k);
            gate.b = Tensor(1, k);
        }
        if (cfg.has_attention()) {
            attn.wq = Tensor(k, k);
            attn.wk = Tensor(k, k);
            attn.wv = Tensor(k, k);
            attn.wo = Tensor(k, k);
            attn.heads = cfg.heads;
            attn.lookback = cfg.lookback;
        } else {
            no_aga_proj = Tensor(cfg.context_input_dim(), k);
        }
        if (!cfg.gaussian_emissions) {
            flow.dim = m;
            flow.layers = cfg.flow_layers;
            flow.scale_clamp = cfg.scale_clamp;
            flow.per_state_stacks = cfg.per_state_stacks;
            flow.literal_eq14 = cfg.literal_eq14;
            flow.embeddings = Tensor(K, cfg.embed_dim);
            const int stacks = cfg.per_state_stacks ? K : 1;
            const int net_in = (cfg.literal_eq14 ? 0 : m) + cfg.embed_dim + k;
            flow.stacks.assign(static_cast<size_t>(stacks), {});
            for (int s = 0; s < stacks; ++s)
                for (int l = 0; l < cfg.flow_layers; ++l) {
                    CouplingLayer layer;
                    layer.mask = FlowParams::layer_mask(m, l);
                    layer.scale_net = Mlp2::zeros(net_in, cfg.flow_hidden, m);
                    layer.shift_net = Mlp2::zeros(net_in, cfg.flow_hidden, m);
                    flow.stacks[static_cast<size_t>(s)].push_back(std::move(layer));
                }
        } else {
            gauss.dim = m;
            gauss.logvar_clamp = cfg.scale_clamp;
            gauss.embeddings = Tensor(K, cfg.embed_dim);
            const int net_in = cfg.embed_dim + k;
            for (int s = 0; s < K; ++s) {
                gauss.mean_nets.push_back(Mlp2::zeros(net_in, cfg.flow_hidden, m));
                gauss.logvar_nets.push_back(Mlp2::zeros(net_in, cfg.flow_hidden, m));
            }
        }
        trans = TransitionParams::zeros(K, k, cfg.embed_dim, cfg.gru_hidden, cfg.gru_mlp_hidden);
        trans.adaptive = !cfg.fixed_transitions;
        pi_logits = Tensor(1, K);
        head_w = Tensor(k + K, 3);
        head_b = Tensor(1, 3);
        signal_stats_raw = Tensor(1, 4, {0.0, 1.0, 0.0, 1.0});
    }

    static void fill_normal(Tensor& t, Rng& rng, double scale) {
        for (double& v : t.data) v = scale * rng.normal();
    }

    void init_params(uint64_t seed) {
        Rng rng(seed);
        const int k = cfg.hidden;
        const int K = cfg.states;
        if (cfg.has_fine())
            for (size_t l = 0; l < fine.weights.size(); ++l) {
                double fan_in = static_cast<double>(fine.weights[l].rows);
                fill_normal(fine.weights[l], rng, std::sqrt(2.0 / fan_in));
            }
        if (cfg.has_coarse()) {
            double s = 1.0 / std::sqrt(static_cast<double>(cfg.lstm_input_dim() + k));
            fill_normal(lstm.wi, rng, s);
            fill_normal(lstm.wf, rng, s);
            fill_normal(lstm.wg, rng, s);
            fill_normal(lstm.wo, rng, s);
            for (double& v : lstm.bf.data) v = 1.0;  // start with a long memory
        }
        if (cfg.has_attention()) {
            double s = 1.0 / std::sqrt(static_cast<double>(k));
            fill_normal(attn.wq, rng, s);
            fill_normal(attn.wk, rng, s);
            fill_normal(attn.wv, rng, s);
            fill_normal(attn.wo, rng, s);
        } else {
            // fixed projection; seed-independent so every run agrees on it
            Rng fixed(0xA6AF1DD5u);
            fill_normal(no_aga_proj, fixed,
                        1.0 / std::sqrt(static_cast<double>(cfg.context_input_dim())));
        }
        if (!cfg.gaussian_emissions) {
            fill_normal(flow.embeddings, rng, 1.0);
            for (auto& stack : flow.stacks)
                for (CouplingLayer& layer : stack) {
                    double s = 1.0 / std::sqrt(static_cast<double>(layer.scale_net.w1.rows));
                    fill_normal(layer.scale_net.w1, rng, s);
                    fill_normal(layer.shift_net.w1, rng, s);
                    // zero output layers: the flow starts as the identity
                }
        } else {
            fill_normal(gauss.embeddings, rng, 1.0);
            for (int z = 0; z < K; ++z) {
                double s = 1.0 / std::sqrt(static_cast<double>(gauss.mean_nets[z].w1.rows));
                fill_normal(gauss.mean_nets[static_cast<size_t>(z)].w1, rng, s);
                fill_normal(gauss.logvar_nets[static_cast<size_t>(z)].w1, rng, s);
            }
        }
        for (Tensor& u : trans.proj)
            fill_normal(u, rng, 0.1 / std::sqrt(static_cast<double>(k)));
        fill_normal(trans.embeddings, rng, 1.0);
        // persistence prior: favor self-transitions at the start
        for (int i = 0; i < K; ++i) trans.pair_bias.at(i, i) = 3.0;
        trans.alpha_raw.data[0] = std::log(std::exp(0.1) - 1.0);  // softplus^-1(0.1)
        if (!cfg.fixed_transitions) {
            double s = 1.0 / std::sqrt(static_cast<double>(k + cfg.gru_hidden));
            fill_normal(trans.gru.wz, rng, s);
            fill_normal(trans.gru.wr, rng, s);
            fill_normal(trans.gru.wh, rng, s);
            fill_normal(trans.offset_mlp.w1, rng,
                        1.0 / std::sqrt(static_cast<double>(cfg.gru_hidden)));
            // offset_mlp.w2 stays zero: no offset until trained
        }
        fill_normal(head_w, rng, 0.1 / std::sqrt(static_cast<double>(k + K)));
    }
};

}  // namespace aga
