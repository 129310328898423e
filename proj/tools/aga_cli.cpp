#include <exception>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "aga/cli.hpp"

namespace {

// 0 success, 2 config error, 3 data error, 4 numeric failure
int run_guarded(int (*cmd)(const aga::CliOptions&), const aga::CliOptions& opt) {
    try {
        return cmd(opt);
    } catch (const aga::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const aga::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const aga::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

void split_commas(const std::string& s, std::vector<std::string>& out) {
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(tok);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive-granularity neural HMM for order-flow sequences"};
    app.require_subcommand(1);

    aga::CliOptions opt;
    std::string ablate_csv;

    auto add_common = [&](CLI::App* sub, bool need_config, bool need_data, bool need_ckpt) {
        auto* c = sub->add_option("--config", opt.config_path, "run configuration file");
        if (need_config) c->required();
        if (need_data) sub->add_option("--data", opt.data_path, "dataset path")->required();
        if (need_ckpt)
            sub->add_option("--checkpoint", opt.checkpoint_path, "model checkpoint")->required();
        sub->add_option("--out", opt.out_dir, "output directory");
        sub->add_option("--seed", opt.seed, "seed override")->each([&](const std::string&) {
            opt.seed_set = true;
        });
        sub->add_option("--ablate", ablate_csv, "comma-separated ablation flags");
    };

    CLI::App* gen = app.add_subcommand("generate", "generate a synthetic order-flow dataset");
    add_common(gen, true, false, false);
    gen->add_option("--format", opt.format, "dataset format: text | binary");

    CLI::App* tr = app.add_subcommand("train", "train a model on a dataset");
    add_common(tr, true, true, false);

    CLI::App* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
    add_common(ev, false, true, true);

    CLI::App* pr = app.add_subcommand("predict", "causal per-step predictions");
    add_common(pr, false, true, true);

    CLI::App* in = app.add_subcommand("inspect", "per-step diagnostics dump");
    add_common(in, false, true, true);

    CLI11_PARSE(app, argc, argv);
    split_commas(ablate_csv, opt.ablate);

    if (gen->parsed()) return run_guarded(aga::cmd_generate, opt);
    if (tr->parsed()) return run_guarded(aga::cmd_train, opt);
    if (ev->parsed()) return run_guarded(aga::cmd_evaluate, opt);
    if (pr->parsed()) return run_guarded(aga::cmd_predict, opt);
    if (in->parsed()) return run_guarded(aga::cmd_inspect, opt);
    return 1;
}
