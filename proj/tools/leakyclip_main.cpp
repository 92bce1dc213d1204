// Command-line driver: one subcommand per experiment so each results table
// and figure can be reproduced in isolation.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "leaky/common.hpp"
#include "leaky/config.hpp"
#include "leaky/pipeline.hpp"

namespace {

using leaky::ConfigMap;
using leaky::ExperimentConfig;
using leaky::runner::Pipeline;

struct GlobalArgs {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::string out_dir;
    long long seed = -1;
    int threads = -1;
};

ExperimentConfig resolve_config(const GlobalArgs& args) {
    ConfigMap map;
    if (!args.config_path.empty()) map = ConfigMap::parse_file(args.config_path);
    // CLI overrides take precedence over the file, the file over defaults.
    for (const auto& kv : args.overrides) {
        const auto eq = kv.find('=');
        leaky::require(eq != std::string::npos, leaky::ErrorKind::config,
                       "override must be key=value: " + kv);
        map.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!args.out_dir.empty()) map.set("out_dir", args.out_dir);
    if (args.seed >= 0) map.set("seed", std::to_string(args.seed));
    if (args.threads >= 0) map.set("threads", std::to_string(args.threads));
    return ExperimentConfig::from_map(map);
}

void add_global_options(CLI::App* cmd, GlobalArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (key = value lines)");
    cmd->add_option("--set", args.overrides, "override, e.g. --set invert.epochs=50");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "root seed");
    cmd->add_option("--threads", args.threads, "worker threads (0 = all cores)");
}

void print_table(const leaky::Table& t) {
    std::fputs(t.to_csv().c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LeakyCLIP desk-scale laboratory"};
    app.require_subcommand(1);

    GlobalArgs args;
    std::string tag = "Baseline";
    bool oracles_only = false;
    bool with_sampling = false;

    auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
    add_global_options(gen, args);
    auto* train = app.add_subcommand(
        "train-encoder", "train the attacked encoder, scorer, and descriptor");
    add_global_options(train, args);
    auto* fare = app.add_subcommand(
        "finetune-fare", "FARE adversarial fine-tuning + smoothness report");
    add_global_options(fare, args);
    auto* fit = app.add_subcommand(
        "fit-alignment", "fit text->image linear maps + alignment curve");
    add_global_options(fit, args);
    auto* dn = app.add_subcommand("train-denoiser", "train the toy diffusion model");
    add_global_options(dn, args);
    auto* inv = app.add_subcommand("invert", "run inversions for one ablation tag");
    add_global_options(inv, args);
    inv->add_option("--tag", tag, "ablation tag (default Baseline)");
    auto* ablate = app.add_subcommand("ablate", "run the full 8-tag ablation matrix");
    add_global_options(ablate, args);
    ablate->add_flag("--sampling-rows", with_sampling,
                     "also write the diffusion-sampling comparison table");
    auto* sweep = app.add_subcommand("eps-sweep", "FARE epsilon sweep");
    add_global_options(sweep, args);
    auto* mia = app.add_subcommand("mia", "membership inference from metrics");
    add_global_options(mia, args);
    auto* mem = app.add_subcommand("memtheory", "memorization-theory oracles + "
                                                "token-count regression");
    add_global_options(mem, args);
    mem->add_flag("--oracles-only", oracles_only, "skip the regression experiment");
    auto* frag = app.add_subcommand("fragility", "prompt-perturbation amplification");
    add_global_options(frag, args);
    auto* plots_cmd = app.add_subcommand("plots", "emit SVG charts from results");
    add_global_options(plots_cmd, args);

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = resolve_config(args);
        Pipeline pipeline(cfg, /*persist=*/true);

        if (gen->parsed()) {
            pipeline.allow_build_only({"corpus"});
            const auto& m = pipeline.manifest();
            std::printf("corpus: %zu records -> %s\n", m.records.size(),
                        pipeline.out_path("corpus").c_str());
        } else if (train->parsed()) {
            pipeline.allow_build_only({"encoder"});
            pipeline.original();
            pipeline.scorer();
            pipeline.descriptor();
            std::printf("checkpoints written under %s\n",
                        pipeline.out_path("checkpoints").c_str());
        } else if (fare->parsed()) {
            pipeline.allow_build_only({"fare"});
            pipeline.finetuned();
            const auto rep = pipeline.smoothness_report();
            std::printf("smoothness: mean %.6f -> %.6f, variance %.3g -> %.3g\n",
                        rep.mean_a, rep.mean_b, rep.var_a, rep.var_b);
        } else if (fit->parsed()) {
            pipeline.allow_build_only({"alignment"});
            pipeline.alignment(false);
            const bool have_ft = true;
            try {
                pipeline.alignment(have_ft);
            } catch (const leaky::Error& e) {
                if (e.kind() != leaky::ErrorKind::dependency) throw;
                std::printf("note: no fine-tuned checkpoint; only map_org fitted\n");
            }
            print_table(pipeline.alignment_curve());
        } else if (dn->parsed()) {
            pipeline.allow_build_only({"denoiser"});
            pipeline.denoiser();
            std::printf("denoiser written to %s\n",
                        pipeline.out_path("checkpoints/denoiser.bin").c_str());
        } else if (inv->parsed()) {
            pipeline.allow_build_only({});
            print_table(pipeline.run_pipeline_tag(tag));
        } else if (ablate->parsed()) {
            pipeline.allow_build_only({});
            print_table(pipeline.run_ablation_matrix());
            if (with_sampling) print_table(pipeline.run_sampling_comparison());
        } else if (sweep->parsed()) {
            pipeline.allow_build_only({});
            print_table(pipeline.run_eps_sweep(cfg.eps_sweep));
        } else if (mia->parsed()) {
            pipeline.allow_build_only({});
            const auto out = pipeline.run_mia();
            print_table(out.report);
        } else if (mem->parsed()) {
            pipeline.allow_build_only({});
            print_table(pipeline.run_memtheory_oracles());
            if (!oracles_only) {
                const auto reg = pipeline.run_token_regression();
                print_table(reg.summary);
            }
        } else if (frag->parsed()) {
            pipeline.allow_build_only({});
            print_table(pipeline.run_fragility());
        } else if (plots_cmd->parsed()) {
            pipeline.emit_plots();
            std::printf("plots written under %s\n", pipeline.out_path("plots").c_str());
        }

        pipeline.write_provenance();
        return 0;
    } catch (const leaky::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
