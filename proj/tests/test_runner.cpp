#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "leaky/pipeline.hpp"
#include "leaky/plots.hpp"
#include "leaky/serialize.hpp"

using namespace leaky;
using namespace leaky::runner;

namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.corpus.height = cfg.corpus.width = 16;
    cfg.corpus.train_size = 104;
    cfg.corpus.test_size = 8;
    cfg.corpus.aux_size = 44;
    cfg.corpus.nonmember_size = 8;
    cfg.encoder.steps = 80;
    cfg.encoder.batch = 6;
    cfg.fidelity.descriptor_steps = 50;
    cfg.fidelity.scorer_steps = 50;
    cfg.fare.epochs = 1;
    cfg.fare.batch = 4;
    cfg.fare.sample_limit = 8;
    cfg.fare.pgd.steps = 3;
    cfg.align.aux_pairs = 44;
    cfg.invert.epochs = 10;
    cfg.refine.base_channels = 6;
    cfg.refine.train_steps = 60;
    cfg.refine.schedule_steps = 100;
    cfg.refine.sample_steps = 10;
    cfg.refine.batch = 4;
    cfg.memtheory.n_data = 4000;
    cfg.memtheory.n_gen = 4000;
    cfg.memtheory.mixtures = 2;
    cfg.memtheory.regression_samples_per_level = 2;
    cfg.mia.filter_sscd_max = 2.0;  // mechanics test: admit everything
    cfg.mia.permutations = 2;
    cfg.threads = 2;
    cfg.seed = 5;
    return cfg;
}

std::string temp_out(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir.string();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LEAKY_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("stage mapping is total over the canonical tags") {
    REQUIRE(canonical_tags().size() == 8);
    CHECK(canonical_tags()[0] == "Baseline");
    CHECK(canonical_tags()[7] == "AFT+DR+EA");
    for (const auto& tag : canonical_tags()) {
        const auto s = stages_for_tag(tag);
        CHECK(s.aft == (tag.find("AFT") != std::string::npos));
        CHECK(s.ea == (tag.find("EA") != std::string::npos));
        CHECK(s.dr == (tag.find("DR") != std::string::npos));
    }
    CHECK_THROWS_AS((void)stages_for_tag("FancyNewMethod"), Error);
}

TEST_CASE("ablation matrix: 8 canonical rows, deterministic across pipelines") {
    auto cfg = tiny_config();
    Pipeline p1(cfg);
    const Table t1 = p1.run_ablation_matrix();
    REQUIRE(t1.rows.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(t1.rows[i][0] == canonical_tags()[i]);

    Pipeline p2(cfg);  // fresh pipeline, same config + seed
    const Table t2 = p2.run_ablation_matrix();
    CHECK(t1.to_csv() == t2.to_csv());
}

TEST_CASE("single-epsilon sweep row equals the AFT+DR+EA cell") {
    auto cfg = tiny_config();
    Pipeline p(cfg);
    const Table matrix = p.run_ablation_matrix();
    const Table sweep = p.run_eps_sweep({cfg.fare.pgd.epsilon});
    REQUIRE(sweep.rows.size() == 1);
    for (int c = 1; c <= 5; ++c) CHECK(sweep.rows[0][c] == matrix.rows[7][c]);

    CHECK_THROWS_AS((void)p.run_eps_sweep({}), Error);
}

TEST_CASE("two-epsilon sweep emits one row per epsilon, deterministically") {
    auto cfg = tiny_config();
    Pipeline p(cfg);
    const std::vector<double> eps = {4.0 / 255.0, 16.0 / 255.0};
    const Table a = p.run_eps_sweep(eps);
    REQUIRE(a.rows.size() == 2);
    Pipeline q(cfg);
    const Table b = q.run_eps_sweep(eps);
    CHECK(a.to_csv() == b.to_csv());
}

TEST_CASE("mia output shapes and determinism") {
    auto cfg = tiny_config();
    Pipeline p(cfg);
    const auto out = p.run_mia();
    REQUIRE(out.report.rows.size() == 3);  // one row per classifier
    for (const auto& row : out.report.rows) CHECK(row[0] == "toy_two_tower");
    CHECK(out.null_report.rows.size() == 3 * 2);  // classifiers x permutations
    // balanced splits
    long long train_members = 0;
    for (const auto& r : out.dataset.train) train_members += r.label;
    CHECK(2 * train_members == static_cast<long long>(out.dataset.train.size()));

    Pipeline q(cfg);
    CHECK(q.run_mia().report.to_csv() == out.report.to_csv());
}

TEST_CASE("memtheory oracle table rows pass at unit scale") {
    auto cfg = tiny_config();
    cfg.memtheory.n_data = 20000;
    cfg.memtheory.n_gen = 20000;
    Pipeline p(cfg);
    const Table t = p.run_memtheory_oracles();
    REQUIRE(t.rows.size() == cfg.memtheory.mixtures + 4);
    for (const auto& row : t.rows) {
        INFO("experiment ", row[0]);
        CHECK(row[4] == "1");
    }
}

TEST_CASE("token regression runs over 1..8 slot captions") {
    auto cfg = tiny_config();
    cfg.corpus.train_size = 120;  // enough member records per slot count
    Pipeline p(cfg);
    const auto out = p.run_token_regression();
    CHECK(out.per_sample.rows.size() >= 16);
    std::set<std::string> slot_values;
    for (const auto& row : out.per_sample.rows) slot_values.insert(row[1]);
    CHECK(slot_values.size() == 8);  // all of 1..8 present
    CHECK(out.summary.rows.size() == 5);
    CHECK(std::isfinite(out.ols.beta));
}

TEST_CASE("fragility mechanics with toy-calibrated HS thresholds") {
    auto cfg = tiny_config();
    // calibrate thresholds from a first pass so both HS groups are non-empty
    Pipeline probe(cfg);
    const auto base = probe.run_cell("AFT+DR+EA",
                                     probe.manifest().split_indices("test"));
    std::vector<double> ssims;
    for (const auto& r : base) ssims.push_back(r.metrics.ssim);
    std::sort(ssims.begin(), ssims.end());
    const double median = ssims[ssims.size() / 2];

    cfg.fidelity.hs_ssim_min = median;
    cfg.fidelity.hs_lpips_max = 1e9;
    cfg.fidelity.hs_cs_min = -1.0;
    cfg.fidelity.hs_sscd_min = -1.0;
    Pipeline p(cfg);
    const Table t = p.run_fragility();
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][0] == "minor_typo");
    CHECK(t.rows[1][0] == "clause_reorder");
    for (const auto& row : t.rows) {
        for (int c = 1; c <= 4; ++c) {
            const double v = std::strtod(row[c].c_str(), nullptr);
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
        }
        const int n_mem = std::atoi(row[5].c_str());
        const int n_other = std::atoi(row[6].c_str());
        CHECK(n_mem >= 1);
        CHECK(n_other >= 1);
        CHECK(n_mem + n_other == 8);
    }
}

TEST_CASE("persisted pipeline enforces buildable stages and writes provenance") {
    auto cfg = tiny_config();
    cfg.out_dir = temp_out("leaky_runner_persist");
    Pipeline p(cfg, /*persist=*/true);
    p.allow_build_only({"corpus"});
    (void)p.manifest();
    try {
        (void)p.original();
        FAIL("expected dependency error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::dependency);
        CHECK(std::string(e.what()).find("encoder") != std::string::npos);
    }
    p.write_provenance();
    CHECK(fs::exists(fs::path(cfg.out_dir) / "effective_config.txt"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "provenance.txt"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "corpus/manifest.tsv"));
}

TEST_CASE("histogram totals equal the sample count") {
    std::vector<double> values;
    for (int i = 0; i < 137; ++i) values.push_back(0.01 * i);
    const auto h = plots::histogram(values, 10);
    int total = 0;
    for (int c : h.counts) total += c;
    CHECK(total == 137);
    CHECK(h.total == 137);
    // deterministic svg bytes
    const auto svg1 = plots::histogram_svg("t", {{"s", h}});
    const auto svg2 = plots::histogram_svg("t", {{"s", h}});
    CHECK(svg1 == svg2);
    CHECK(svg1.find("<svg") != std::string::npos);
}

TEST_CASE("cli: subcommand chain, exit codes, byte-identical reruns") {
    const std::string out = temp_out("leaky_runner_cli");
    const std::string base =
        "--out " + out + " --seed 3"
        " --set corpus.height=16 --set corpus.width=16"
        " --set corpus.train_size=104 --set corpus.test_size=6"
        " --set corpus.aux_size=40 --set corpus.nonmember_size=6"
        " --set encoder.steps=40 --set encoder.batch=6"
        " --set fidelity.descriptor_steps=30 --set fidelity.scorer_steps=30"
        " --set fare.epochs=1 --set fare.batch=4 --set fare.sample_limit=6"
        " --set fare.pgd_steps=2 --set align.aux_pairs=40"
        " --set invert.epochs=6 --set refine.base_channels=6"
        " --set refine.train_steps=40 --set refine.schedule_steps=60"
        " --set refine.sample_steps=8 --set refine.batch=4"
        " --set memtheory.n_data=3000 --set memtheory.n_gen=3000"
        " --set memtheory.mixtures=1 --set memtheory.regression_samples_per_level=1"
        " --set mia.filter_sscd_max=2.0 --set mia.permutations=1 --set threads=2";

    // running an experiment before its stages exist is a dependency error (2)
    CHECK(run_cli("ablate " + base) == 2);
    // invalid config is a config error (1)
    CHECK(run_cli("gen-corpus " + base + " --set corpus.channels=4") == 1);

    CHECK(run_cli("gen-corpus " + base) == 0);
    CHECK(run_cli("train-encoder " + base) == 0);
    CHECK(run_cli("finetune-fare " + base) == 0);
    CHECK(run_cli("fit-alignment " + base) == 0);
    CHECK(run_cli("train-denoiser " + base) == 0);
    CHECK(run_cli("ablate " + base) == 0);
    CHECK(run_cli("memtheory " + base) == 0);
    CHECK(run_cli("mia " + base) == 0);
    CHECK(run_cli("plots " + base) == 0);

    CHECK(fs::exists(fs::path(out) / "results/ablation.csv"));
    CHECK(fs::exists(fs::path(out) / "results/mia.csv"));
    CHECK(fs::exists(fs::path(out) / "results/memtheory.csv"));
    CHECK(fs::exists(fs::path(out) / "results/regression_summary.csv"));
    CHECK(fs::exists(fs::path(out) / "plots/gradient_norms.svg"));
    CHECK(fs::exists(fs::path(out) / "plots/alignment_curve.svg"));
    CHECK(fs::exists(fs::path(out) / "plots/token_regression.svg"));

    // rerunning a subcommand with identical config + seed is byte-identical
    const std::string ablation_before =
        read_file((fs::path(out) / "results/ablation.csv").string());
    CHECK(run_cli("ablate " + base) == 0);
    CHECK(read_file((fs::path(out) / "results/ablation.csv").string()) ==
          ablation_before);

    const std::string mem_before =
        read_file((fs::path(out) / "results/memtheory.csv").string());
    CHECK(run_cli("memtheory " + base + " --oracles-only") == 0);
    CHECK(read_file((fs::path(out) / "results/memtheory.csv").string()) == mem_before);
}
