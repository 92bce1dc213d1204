#include "leaky/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "leaky/parallel.hpp"
#include "leaky/plots.hpp"
#include "leaky/png_io.hpp"
#include "leaky/rng.hpp"
#include "leaky/serialize.hpp"

namespace leaky::runner {

namespace fs = std::filesystem;

const std::vector<std::string>& canonical_tags() {
    static const std::vector<std::string> tags = {
        "Baseline", "EA", "DR", "DR+EA", "AFT", "AFT+EA", "AFT+DR", "AFT+DR+EA"};
    return tags;
}

StageSet stages_for_tag(const std::string& tag) {
    for (const auto& t : canonical_tags()) {
        if (t != tag) continue;
        StageSet s;
        s.aft = tag.find("AFT") != std::string::npos;
        s.ea = tag.find("EA") != std::string::npos;
        s.dr = tag.find("DR") != std::string::npos;
        return s;
    }
    fail(ErrorKind::config, "unknown ablation tag: " + tag);
}

Pipeline::Pipeline(ExperimentConfig cfg, bool persist)
    : cfg_(std::move(cfg)), persist_(persist) {
    if (persist_) {
        fs::create_directories(cfg_.out_dir);
        fs::create_directories(out_path("checkpoints"));
        fs::create_directories(out_path("alignment"));
        fs::create_directories(out_path("results"));
        fs::create_directories(out_path("plots"));
        write_file(out_path("effective_config.txt"), cfg_.to_text());
        written_files_.push_back("effective_config.txt");
    }
}

std::string Pipeline::out_path(const std::string& rel) const {
    return (fs::path(cfg_.out_dir) / rel).string();
}

void Pipeline::allow_build_only(const std::set<std::string>& stages) {
    allowed_ = stages;
}

void Pipeline::require_stage_buildable(const std::string& stage) {
    if (!allowed_.empty() && !allowed_.count(stage))
        fail(ErrorKind::dependency,
             "required stage '" + stage +
                 "' is missing; run the subcommand that builds it first");
}

void Pipeline::persist_table(const Table& table, const std::string& rel) {
    if (!persist_) return;
    table.write(out_path(rel));
    written_files_.push_back(rel);
}

// ---------------------------------------------------------------------------
// Stage artifacts
// ---------------------------------------------------------------------------

const corpus::Manifest& Pipeline::manifest() {
    if (manifest_) return *manifest_;
    const std::string path = out_path("corpus/manifest.tsv");
    if (persist_ && fs::exists(path)) {
        manifest_ = std::make_unique<corpus::Manifest>(corpus::load_manifest(path));
        return *manifest_;
    }
    require_stage_buildable("corpus");
    manifest_ = std::make_unique<corpus::Manifest>(
        corpus::generate_corpus(cfg_.corpus, derive_seed(cfg_.seed, "stage.corpus")));
    if (persist_) {
        corpus::save_manifest(*manifest_, out_path("corpus"));
        written_files_.push_back("corpus/manifest.tsv");
    }
    return *manifest_;
}

namespace {
std::uint64_t params_hash(const tower::Checkpoint& ckpt) {
    return ckpt.params.value_hash();
}
}  // namespace

const tower::Checkpoint& Pipeline::original() {
    if (original_) return *original_;
    const std::string path = out_path("checkpoints/original.ckpt");
    if (persist_ && fs::exists(path)) {
        original_ = std::make_unique<tower::Checkpoint>(tower::load_checkpoint(path));
    } else {
        require_stage_buildable("encoder");
        tower::TrainReport report;
        auto ckpt = tower::train_contrastive(manifest(), cfg_.encoder, cfg_.corpus,
                                             derive_seed(cfg_.seed, "stage.encoder"),
                                             &report);
        ckpt.config_hash = cfg_.config_hash();
        original_ = std::make_unique<tower::Checkpoint>(std::move(ckpt));
        if (persist_) {
            tower::save_checkpoint(*original_, path);
            written_files_.push_back("checkpoints/original.ckpt");
        }
    }
    original_hash_ = params_hash(*original_);
    return *original_;
}

const tower::Checkpoint& Pipeline::scorer() {
    if (scorer_) return *scorer_;
    const std::string path = out_path("checkpoints/scorer.ckpt");
    if (persist_ && fs::exists(path)) {
        scorer_ = std::make_unique<tower::Checkpoint>(tower::load_checkpoint(path));
    } else {
        require_stage_buildable("encoder");
        // A held-out CLIP trained on the aux split under a different seed
        // stream mirrors scoring with a different model family.
        EncoderConfig scorer_cfg = cfg_.encoder;
        scorer_cfg.steps = cfg_.fidelity.scorer_steps;
        auto ckpt = tower::train_contrastive(manifest(), scorer_cfg, cfg_.corpus,
                                             derive_seed(cfg_.seed, "stage.scorer"),
                                             nullptr, "aux");
        ckpt.config_hash = cfg_.config_hash();
        scorer_ = std::make_unique<tower::Checkpoint>(std::move(ckpt));
        if (persist_) {
            tower::save_checkpoint(*scorer_, path);
            written_files_.push_back("checkpoints/scorer.ckpt");
        }
    }
    scorer_hash_ = params_hash(*scorer_);
    return *scorer_;
}

const tower::Checkpoint& Pipeline::descriptor() {
    if (descriptor_) return *descriptor_;
    const std::string path = out_path("checkpoints/descriptor.ckpt");
    if (persist_ && fs::exists(path)) {
        descriptor_ = std::make_unique<tower::Checkpoint>(tower::load_checkpoint(path));
        return *descriptor_;
    }
    require_stage_buildable("encoder");
    auto ckpt = fidelity::train_descriptor(manifest(), cfg_.fidelity, cfg_.encoder,
                                           cfg_.corpus,
                                           derive_seed(cfg_.seed, "stage.descriptor"));
    ckpt.config_hash = cfg_.config_hash();
    descriptor_ = std::make_unique<tower::Checkpoint>(std::move(ckpt));
    if (persist_) {
        tower::save_checkpoint(*descriptor_, path);
        written_files_.push_back("checkpoints/descriptor.ckpt");
    }
    return *descriptor_;
}

const tower::Checkpoint& Pipeline::finetuned() {
    if (finetuned_) return *finetuned_;
    const std::string path = out_path("checkpoints/finetuned.ckpt");
    if (persist_ && fs::exists(path)) {
        finetuned_ = std::make_unique<tower::Checkpoint>(tower::load_checkpoint(path));
    } else {
        require_stage_buildable("fare");
        robust::FareReport report;
        auto ckpt = robust::fare_finetune(original(), manifest(), cfg_.fare,
                                          derive_seed(cfg_.seed, "stage.fare"),
                                          &report, cfg_.threads);
        finetuned_ = std::make_unique<tower::Checkpoint>(std::move(ckpt));
        if (persist_) {
            tower::save_checkpoint(*finetuned_, path);
            written_files_.push_back("checkpoints/finetuned.ckpt");
            Table t;
            t.schema = "leakyclip.fare_report.v1";
            t.header = {"heldout_loss_initial", "heldout_loss_final", "clean_drift_mean"};
            t.add_row({fmt_double(report.heldout_loss_initial),
                       fmt_double(report.heldout_loss_final),
                       fmt_double(report.clean_drift_mean)});
            persist_table(t, "results/fare_report.csv");
        }
    }
    finetuned_hash_ = params_hash(*finetuned_);
    return *finetuned_;
}

const align::AlignmentMap& Pipeline::alignment(bool on_finetuned) {
    auto& slot = on_finetuned ? map_ft_ : map_org_;
    if (slot) return *slot;
    const std::string rel = on_finetuned ? "alignment/map_ft.bin" : "alignment/map_org.bin";
    const std::string path = out_path(rel);
    if (persist_ && fs::exists(path)) {
        slot = std::make_unique<align::AlignmentMap>(align::load_alignment_map(path));
        return *slot;
    }
    require_stage_buildable("alignment");
    const auto& enc = on_finetuned ? finetuned() : original();
    const auto aux = manifest().split_indices("aux");
    require(!aux.empty(), ErrorKind::dependency,
            "alignment: manifest has no aux split");
    const int n_aux = std::min<int>(cfg_.align.aux_pairs, static_cast<int>(aux.size()));
    std::vector<std::vector<double>> text_emb(n_aux), image_emb(n_aux);
    parallel_for(
        n_aux,
        [&](std::size_t i) {
            const auto& rec = manifest_->records[aux[i]];
            text_emb[i] = tower::encode_text(enc.params, rec.caption_tokens);
            image_emb[i] = tower::encode_image(enc.params, rec.image);
        },
        cfg_.threads);
    slot = std::make_unique<align::AlignmentMap>(
        align::fit_linear_map(text_emb, image_emb, cfg_.align.sv_cutoff));
    if (persist_) {
        align::save_alignment_map(*slot, path);
        written_files_.push_back(rel);
        write_file(path + ".csv", align::alignment_map_csv(*slot));
        written_files_.push_back(rel + ".csv");
    }
    return *slot;
}

const diffusion::DenoiserParams& Pipeline::denoiser() {
    if (denoiser_) return *denoiser_;
    const std::string path = out_path("checkpoints/denoiser.bin");
    if (persist_ && fs::exists(path)) {
        denoiser_ = std::make_unique<diffusion::DenoiserParams>(
            diffusion::load_denoiser(path));
        return *denoiser_;
    }
    require_stage_buildable("denoiser");
    const auto schedule = diffusion::DiffusionSchedule::linear(
        cfg_.refine.schedule_steps, cfg_.refine.beta_min, cfg_.refine.beta_max);
    diffusion::DenoiserReport report;
    denoiser_ = std::make_unique<diffusion::DenoiserParams>(diffusion::train_denoiser(
        manifest(), schedule, cfg_.refine, &original().params,
        derive_seed(cfg_.seed, "stage.denoiser"), &report));
    if (persist_) {
        diffusion::save_denoiser(*denoiser_, path);
        written_files_.push_back("checkpoints/denoiser.bin");
    }
    return *denoiser_;
}

fidelity::MetricNets Pipeline::metric_nets(const tower::EncoderParams& attacked,
                                           std::uint64_t attacked_hash) {
    fidelity::MetricNets nets;
    nets.feature_net = &scorer().params;
    nets.scorer = &scorer().params;
    nets.descriptor = &descriptor().params;
    nets.scorer_hash = scorer_hash_;
    nets.attacked_hash = attacked_hash;
    (void)attacked;
    return nets;
}

fidelity::HSThresholds Pipeline::thresholds() const {
    fidelity::HSThresholds t;
    t.sscd_min = cfg_.fidelity.hs_sscd_min;
    t.lpips_max = cfg_.fidelity.hs_lpips_max;
    t.ssim_min = cfg_.fidelity.hs_ssim_min;
    t.cs_min = cfg_.fidelity.hs_cs_min;
    return t;
}

// ---------------------------------------------------------------------------
// Cells
// ---------------------------------------------------------------------------

std::vector<SampleResult> Pipeline::run_cell(const std::string& tag,
                                             const std::vector<std::size_t>& records) {
    const StageSet stages = stages_for_tag(tag);
    const tower::Checkpoint& enc = stages.aft ? finetuned() : original();
    const std::uint64_t enc_hash = stages.aft ? finetuned_hash_ : original_hash_;
    const align::AlignmentMap* map = stages.ea ? &alignment(stages.aft) : nullptr;
    const diffusion::DenoiserParams* dn = stages.dr ? &denoiser() : nullptr;
    const auto nets = metric_nets(enc.params, enc_hash);
    const auto hs = thresholds();

    std::vector<SampleResult> results(records.size());
    parallel_for(
        records.size(),
        [&](std::size_t i) {
            const auto& rec = manifest_->records[records[i]];
            const auto u_t = tower::encode_text(enc.params, rec.caption_tokens);
            const auto target = inversion::make_target(
                stages.ea ? inversion::TargetMode::aligned
                          : inversion::TargetMode::baseline,
                u_t, map);
            const auto trace = inversion::invert(
                enc.params, target, cfg_.invert,
                derive_seed(cfg_.seed, "invert." + tag, fnv1a64(rec.id)));
            require(!trace.aborted, ErrorKind::numerical,
                    "inversion diverged (NaN loss) for record " + rec.id);
            Image reconstruction = trace.final_image;
            if (stages.dr) {
                reconstruction = diffusion::refine(
                    reconstruction, *dn, target, cfg_.refine,
                    derive_seed(cfg_.seed, "refine." + tag, fnv1a64(rec.id)));
            }
            SampleResult out;
            out.id = rec.id;
            out.member = rec.member;
            out.final_loss = trace.rows.back().loss;
            out.metrics = fidelity::evaluate(reconstruction, rec.image, nets, hs);
            out.reconstruction = std::move(reconstruction);
            results[i] = std::move(out);
        },
        cfg_.threads);
    return results;
}

CellAggregate Pipeline::aggregate(const std::string& tag,
                                  const std::vector<SampleResult>& results) const {
    require(!results.empty(), ErrorKind::statistics, "aggregate: empty cell");
    CellAggregate agg;
    agg.tag = tag;
    agg.count = static_cast<int>(results.size());
    int hs_count = 0;
    for (const auto& r : results) {
        agg.ssim += r.metrics.ssim;
        agg.lpips += r.metrics.lpips;
        agg.cs += r.metrics.cs;
        agg.sscd += r.metrics.sscd;
        if (r.metrics.hs) ++hs_count;
    }
    const double n = static_cast<double>(results.size());
    agg.ssim /= n;
    agg.lpips /= n;
    agg.cs /= n;
    agg.sscd /= n;
    agg.hs_pct = 100.0 * hs_count / n;
    return agg;
}

Table Pipeline::per_sample_table(const std::string& tag,
                                 const std::vector<SampleResult>& results) const {
    Table t;
    t.schema = "leakyclip.per_sample.v1";
    t.header = {"id", "method", "ssim", "lpips", "cs", "sscd", "hs"};
    for (const auto& r : results)
        t.add_row({r.id, tag, fmt_double(r.metrics.ssim), fmt_double(r.metrics.lpips),
                   fmt_double(r.metrics.cs), fmt_double(r.metrics.sscd),
                   r.metrics.hs ? "1" : "0"});
    return t;
}

Table Pipeline::run_pipeline_tag(const std::string& tag) {
    const auto records = manifest().split_indices("test");
    require(!records.empty(), ErrorKind::dependency, "manifest has no test split");
    const auto results = run_cell(tag, records);
    Table t = per_sample_table(tag, results);
    persist_table(t, "results/per_sample_" + tag + ".csv");
    if (persist_) {
        const std::string dir = out_path("inversions/" + tag);
        fs::create_directories(dir);
        for (const auto& r : results)
            write_png(dir + "/" + r.id + ".png", r.reconstruction);
    }
    return t;
}

Table Pipeline::run_ablation_matrix() {
    const auto records = manifest().split_indices("test");
    require(!records.empty(), ErrorKind::dependency, "manifest has no test split");
    Table t;
    t.schema = "leakyclip.ablation.v1";
    t.header = {"tag", "ssim", "lpips", "cs", "sscd", "hs_pct"};
    Table per_sample;
    per_sample.schema = "leakyclip.per_sample.v1";
    per_sample.header = {"id", "method", "ssim", "lpips", "cs", "sscd", "hs"};
    for (const auto& tag : canonical_tags()) {
        const auto results = run_cell(tag, records);
        const auto agg = aggregate(tag, results);
        t.add_row({tag, fmt_double(agg.ssim), fmt_double(agg.lpips),
                   fmt_double(agg.cs), fmt_double(agg.sscd), fmt_double(agg.hs_pct)});
        for (auto& row : per_sample_table(tag, results).rows)
            per_sample.rows.push_back(row);
    }
    persist_table(t, "results/ablation.csv");
    persist_table(per_sample, "results/ablation_per_sample.csv");
    return t;
}

Table Pipeline::run_sampling_comparison() {
    const auto records = manifest().split_indices("test");
    require(!records.empty(), ErrorKind::dependency, "manifest has no test split");
    const auto& dn = denoiser();
    const auto nets = metric_nets(original().params, original_hash_);
    const auto hs = thresholds();
    const auto& map = alignment(false);

    Table t;
    t.schema = "leakyclip.sampling.v1";
    t.header = {"tag", "ssim", "lpips", "cs", "sscd", "hs_pct"};
    for (const std::string tag : {"SD", "SD+cond"}) {
        std::vector<SampleResult> results(records.size());
        parallel_for(
            records.size(),
            [&](std::size_t i) {
                const auto& rec = manifest_->records[records[i]];
                std::vector<double> cond(dn.cond_dim, 0.0);
                if (tag == "SD+cond") {
                    const auto u_t =
                        tower::encode_text(original().params, rec.caption_tokens);
                    cond = align::apply_map(map, u_t);
                }
                const Image sampled = diffusion::sample(
                    dn, cond, cfg_.refine.sample_steps,
                    derive_seed(cfg_.seed, "sample." + tag, fnv1a64(rec.id)));
                SampleResult out;
                out.id = rec.id;
                out.member = rec.member;
                out.metrics = fidelity::evaluate(sampled, rec.image, nets, hs);
                results[i] = std::move(out);
            },
            cfg_.threads);
        const auto agg = aggregate(tag, results);
        t.add_row({tag, fmt_double(agg.ssim), fmt_double(agg.lpips),
                   fmt_double(agg.cs), fmt_double(agg.sscd), fmt_double(agg.hs_pct)});
    }
    persist_table(t, "results/sampling.csv");
    return t;
}

Table Pipeline::run_eps_sweep(const std::vector<double>& eps_values) {
    require(!eps_values.empty(), ErrorKind::config, "eps sweep: empty list");
    const auto records = manifest().split_indices("test");
    require(!records.empty(), ErrorKind::dependency, "manifest has no test split");
    const auto nets = metric_nets(original().params, original_hash_);
    const auto hs = thresholds();

    Table t;
    t.schema = "leakyclip.eps_sweep.v1";
    t.header = {"eps", "ssim", "lpips", "cs", "sscd", "hs_pct"};
    for (std::size_t e = 0; e < eps_values.size(); ++e) {
        if (eps_values[e] == cfg_.fare.pgd.epsilon) {
            // the configured epsilon is exactly the standard AFT+DR+EA cell
            const auto results = run_cell("AFT+DR+EA", records);
            const auto agg = aggregate("AFT+DR+EA", results);
            t.add_row({fmt_double(eps_values[e]), fmt_double(agg.ssim),
                       fmt_double(agg.lpips), fmt_double(agg.cs),
                       fmt_double(agg.sscd), fmt_double(agg.hs_pct)});
            continue;
        }
        FareConfig fare_cfg = cfg_.fare;
        fare_cfg.pgd.epsilon = eps_values[e];
        auto ft = robust::fare_finetune(original(), manifest(), fare_cfg,
                                        derive_seed(cfg_.seed, "eps.fare", e),
                                        nullptr, cfg_.threads);
        const std::uint64_t ft_hash = ft.params.value_hash();

        // refit the map on this fine-tuned encoder
        const auto aux = manifest().split_indices("aux");
        const int n_aux =
            std::min<int>(cfg_.align.aux_pairs, static_cast<int>(aux.size()));
        std::vector<std::vector<double>> text_emb(n_aux), image_emb(n_aux);
        parallel_for(
            n_aux,
            [&](std::size_t i) {
                const auto& rec = manifest_->records[aux[i]];
                text_emb[i] = tower::encode_text(ft.params, rec.caption_tokens);
                image_emb[i] = tower::encode_image(ft.params, rec.image);
            },
            cfg_.threads);
        const auto map = align::fit_linear_map(text_emb, image_emb, cfg_.align.sv_cutoff);

        std::vector<SampleResult> results(records.size());
        auto local_nets = nets;
        local_nets.attacked_hash = ft_hash;
        parallel_for(
            records.size(),
            [&](std::size_t i) {
                const auto& rec = manifest_->records[records[i]];
                const auto u_t = tower::encode_text(ft.params, rec.caption_tokens);
                const auto target = align::apply_map(map, u_t);
                const auto trace = inversion::invert(
                    ft.params, target, cfg_.invert,
                    derive_seed(cfg_.seed, "eps.invert", fnv1a64(rec.id) ^ e));
                require(!trace.aborted, ErrorKind::numerical,
                        "inversion diverged for record " + rec.id);
                Image rec_img = diffusion::refine(
                    trace.final_image, denoiser(), target, cfg_.refine,
                    derive_seed(cfg_.seed, "eps.refine", fnv1a64(rec.id) ^ e));
                SampleResult out;
                out.id = rec.id;
                out.metrics = fidelity::evaluate(rec_img, rec.image, local_nets, hs);
                results[i] = std::move(out);
            },
            cfg_.threads);
        const auto agg = aggregate("AFT+DR+EA", results);
        t.add_row({fmt_double(eps_values[e]), fmt_double(agg.ssim),
                   fmt_double(agg.lpips), fmt_double(agg.cs), fmt_double(agg.sscd),
                   fmt_double(agg.hs_pct)});
    }
    persist_table(t, "results/eps_sweep.csv");
    return t;
}

// ---------------------------------------------------------------------------
// MIA
// ---------------------------------------------------------------------------

Pipeline::MiaOutput Pipeline::run_mia() {
    auto records = manifest().split_indices("test");
    const auto nonmembers = manifest().split_indices("nonmember");
    require(!records.empty() && !nonmembers.empty(), ErrorKind::dependency,
            "mia: needs test and nonmember splits");
    records.insert(records.end(), nonmembers.begin(), nonmembers.end());

    const auto results = run_cell(cfg_.mia.tag, records);
    std::vector<std::pair<fidelity::MetricVector, bool>> reports;
    for (const auto& r : results) reports.emplace_back(r.metrics, r.member);

    MiaOutput out;
    out.dataset = leakage::build_mia_dataset(reports, cfg_.mia.filter_sscd_max,
                                             derive_seed(cfg_.seed, "mia.balance"),
                                             cfg_.mia.train_fraction);

    out.report.schema = "leakyclip.mia.v1";
    out.report.header = {"model", "classifier", "acc", "auc", "tp", "fp", "tn", "fn"};
    out.null_report.schema = "leakyclip.mia_null.v1";
    out.null_report.header = {"classifier", "permutation", "auc"};

    leakage::ForestConfig forest;
    forest.trees = cfg_.mia.rf_trees;
    forest.max_depth = cfg_.mia.rf_max_depth;
    for (const auto kind : {leakage::ClassifierKind::random_forest,
                            leakage::ClassifierKind::logistic_regression,
                            leakage::ClassifierKind::linear_svm}) {
        const auto model = leakage::train_classifier(
            out.dataset.train, kind, derive_seed(cfg_.seed, "mia.train"), forest);
        const auto rep = leakage::evaluate_mia(model, out.dataset.test);
        out.report.add_row({"toy_two_tower", leakage::classifier_name(kind),
                            fmt_double(rep.accuracy), fmt_double(rep.auc),
                            fmt_int(rep.tp), fmt_int(rep.fp), fmt_int(rep.tn),
                            fmt_int(rep.fn)});
        for (int p = 0; p < cfg_.mia.permutations; ++p) {
            const double null_auc = leakage::permuted_label_auc(
                out.dataset, kind, derive_seed(cfg_.seed, "mia.null", p), forest);
            out.null_report.add_row({leakage::classifier_name(kind), fmt_int(p),
                                     fmt_double(null_auc)});
        }
    }
    persist_table(out.report, "results/mia.csv");
    persist_table(out.null_report, "results/mia_null.csv");
    return out;
}

// ---------------------------------------------------------------------------
// Memorization theory
// ---------------------------------------------------------------------------

namespace {

memtheory::MixtureSpec random_two_component(int dim, Rng& rng) {
    memtheory::MixtureSpec spec;
    spec.dim = dim;
    const double w = rng.uniform(0.3, 0.7);
    for (int k = 0; k < 2; ++k) {
        memtheory::MixtureComponent c;
        c.weight = k == 0 ? w : 1.0 - w;
        c.center.resize(dim);
        double norm = 0.0;
        for (double& v : c.center) {
            v = rng.normal();
            norm += v * v;
        }
        const double kappa = rng.uniform(1.5, 6.0);
        norm = std::sqrt(norm);
        for (double& v : c.center) v = v / norm * kappa;
        spec.components.push_back(std::move(c));
    }
    return spec;
}

memtheory::MixtureSpec antipodal_pair(int dim, double kappa) {
    memtheory::MixtureSpec spec;
    spec.dim = dim;
    for (int k = 0; k < 2; ++k) {
        memtheory::MixtureComponent c;
        c.weight = 0.5;
        c.center.assign(dim, 0.0);
        c.center[0] = k == 0 ? kappa : -kappa;
        spec.components.push_back(std::move(c));
    }
    return spec;
}

memtheory::NestedMixture nested_three_level(int dim) {
    // Colinear centers along e1, tuned so each level clears the eta = 2
    // threshold with margin (checked at runtime from estimated moments).
    memtheory::NestedMixture nest;
    nest.dim = dim;
    auto axis = [dim](double kappa) {
        std::vector<double> c(dim, 0.0);
        c[0] = kappa;
        return c;
    };
    nest.sibling_centers = {axis(-5.5), axis(4.4), axis(10.5)};
    nest.weights = {0.5, 0.5, 0.5};
    nest.deepest_center = axis(34.0);
    return nest;
}

}  // namespace

Table Pipeline::run_memtheory_oracles() {
    const auto& mt = cfg_.memtheory;
    Table t;
    t.schema = "leakyclip.memtheory.v1";
    t.header = {"experiment", "ratio_mc", "ratio_closed", "bound", "pass"};

    Rng mix_rng = substream(cfg_.seed, "memtheory.mixtures");
    for (int i = 0; i < mt.mixtures; ++i) {
        const auto spec = random_two_component(mt.dim, mix_rng);
        const auto check = memtheory::check_theorem_ratio(
            spec, 0, mt.kernel_variance, mt.n_data, mt.n_gen,
            derive_seed(cfg_.seed, "memtheory.check", i));
        t.add_row({"two_component_" + fmt_int(i), fmt_double(check.mc_ratio),
                   fmt_double(check.closed_form), "", check.agreement ? "1" : "0"});
    }

    {
        memtheory::MixtureSpec single;
        single.dim = mt.dim;
        memtheory::MixtureComponent c;
        c.weight = 1.0;
        c.center.assign(mt.dim, 0.0);
        c.center[0] = 3.0;
        single.components.push_back(c);
        const auto check = memtheory::check_theorem_ratio(
            single, 0, mt.kernel_variance, mt.n_data, mt.n_gen,
            derive_seed(cfg_.seed, "memtheory.single"));
        const bool pass = std::abs(check.mc_ratio - 1.0) <= 3.0 * check.std_error &&
                          !check.hypothesis_met;
        t.add_row({"single_component", fmt_double(check.mc_ratio),
                   fmt_double(check.closed_form), fmt_double(1.0), pass ? "1" : "0"});
    }

    {
        const auto spec = antipodal_pair(mt.dim, 7.0);
        const auto check = memtheory::check_theorem_ratio(
            spec, 0, mt.kernel_variance, mt.n_data, mt.n_gen,
            derive_seed(cfg_.seed, "memtheory.eta"), mt.eta);
        const double bound = 2.0 / (2.0 + mt.eta);
        const bool pass = check.hypothesis_met && check.strengthened_met &&
                          check.mc_ratio <= bound + 3.0 * check.std_error;
        t.add_row({"theorem_eta", fmt_double(check.mc_ratio),
                   fmt_double(check.closed_form), fmt_double(bound),
                   pass ? "1" : "0"});
    }

    {
        const auto nest = nested_three_level(mt.dim);
        const auto seq = memtheory::corollary_sequential(
            nest, mt.eta, mt.kernel_variance, mt.n_data, mt.n_gen,
            derive_seed(cfg_.seed, "memtheory.corollary"));
        const double bound = std::pow(2.0 / (2.0 + mt.eta), nest.levels());
        const bool pass = seq.all_hypotheses_met && !seq.levels.empty() &&
                          seq.levels.back().cumulative <=
                              bound + 3.0 * seq.levels.back().std_error;
        t.add_row({"corollary_3level",
                   fmt_double(seq.levels.empty() ? 0.0 : seq.levels.back().cumulative),
                   fmt_double(seq.direct_ratio), fmt_double(bound), pass ? "1" : "0"});
    }

    {
        const auto spec = antipodal_pair(mt.dim, 3.0);
        const auto check = memtheory::sigma_decomposition_check(
            spec, std::max(10000, mt.n_gen), derive_seed(cfg_.seed, "memtheory.sigma"));
        t.add_row({"sigma_decomposition", fmt_double(check.residual),
                   fmt_double(0.0), fmt_double(check.bound), check.pass ? "1" : "0"});
    }

    persist_table(t, "results/memtheory.csv");
    return t;
}

std::vector<std::size_t> Pipeline::regression_pool(int per_level) const {
    // Records grouped by their natural caption slot count; take up to
    // per_level for each count 1..slots.
    const auto& tmpl = manifest_->caption_template;
    const int max_slots = static_cast<int>(tmpl.slots.size());
    std::map<int, std::vector<std::size_t>> by_slots;
    for (std::size_t i = 0; i < manifest_->records.size(); ++i) {
        const auto& rec = manifest_->records[i];
        if (!rec.member) continue;
        int slots = 0;
        for (int v : tmpl.parse(rec.caption))
            if (v >= 0) ++slots;
        by_slots[slots].push_back(i);
    }
    std::vector<std::size_t> pool;
    for (int s = 1; s <= max_slots; ++s) {
        const auto it = by_slots.find(s);
        require(it != by_slots.end() && !it->second.empty(), ErrorKind::statistics,
                "token regression: no member records with " + fmt_int(s) +
                    " caption slots");
        for (int i = 0; i < per_level && i < static_cast<int>(it->second.size()); ++i)
            pool.push_back(it->second[i]);
    }
    return pool;
}

Pipeline::RegressionOutput Pipeline::run_token_regression() {
    const auto& tmpl = manifest().caption_template;
    const auto pool = regression_pool(cfg_.memtheory.regression_samples_per_level);
    const auto& enc = original();

    std::vector<double> slot_counts(pool.size());
    std::vector<double> losses(pool.size());
    Table per_sample;
    per_sample.schema = "leakyclip.token_regression.v1";
    per_sample.header = {"id", "slots", "loss"};

    std::vector<std::pair<int, double>> rows(pool.size());
    parallel_for(
        pool.size(),
        [&](std::size_t i) {
            const auto& rec = manifest_->records[pool[i]];
            int slots = 0;
            for (int v : tmpl.parse(rec.caption))
                if (v >= 0) ++slots;
            const auto u_t = tower::encode_text(enc.params, rec.caption_tokens);
            const auto trace = inversion::invert(
                enc.params, u_t, cfg_.invert,
                derive_seed(cfg_.seed, "regression.invert", fnv1a64(rec.id)));
            require(!trace.aborted, ErrorKind::numerical,
                    "inversion diverged for record " + rec.id);
            rows[i] = {slots, trace.best_loss};
        },
        cfg_.threads);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        slot_counts[i] = rows[i].first;
        losses[i] = std::max(rows[i].second, 1e-12);
        per_sample.add_row({manifest_->records[pool[i]].id, fmt_int(rows[i].first),
                            fmt_double(losses[i])});
    }

    RegressionOutput out;
    out.ols = memtheory::ols_fit(slot_counts, losses);
    out.per_sample = std::move(per_sample);
    out.summary.schema = "leakyclip.regression_summary.v1";
    out.summary.header = {"variable", "coefficient", "std_error"};
    out.summary.add_row({"alpha", fmt_double(out.ols.alpha), fmt_double(out.ols.se_alpha)});
    out.summary.add_row({"beta", fmt_double(out.ols.beta), fmt_double(out.ols.se_beta)});
    out.summary.add_row({"r_squared", fmt_double(out.ols.r_squared), ""});
    out.summary.add_row({"f_statistic", fmt_double(out.ols.f_statistic), ""});
    out.summary.add_row({"p_beta", fmt_double(out.ols.p_beta), ""});
    persist_table(out.summary, "results/regression_summary.csv");
    persist_table(out.per_sample, "results/regression_per_sample.csv");
    return out;
}

// ---------------------------------------------------------------------------
// Fragility
// ---------------------------------------------------------------------------

Table Pipeline::run_fragility() {
    const auto records = manifest().split_indices("test");
    require(!records.empty(), ErrorKind::dependency, "fragility: no test split");
    const std::string tag = "AFT+DR+EA";
    const auto base = run_cell(tag, records);

    const StageSet stages = stages_for_tag(tag);
    const tower::Checkpoint& enc = finetuned();
    const auto& map = alignment(true);
    const auto nets = metric_nets(enc.params, finetuned_hash_);
    const auto hs = thresholds();

    Table t;
    t.schema = "leakyclip.fragility.v1";
    t.header = {"perturbation", "ssim_ratio", "lpips_ratio", "cs_ratio",
                "sscd_ratio", "n_memorized", "n_other"};

    for (const auto kind :
         {corpus::PerturbKind::minor_typo, corpus::PerturbKind::clause_reorder}) {
        const std::string kind_name =
            kind == corpus::PerturbKind::minor_typo ? "minor_typo" : "clause_reorder";
        std::vector<fidelity::MetricVector> perturbed(records.size());
        parallel_for(
            records.size(),
            [&](std::size_t i) {
                const auto& rec = manifest_->records[records[i]];
                const auto perturbed_tokens = corpus::perturb_caption(
                    rec.caption_tokens, kind,
                    derive_seed(cfg_.seed, "fragility." + kind_name, fnv1a64(rec.id)));
                const auto u_t =
                    tower::encode_text(enc.params, perturbed_tokens.tokens);
                const auto target = align::apply_map(map, u_t);
                const auto trace = inversion::invert(
                    enc.params, target, cfg_.invert,
                    derive_seed(cfg_.seed, "fragility.invert." + kind_name,
                                fnv1a64(rec.id)));
                require(!trace.aborted, ErrorKind::numerical,
                        "inversion diverged for record " + rec.id);
                Image img = trace.final_image;
                if (stages.dr)
                    img = diffusion::refine(
                        img, denoiser(), target, cfg_.refine,
                        derive_seed(cfg_.seed, "fragility.refine." + kind_name,
                                    fnv1a64(rec.id)));
                perturbed[i] = fidelity::evaluate(img, rec.image, nets, hs);
            },
            cfg_.threads);

        // absolute metric change; memorized = HS under the configured
        // thresholds on the unperturbed reconstruction
        std::vector<double> mem_d[4], non_d[4];
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& b = base[i].metrics;
            const auto& p = perturbed[i];
            const double deltas[4] = {std::abs(p.ssim - b.ssim),
                                      std::abs(p.lpips - b.lpips),
                                      std::abs(p.cs - b.cs),
                                      std::abs(p.sscd - b.sscd)};
            for (int m = 0; m < 4; ++m)
                (b.hs ? mem_d[m] : non_d[m]).push_back(deltas[m]);
        }
        require(!mem_d[0].empty() && !non_d[0].empty(), ErrorKind::statistics,
                "fragility: needs both memorized (HS) and non-memorized samples; "
                "adjust fidelity.hs_* thresholds for the toy scale");
        t.add_row({kind_name,
                   fmt_double(leakage::amplification_ratio(mem_d[0], non_d[0])),
                   fmt_double(leakage::amplification_ratio(mem_d[1], non_d[1])),
                   fmt_double(leakage::amplification_ratio(mem_d[2], non_d[2])),
                   fmt_double(leakage::amplification_ratio(mem_d[3], non_d[3])),
                   fmt_int(static_cast<long long>(mem_d[0].size())),
                   fmt_int(static_cast<long long>(non_d[0].size()))});
    }
    persist_table(t, "results/fragility.csv");
    return t;
}

robust::SmoothnessReport Pipeline::smoothness_report() {
    const auto records = manifest().split_indices("test");
    require(records.size() >= 20, ErrorKind::statistics,
            "smoothness: needs at least 20 test records");
    std::vector<tower::Embedding> targets(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        targets[i] = tower::encode_text(original().params,
                                        manifest_->records[records[i]].caption_tokens);
    std::vector<std::pair<const Image*, const tower::Embedding*>> probes;
    for (std::size_t i = 0; i < records.size(); ++i)
        probes.emplace_back(&manifest_->records[records[i]].image, &targets[i]);
    auto rep = robust::gradient_smoothness_report(original().params,
                                                  finetuned().params, probes);
    if (persist_) {
        write_file(out_path("results/smoothness.csv"), robust::smoothness_csv(rep));
        written_files_.push_back("results/smoothness.csv");
    }
    return rep;
}

Table Pipeline::alignment_curve() {
    const auto aux = manifest().split_indices("aux");
    const auto test = manifest().split_indices("test");
    require(!aux.empty() && !test.empty(), ErrorKind::dependency,
            "alignment curve: needs aux and test splits");
    const auto& enc = original();

    const int n_aux = std::min<int>(cfg_.align.aux_pairs, static_cast<int>(aux.size()));
    std::vector<std::vector<double>> text_emb(n_aux), image_emb(n_aux);
    parallel_for(
        n_aux,
        [&](std::size_t i) {
            const auto& rec = manifest_->records[aux[i]];
            text_emb[i] = tower::encode_text(enc.params, rec.caption_tokens);
            image_emb[i] = tower::encode_image(enc.params, rec.image);
        },
        cfg_.threads);
    std::vector<std::vector<double>> held_text(test.size()), held_image(test.size());
    parallel_for(
        test.size(),
        [&](std::size_t i) {
            const auto& rec = manifest_->records[test[i]];
            held_text[i] = tower::encode_text(enc.params, rec.caption_tokens);
            held_image[i] = tower::encode_image(enc.params, rec.image);
        },
        cfg_.threads);

    Table t;
    t.schema = "leakyclip.alignment_curve.v1";
    t.header = {"aux_size", "mean_cosine", "baseline_cosine", "mean_l1", "frobenius"};
    for (int size : {50, 100, 200, 400, 800, 1200, 1600, 2000}) {
        if (size > n_aux) break;
        std::vector<std::vector<double>> st(text_emb.begin(), text_emb.begin() + size);
        std::vector<std::vector<double>> si(image_emb.begin(), image_emb.begin() + size);
        const auto map = align::fit_linear_map(st, si, cfg_.align.sv_cutoff);
        const auto rep = align::alignment_report(map, held_text, held_image);
        t.add_row({fmt_int(size), fmt_double(rep.mean_cosine),
                   fmt_double(rep.baseline_mean_cosine),
                   fmt_double(rep.mean_l1_per_element),
                   fmt_double(rep.frobenius_error)});
    }
    persist_table(t, "results/alignment_curve.csv");
    return t;
}

// ---------------------------------------------------------------------------
// Plots / provenance
// ---------------------------------------------------------------------------

void Pipeline::emit_plots() {
    require(persist_, ErrorKind::config, "emit_plots requires an output directory");
    int emitted = 0;

    const std::string smooth_path = out_path("results/smoothness.csv");
    if (fs::exists(smooth_path)) {
        const Table t = read_table(smooth_path);
        std::vector<double> a, b;
        for (const auto& row : t.rows)
            (row[2] == "a" ? a : b).push_back(std::strtod(row[1].c_str(), nullptr));
        if (!a.empty() && !b.empty()) {
            const auto svg = plots::histogram_svg(
                "gradient norm distribution (a=original, b=finetuned)",
                {{"original", plots::histogram(a, 24)},
                 {"finetuned", plots::histogram(b, 24)}});
            write_file(out_path("plots/gradient_norms.svg"), svg);
            written_files_.push_back("plots/gradient_norms.svg");
            ++emitted;
        }
    }

    const std::string curve_path = out_path("results/alignment_curve.csv");
    if (fs::exists(curve_path)) {
        const Table t = read_table(curve_path);
        plots::Series mapped{"u_T M vs u_I", {}, {}};
        plots::Series baseline{"u_T vs u_I", {}, {}};
        for (const auto& row : t.rows) {
            mapped.x.push_back(std::strtod(row[0].c_str(), nullptr));
            mapped.y.push_back(std::strtod(row[1].c_str(), nullptr));
            baseline.x.push_back(std::strtod(row[0].c_str(), nullptr));
            baseline.y.push_back(std::strtod(row[2].c_str(), nullptr));
        }
        if (!mapped.x.empty()) {
            write_file(out_path("plots/alignment_curve.svg"),
                       plots::curve_svg("held-out cosine vs aux size",
                                        {mapped, baseline}));
            written_files_.push_back("plots/alignment_curve.svg");
            ++emitted;
        }
    }

    const std::string reg_path = out_path("results/regression_per_sample.csv");
    if (fs::exists(reg_path)) {
        const Table t = read_table(reg_path);
        plots::Series pts{"log loss", {}, {}};
        std::vector<double> slots, losses;
        for (const auto& row : t.rows) {
            slots.push_back(std::strtod(row[1].c_str(), nullptr));
            losses.push_back(std::strtod(row[2].c_str(), nullptr));
            pts.x.push_back(slots.back());
            pts.y.push_back(std::log(losses.back()));
        }
        if (!pts.x.empty()) {
            const auto ols = memtheory::ols_fit(slots, losses);
            write_file(out_path("plots/token_regression.svg"),
                       plots::scatter_svg("log inversion loss vs caption slots", pts,
                                          ols.alpha, ols.beta, true));
            written_files_.push_back("plots/token_regression.svg");
            ++emitted;
        }
    }

    if (emitted == 0)
        std::fprintf(stderr,
                     "warning: no result tables found under %s; no plots emitted\n",
                     out_path("results").c_str());
}

void Pipeline::write_provenance() {
    if (!persist_) return;
    std::string text = "config_hash=" + hex64(cfg_.config_hash()) + "\n";
    auto add_hash = [&](const char* name, const std::string& rel) {
        const std::string path = out_path(rel);
        if (fs::exists(path))
            text += std::string(name) + "_hash=" + hex64(file_hash(path)) + "\n";
    };
    add_hash("original", "checkpoints/original.ckpt");
    add_hash("finetuned", "checkpoints/finetuned.ckpt");
    add_hash("scorer", "checkpoints/scorer.ckpt");
    add_hash("descriptor", "checkpoints/descriptor.ckpt");
    add_hash("denoiser", "checkpoints/denoiser.bin");
    std::sort(written_files_.begin(), written_files_.end());
    written_files_.erase(std::unique(written_files_.begin(), written_files_.end()),
                         written_files_.end());
    text += "files:\n";
    for (const auto& f : written_files_) text += "  " + f + "\n";
    write_file(out_path("provenance.txt"), text);
}

}  // namespace leaky::runner
