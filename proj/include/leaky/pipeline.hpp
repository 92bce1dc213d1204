#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "leaky/align.hpp"
#include "leaky/config.hpp"
#include "leaky/corpus.hpp"
#include "leaky/csv.hpp"
#include "leaky/fidelity.hpp"
#include "leaky/invert.hpp"
#include "leaky/leakage.hpp"
#include "leaky/memtheory.hpp"
#include "leaky/refine.hpp"
#include "leaky/robustify.hpp"
#include "leaky/two_tower.hpp"

namespace leaky::runner {

struct StageSet {
    bool aft = false, ea = false, dr = false;
};

// Total mapping for all 8 ablation tags, Table-1 row order.
const std::vector<std::string>& canonical_tags();
StageSet stages_for_tag(const std::string& tag);

struct SampleResult {
    std::string id;
    bool member = false;
    fidelity::MetricVector metrics;
    double final_loss = 0.0;
    Image reconstruction;
};

struct CellAggregate {
    std::string tag;
    double ssim = 0.0, lpips = 0.0, cs = 0.0, sscd = 0.0, hs_pct = 0.0;
    int count = 0;
};

// Lazily builds and caches every stage artifact. With an output directory
// attached, stages persist to disk and reload on later runs; stages that are
// required but neither cached nor buildable raise a dependency error naming
// the stage.
class Pipeline {
  public:
    explicit Pipeline(ExperimentConfig cfg, bool persist = false);

    // Restrict building to the named stages; everything else must already
    // exist. Call with no arguments to allow everything (default).
    void allow_build_only(const std::set<std::string>& stages);

    const ExperimentConfig& config() const { return cfg_; }
    const corpus::Manifest& manifest();
    const tower::Checkpoint& original();
    const tower::Checkpoint& finetuned();
    const tower::Checkpoint& scorer();
    const tower::Checkpoint& descriptor();
    const align::AlignmentMap& alignment(bool on_finetuned);
    const diffusion::DenoiserParams& denoiser();

    fidelity::MetricNets metric_nets(const tower::EncoderParams& attacked,
                                     std::uint64_t attacked_hash);
    fidelity::HSThresholds thresholds() const;

    std::vector<SampleResult> run_cell(const std::string& tag,
                                       const std::vector<std::size_t>& records);
    CellAggregate aggregate(const std::string& tag,
                            const std::vector<SampleResult>& results) const;

    Table per_sample_table(const std::string& tag,
                           const std::vector<SampleResult>& results) const;
    Table run_pipeline_tag(const std::string& tag);  // test split, persists rows
    Table run_ablation_matrix();
    Table run_sampling_comparison();  // unconditional + conditioned diffusion rows
    Table run_eps_sweep(const std::vector<double>& eps_values);

    struct MiaOutput {
        Table report;       // Table-3 layout
        Table null_report;  // permuted-label null per classifier
        leakage::MIADataset dataset;
    };
    MiaOutput run_mia();

    Table run_memtheory_oracles();

    struct RegressionOutput {
        Table summary;     // Table-4 layout
        Table per_sample;  // (id, slots, loss)
        memtheory::OLSResult ols;
    };
    RegressionOutput run_token_regression();

    Table run_fragility();
    robust::SmoothnessReport smoothness_report();
    Table alignment_curve();

    void emit_plots();
    void write_provenance();

    std::string out_path(const std::string& rel) const;
    void persist_table(const Table& table, const std::string& rel);

  private:
    void require_stage_buildable(const std::string& stage);
    std::vector<std::size_t> regression_pool(int per_level) const;

    ExperimentConfig cfg_;
    bool persist_ = false;
    std::set<std::string> allowed_;  // empty -> everything buildable
    std::vector<std::string> written_files_;

    std::unique_ptr<corpus::Manifest> manifest_;
    std::unique_ptr<tower::Checkpoint> original_, finetuned_, scorer_, descriptor_;
    std::unique_ptr<align::AlignmentMap> map_org_, map_ft_;
    std::unique_ptr<diffusion::DenoiserParams> denoiser_;
    std::uint64_t original_hash_ = 0, finetuned_hash_ = 0, scorer_hash_ = 0;
};

}  // namespace leaky::runner
