#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "podmtl/dataio.hpp"
#include "podmtl/evaluation.hpp"
#include "podmtl/training.hpp"

namespace podmtl {

/// One ablation arm: which heads exist, which data sources feed training,
/// and which mask applies. Everything else is pinned by the shared base
/// config so arms differ only in the declared dimensions.
struct ArmSpec {
    std::string name;
    std::vector<std::string> tasks;
    std::set<std::string> promo_tasks;
    std::set<std::string> ad_tasks;
    enum class DataUse { kPromoOnly, kAdOnly, kBoth };
    DataUse data = DataUse::kBoth;
    bool balanced = true;
    // Explicit mask overrides on top of the arm's directional default.
    struct MaskOverride {
        Source source;
        std::string task;
        bool value;
    };
    std::vector<MaskOverride> mask_overrides;

    TaskSpec task_spec() const;
    /// Head used to score promotion impressions (PromotionStream when
    /// present, otherwise AdStream) and ad impressions (vice versa).
    std::string promo_scoring_head() const;
    std::string ad_scoring_head() const;
};

/// The four Table-1-style configurations plus the promotions-only baseline.
std::vector<ArmSpec> standard_arms();

struct ExperimentBase {
    GeneratorConfig world;
    double train_frac = 0.70;
    double val_frac = 0.15;
    ModelConfig model;
    AdamConfig adam;
    std::size_t batch_size = 512;
    std::size_t epochs = 3;
};

struct AblationConfig {
    ExperimentBase base;
    std::vector<std::uint64_t> seeds;
    std::string baseline_arm = "promo_baseline";
    bool save_models = false;
    std::string model_dir;
};

struct ArmSeedOutcome {
    std::uint64_t seed = 0;
    std::optional<double> promo_ap;
    std::optional<double> ads_ap;
    bool failed = false;
    std::string note;
};

struct ArmSummary {
    std::string name;
    std::vector<ArmSeedOutcome> per_seed;
    std::optional<double> mean_promo_ap, mean_ads_ap;
    std::optional<double> sd_promo_ap, sd_ads_ap;
    std::optional<double> promo_ap_rel_change, ads_ap_rel_change;  // vs baseline, percent
    bool failed = false;
};

struct AblationResult {
    std::vector<ArmSummary> arms;  // baseline first
    std::string baseline_arm;
    bool any_failed = false;

    nlohmann::ordered_json to_json() const;
    std::string render_table() const;
};

/// Trains every arm on identical per-seed splits and scores both AP columns
/// on the test split. A diverging arm is marked failed; the others are still
/// reported.
AblationResult run_ablation(const AblationConfig& cfg, const std::vector<ArmSpec>& arms);

/// Train one arm on prepared splits. Exposed for the replay harness.
TrainResult train_arm(const ExperimentBase& base, const ArmSpec& arm, const Splits& splits,
                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// Budget-split replay
// ---------------------------------------------------------------------------

struct ReplayConfig {
    std::size_t opportunities = 30'000;
    std::size_t candidate_pool = 20;
    double cost_per_impression = 0.25;
    std::uint64_t seed = 0;
};

/// A serving policy over a candidate pool. A model policy scores the
/// candidates through its own feature pipeline: a promotions model reused
/// for ad serving keeps consuming the promotion pipeline's features (it has
/// no inputs for ad-specific metadata), while natively-trained ad models
/// read the ad pipeline.
struct ReplayPolicy {
    std::string name;
    enum class Kind { kModel, kTrueProbability, kRandom };
    Kind kind = Kind::kModel;
    ModelParams model;         // kModel
    std::string scoring_head;  // kModel
    Source feature_channel = Source::kAd;
};

ReplayPolicy model_policy(std::string name, ModelParams model, std::string head,
                          Source feature_channel = Source::kAd);
ReplayPolicy oracle_policy(std::string name);
ReplayPolicy random_policy(std::string name);

struct ReplayArmResult {
    std::string name;
    MetricsReport metrics;
};

struct ReplayDeltas {
    // Relative percent change, candidate vs baseline, per segment.
    std::map<std::string, std::optional<double>> i2s, ctr, ecps, streams;
};

struct ReplayResult {
    std::vector<ReplayArmResult> arms;  // arm order as given; arms[0] is the baseline
    std::vector<ReplayDeltas> deltas;   // deltas[i] compares arms[i] vs arms[0]
    std::uint64_t opportunity_checksum = 0;  // identical stream fed to every arm

    nlohmann::ordered_json to_json() const;
    std::string render_table(bool include_all_tiers = false) const;
};

/// Paired replay: every policy sees the identical opportunity stream and
/// candidate pools; outcomes are drawn from the generator's true
/// probabilities with draws keyed by (opportunity, shown candidate), so two
/// arms choosing the same candidate observe the same outcome.
ReplayResult run_replay(const World& world, const std::vector<ReplayPolicy>& policies,
                        const ReplayConfig& cfg);

/// Writes a machine-readable JSON report plus a terminal table rendering.
void emit_report(const nlohmann::ordered_json& report, const std::string& table,
                 const std::string& json_path, const std::string& table_path);

}  // namespace podmtl
