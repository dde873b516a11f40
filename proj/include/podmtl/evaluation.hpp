#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "podmtl/dataio.hpp"
#include "podmtl/tasks.hpp"

namespace podmtl {

/// Average precision as precision averaged over positive ranks, descending
/// scores, ties broken stably by earlier index first.
/// Throws data_error when there is no positive label.
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// AP under random tie-breaking, in closed form (expectation over uniform
/// orderings within each tied score group). Reported alongside the primary
/// value to show tie insensitivity.
double average_precision_tie_averaged(std::span<const double> scores,
                                      std::span<const int> labels);

/// Interpolated variant: precision at each positive rank replaced by the
/// running maximum over later ranks.
double average_precision_interpolated(std::span<const double> scores,
                                      std::span<const int> labels);

/// Absent instead of throwing when no positive exists.
std::optional<double> try_average_precision(std::span<const double> scores,
                                            std::span<const int> labels);

/// 100 * (candidate - baseline) / baseline. Baseline must be positive.
double relative_change(double candidate, double baseline);

/// Scored evaluation rows for one task.
struct RankedPredictions {
    std::vector<double> scores;
    std::vector<int> labels;
};

/// Which sources a task is evaluated on. Defaults restrict each stream head
/// to its native channel; a flag widens ad heads onto promotion rows.
struct EvalPolicy {
    std::map<std::string, std::array<bool, 2>> sources;  // [promotion, ad]

    static EvalPolicy native_defaults(const TaskSpec& spec, bool ad_heads_on_promo = false);
    bool includes(const std::string& t, Source s) const;
};

/// Gathers (score, label) pairs for one task from a dataset, given per-row
/// scores aligned with ds.rows.
RankedPredictions gather_task_rows(const Dataset& ds, const std::string& t,
                                   std::span<const double> scores, const EvalPolicy& policy);

struct SegmentMetrics {
    std::uint64_t impressions = 0;
    std::uint64_t streams = 0;
    std::uint64_t clicks = 0;
    double spend = 0.0;

    double i2s() const { return impressions ? static_cast<double>(streams) / impressions : 0.0; }
    double ctr() const { return impressions ? static_cast<double>(clicks) / impressions : 0.0; }
    std::optional<double> ecps() const {
        if (streams == 0) return std::nullopt;
        return spend / static_cast<double>(streams);
    }
};

struct MetricsReport {
    std::string model_id;
    std::string dataset_id;
    std::uint64_t seed = 0;
    std::map<std::string, std::optional<double>> task_ap;
    std::map<std::string, std::optional<double>> task_ap_tie_averaged;
    std::array<SegmentMetrics, 8> tiers;
    SegmentMetrics all;            // derived: sum over tiers
    SegmentMetrics less_streamed;  // shows with lifetime streams < 5000

    nlohmann::ordered_json to_json() const;
    static MetricsReport from_json(const nlohmann::ordered_json& j);
    /// Terminal table; tiers 6-7 only when include_all_tiers is set.
    std::string render_table(bool include_all_tiers = false) const;
};

/// One served (or logged) impression with its outcomes.
struct ServedImpression {
    std::uint32_t show_id = 0;
    bool streamed = false;
    bool clicked = false;
    double cost = 0.0;
};

/// Aggregates outcome metrics per tier and segment. Every show must join to
/// the catalog; unjoinable ids are reported together.
MetricsReport online_metrics(std::span<const ServedImpression> impressions,
                             const std::vector<CatalogEntry>& catalog);

std::vector<CatalogEntry> catalog_from_world(const World& world);

}  // namespace podmtl
