#include "podmtl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace podmtl {

using ordered_json = nlohmann::ordered_json;

namespace {

std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

std::size_t count_positives(std::span<const int> labels) {
    std::size_t p = 0;
    for (int l : labels) p += (l != 0);
    return p;
}

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw shape_error("average_precision: " + std::to_string(scores.size()) +
                          " scores vs " + std::to_string(labels.size()) + " labels");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) throw data_error("average_precision: non-finite score");
    }
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    const std::size_t positives = count_positives(labels);
    if (positives == 0) {
        throw data_error("average_precision: undefined, no positive labels");
    }
    const auto order = descending_order(scores);
    double ap = 0.0;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (labels[order[k]] != 0) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(k + 1);
        }
    }
    return ap / static_cast<double>(positives);
}

double average_precision_tie_averaged(std::span<const double> scores,
                                      std::span<const int> labels) {
    check_inputs(scores, labels);
    const std::size_t positives = count_positives(labels);
    if (positives == 0) {
        throw data_error("average_precision: undefined, no positive labels");
    }
    const auto order = descending_order(scores);

    double total = 0.0;
    std::size_t tp_before = 0;  // positives in earlier (strictly higher) groups
    std::size_t n_before = 0;
    std::size_t g = 0;
    while (g < order.size()) {
        std::size_t h = g;
        while (h < order.size() && scores[order[h]] == scores[order[g]]) ++h;
        const std::size_t m = h - g;
        std::size_t t = 0;
        for (std::size_t i = g; i < h; ++i) t += (labels[order[i]] != 0);
        if (t > 0) {
            // Expected precision mass of the group's positives under a
            // uniformly random within-group ordering: for position k in the
            // group, P(positive at k) = t/m and the expected count of
            // positives above it within the group is (k-1)(t-1)/(m-1).
            const double tm = static_cast<double>(t) / static_cast<double>(m);
            for (std::size_t k = 1; k <= m; ++k) {
                const double above =
                    m > 1 ? static_cast<double>((k - 1)) * (static_cast<double>(t) - 1.0) /
                                (static_cast<double>(m) - 1.0)
                          : 0.0;
                total += tm * (static_cast<double>(tp_before) + 1.0 + above) /
                         static_cast<double>(n_before + k);
            }
        }
        tp_before += t;
        n_before += m;
        g = h;
    }
    return total / static_cast<double>(positives);
}

double average_precision_interpolated(std::span<const double> scores,
                                      std::span<const int> labels) {
    check_inputs(scores, labels);
    const std::size_t positives = count_positives(labels);
    if (positives == 0) {
        throw data_error("average_precision: undefined, no positive labels");
    }
    const auto order = descending_order(scores);
    // precision at each positive rank, then running max from the tail
    std::vector<double> prec;
    prec.reserve(positives);
    std::size_t tp = 0;
    std::vector<double> all_prec(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (labels[order[k]] != 0) ++tp;
        all_prec[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    }
    for (std::size_t k = order.size(); k-- > 1;) {
        all_prec[k - 1] = std::max(all_prec[k - 1], all_prec[k]);
    }
    double ap = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (labels[order[k]] != 0) ap += all_prec[k];
    }
    return ap / static_cast<double>(positives);
}

std::optional<double> try_average_precision(std::span<const double> scores,
                                            std::span<const int> labels) {
    if (count_positives(labels) == 0) return std::nullopt;
    return average_precision(scores, labels);
}

double relative_change(double candidate, double baseline) {
    if (baseline <= 0.0) {
        throw config_error("relative_change: baseline must be positive, got " +
                           std::to_string(baseline));
    }
    return 100.0 * (candidate - baseline) / baseline;
}

EvalPolicy EvalPolicy::native_defaults(const TaskSpec& spec, bool ad_heads_on_promo) {
    EvalPolicy p;
    for (const auto& t : spec.tasks) {
        bool on_promo = true, on_ad = true;
        if (t == task::kPromotionStream) {
            on_ad = false;
        } else if (t == task::kAdStream) {
            on_promo = ad_heads_on_promo;
        }
        p.sources[t] = {on_promo, on_ad};
    }
    return p;
}

bool EvalPolicy::includes(const std::string& t, Source s) const {
    auto it = sources.find(t);
    if (it == sources.end()) throw config_error("EvalPolicy: no entry for task '" + t + "'");
    return it->second[static_cast<int>(s)];
}

RankedPredictions gather_task_rows(const Dataset& ds, const std::string& t,
                                   std::span<const double> scores, const EvalPolicy& policy) {
    if (scores.size() != ds.rows.size()) {
        throw shape_error("gather_task_rows: " + std::to_string(scores.size()) +
                          " scores for " + std::to_string(ds.rows.size()) + " rows");
    }
    const std::size_t ti = ds.task_index(t);
    RankedPredictions out;
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        const auto& r = ds.rows[i];
        if (!r.label_present(ti)) continue;
        if (!policy.includes(t, r.source)) continue;
        out.scores.push_back(scores[i]);
        out.labels.push_back(r.labels[ti]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Online-style metrics
// ---------------------------------------------------------------------------

namespace {

void add_to(SegmentMetrics& seg, const ServedImpression& imp) {
    seg.impressions += 1;
    seg.streams += imp.streamed ? 1 : 0;
    seg.clicks += imp.clicked ? 1 : 0;
    seg.spend += imp.cost;
}

ordered_json segment_to_json(const SegmentMetrics& s) {
    ordered_json j;
    j["impressions"] = s.impressions;
    j["streams"] = s.streams;
    j["clicks"] = s.clicks;
    j["spend"] = s.spend;
    j["i2s"] = s.i2s();
    j["ctr"] = s.ctr();
    if (auto e = s.ecps()) {
        j["ecps"] = *e;
    } else {
        j["ecps"] = nullptr;
    }
    return j;
}

SegmentMetrics segment_from_json(const ordered_json& j) {
    SegmentMetrics s;
    s.impressions = j.at("impressions").get<std::uint64_t>();
    s.streams = j.at("streams").get<std::uint64_t>();
    s.clicks = j.at("clicks").get<std::uint64_t>();
    s.spend = j.at("spend").get<double>();
    return s;
}

}  // namespace

MetricsReport online_metrics(std::span<const ServedImpression> impressions,
                             const std::vector<CatalogEntry>& catalog) {
    std::map<std::uint32_t, const CatalogEntry*> by_id;
    for (const auto& e : catalog) by_id[e.show_id] = &e;

    std::vector<std::uint32_t> unjoinable;
    for (const auto& imp : impressions) {
        if (!by_id.count(imp.show_id)) unjoinable.push_back(imp.show_id);
    }
    if (!unjoinable.empty()) {
        std::sort(unjoinable.begin(), unjoinable.end());
        unjoinable.erase(std::unique(unjoinable.begin(), unjoinable.end()), unjoinable.end());
        std::string msg = "online_metrics: show ids missing from catalog:";
        for (std::size_t i = 0; i < unjoinable.size() && i < 16; ++i) {
            msg += " " + std::to_string(unjoinable[i]);
        }
        if (unjoinable.size() > 16) msg += " ...";
        throw data_error(msg);
    }

    MetricsReport rep;
    for (const auto& imp : impressions) {
        const CatalogEntry& e = *by_id.at(imp.show_id);
        const int tier = std::clamp(e.tier, 0, 7);
        add_to(rep.tiers[static_cast<std::size_t>(tier)], imp);
        if (e.lifetime_streams < 5000) add_to(rep.less_streamed, imp);
    }
    // The all segment is the sum over tier slices, so additivity is exact.
    for (const auto& t : rep.tiers) {
        rep.all.impressions += t.impressions;
        rep.all.streams += t.streams;
        rep.all.clicks += t.clicks;
        rep.all.spend += t.spend;
    }
    return rep;
}

std::vector<CatalogEntry> catalog_from_world(const World& world) {
    std::vector<CatalogEntry> out;
    out.reserve(world.shows.size());
    for (const auto& s : world.shows) {
        CatalogEntry e;
        e.show_id = s.show_id;
        e.tier = s.tier;
        e.hours_30d = s.hours_30d;
        e.lifetime_streams = s.lifetime_streams;
        e.popularity = s.popularity;
        out.push_back(e);
    }
    return out;
}

ordered_json MetricsReport::to_json() const {
    ordered_json j;
    j["model_id"] = model_id;
    j["dataset_id"] = dataset_id;
    j["seed"] = seed;
    ordered_json ap = ordered_json::object();
    ordered_json ap_tie = ordered_json::object();
    for (const auto& [t, v] : task_ap) {
        if (v) {
            ap[t] = *v;
        } else {
            ap[t] = nullptr;
        }
    }
    for (const auto& [t, v] : task_ap_tie_averaged) {
        if (v) {
            ap_tie[t] = *v;
        } else {
            ap_tie[t] = nullptr;
        }
    }
    j["task_ap"] = ap;
    j["task_ap_tie_averaged"] = ap_tie;
    ordered_json segs;
    segs["all"] = segment_to_json(all);
    segs["less_streamed"] = segment_to_json(less_streamed);
    for (std::size_t t = 0; t < tiers.size(); ++t) {
        segs["tier_" + std::to_string(t)] = segment_to_json(tiers[t]);
    }
    j["segments"] = segs;
    return j;
}

MetricsReport MetricsReport::from_json(const ordered_json& j) {
    MetricsReport r;
    r.model_id = j.at("model_id").get<std::string>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("task_ap").items()) {
        r.task_ap[k] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    for (const auto& [k, v] : j.at("task_ap_tie_averaged").items()) {
        r.task_ap_tie_averaged[k] =
            v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    const auto& segs = j.at("segments");
    r.all = segment_from_json(segs.at("all"));
    r.less_streamed = segment_from_json(segs.at("less_streamed"));
    for (std::size_t t = 0; t < r.tiers.size(); ++t) {
        r.tiers[t] = segment_from_json(segs.at("tier_" + std::to_string(t)));
    }
    return r;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void render_segment_row(std::ostringstream& os, const std::string& name,
                        const SegmentMetrics& s) {
    os << "  " << name;
    for (std::size_t i = name.size(); i < 16; ++i) os << ' ';
    os << " i2s=" << fmt(s.i2s()) << "  ctr=" << fmt(s.ctr()) << "  ecps=";
    if (auto e = s.ecps()) {
        os << fmt(*e);
    } else {
        os << "   --   ";
    }
    os << "  streams=" << s.streams << "  impressions=" << s.impressions
       << "  spend=" << fmt(s.spend) << '\n';
}

}  // namespace

std::string MetricsReport::render_table(bool include_all_tiers) const {
    std::ostringstream os;
    if (!task_ap.empty()) {
        os << "Average precision per task:\n";
        for (const auto& [t, v] : task_ap) {
            os << "  " << t;
            for (std::size_t i = t.size(); i < 16; ++i) os << ' ';
            if (v) {
                os << " ap=" << fmt(*v);
            } else {
                os << " ap=absent (no positive labels)";
            }
            auto it = task_ap_tie_averaged.find(t);
            if (it != task_ap_tie_averaged.end() && it->second) {
                os << "  ap_tie_avg=" << fmt(*it->second);
            }
            os << '\n';
        }
    }
    os << "Segment metrics:\n";
    render_segment_row(os, "all", all);
    render_segment_row(os, "less_streamed", less_streamed);
    const std::size_t last = include_all_tiers ? 8 : 6;
    for (std::size_t t = 0; t < last; ++t) {
        render_segment_row(os, "tier_" + std::to_string(t), tiers[t]);
    }
    return os.str();
}

}  // namespace podmtl
