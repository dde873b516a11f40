#include "podmtl/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>
#include <thread>

namespace podmtl {

using ordered_json = nlohmann::ordered_json;

TaskSpec ArmSpec::task_spec() const {
    TaskSpec spec;
    spec.tasks = tasks;
    spec.promo_tasks = promo_tasks;
    spec.ad_tasks = ad_tasks;
    for (const auto& t : tasks) spec.weights[t] = 1.0;
    spec.validate();
    return spec;
}

std::string ArmSpec::promo_scoring_head() const {
    for (const auto& t : tasks) {
        if (t == task::kPromotionStream) return t;
    }
    for (const auto& t : tasks) {
        if (t == task::kAdStream) return t;
    }
    return tasks.front();
}

std::string ArmSpec::ad_scoring_head() const {
    for (const auto& t : tasks) {
        if (t == task::kAdStream) return t;
    }
    for (const auto& t : tasks) {
        if (t == task::kPromotionStream) return t;
    }
    return tasks.front();
}

std::vector<ArmSpec> standard_arms() {
    std::vector<ArmSpec> arms;

    // Promotions-only multi-task model; serves ads with its promotion
    // stream head (the cold-start production baseline).
    ArmSpec baseline;
    baseline.name = "promo_baseline";
    baseline.tasks = {task::kPromotionStream, task::kClick, task::kLike, task::kFollow};
    baseline.promo_tasks = {task::kPromotionStream, task::kClick, task::kLike, task::kFollow};
    baseline.ad_tasks = {};
    baseline.data = ArmSpec::DataUse::kPromoOnly;
    baseline.balanced = false;
    arms.push_back(baseline);

    ArmSpec promo_head;
    promo_head.name = "promo_stream_head_only";
    promo_head.tasks = {task::kPromotionStream};
    promo_head.promo_tasks = {task::kPromotionStream};
    promo_head.ad_tasks = {};
    promo_head.data = ArmSpec::DataUse::kBoth;
    promo_head.balanced = true;
    arms.push_back(promo_head);

    ArmSpec ads_head;
    ads_head.name = "ads_stream_head_only";
    ads_head.tasks = {task::kAdStream};
    ads_head.promo_tasks = {};
    ads_head.ad_tasks = {task::kAdStream};
    ads_head.data = ArmSpec::DataUse::kAdOnly;
    ads_head.balanced = false;
    arms.push_back(ads_head);

    // Ads data only, with ancillary click/like/follow heads. All heads are
    // ad-channel heads here, so every task trains on ad impressions.
    ArmSpec ads_anc;
    ads_anc.name = "ads_stream_anc_heads";
    ads_anc.tasks = {task::kAdStream, task::kClick, task::kLike, task::kFollow};
    ads_anc.promo_tasks = {};
    ads_anc.ad_tasks = {task::kAdStream, task::kClick, task::kLike, task::kFollow};
    ads_anc.data = ArmSpec::DataUse::kAdOnly;
    ads_anc.balanced = false;
    arms.push_back(ads_anc);

    ArmSpec joint;
    joint.name = "joint_5task";
    joint.tasks = TaskSpec::standard_five().tasks;
    joint.promo_tasks = TaskSpec::standard_five().promo_tasks;
    joint.ad_tasks = TaskSpec::standard_five().ad_tasks;
    joint.data = ArmSpec::DataUse::kBoth;
    joint.balanced = true;
    arms.push_back(joint);

    return arms;
}

namespace {

Dataset filter_source(const Dataset& d, Source s) {
    Dataset out;
    out.tasks = d.tasks;
    for (const auto& r : d.rows) {
        if (r.source == s) out.rows.push_back(r);
    }
    return out;
}

}  // namespace

TrainResult train_arm(const ExperimentBase& base, const ArmSpec& arm, const Splits& splits,
                      std::uint64_t seed) {
    TrainConfig cfg;
    cfg.model = base.model;
    cfg.adam = base.adam;
    cfg.batch_size = base.batch_size;
    cfg.epochs = base.epochs;
    cfg.seed = seed;
    cfg.balanced = arm.balanced;

    cfg.loss.tasks = arm.task_spec();
    cfg.loss.mask = MaskPolicy::directional_default(cfg.loss.tasks);
    for (const auto& o : arm.mask_overrides) cfg.loss.mask.set(o.source, o.task, o.value);
    cfg.loss.labels = LabelRule::standard(cfg.loss.tasks);

    const Dataset* train_set = &splits.train;
    const Dataset* val_set = &splits.val;
    Dataset train_filtered, val_filtered;
    if (arm.data == ArmSpec::DataUse::kPromoOnly) {
        train_filtered = filter_source(splits.train, Source::kPromotion);
        val_filtered = filter_source(splits.val, Source::kPromotion);
        train_set = &train_filtered;
        val_set = &val_filtered;
    } else if (arm.data == ArmSpec::DataUse::kAdOnly) {
        train_filtered = filter_source(splits.train, Source::kAd);
        val_filtered = filter_source(splits.val, Source::kAd);
        train_set = &train_filtered;
        val_set = &val_filtered;
    }
    return train(cfg, *train_set, *val_set);
}

namespace {

struct ArmEval {
    std::optional<double> promo_ap, ads_ap;
};

ArmEval evaluate_arm(const ArmSpec& arm, ModelParams& params, const Dataset& test) {
    ArmEval ev;
    // Promotions AP: the designated head scores promotion impressions
    // against PromotionStream labels.
    {
        const std::size_t ti = test.task_index(task::kPromotionStream);
        Dataset promo_rows = filter_source(test, Source::kPromotion);
        std::vector<double> scores = score_dataset(params, promo_rows, arm.promo_scoring_head());
        std::vector<int> labels;
        std::vector<double> kept;
        for (std::size_t i = 0; i < promo_rows.rows.size(); ++i) {
            if (!promo_rows.rows[i].label_present(ti)) continue;
            labels.push_back(promo_rows.rows[i].labels[ti]);
            kept.push_back(scores[i]);
        }
        ev.promo_ap = try_average_precision(kept, labels);
    }
    // Ads AP: the designated head scores ad impressions against AdStream
    // labels (a promotions-only model scores them with its promotion head).
    {
        const std::size_t ti = test.task_index(task::kAdStream);
        Dataset ad_rows = filter_source(test, Source::kAd);
        std::vector<double> scores = score_dataset(params, ad_rows, arm.ad_scoring_head());
        std::vector<int> labels;
        std::vector<double> kept;
        for (std::size_t i = 0; i < ad_rows.rows.size(); ++i) {
            if (!ad_rows.rows[i].label_present(ti)) continue;
            labels.push_back(ad_rows.rows[i].labels[ti]);
            kept.push_back(scores[i]);
        }
        ev.ads_ap = try_average_precision(kept, labels);
    }
    return ev;
}

std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return std::nullopt;
    const double mu = *mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

AblationResult run_ablation(const AblationConfig& cfg, const std::vector<ArmSpec>& arms) {
    if (arms.empty()) throw config_error("run_ablation: no arms");
    if (cfg.seeds.empty()) throw config_error("run_ablation: no seeds");
    const auto baseline_it =
        std::find_if(arms.begin(), arms.end(),
                     [&](const ArmSpec& a) { return a.name == cfg.baseline_arm; });
    if (baseline_it == arms.end()) {
        throw config_error("run_ablation: baseline arm '" + cfg.baseline_arm + "' not present");
    }

    AblationResult result;
    result.baseline_arm = cfg.baseline_arm;
    result.arms.resize(arms.size());
    for (std::size_t a = 0; a < arms.size(); ++a) result.arms[a].name = arms[a].name;

    for (const std::uint64_t seed : cfg.seeds) {
        const World world = generate_world(cfg.base.world, derive_seed(seed, 100));
        const Dataset logs = simulate_logs(world, cfg.base.world.n_promo, cfg.base.world.n_ad,
                                           derive_seed(seed, 101));
        const SplitSpec spec =
            split_by_fractions(cfg.base.world, cfg.base.train_frac, cfg.base.val_frac);
        const Splits splits = temporal_split(logs, spec);

        // Arms are independent given the shared splits; train them in
        // parallel when the host has spare cores.
        const std::size_t workers =
            std::min<std::size_t>(arms.size(),
                                  std::max<std::size_t>(1, std::thread::hardware_concurrency()));
        std::vector<std::future<ArmSeedOutcome>> futures;
        futures.reserve(arms.size());
        for (std::size_t a = 0; a < arms.size(); ++a) {
            auto work = [&, a]() {
                ArmSeedOutcome out;
                out.seed = seed;
                try {
                    TrainResult tr =
                        train_arm(cfg.base, arms[a], splits, derive_seed(seed, 200 + a));
                    if (tr.diverged) {
                        out.failed = true;
                        out.note = tr.divergence_note;
                        return out;
                    }
                    ArmEval ev = evaluate_arm(arms[a], tr.params, splits.test);
                    out.promo_ap = ev.promo_ap;
                    out.ads_ap = ev.ads_ap;
                    if (cfg.save_models && !cfg.model_dir.empty()) {
                        std::filesystem::create_directories(cfg.model_dir);
                        save_model(tr.params, cfg.model_dir + "/" + arms[a].name + "_seed" +
                                                  std::to_string(seed) + ".pmtl");
                    }
                } catch (const std::exception& e) {
                    out.failed = true;
                    out.note = e.what();
                }
                return out;
            };
            if (workers > 1) {
                futures.push_back(std::async(std::launch::async, work));
            } else {
                std::promise<ArmSeedOutcome> p;
                p.set_value(work());
                futures.push_back(p.get_future());
            }
        }
        for (std::size_t a = 0; a < arms.size(); ++a) {
            result.arms[a].per_seed.push_back(futures[a].get());
        }
    }

    for (auto& arm : result.arms) {
        std::vector<double> promo, ads;
        for (const auto& s : arm.per_seed) {
            if (s.failed) {
                arm.failed = true;
                result.any_failed = true;
                continue;
            }
            if (s.promo_ap) promo.push_back(*s.promo_ap);
            if (s.ads_ap) ads.push_back(*s.ads_ap);
        }
        arm.mean_promo_ap = mean_of(promo);
        arm.mean_ads_ap = mean_of(ads);
        arm.sd_promo_ap = sd_of(promo);
        arm.sd_ads_ap = sd_of(ads);
    }

    const ArmSummary* baseline = nullptr;
    for (const auto& a : result.arms) {
        if (a.name == cfg.baseline_arm) baseline = &a;
    }
    for (auto& a : result.arms) {
        if (baseline->mean_promo_ap && a.mean_promo_ap && *baseline->mean_promo_ap > 0.0) {
            a.promo_ap_rel_change = relative_change(*a.mean_promo_ap, *baseline->mean_promo_ap);
        }
        if (baseline->mean_ads_ap && a.mean_ads_ap && *baseline->mean_ads_ap > 0.0) {
            a.ads_ap_rel_change = relative_change(*a.mean_ads_ap, *baseline->mean_ads_ap);
        }
    }
    return result;
}

namespace {

ordered_json opt_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

}  // namespace

ordered_json AblationResult::to_json() const {
    ordered_json j;
    j["baseline_arm"] = baseline_arm;
    j["any_failed"] = any_failed;
    ordered_json rows = ordered_json::array();
    for (const auto& a : arms) {
        ordered_json r;
        r["arm"] = a.name;
        r["failed"] = a.failed;
        r["mean_promo_ap"] = opt_json(a.mean_promo_ap);
        r["mean_ads_ap"] = opt_json(a.mean_ads_ap);
        r["sd_promo_ap"] = opt_json(a.sd_promo_ap);
        r["sd_ads_ap"] = opt_json(a.sd_ads_ap);
        r["promo_ap_rel_change_pct"] = opt_json(a.promo_ap_rel_change);
        r["ads_ap_rel_change_pct"] = opt_json(a.ads_ap_rel_change);
        ordered_json seeds = ordered_json::array();
        for (const auto& s : a.per_seed) {
            ordered_json sj;
            sj["seed"] = s.seed;
            sj["promo_ap"] = opt_json(s.promo_ap);
            sj["ads_ap"] = opt_json(s.ads_ap);
            sj["failed"] = s.failed;
            if (!s.note.empty()) sj["note"] = s.note;
            seeds.push_back(sj);
        }
        r["per_seed"] = seeds;
        rows.push_back(r);
    }
    j["arms"] = rows;
    return j;
}

namespace {

std::string pct(const std::optional<double>& v) {
    if (!v) return "     --";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+6.1f%%", *v);
    return buf;
}

std::string num(const std::optional<double>& v) {
    if (!v) return "   --  ";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%7.4f", *v);
    return buf;
}

}  // namespace

std::string AblationResult::render_table() const {
    std::ostringstream os;
    os << "Task setup                   Promotions AP        Ads AP\n";
    for (const auto& a : arms) {
        os << "  " << a.name;
        for (std::size_t i = a.name.size(); i < 26; ++i) os << ' ';
        if (a.failed) {
            os << "FAILED\n";
            continue;
        }
        os << num(a.mean_promo_ap) << " (" << pct(a.promo_ap_rel_change) << ")  "
           << num(a.mean_ads_ap) << " (" << pct(a.ads_ap_rel_change) << ")\n";
    }
    os << "Relative changes are against arm '" << baseline_arm << "'.\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

ReplayPolicy model_policy(std::string name, ModelParams model, std::string head,
                          Source feature_channel) {
    ReplayPolicy p;
    p.name = std::move(name);
    p.kind = ReplayPolicy::Kind::kModel;
    p.model = std::move(model);
    p.scoring_head = std::move(head);
    p.feature_channel = feature_channel;
    return p;
}

ReplayPolicy oracle_policy(std::string name) {
    ReplayPolicy p;
    p.name = std::move(name);
    p.kind = ReplayPolicy::Kind::kTrueProbability;
    return p;
}

ReplayPolicy random_policy(std::string name) {
    ReplayPolicy p;
    p.name = std::move(name);
    p.kind = ReplayPolicy::Kind::kRandom;
    return p;
}

namespace {

struct Opportunity {
    std::uint32_t user_id;
    ImpressionContext ctx;
    std::vector<std::uint32_t> candidates;
    Matrix features;  // pool rows, shared by every arm
};

std::uint64_t mix_checksum(std::uint64_t h, std::uint64_t v) {
    return splitmix64(h ^ v);
}

}  // namespace

ReplayResult run_replay(const World& world, const std::vector<ReplayPolicy>& policies,
                        const ReplayConfig& cfg) {
    if (policies.size() < 2) throw config_error("run_replay: need at least two arms");
    if (cfg.candidate_pool == 0) throw config_error("run_replay: empty candidate pool");
    if (cfg.opportunities == 0) throw config_error("run_replay: no opportunities");
    if (cfg.candidate_pool > world.shows.size()) {
        throw config_error("run_replay: candidate pool larger than the catalog");
    }

    const std::vector<CatalogEntry> catalog = catalog_from_world(world);
    const std::size_t n_arms = policies.size();
    std::vector<std::vector<ServedImpression>> served(n_arms);
    for (auto& s : served) s.reserve(cfg.opportunities);

    // Candidate pools are drawn within one stream tier per opportunity, so
    // the per-tier slices compare identical traffic across arms instead of
    // whatever mix each arm chooses to serve.
    std::array<std::vector<std::uint32_t>, 8> shows_by_tier;
    for (const auto& s : world.shows) {
        shows_by_tier[static_cast<std::size_t>(std::clamp(s.tier, 0, 7))].push_back(s.show_id);
    }
    for (const auto& tier_shows : shows_by_tier) {
        if (tier_shows.size() < cfg.candidate_pool) {
            throw config_error(
                "run_replay: candidate pool larger than the smallest stream tier");
        }
    }

    std::vector<ModelParams> models(n_arms);
    for (std::size_t a = 0; a < n_arms; ++a) {
        if (policies[a].kind == ReplayPolicy::Kind::kModel) models[a] = policies[a].model;
    }

    Rng opp_rng(derive_seed(cfg.seed, 0x0FF0ULL));
    std::uint64_t checksum = splitmix64(cfg.seed);

    for (std::size_t o = 0; o < cfg.opportunities; ++o) {
        Opportunity opp;
        opp.user_id = static_cast<std::uint32_t>(opp_rng.uniform_int(world.users.size()));
        opp.ctx = sample_context(opp_rng, Source::kAd);

        // distinct candidates, uniform within the opportunity's tier
        const auto& tier_shows =
            shows_by_tier[static_cast<std::size_t>(opp_rng.uniform_int(8))];
        opp.candidates.clear();
        std::set<std::uint32_t> seen;
        while (opp.candidates.size() < cfg.candidate_pool) {
            const auto c = tier_shows[opp_rng.uniform_int(tier_shows.size())];
            if (seen.insert(c).second) opp.candidates.push_back(c);
        }

        // one shared feature draw per (opportunity, candidate) and channel
        // pipeline; each candidate ad carries its own creative. Both views
        // are always materialized so the draw sequence does not depend on
        // which arms are present.
        std::vector<FeatureVector> ad_view, promo_view;
        ad_view.reserve(opp.candidates.size());
        promo_view.reserve(opp.candidates.size());
        for (std::uint32_t c : opp.candidates) {
            ImpressionContext cand_ctx = sample_context(opp_rng, Source::kAd);
            cand_ctx.time_bucket = opp.ctx.time_bucket;
            cand_ctx.surface = opp.ctx.surface;
            ad_view.push_back(
                build_features(world, opp.user_id, c, cand_ctx, Source::kAd, opp_rng));
            promo_view.push_back(
                build_features(world, opp.user_id, c, cand_ctx, Source::kPromotion, opp_rng));
        }

        checksum = mix_checksum(checksum, opp.user_id);
        for (std::uint32_t c : opp.candidates) checksum = mix_checksum(checksum, c);

        for (std::size_t a = 0; a < n_arms; ++a) {
            const ReplayPolicy& pol = policies[a];
            std::size_t best = 0;
            if (pol.kind == ReplayPolicy::Kind::kModel) {
                const auto& feats =
                    pol.feature_channel == Source::kAd ? ad_view : promo_view;
                Matrix x = concat_features(models[a].config, feats);
                Matrix p = predict_matrix(models[a], x, pol.scoring_head);
                double best_score = p[0];
                for (std::size_t c = 1; c < opp.candidates.size(); ++c) {
                    if (p[c] > best_score) {
                        best_score = p[c];
                        best = c;
                    }
                }
            } else if (pol.kind == ReplayPolicy::Kind::kTrueProbability) {
                double best_score =
                    world.true_stream_prob(opp.user_id, opp.candidates[0], Source::kAd);
                for (std::size_t c = 1; c < opp.candidates.size(); ++c) {
                    const double s =
                        world.true_stream_prob(opp.user_id, opp.candidates[c], Source::kAd);
                    if (s > best_score) {
                        best_score = s;
                        best = c;
                    }
                }
            } else {
                double best_score = counter_u01(derive_seed(cfg.seed, 0xA0A0ULL), o,
                                                opp.candidates[0]);
                for (std::size_t c = 1; c < opp.candidates.size(); ++c) {
                    const double s =
                        counter_u01(derive_seed(cfg.seed, 0xA0A0ULL), o, opp.candidates[c]);
                    if (s > best_score) {
                        best_score = s;
                        best = c;
                    }
                }
            }

            const std::uint32_t shown = opp.candidates[best];
            // Outcome draws keyed by (opportunity, shown candidate): the same
            // candidate gives the same outcome in every arm.
            const double u_stream =
                counter_u01(derive_seed(cfg.seed, 0x57AEULL), o, shown);
            const double u_click =
                counter_u01(derive_seed(cfg.seed, 0xC11CULL), o, shown);
            ServedImpression imp;
            imp.show_id = shown;
            imp.streamed = u_stream < world.true_stream_prob(opp.user_id, shown, Source::kAd);
            imp.clicked = u_click < world.true_click_prob(opp.user_id, shown);
            imp.cost = cfg.cost_per_impression;
            served[a].push_back(imp);
        }
    }

    ReplayResult result;
    result.opportunity_checksum = checksum;
    for (std::size_t a = 0; a < n_arms; ++a) {
        ReplayArmResult ar;
        ar.name = policies[a].name;
        ar.metrics = online_metrics(served[a], catalog);
        ar.metrics.model_id = policies[a].name;
        ar.metrics.seed = cfg.seed;
        result.arms.push_back(std::move(ar));
    }

    auto seg_deltas = [](const MetricsReport& cand, const MetricsReport& base) {
        ReplayDeltas d;
        auto one = [&](const std::string& name, const SegmentMetrics& c,
                       const SegmentMetrics& b) {
            d.i2s[name] = b.i2s() > 0.0 ? std::optional<double>(relative_change(c.i2s(), b.i2s()))
                                        : std::nullopt;
            d.ctr[name] = b.ctr() > 0.0 ? std::optional<double>(relative_change(c.ctr(), b.ctr()))
                                        : std::nullopt;
            const auto ce = c.ecps(), be = b.ecps();
            d.ecps[name] = (ce && be && *be > 0.0)
                               ? std::optional<double>(relative_change(*ce, *be))
                               : std::nullopt;
            d.streams[name] =
                b.streams > 0 ? std::optional<double>(relative_change(
                                    static_cast<double>(c.streams),
                                    static_cast<double>(b.streams)))
                              : std::nullopt;
        };
        one("all", cand.all, base.all);
        one("less_streamed", cand.less_streamed, base.less_streamed);
        for (std::size_t t = 0; t < 8; ++t) {
            one("tier_" + std::to_string(t), cand.tiers[t], base.tiers[t]);
        }
        return d;
    };
    for (std::size_t a = 0; a < n_arms; ++a) {
        result.deltas.push_back(seg_deltas(result.arms[a].metrics, result.arms[0].metrics));
    }
    return result;
}

ordered_json ReplayResult::to_json() const {
    ordered_json j;
    j["opportunity_checksum"] = opportunity_checksum;
    ordered_json arms_json = ordered_json::array();
    for (std::size_t a = 0; a < arms.size(); ++a) {
        ordered_json aj;
        aj["arm"] = arms[a].name;
        aj["metrics"] = arms[a].metrics.to_json();
        ordered_json dj;
        auto dump_map = [](const std::map<std::string, std::optional<double>>& m) {
            ordered_json out;
            for (const auto& [k, v] : m) out[k] = opt_json(v);
            return out;
        };
        dj["i2s_rel_change_pct"] = dump_map(deltas[a].i2s);
        dj["ctr_rel_change_pct"] = dump_map(deltas[a].ctr);
        dj["ecps_rel_change_pct"] = dump_map(deltas[a].ecps);
        dj["streams_rel_change_pct"] = dump_map(deltas[a].streams);
        aj["deltas_vs_baseline"] = dj;
        arms_json.push_back(aj);
    }
    j["arms"] = arms_json;
    return j;
}

std::string ReplayResult::render_table(bool include_all_tiers) const {
    std::ostringstream os;
    auto row = [&](const std::string& seg, const ReplayDeltas& d) {
        os << "  " << seg;
        for (std::size_t i = seg.size(); i < 16; ++i) os << ' ';
        os << " i2s " << pct(d.i2s.count(seg) ? d.i2s.at(seg) : std::nullopt) << "   eCPS "
           << pct(d.ecps.count(seg) ? d.ecps.at(seg) : std::nullopt) << "   CTR "
           << pct(d.ctr.count(seg) ? d.ctr.at(seg) : std::nullopt) << "   streams "
           << pct(d.streams.count(seg) ? d.streams.at(seg) : std::nullopt) << '\n';
    };
    for (std::size_t a = 1; a < arms.size(); ++a) {
        os << "Arm '" << arms[a].name << "' vs baseline '" << arms[0].name << "':\n";
        os << "  Segment           i2s        eCPS        CTR        # streams\n";
        row("all", deltas[a]);
        row("less_streamed", deltas[a]);
        const std::size_t last = include_all_tiers ? 8 : 6;
        for (std::size_t t = 0; t < last; ++t) row("tier_" + std::to_string(t), deltas[a]);
    }
    return os.str();
}

void emit_report(const ordered_json& report, const std::string& table,
                 const std::string& json_path, const std::string& table_path) {
    if (report.is_null() || (report.is_object() && report.empty()) ||
        (report.is_array() && report.empty())) {
        throw config_error("emit_report: empty results");
    }
    {
        std::ofstream os(json_path);
        if (!os) throw data_error("cannot open '" + json_path + "' for writing");
        os << report.dump(2) << '\n';
        if (!os) throw data_error("failed writing '" + json_path + "'");
    }
    {
        std::ofstream os(table_path);
        if (!os) throw data_error("cannot open '" + table_path + "' for writing");
        os << table;
        if (!os) throw data_error("failed writing '" + table_path + "'");
    }
}

}  // namespace podmtl
