#include "podmtl/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace podmtl {

using ordered_json = nlohmann::ordered_json;

void GeneratorConfig::validate() const {
    if (n_users == 0 || n_shows == 0) {
        throw config_error("generator: n_users and n_shows must be positive");
    }
    if (latent_dim < 1) throw config_error("generator: latent_dim must be at least 1");
    if (n_shows < 8) throw config_error("generator: need at least 8 shows for 8 tiers");
    for (std::size_t i = 1; i < content_noise_sd.size(); ++i) {
        if (content_noise_sd[i] < content_noise_sd[i - 1]) {
            throw config_error("generator: content noise must be non-decreasing in tier");
        }
    }
    for (std::size_t i = 1; i < content_persistent_sd.size(); ++i) {
        if (content_persistent_sd[i] < content_persistent_sd[i - 1]) {
            throw config_error(
                "generator: persistent content noise must be non-decreasing in tier");
        }
    }
    for (std::size_t i = 1; i < ad_content_noise_sd.size(); ++i) {
        if (ad_content_noise_sd[i] < ad_content_noise_sd[i - 1]) {
            throw config_error("generator: ad content noise must be non-decreasing in tier");
        }
    }
    if (ad_cost < 0.0) throw config_error("generator: ad_cost must be non-negative");
    if (t_span <= 0) throw config_error("generator: t_span must be positive");
}

std::size_t Dataset::task_index(const std::string& t) const {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i] == t) return i;
    }
    throw config_error("dataset has no task '" + t + "'");
}

std::size_t Dataset::count_source(Source s) const {
    std::size_t n = 0;
    for (const auto& r : rows) n += (r.source == s);
    return n;
}

std::vector<std::size_t> Dataset::source_indices(Source s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].source == s) idx.push_back(i);
    }
    return idx;
}

namespace {

std::vector<double> power_cdf(const std::vector<ShowInfo>& shows, double exponent) {
    std::vector<double> cdf(shows.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < shows.size(); ++i) {
        acc += std::pow(shows[i].popularity, exponent);
        cdf[i] = acc;
    }
    for (double& v : cdf) v /= acc;
    return cdf;
}

std::uint32_t sample_cdf(const std::vector<double>& cdf, double u) {
    auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    return static_cast<std::uint32_t>(it - cdf.begin());
}

}  // namespace

World generate_world(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    World w;
    w.cfg = cfg;
    w.seed = seed;

    Rng user_rng(derive_seed(seed, 1));
    w.users.resize(cfg.n_users);
    for (auto& u : w.users) {
        u.latent.resize(cfg.latent_dim);
        for (auto& v : u.latent) v = user_rng.normal();
        u.bias = user_rng.normal(0.0, cfg.user_bias_sd);
    }

    Rng show_rng(derive_seed(seed, 2));
    w.shows.resize(cfg.n_shows);
    // Zipf popularity over a random rank assignment.
    std::vector<std::size_t> ranks(cfg.n_shows);
    std::iota(ranks.begin(), ranks.end(), 0);
    show_rng.shuffle(ranks);
    for (std::size_t i = 0; i < cfg.n_shows; ++i) {
        ShowInfo& s = w.shows[i];
        s.show_id = static_cast<std::uint32_t>(i);
        s.latent.resize(cfg.latent_dim);
        for (auto& v : s.latent) v = show_rng.normal();
        s.bias = show_rng.normal(0.0, cfg.show_bias_sd);
        s.popularity = std::pow(static_cast<double>(ranks[i] + 1), -cfg.zipf_exponent);
        s.hours_30d = cfg.hours_scale * s.popularity *
                      std::exp(show_rng.normal(0.0, cfg.hours_noise_sd));
    }

    // Tiers: octiles of 30-day listening hours, tier 0 = most-streamed.
    std::vector<std::size_t> order(cfg.n_shows);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (w.shows[a].hours_30d != w.shows[b].hours_30d) {
            return w.shows[a].hours_30d > w.shows[b].hours_30d;
        }
        return a < b;
    });
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        w.shows[order[pos]].tier = static_cast<int>(pos * 8 / order.size());
    }

    // Lifetime streams: deterministic monotone map of hours, calibrated so
    // that the 5000-stream less-streamed flag coincides with tiers 3..7.
    double boundary_hours = std::numeric_limits<double>::infinity();
    for (const auto& s : w.shows) {
        if (s.tier == 2) boundary_hours = std::min(boundary_hours, s.hours_30d);
    }
    for (auto& s : w.shows) {
        s.lifetime_streams = static_cast<std::uint64_t>(
            std::floor(5000.0 * s.hours_30d / boundary_hours));
    }

    // Persistent platform-embedding errors, drawn once the tiers are known.
    Rng embed_rng(derive_seed(seed, 4));
    for (auto& s : w.shows) {
        const double sd = cfg.content_persistent_sd[static_cast<std::size_t>(s.tier)];
        s.promo_embed_offset.resize(cfg.latent_dim);
        for (auto& v : s.promo_embed_offset) v = embed_rng.normal(0.0, sd);
    }

    Rng proj_rng(derive_seed(seed, 3));
    w.aggregate_proj = Matrix(cfg.latent_dim, 7);
    const double proj_sd = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
    for (std::size_t i = 0; i < w.aggregate_proj.size(); ++i) {
        w.aggregate_proj[i] = proj_rng.normal(0.0, proj_sd);
    }
    w.genre_proj = Matrix(cfg.latent_dim, 8);
    for (std::size_t i = 0; i < w.genre_proj.size(); ++i) {
        w.genre_proj[i] = proj_rng.normal(0.0, proj_sd);
    }
    for (auto& s : w.shows) {
        int best = 0;
        double best_v = -1e300;
        for (std::size_t g = 0; g < 8; ++g) {
            double v = 0.0;
            for (std::size_t k = 0; k < cfg.latent_dim; ++k) {
                v += s.latent[k] * w.genre_proj(k, g);
            }
            if (v > best_v) {
                best_v = v;
                best = static_cast<int>(g);
            }
        }
        s.genre = best;
    }

    w.promo_cdf = power_cdf(w.shows, cfg.promo_flatten);
    w.ad_cdf = power_cdf(w.shows, cfg.ad_concentration);
    return w;
}

double World::true_affinity(std::uint32_t user_id, std::uint32_t show_id) const {
    const UserInfo& u = users[user_id];
    const ShowInfo& s = shows[show_id];
    double dot = 0.0;
    for (std::size_t k = 0; k < cfg.latent_dim; ++k) dot += u.latent[k] * s.latent[k];
    return dot + u.bias + s.bias;
}

double World::true_stream_prob(std::uint32_t user_id, std::uint32_t show_id, Source s) const {
    const double a = true_affinity(user_id, show_id);
    const double offset = s == Source::kAd ? cfg.ad_stream_offset : 0.0;
    return sigmoid_scalar(cfg.w_stream * a + cfg.b_stream + offset);
}

double World::true_click_prob(std::uint32_t user_id, std::uint32_t show_id) const {
    return sigmoid_scalar(cfg.w_click * true_affinity(user_id, show_id) + cfg.b_click);
}

double World::true_like_prob(std::uint32_t user_id, std::uint32_t show_id) const {
    return sigmoid_scalar(cfg.w_like * true_affinity(user_id, show_id) + cfg.b_like);
}

double World::true_follow_prob(std::uint32_t user_id, std::uint32_t show_id) const {
    return sigmoid_scalar(cfg.w_follow * true_affinity(user_id, show_id) + cfg.b_follow);
}

ImpressionContext sample_context(Rng& rng, Source source) {
    ImpressionContext ctx;
    ctx.time_bucket = static_cast<int>(rng.uniform_int(4));
    ctx.surface = static_cast<int>(rng.uniform_int(4));
    const int base = source == Source::kAd ? 2 : 0;
    ctx.format = base + static_cast<int>(rng.uniform_int(2));
    ctx.slot = static_cast<int>(rng.uniform_int(4));
    return ctx;
}

FeatureVector build_features(const World& world, std::uint32_t user_id, std::uint32_t show_id,
                             const ImpressionContext& ctx, Source channel, Rng& rng) {
    const GeneratorConfig& cfg = world.cfg;
    const UserInfo& u = world.users[user_id];
    const ShowInfo& s = world.shows[show_id];

    FeatureVector f;
    // user: noisy latent (8) + behavioural aggregates (7) + noisy engagement bias (1)
    f.user.reserve(16);
    for (std::size_t k = 0; k < cfg.latent_dim; ++k) {
        f.user.push_back(u.latent[k] + rng.normal(0.0, cfg.user_noise_sd));
    }
    for (std::size_t jcol = 0; jcol < 7; ++jcol) {
        double v = 0.0;
        for (std::size_t k = 0; k < cfg.latent_dim; ++k) {
            v += u.latent[k] * world.aggregate_proj(k, jcol);
        }
        f.user.push_back(v + rng.normal(0.0, cfg.aggregate_noise_sd));
    }
    f.user.push_back(u.bias + rng.normal(0.0, cfg.aggregate_noise_sd));

    // content: observed latent (8) + genre one-hot (8). The promotion
    // pipeline reads the platform embedding (persistently displaced for
    // low-stream shows); the ad pipeline reads advertiser metadata.
    f.content.reserve(16);
    if (channel == Source::kAd) {
        const double c_sd = cfg.ad_content_noise_sd[static_cast<std::size_t>(s.tier)];
        for (std::size_t k = 0; k < cfg.latent_dim; ++k) {
            f.content.push_back(s.latent[k] + rng.normal(0.0, c_sd));
        }
    } else {
        const double c_sd = cfg.content_noise_sd[static_cast<std::size_t>(s.tier)];
        for (std::size_t k = 0; k < cfg.latent_dim; ++k) {
            f.content.push_back(s.latent[k] + s.promo_embed_offset[k] +
                                rng.normal(0.0, c_sd));
        }
    }
    for (int g = 0; g < 8; ++g) f.content.push_back(g == s.genre ? 1.0 : 0.0);

    // context: time-of-day bucket one-hot (4) + surface one-hot (4)
    f.context.reserve(8);
    for (int b = 0; b < 4; ++b) f.context.push_back(b == ctx.time_bucket ? 1.0 : 0.0);
    for (int b = 0; b < 4; ++b) f.context.push_back(b == ctx.surface ? 1.0 : 0.0);

    // creative: format one-hot (4) + slot one-hot (4)
    f.creative.reserve(8);
    for (int b = 0; b < 4; ++b) f.creative.push_back(b == ctx.format ? 1.0 : 0.0);
    for (int b = 0; b < 4; ++b) f.creative.push_back(b == ctx.slot ? 1.0 : 0.0);
    return f;
}

namespace {

ImpressionRecord draw_impression(const World& world, Source source, std::uint64_t id,
                                 const Dataset& ds, Rng& rng) {
    const GeneratorConfig& cfg = world.cfg;
    ImpressionRecord r;
    r.id = id;
    r.source = source;
    r.ts = cfg.t0 + static_cast<std::int64_t>(rng.uniform_int(
                        static_cast<std::uint64_t>(cfg.t_span)));
    r.user_id = static_cast<std::uint32_t>(rng.uniform_int(cfg.n_users));
    const auto& cdf = source == Source::kAd ? world.ad_cdf : world.promo_cdf;
    r.show_id = sample_cdf(cdf, rng.uniform01());

    const ImpressionContext ctx = sample_context(rng, source);
    r.features = build_features(world, r.user_id, r.show_id, ctx, source, rng);
    r.cost = source == Source::kAd ? cfg.ad_cost : 0.0;

    const int streamed = rng.uniform01() < world.true_stream_prob(r.user_id, r.show_id, source);
    const int clicked = rng.uniform01() < world.true_click_prob(r.user_id, r.show_id);
    const int liked = rng.uniform01() < world.true_like_prob(r.user_id, r.show_id);
    const int followed = rng.uniform01() < world.true_follow_prob(r.user_id, r.show_id);

    r.labels.fill(-1);
    // The stream outcome feeds both stream heads on promotion rows: the ad
    // stream head trains on promotion impressions under the default mask.
    const std::size_t i_ps = ds.task_index(task::kPromotionStream);
    const std::size_t i_as = ds.task_index(task::kAdStream);
    const std::size_t i_ck = ds.task_index(task::kClick);
    const std::size_t i_lk = ds.task_index(task::kLike);
    const std::size_t i_fw = ds.task_index(task::kFollow);
    if (source == Source::kPromotion) {
        r.labels[i_ps] = static_cast<std::int8_t>(streamed);
        r.labels[i_as] = static_cast<std::int8_t>(streamed);
    } else {
        r.labels[i_as] = static_cast<std::int8_t>(streamed);
    }
    r.labels[i_ck] = static_cast<std::int8_t>(clicked);
    r.labels[i_lk] = static_cast<std::int8_t>(liked);
    r.labels[i_fw] = static_cast<std::int8_t>(followed);
    return r;
}

}  // namespace

Dataset simulate_logs(const World& world, std::size_t n_promo, std::size_t n_ad,
                      std::uint64_t seed) {
    Dataset ds;
    ds.tasks = TaskSpec::standard_five().tasks;
    ds.rows.reserve(n_promo + n_ad);

    Rng promo_rng(derive_seed(seed, 11));
    std::uint64_t id = 0;
    for (std::size_t i = 0; i < n_promo; ++i) {
        ds.rows.push_back(draw_impression(world, Source::kPromotion, id++, ds, promo_rng));
    }
    Rng ad_rng(derive_seed(seed, 12));
    for (std::size_t i = 0; i < n_ad; ++i) {
        ds.rows.push_back(draw_impression(world, Source::kAd, id++, ds, ad_rng));
    }
    return ds;
}

Splits temporal_split(const Dataset& data, const SplitSpec& spec) {
    Splits out;
    out.train.tasks = out.val.tasks = out.test.tasks = data.tasks;
    for (const auto& r : data.rows) {
        if (r.ts < spec.train_end) {
            out.train.rows.push_back(r);
        } else if (r.ts < spec.val_end) {
            out.val.rows.push_back(r);
        } else {
            out.test.rows.push_back(r);
        }
    }
    if (out.train.rows.empty()) throw data_error("temporal split: train partition is empty");
    if (out.val.rows.empty()) throw data_error("temporal split: validation partition is empty");
    if (out.test.rows.empty()) throw data_error("temporal split: test partition is empty");
    return out;
}

SplitSpec split_by_fractions(const GeneratorConfig& cfg, double train_frac, double val_frac) {
    if (train_frac <= 0.0 || val_frac <= 0.0 || train_frac + val_frac >= 1.0) {
        throw config_error("split fractions must be positive and sum below 1");
    }
    SplitSpec s;
    s.train_end = cfg.t0 + static_cast<std::int64_t>(train_frac * cfg.t_span);
    s.val_end = cfg.t0 + static_cast<std::int64_t>((train_frac + val_frac) * cfg.t_span);
    return s;
}

// ---------------------------------------------------------------------------
// Impression and catalog files: one JSON object per line, UTF-8.
// ---------------------------------------------------------------------------

void write_impressions(const Dataset& data, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw data_error("cannot open '" + path + "' for writing");
    for (const auto& r : data.rows) {
        ordered_json j;
        j["id"] = r.id;
        j["ts"] = r.ts;
        j["source"] = std::string(1, source_code(r.source));
        j["user_id"] = r.user_id;
        j["show_id"] = r.show_id;
        j["f_user"] = r.features.user;
        j["f_content"] = r.features.content;
        j["f_context"] = r.features.context;
        j["f_creative"] = r.features.creative;
        ordered_json labels = ordered_json::object();
        ordered_json present = ordered_json::object();
        for (std::size_t t = 0; t < data.tasks.size(); ++t) {
            present[data.tasks[t]] = r.label_present(t);
            if (r.label_present(t)) labels[data.tasks[t]] = static_cast<int>(r.labels[t]);
        }
        j["labels"] = labels;
        j["label_present"] = present;
        j["cost"] = r.cost;
        os << j.dump() << '\n';
    }
    if (!os) throw data_error("failed writing '" + path + "'");
}

namespace {

[[noreturn]] void line_error(const std::string& path, std::size_t line_no,
                             const std::string& msg) {
    throw data_error(path + ":" + std::to_string(line_no) + ": " + msg);
}

}  // namespace

Dataset read_impressions(const std::string& path,
                         const std::vector<std::string>& expected_tasks) {
    std::ifstream is(path);
    if (!is) throw data_error("cannot open impression file '" + path + "'");

    Dataset ds;
    ds.tasks = expected_tasks;
    if (ds.tasks.size() > 8) throw config_error("at most 8 tasks supported");

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            line_error(path, line_no, std::string("bad JSON: ") + e.what());
        }
        ImpressionRecord r;
        auto need = [&](const char* field) -> const ordered_json& {
            auto it = j.find(field);
            if (it == j.end()) {
                line_error(path, line_no, std::string("missing field '") + field + "'");
            }
            return *it;
        };
        try {
            r.id = need("id").get<std::uint64_t>();
            r.ts = need("ts").get<std::int64_t>();
            r.source = source_from_code(need("source").get<std::string>());
            r.user_id = need("user_id").get<std::uint32_t>();
            r.show_id = need("show_id").get<std::uint32_t>();
            r.features.user = need("f_user").get<std::vector<double>>();
            r.features.content = need("f_content").get<std::vector<double>>();
            r.features.context = need("f_context").get<std::vector<double>>();
            r.features.creative = need("f_creative").get<std::vector<double>>();
            r.cost = need("cost").get<double>();

            const ordered_json& labels = need("labels");
            const ordered_json& present = need("label_present");
            std::vector<std::string> unknown;
            for (const auto& [k, v] : labels.items()) {
                (void)v;
                if (std::find(ds.tasks.begin(), ds.tasks.end(), k) == ds.tasks.end()) {
                    unknown.push_back(k);
                }
            }
            for (const auto& [k, v] : present.items()) {
                (void)v;
                if (std::find(ds.tasks.begin(), ds.tasks.end(), k) == ds.tasks.end()) {
                    unknown.push_back(k);
                }
            }
            if (!unknown.empty()) {
                std::string msg = "unknown task label keys:";
                for (const auto& u : unknown) msg += " '" + u + "'";
                line_error(path, line_no, msg);
            }
            r.labels.fill(-1);
            for (std::size_t t = 0; t < ds.tasks.size(); ++t) {
                const auto pit = present.find(ds.tasks[t]);
                const bool has = pit != present.end() && pit->get<bool>();
                if (has) {
                    const auto lit = labels.find(ds.tasks[t]);
                    if (lit == labels.end()) {
                        line_error(path, line_no,
                                   "label_present true but no label for '" + ds.tasks[t] + "'");
                    }
                    const int v = lit->get<int>();
                    if (v != 0 && v != 1) {
                        line_error(path, line_no, "label for '" + ds.tasks[t] + "' not in {0,1}");
                    }
                    r.labels[t] = static_cast<std::int8_t>(v);
                }
            }
        } catch (const data_error&) {
            throw;
        } catch (const std::exception& e) {
            line_error(path, line_no, std::string("bad field value: ") + e.what());
        }
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

void write_catalog(const World& world, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw data_error("cannot open '" + path + "' for writing");
    for (const auto& s : world.shows) {
        ordered_json j;
        j["show_id"] = s.show_id;
        j["tier"] = s.tier;
        j["hours_30d"] = s.hours_30d;
        j["lifetime_streams"] = s.lifetime_streams;
        j["popularity"] = s.popularity;
        os << j.dump() << '\n';
    }
    if (!os) throw data_error("failed writing '" + path + "'");
}

std::vector<CatalogEntry> read_catalog(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw data_error("cannot open catalog file '" + path + "'");
    std::vector<CatalogEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            ordered_json j = ordered_json::parse(line);
            CatalogEntry e;
            e.show_id = j.at("show_id").get<std::uint32_t>();
            e.tier = j.at("tier").get<int>();
            e.hours_30d = j.at("hours_30d").get<double>();
            e.lifetime_streams = j.at("lifetime_streams").get<std::uint64_t>();
            e.popularity = j.at("popularity").get<double>();
            out.push_back(e);
        } catch (const std::exception& e) {
            line_error(path, line_no, std::string("bad catalog row: ") + e.what());
        }
    }
    return out;
}

}  // namespace podmtl
