#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "podmtl/dataio.hpp"

using namespace podmtl;

namespace {

GeneratorConfig small_world_cfg() {
    GeneratorConfig cfg;
    cfg.n_users = 2000;
    cfg.n_shows = 200;
    cfg.n_promo = 8000;
    cfg.n_ad = 2000;
    return cfg;
}

bool worlds_equal(const World& a, const World& b) {
    if (a.users.size() != b.users.size() || a.shows.size() != b.shows.size()) return false;
    for (std::size_t i = 0; i < a.users.size(); ++i) {
        if (a.users[i].latent != b.users[i].latent || a.users[i].bias != b.users[i].bias) {
            return false;
        }
    }
    for (std::size_t i = 0; i < a.shows.size(); ++i) {
        const auto& x = a.shows[i];
        const auto& y = b.shows[i];
        if (x.latent != y.latent || x.popularity != y.popularity || x.tier != y.tier ||
            x.hours_30d != y.hours_30d || x.lifetime_streams != y.lifetime_streams) {
            return false;
        }
    }
    return true;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.rows.size() != b.rows.size()) return false;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const auto& x = a.rows[i];
        const auto& y = b.rows[i];
        if (x.id != y.id || x.ts != y.ts || x.source != y.source || x.user_id != y.user_id ||
            x.show_id != y.show_id || x.labels != y.labels || x.cost != y.cost ||
            x.features.user != y.features.user || x.features.content != y.features.content ||
            x.features.context != y.features.context ||
            x.features.creative != y.features.creative) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("generate_world: deterministic per seed") {
    const GeneratorConfig cfg = small_world_cfg();
    const World a = generate_world(cfg, 5);
    const World b = generate_world(cfg, 5);
    const World c = generate_world(cfg, 6);
    CHECK(worlds_equal(a, b));
    CHECK_FALSE(worlds_equal(a, c));
}

TEST_CASE("generate_world: eight non-empty tiers at 800 shows") {
    GeneratorConfig cfg = small_world_cfg();
    cfg.n_shows = 800;
    const World w = generate_world(cfg, 7);
    std::array<std::size_t, 8> counts{};
    for (const auto& s : w.shows) {
        REQUIRE(s.tier >= 0);
        REQUIRE(s.tier <= 7);
        counts[static_cast<std::size_t>(s.tier)] += 1;
    }
    for (std::size_t t = 0; t < 8; ++t) CHECK(counts[t] == 100);
}

TEST_CASE("generate_world: top popularity decile holds most of the mass") {
    GeneratorConfig cfg = small_world_cfg();
    cfg.n_shows = 2000;
    const World w = generate_world(cfg, 8);
    std::vector<double> pops;
    for (const auto& s : w.shows) pops.push_back(s.popularity);
    std::sort(pops.begin(), pops.end(), std::greater<>());
    const double total = std::accumulate(pops.begin(), pops.end(), 0.0);
    const double top_decile =
        std::accumulate(pops.begin(), pops.begin() + static_cast<std::ptrdiff_t>(pops.size() / 10),
                        0.0);
    CHECK(top_decile / total > 0.40);
}

TEST_CASE("generate_world: tier is monotone in listening hours") {
    const World w = generate_world(small_world_cfg(), 9);
    for (const auto& a : w.shows) {
        for (const auto& b : w.shows) {
            if (a.hours_30d > b.hours_30d) CHECK(a.tier <= b.tier);
        }
    }
}

TEST_CASE("generate_world: the less-streamed flag matches tiers 3 and above") {
    const World w = generate_world(small_world_cfg(), 10);
    for (const auto& s : w.shows) {
        if (s.tier >= 3) {
            CHECK(s.lifetime_streams < 5000);
            CHECK(s.less_streamed());
        } else {
            CHECK(s.lifetime_streams >= 5000);
        }
        if (s.tier == 5) CHECK(s.lifetime_streams < 5000);
    }
}

TEST_CASE("generate_world: observation noise is non-decreasing in tier on every channel") {
    GeneratorConfig cfg = small_world_cfg();
    double prev_promo_var = -1.0;
    for (std::size_t t = 0; t < 8; ++t) {
        if (t > 0) {
            CHECK(cfg.content_noise_sd[t] >= cfg.content_noise_sd[t - 1]);
            CHECK(cfg.content_persistent_sd[t] >= cfg.content_persistent_sd[t - 1]);
            CHECK(cfg.ad_content_noise_sd[t] >= cfg.ad_content_noise_sd[t - 1]);
        }
        // total promotion-side observation variance: persistent + fresh
        const double promo_var = cfg.content_noise_sd[t] * cfg.content_noise_sd[t] +
                                 cfg.content_persistent_sd[t] * cfg.content_persistent_sd[t];
        CHECK(promo_var >= prev_promo_var);
        prev_promo_var = promo_var;
    }
    cfg.content_noise_sd[4] = 0.0;  // break monotonicity
    CHECK_THROWS_AS(generate_world(cfg, 1), config_error);
    CHECK_THROWS_AS([] {
        GeneratorConfig c = small_world_cfg();
        c.ad_content_noise_sd[5] = 0.0;
        generate_world(c, 1);
    }(), config_error);
    CHECK_THROWS_AS([] {
        GeneratorConfig c = small_world_cfg();
        c.latent_dim = 0;
        generate_world(c, 1);
    }(), config_error);
}

TEST_CASE("generate_world: persistent embedding error grows with tier") {
    const World w = generate_world(small_world_cfg(), 99);
    // mean squared offset per tier should track the configured schedule
    std::array<double, 8> ss{};
    std::array<std::size_t, 8> n{};
    for (const auto& s : w.shows) {
        for (double v : s.promo_embed_offset) {
            ss[static_cast<std::size_t>(s.tier)] += v * v;
            n[static_cast<std::size_t>(s.tier)] += 1;
        }
    }
    const double head = ss[0] / static_cast<double>(n[0]);
    const double tail = ss[5] / static_cast<double>(n[5]);
    CHECK(tail > 10.0 * head);  // 1.2^2 vs 0.02^2 with sampling slack
}

TEST_CASE("simulate_logs: deterministic per seed") {
    const World w = generate_world(small_world_cfg(), 11);
    const Dataset a = simulate_logs(w, 500, 200, 3);
    const Dataset b = simulate_logs(w, 500, 200, 3);
    const Dataset c = simulate_logs(w, 500, 200, 4);
    CHECK(datasets_equal(a, b));
    CHECK_FALSE(datasets_equal(a, c));
}

TEST_CASE("simulate_logs: zero channel offset equalizes stream probabilities") {
    GeneratorConfig cfg = small_world_cfg();
    cfg.ad_stream_offset = 0.0;
    const World w = generate_world(cfg, 12);
    for (std::uint32_t u = 0; u < 20; ++u) {
        for (std::uint32_t s = 0; s < 20; ++s) {
            CHECK(w.true_stream_prob(u, s, Source::kPromotion) ==
                  w.true_stream_prob(u, s, Source::kAd));
        }
    }
}

TEST_CASE("simulate_logs: positive base rates live in the imbalanced band") {
    const GeneratorConfig cfg = small_world_cfg();
    const World w = generate_world(cfg, 13);
    const Dataset ds = simulate_logs(w, 80000, 20000, 5);
    for (const auto& t : ds.tasks) {
        const std::size_t ti = ds.task_index(t);
        std::size_t present = 0, positive = 0;
        for (const auto& r : ds.rows) {
            if (!r.label_present(ti)) continue;
            ++present;
            positive += r.labels[ti];
        }
        REQUIRE(present > 0);
        const double rate = static_cast<double>(positive) / static_cast<double>(present);
        INFO("task ", t, " rate ", rate);
        CHECK(rate >= 0.005);
        CHECK(rate <= 0.20);
    }
}

TEST_CASE("simulate_logs: labels follow the source availability rule") {
    const World w = generate_world(small_world_cfg(), 14);
    const Dataset ds = simulate_logs(w, 300, 300, 6);
    const std::size_t i_ps = ds.task_index(task::kPromotionStream);
    const std::size_t i_as = ds.task_index(task::kAdStream);
    for (const auto& r : ds.rows) {
        if (r.source == Source::kPromotion) {
            CHECK(r.label_present(i_ps));
            CHECK(r.label_present(i_as));
            // the ad stream label aliases the promotion stream outcome
            CHECK(r.labels[i_ps] == r.labels[i_as]);
            CHECK(r.cost == 0.0);
        } else {
            CHECK_FALSE(r.label_present(i_ps));
            CHECK(r.label_present(i_as));
            CHECK(r.cost == doctest::Approx(0.25));
        }
    }
}

TEST_CASE("generator monotonicity: stream rate rises with true affinity") {
    const GeneratorConfig cfg = small_world_cfg();
    const World w = generate_world(cfg, 15);
    const Dataset ds = simulate_logs(w, 40000, 10000, 7);

    // decile the rows by true affinity, then check the decile stream rates
    struct Pair {
        double affinity;
        int streamed;
    };
    std::vector<Pair> pairs;
    const std::size_t i_as = ds.task_index(task::kAdStream);
    for (const auto& r : ds.rows) {
        if (!r.label_present(i_as)) continue;
        pairs.push_back({w.true_affinity(r.user_id, r.show_id), r.labels[i_as]});
    }
    REQUIRE(pairs.size() >= 10000);
    std::sort(pairs.begin(), pairs.end(),
              [](const Pair& a, const Pair& b) { return a.affinity < b.affinity; });
    std::vector<double> decile_rate(10, 0.0);
    for (std::size_t d = 0; d < 10; ++d) {
        const std::size_t lo = d * pairs.size() / 10;
        const std::size_t hi = (d + 1) * pairs.size() / 10;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += pairs[i].streamed;
        decile_rate[d] = s / static_cast<double>(hi - lo);
    }
    // Spearman correlation between decile index and rate rank
    std::vector<std::size_t> rank(10);
    std::iota(rank.begin(), rank.end(), 0);
    std::sort(rank.begin(), rank.end(),
              [&](std::size_t a, std::size_t b) { return decile_rate[a] < decile_rate[b]; });
    double d2 = 0.0;
    for (std::size_t pos = 0; pos < 10; ++pos) {
        const double diff = static_cast<double>(rank[pos]) - static_cast<double>(pos);
        d2 += diff * diff;
    }
    const double spearman = 1.0 - 6.0 * d2 / (10.0 * (100.0 - 1.0));
    CHECK(spearman > 0.9);
}

TEST_CASE("temporal_split: thirds land near thirds and ordering is strict") {
    GeneratorConfig cfg = small_world_cfg();
    const World w = generate_world(cfg, 16);
    const Dataset ds = simulate_logs(w, 30000, 7500, 8);
    SplitSpec spec;
    spec.train_end = cfg.t0 + cfg.t_span / 3;
    spec.val_end = cfg.t0 + 2 * cfg.t_span / 3;
    const Splits s = temporal_split(ds, spec);

    const double n = static_cast<double>(ds.rows.size());
    CHECK(std::fabs(s.train.rows.size() / n - 1.0 / 3.0) < 0.02);
    CHECK(std::fabs(s.val.rows.size() / n - 1.0 / 3.0) < 0.02);
    CHECK(std::fabs(s.test.rows.size() / n - 1.0 / 3.0) < 0.02);

    std::int64_t max_train = INT64_MIN, min_val = INT64_MAX, max_val = INT64_MIN,
                 min_test = INT64_MAX;
    for (const auto& r : s.train.rows) max_train = std::max(max_train, r.ts);
    for (const auto& r : s.val.rows) {
        min_val = std::min(min_val, r.ts);
        max_val = std::max(max_val, r.ts);
    }
    for (const auto& r : s.test.rows) min_test = std::min(min_test, r.ts);
    CHECK(max_train < min_val);
    CHECK(max_val < min_test);

    // channel labels retained
    CHECK(s.train.count_source(Source::kAd) > 0);
    CHECK(s.test.count_source(Source::kPromotion) > 0);
}

TEST_CASE("temporal_split: degenerate splits are rejected by name") {
    const World w = generate_world(small_world_cfg(), 17);
    const Dataset ds = simulate_logs(w, 300, 100, 9);
    SplitSpec spec;
    spec.train_end = w.cfg.t0 + w.cfg.t_span + 1;  // everything earlier
    spec.val_end = spec.train_end + 1;
    try {
        temporal_split(ds, spec);
        FAIL("expected data_error");
    } catch (const data_error& e) {
        CHECK(std::string(e.what()).find("validation") != std::string::npos);
    }
}

TEST_CASE("temporal_split: a record exactly at a boundary joins the later split") {
    Dataset ds;
    ds.tasks = TaskSpec::standard_five().tasks;
    for (int i = 0; i < 3; ++i) {
        ImpressionRecord r;
        r.id = static_cast<std::uint64_t>(i);
        r.ts = 100 * (i + 1);  // 100, 200, 300
        r.labels.fill(-1);
        ds.rows.push_back(r);
    }
    SplitSpec spec;
    spec.train_end = 200;  // the ts=200 row must land in validation
    spec.val_end = 300;    // the ts=300 row must land in test
    const Splits s = temporal_split(ds, spec);
    REQUIRE(s.train.rows.size() == 1);
    REQUIRE(s.val.rows.size() == 1);
    REQUIRE(s.test.rows.size() == 1);
    CHECK(s.train.rows[0].ts == 100);
    CHECK(s.val.rows[0].ts == 200);
    CHECK(s.test.rows[0].ts == 300);
}

TEST_CASE("impression files: lossless round-trip") {
    const World w = generate_world(small_world_cfg(), 18);
    const Dataset ds = simulate_logs(w, 700, 300, 10);
    const std::string path = "test_impressions_roundtrip.jsonl";
    write_impressions(ds, path);
    const Dataset back = read_impressions(path, ds.tasks);
    CHECK(datasets_equal(ds, back));
    std::filesystem::remove(path);
}

TEST_CASE("impression files: empty file gives an empty dataset") {
    const std::string path = "test_impressions_empty.jsonl";
    {
        std::ofstream os(path);
    }
    const Dataset ds = read_impressions(path, TaskSpec::standard_five().tasks);
    CHECK(ds.rows.empty());
    std::filesystem::remove(path);
}

TEST_CASE("impression files: missing source is rejected with the line number") {
    const std::string path = "test_impressions_bad.jsonl";
    {
        std::ofstream os(path);
        os << R"({"id":1,"ts":5,"source":"P","user_id":0,"show_id":0,"f_user":[],"f_content":[],"f_context":[],"f_creative":[],"labels":{},"label_present":{},"cost":0.0})"
           << '\n';
        os << R"({"id":2,"ts":6,"user_id":0,"show_id":0,"f_user":[],"f_content":[],"f_context":[],"f_creative":[],"labels":{},"label_present":{},"cost":0.0})"
           << '\n';
    }
    try {
        read_impressions(path, TaskSpec::standard_five().tasks);
        FAIL("expected data_error");
    } catch (const data_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find(":2:") != std::string::npos);
        CHECK(msg.find("source") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("impression files: unknown task label keys are listed") {
    const std::string path = "test_impressions_unknown.jsonl";
    {
        std::ofstream os(path);
        os << R"({"id":1,"ts":5,"source":"P","user_id":0,"show_id":0,"f_user":[],"f_content":[],"f_context":[],"f_creative":[],"labels":{"Mystery":1},"label_present":{"Mystery":true},"cost":0.0})"
           << '\n';
    }
    try {
        read_impressions(path, TaskSpec::standard_five().tasks);
        FAIL("expected data_error");
    } catch (const data_error& e) {
        CHECK(std::string(e.what()).find("Mystery") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("catalog files: round-trip of the public fields") {
    const World w = generate_world(small_world_cfg(), 19);
    const std::string path = "test_catalog.jsonl";
    write_catalog(w, path);
    const auto entries = read_catalog(path);
    REQUIRE(entries.size() == w.shows.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        CHECK(entries[i].show_id == w.shows[i].show_id);
        CHECK(entries[i].tier == w.shows[i].tier);
        CHECK(entries[i].hours_30d == w.shows[i].hours_30d);
        CHECK(entries[i].lifetime_streams == w.shows[i].lifetime_streams);
        CHECK(entries[i].popularity == w.shows[i].popularity);
    }
    std::filesystem::remove(path);
}
