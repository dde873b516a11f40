#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "podmtl/evaluation.hpp"
#include "podmtl/rng.hpp"

using namespace podmtl;

namespace {

// Exhaustive rank-enumeration oracle: rank of each item is computed by
// explicit pairwise counting (score desc, earlier index wins ties), then AP
// is the mean over positives of precision at the positive's rank.
double ap_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
    const std::size_t n = scores.size();
    double ap = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == 0) continue;
        ++positives;
        std::size_t rank = 1;
        std::size_t tp_at_rank = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const bool above = scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
            if (above) {
                ++rank;
                if (labels[j] != 0) ++tp_at_rank;
            }
        }
        ap += static_cast<double>(tp_at_rank + 1) / static_cast<double>(rank);
    }
    return ap / static_cast<double>(positives);
}

// Expected AP under uniformly random tie-breaking, by enumerating every
// distinct arrangement of each tied group (small n only).
double ap_tie_enumeration(const std::vector<double>& scores, const std::vector<int>& labels) {
    // group indices by score, descending
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    struct Group {
        std::size_t t = 0, f = 0;
    };
    std::vector<Group> groups;
    std::size_t g = 0;
    while (g < order.size()) {
        std::size_t h = g;
        Group grp;
        while (h < order.size() && scores[order[h]] == scores[order[g]]) {
            if (labels[order[h]] != 0) {
                ++grp.t;
            } else {
                ++grp.f;
            }
            ++h;
        }
        groups.push_back(grp);
        g = h;
    }

    // enumerate arrangements per group independently (expectation is
    // separable because precision depends only on counts above)
    double total = 0.0;
    std::size_t positives = 0;
    std::size_t tp_before = 0, n_before = 0;
    for (const Group& grp : groups) {
        positives += grp.t;
        const std::size_t m = grp.t + grp.f;
        if (grp.t > 0 && m > 0) {
            std::vector<int> arrangement(m, 0);
            for (std::size_t i = 0; i < grp.t; ++i) arrangement[i] = 1;
            std::sort(arrangement.begin(), arrangement.end());
            double sum = 0.0;
            std::size_t count = 0;
            do {
                double contribution = 0.0;
                std::size_t tp = tp_before;
                for (std::size_t k = 0; k < m; ++k) {
                    if (arrangement[k] != 0) {
                        ++tp;
                        contribution +=
                            static_cast<double>(tp) / static_cast<double>(n_before + k + 1);
                    }
                }
                sum += contribution;
                ++count;
            } while (std::next_permutation(arrangement.begin(), arrangement.end()));
            total += sum / static_cast<double>(count);
        }
        tp_before += grp.t;
        n_before += m;
    }
    return total / static_cast<double>(positives);
}

}  // namespace

TEST_CASE("average_precision: the worked example") {
    const std::vector<double> scores = {0.9, 0.8, 0.7};
    const std::vector<int> labels = {1, 0, 1};
    CHECK(average_precision(scores, labels) ==
          doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("average_precision: perfect ranking scores one") {
    const std::vector<double> scores = {0.9, 0.8, 0.7, 0.2, 0.1};
    const std::vector<int> labels = {1, 1, 1, 0, 0};
    CHECK(average_precision(scores, labels) == 1.0);
}

TEST_CASE("average_precision: reversed-perfect matches the analytic worst case") {
    // positives all ranked below the negatives
    const std::size_t P = 3, N = 4;
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < N; ++i) {
        scores.push_back(1.0 - 0.01 * static_cast<double>(i));
        labels.push_back(0);
    }
    for (std::size_t i = 0; i < P; ++i) {
        scores.push_back(0.5 - 0.01 * static_cast<double>(i));
        labels.push_back(1);
    }
    double analytic = 0.0;
    for (std::size_t i = 1; i <= P; ++i) {
        analytic += static_cast<double>(i) / static_cast<double>(N + i);
    }
    analytic /= static_cast<double>(P);
    CHECK(average_precision(scores, labels) == doctest::Approx(analytic).epsilon(1e-12));
    CHECK(average_precision(scores, labels) == doctest::Approx(ap_oracle(scores, labels)));
}

TEST_CASE("average_precision: zero positives is an error, not a zero") {
    const std::vector<double> scores = {0.3, 0.2};
    const std::vector<int> labels = {0, 0};
    CHECK_THROWS_AS(average_precision(scores, labels), data_error);
    CHECK_FALSE(try_average_precision(scores, labels).has_value());
}

TEST_CASE("average_precision agrees with the brute-force oracle on random instances") {
    Rng rng(44);
    for (int it = 0; it < 1000; ++it) {
        const std::size_t n = 1 + rng.uniform_int(12);
        std::vector<double> scores(n);
        std::vector<int> labels(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            // coarse grid induces frequent ties
            scores[i] = std::floor(rng.uniform01() * 5.0) / 5.0;
            labels[i] = rng.uniform01() < 0.4 ? 1 : 0;
        }
        if (std::accumulate(labels.begin(), labels.end(), 0) == 0) {
            labels[rng.uniform_int(n)] = 1;
        }
        const double got = average_precision(scores, labels);
        const double want = ap_oracle(scores, labels);
        CHECK(std::fabs(got - want) <= 1e-12);
    }
}

TEST_CASE("tie-averaged AP equals the permutation-enumeration expectation") {
    Rng rng(45);
    for (int it = 0; it < 300; ++it) {
        const std::size_t n = 1 + rng.uniform_int(8);
        std::vector<double> scores(n);
        std::vector<int> labels(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = std::floor(rng.uniform01() * 3.0) / 3.0;
            labels[i] = rng.uniform01() < 0.5 ? 1 : 0;
        }
        if (std::accumulate(labels.begin(), labels.end(), 0) == 0) {
            labels[rng.uniform_int(n)] = 1;
        }
        const double got = average_precision_tie_averaged(scores, labels);
        const double want = ap_tie_enumeration(scores, labels);
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("tie-averaged AP equals plain AP when scores are distinct") {
    Rng rng(46);
    for (int it = 0; it < 100; ++it) {
        const std::size_t n = 2 + rng.uniform_int(10);
        std::vector<double> scores(n);
        std::vector<int> labels(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.uniform01();
            labels[i] = rng.uniform01() < 0.5 ? 1 : 0;
        }
        if (std::accumulate(labels.begin(), labels.end(), 0) == 0) {
            labels[rng.uniform_int(n)] = 1;
        }
        CHECK(average_precision_tie_averaged(scores, labels) ==
              doctest::Approx(average_precision(scores, labels)).epsilon(1e-12));
    }
}

TEST_CASE("AP is invariant under strictly monotone score transformations") {
    Rng rng(47);
    for (int it = 0; it < 50; ++it) {
        const std::size_t n = 5 + rng.uniform_int(40);
        std::vector<double> scores(n);
        std::vector<int> labels(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.uniform01();
            labels[i] = rng.uniform01() < 0.3 ? 1 : 0;
        }
        if (std::accumulate(labels.begin(), labels.end(), 0) == 0) {
            labels[rng.uniform_int(n)] = 1;
        }
        const double base = average_precision(scores, labels);

        std::vector<double> cubed = scores;
        for (auto& s : cubed) s = s * s * s;
        CHECK(std::fabs(average_precision(cubed, labels) - base) <= 1e-12);

        std::vector<double> squashed = scores;
        for (auto& s : squashed) s = sigmoid_scalar(5.0 * s - 2.0);
        CHECK(std::fabs(average_precision(squashed, labels) - base) <= 1e-12);
    }
}

TEST_CASE("interpolated AP dominates the primary variant") {
    Rng rng(48);
    for (int it = 0; it < 50; ++it) {
        const std::size_t n = 5 + rng.uniform_int(20);
        std::vector<double> scores(n);
        std::vector<int> labels(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.uniform01();
            labels[i] = rng.uniform01() < 0.4 ? 1 : 0;
        }
        if (std::accumulate(labels.begin(), labels.end(), 0) == 0) {
            labels[rng.uniform_int(n)] = 1;
        }
        CHECK(average_precision_interpolated(scores, labels) >=
              average_precision(scores, labels) - 1e-15);
    }
}

TEST_CASE("relative_change: examples and errors") {
    CHECK(relative_change(0.2, 0.2) == 0.0);
    CHECK(relative_change(0.30, 0.20) == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(relative_change(0.10, 0.20) == doctest::Approx(-50.0).epsilon(1e-12));
    CHECK_THROWS_AS(relative_change(0.1, 0.0), config_error);
    CHECK_THROWS_AS(relative_change(0.1, -0.2), config_error);
}

namespace {

std::vector<CatalogEntry> toy_catalog() {
    std::vector<CatalogEntry> cat;
    for (std::uint32_t i = 0; i < 16; ++i) {
        CatalogEntry e;
        e.show_id = i;
        e.tier = static_cast<int>(i % 8);
        e.lifetime_streams = e.tier >= 3 ? 1000 : 10000;
        e.popularity = 1.0;
        cat.push_back(e);
    }
    return cat;
}

}  // namespace

TEST_CASE("online_metrics: i2s and eCPS definitions") {
    std::vector<ServedImpression> imps;
    for (int i = 0; i < 12; ++i) {
        ServedImpression imp;
        imp.show_id = static_cast<std::uint32_t>(i % 16);
        imp.streamed = i < 3;
        imp.clicked = i < 2;
        imp.cost = 1.0;
        imps.push_back(imp);
    }
    const MetricsReport rep = online_metrics(imps, toy_catalog());
    CHECK(rep.all.impressions == 12);
    CHECK(rep.all.streams == 3);
    CHECK(rep.all.i2s() == 0.25);
    CHECK(rep.all.ctr() == doctest::Approx(2.0 / 12.0));

    // spend 100 over 50 streams -> eCPS 2
    SegmentMetrics seg;
    seg.impressions = 200;
    seg.streams = 50;
    seg.spend = 100.0;
    REQUIRE(seg.ecps().has_value());
    CHECK(*seg.ecps() == 2.0);
    CHECK(*seg.ecps() * static_cast<double>(seg.streams) == 100.0);  // exact
}

TEST_CASE("online_metrics: eCPS is absent, never zero, without streams") {
    std::vector<ServedImpression> imps(4);
    for (auto& imp : imps) {
        imp.show_id = 1;
        imp.cost = 2.0;
    }
    const MetricsReport rep = online_metrics(imps, toy_catalog());
    CHECK_FALSE(rep.all.ecps().has_value());
    CHECK(rep.all.spend == 8.0);
}

TEST_CASE("online_metrics: tier slices sum exactly to the all segment") {
    Rng rng(50);
    std::vector<ServedImpression> imps;
    for (int i = 0; i < 5000; ++i) {
        ServedImpression imp;
        imp.show_id = static_cast<std::uint32_t>(rng.uniform_int(16));
        imp.streamed = rng.uniform01() < 0.1;
        imp.clicked = rng.uniform01() < 0.2;
        imp.cost = 3.0;  // integer spend fixture
        imps.push_back(imp);
    }
    const MetricsReport rep = online_metrics(imps, toy_catalog());
    std::uint64_t imp_sum = 0, stream_sum = 0, click_sum = 0;
    double spend_sum = 0.0;
    for (const auto& t : rep.tiers) {
        imp_sum += t.impressions;
        stream_sum += t.streams;
        click_sum += t.clicks;
        spend_sum += t.spend;
    }
    CHECK(imp_sum == rep.all.impressions);
    CHECK(stream_sum == rep.all.streams);
    CHECK(click_sum == rep.all.clicks);
    CHECK(spend_sum == rep.all.spend);  // exact for integer-cost fixtures

    // eCPS * streams == spend exactly when the division is exact
    for (const auto& t : rep.tiers) {
        if (t.streams == 0) continue;
        if (static_cast<std::uint64_t>(t.spend) % t.streams == 0) {
            CHECK(*t.ecps() * static_cast<double>(t.streams) == t.spend);
        }
    }

    // the less-streamed segment is exactly the union of tiers 3..7 here
    std::uint64_t ls = 0;
    for (std::size_t t = 3; t < 8; ++t) ls += rep.tiers[t].impressions;
    CHECK(rep.less_streamed.impressions == ls);
}

TEST_CASE("online_metrics: unjoinable shows are listed") {
    std::vector<ServedImpression> imps(1);
    imps[0].show_id = 999;
    try {
        online_metrics(imps, toy_catalog());
        FAIL("expected data_error");
    } catch (const data_error& e) {
        CHECK(std::string(e.what()).find("999") != std::string::npos);
    }
}

TEST_CASE("metrics report JSON round-trips") {
    MetricsReport rep;
    rep.model_id = "m";
    rep.dataset_id = "d";
    rep.seed = 3;
    rep.task_ap["AdStream"] = 0.5;
    rep.task_ap["Like"] = std::nullopt;
    rep.task_ap_tie_averaged["AdStream"] = 0.5;
    rep.tiers[2].impressions = 10;
    rep.tiers[2].streams = 5;
    rep.tiers[2].spend = 2.5;
    rep.all = rep.tiers[2];
    const auto j = rep.to_json();
    const MetricsReport back = MetricsReport::from_json(j);
    CHECK(back.model_id == "m");
    CHECK(back.task_ap.at("AdStream") == 0.5);
    CHECK_FALSE(back.task_ap.at("Like").has_value());
    CHECK(back.tiers[2].streams == 5);
    CHECK(back.all.spend == 2.5);
}

TEST_CASE("eval policy: stream heads default to their native channels") {
    const TaskSpec spec = TaskSpec::standard_five();
    const EvalPolicy p = EvalPolicy::native_defaults(spec);
    CHECK(p.includes(task::kPromotionStream, Source::kPromotion));
    CHECK_FALSE(p.includes(task::kPromotionStream, Source::kAd));
    CHECK_FALSE(p.includes(task::kAdStream, Source::kPromotion));
    CHECK(p.includes(task::kAdStream, Source::kAd));
    CHECK(p.includes(task::kClick, Source::kPromotion));
    CHECK(p.includes(task::kClick, Source::kAd));

    const EvalPolicy wide = EvalPolicy::native_defaults(spec, /*ad_heads_on_promo=*/true);
    CHECK(wide.includes(task::kAdStream, Source::kPromotion));
}
