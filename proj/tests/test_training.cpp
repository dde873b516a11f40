#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "podmtl/dataio.hpp"
#include "podmtl/training.hpp"
#include "test_helpers.hpp"

using namespace podmtl;

namespace {

ModelConfig tiny_model() {
    ModelConfig c;
    c.user_dim = 3;
    c.content_dim = 3;
    c.context_dim = 2;
    c.creative_dim = 2;
    c.encoder_widths = {6, 4};
    c.tower_widths = {3};
    return c;
}

// Hand-rolled dataset with explicit labels per row.
struct RowSpec {
    Source source;
    std::map<std::string, int> labels;  // absent = label not present
};

Dataset make_dataset(const ModelConfig& cfg, const std::vector<RowSpec>& rows,
                     std::uint64_t seed) {
    Dataset ds;
    ds.tasks = TaskSpec::standard_five().tasks;
    Rng rng(seed);
    std::uint64_t id = 0;
    for (const auto& spec : rows) {
        ImpressionRecord r;
        r.id = id++;
        r.ts = 1000 + static_cast<std::int64_t>(id);
        r.source = spec.source;
        r.user_id = static_cast<std::uint32_t>(rng.uniform_int(100));
        r.show_id = static_cast<std::uint32_t>(rng.uniform_int(50));
        auto fill = [&](std::vector<double>& v, std::size_t d) {
            v.resize(d);
            for (auto& x : v) x = rng.normal();
        };
        fill(r.features.user, cfg.user_dim);
        fill(r.features.content, cfg.content_dim);
        fill(r.features.context, cfg.context_dim);
        fill(r.features.creative, cfg.creative_dim);
        r.labels.fill(-1);
        for (const auto& [t, v] : spec.labels) {
            r.labels[ds.task_index(t)] = static_cast<std::int8_t>(v);
        }
        r.cost = r.source == Source::kAd ? 0.25 : 0.0;
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

RowSpec promo_row_all_labels(int stream, int click, int like, int follow) {
    return RowSpec{Source::kPromotion,
                   {{task::kPromotionStream, stream},
                    {task::kAdStream, stream},
                    {task::kClick, click},
                    {task::kLike, like},
                    {task::kFollow, follow}}};
}

RowSpec ad_row_all_labels(int stream, int click, int like, int follow) {
    return RowSpec{Source::kAd,
                   {{task::kAdStream, stream},
                    {task::kClick, click},
                    {task::kLike, like},
                    {task::kFollow, follow}}};
}

// Independent scalar-loop oracle for the masked loss.
LossBreakdown loss_oracle(const std::map<std::string, Matrix>& logits, const Batch& batch,
                          const LossConfig& cfg) {
    LossBreakdown bd;
    for (const auto& t : cfg.tasks.tasks) {
        const Matrix& z = logits.at(t);
        const Matrix& y = batch.labels.at(t);
        const Matrix& w = batch.contrib.at(t);
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            if (w[i] == 0.0) continue;
            const double p = sigmoid_scalar(z[i]);
            sum += -(y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
            ++n;
        }
        if (n == 0) {
            bd.skipped.push_back(t);
            continue;
        }
        bd.task_mean[t] = sum / static_cast<double>(n);
        bd.task_rows[t] = n;
        bd.total += cfg.tasks.weight(t) * bd.task_mean[t];
    }
    return bd;
}

}  // namespace

TEST_CASE("masked_loss: single promotion row at logit zero costs ln 2 per task") {
    const ModelConfig cfg = tiny_model();
    const LossConfig loss = LossConfig::standard();
    const Dataset ds = make_dataset(cfg, {promo_row_all_labels(1, 1, 1, 1)}, 1);
    const std::vector<std::size_t> idx = {0};
    const Batch batch = make_batch(ds, cfg, idx, loss);

    std::map<std::string, Matrix> logits;
    for (const auto& t : loss.tasks.tasks) logits[t] = Matrix(1, 1, 0.0);
    const LossBreakdown bd = masked_loss_value(logits, batch, loss);
    for (const auto& t : loss.tasks.tasks) {
        CHECK(bd.task_mean.at(t) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    }
    CHECK(bd.total == doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("masked_loss: a lone ad row leaves promotion-only tasks at exactly zero") {
    const ModelConfig cfg = tiny_model();
    const LossConfig loss = LossConfig::standard();
    const Dataset ds = make_dataset(cfg, {ad_row_all_labels(1, 0, 1, 0)}, 2);
    const std::vector<std::size_t> idx = {0};
    const Batch batch = make_batch(ds, cfg, idx, loss);

    std::map<std::string, Matrix> logits;
    for (const auto& t : loss.tasks.tasks) logits[t] = Matrix(1, 1, 0.3);
    const LossBreakdown bd = masked_loss_value(logits, batch, loss);

    // masked: PromotionStream, Like, Follow contribute nothing
    for (const auto& t : {task::kPromotionStream, task::kLike, task::kFollow}) {
        CHECK(std::find(bd.skipped.begin(), bd.skipped.end(), t) != bd.skipped.end());
        CHECK(bd.task_mean.count(t) == 0);
    }
    CHECK(bd.task_mean.count(task::kAdStream) == 1);
    CHECK(bd.task_mean.count(task::kClick) == 1);
}

TEST_CASE("masked_loss matches the per-row scalar-loop oracle") {
    const ModelConfig cfg = tiny_model();
    const LossConfig loss = LossConfig::standard();
    Rng rng(17);
    std::vector<RowSpec> rows;
    for (int i = 0; i < 40; ++i) {
        auto flip = [&]() { return rng.uniform01() < 0.3 ? 1 : 0; };
        if (rng.uniform01() < 0.5) {
            rows.push_back(promo_row_all_labels(flip(), flip(), flip(), flip()));
        } else {
            rows.push_back(ad_row_all_labels(flip(), flip(), flip(), flip()));
        }
    }
    const Dataset ds = make_dataset(cfg, rows, 3);
    std::vector<std::size_t> idx(rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    const Batch batch = make_batch(ds, cfg, idx, loss);

    std::map<std::string, Matrix> logits;
    for (const auto& t : loss.tasks.tasks) {
        logits[t] = testutil::random_matrix(rng, rows.size(), 1, 1.5);
    }
    const LossBreakdown got = masked_loss_value(logits, batch, loss);
    const LossBreakdown want = loss_oracle(logits, batch, loss);
    CHECK(got.total == doctest::Approx(want.total).epsilon(1e-10));
    for (const auto& [t, v] : want.task_mean) {
        CHECK(got.task_mean.at(t) == doctest::Approx(v).epsilon(1e-10));
        CHECK(got.task_rows.at(t) == want.task_rows.at(t));
    }
}

TEST_CASE("masked_loss: all-masked batch raises the empty-loss error") {
    const ModelConfig cfg = tiny_model();
    LossConfig loss = LossConfig::standard();
    // force every mask entry to zero
    for (const auto& t : loss.tasks.tasks) {
        loss.mask.set(Source::kPromotion, t, false);
        loss.mask.set(Source::kAd, t, false);
    }
    const Dataset ds = make_dataset(cfg, {promo_row_all_labels(1, 0, 0, 0)}, 4);
    const std::vector<std::size_t> idx = {0};
    const Batch batch = make_batch(ds, cfg, idx, loss);
    std::map<std::string, Matrix> logits;
    for (const auto& t : loss.tasks.tasks) logits[t] = Matrix(1, 1, 0.0);
    CHECK_THROWS_AS(masked_loss_value(logits, batch, loss), config_error);
}

TEST_CASE("balanced_batches: exact parity for even batch sizes") {
    BalancedBatcher batcher(4000, 1000, 64, 9);
    std::size_t batches = 0;
    for (int epoch = 0; epoch < 2; ++epoch) {
        for (const auto& d : batcher.next_epoch()) {
            CHECK(d.promo_rows.size() == 32);
            CHECK(d.ad_rows.size() == 32);
            ++batches;
        }
    }
    CHECK(batches >= 100);
}

TEST_CASE("balanced_batches: odd batch size alternates the extra row") {
    BalancedBatcher batcher(500, 500, 3, 10);
    const auto epoch = batcher.next_epoch();
    REQUIRE(epoch.size() >= 4);
    for (std::size_t k = 0; k < epoch.size(); ++k) {
        const auto& d = epoch[k];
        CHECK(d.promo_rows.size() + d.ad_rows.size() == 3);
        if (k % 2 == 0) {
            CHECK(d.promo_rows.size() == 2);
            CHECK(d.ad_rows.size() == 1);
        } else {
            CHECK(d.promo_rows.size() == 1);
            CHECK(d.ad_rows.size() == 2);
        }
    }
}

TEST_CASE("balanced_batches: deterministic per seed") {
    BalancedBatcher a(1000, 300, 16, 42);
    BalancedBatcher b(1000, 300, 16, 42);
    BalancedBatcher c(1000, 300, 16, 43);
    const auto ea = a.next_epoch();
    const auto eb = b.next_epoch();
    const auto ec = c.next_epoch();
    REQUIRE(ea.size() == eb.size());
    bool identical = true, differs = false;
    for (std::size_t i = 0; i < ea.size(); ++i) {
        if (ea[i].promo_rows != eb[i].promo_rows || ea[i].ad_rows != eb[i].ad_rows) {
            identical = false;
        }
        if (i < ec.size() &&
            (ea[i].promo_rows != ec[i].promo_rows || ea[i].ad_rows != ec[i].ad_rows)) {
            differs = true;
        }
    }
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("balanced_batches: within-source order is a shuffle that covers the pool") {
    BalancedBatcher batcher(64, 16, 8, 5);
    const auto epoch = batcher.next_epoch();
    std::vector<std::size_t> seen;
    for (const auto& d : epoch) {
        for (auto r : d.promo_rows) seen.push_back(r);
    }
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> want(64);
    std::iota(want.begin(), want.end(), 0);
    CHECK(seen == want);  // larger pool consumed exactly once, no repeats
}

TEST_CASE("balanced_batches: empty pools are refused with a pointer to single-source mode") {
    CHECK_THROWS_AS(BalancedBatcher(0, 100, 8, 1), config_error);
    try {
        BalancedBatcher batcher(100, 0, 8, 1);
        FAIL("expected config_error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("single-source") != std::string::npos);
    }
}

TEST_CASE("balanced_batches: promotion share stays within one percent of half") {
    BalancedBatcher batcher(100000, 25000, 63, 77);
    std::size_t promo = 0, total = 0, batches = 0;
    while (batches < 100) {
        for (const auto& d : batcher.next_epoch()) {
            promo += d.promo_rows.size();
            total += d.promo_rows.size() + d.ad_rows.size();
            if (++batches == 100) break;
        }
    }
    const double share = static_cast<double>(promo) / static_cast<double>(total);
    CHECK(share >= 0.49);
    CHECK(share <= 0.51);
}

TEST_CASE("adam_step: first update matches the hand-evaluated formula") {
    ModelConfig cfg = tiny_model();
    ModelParams p = init_params(cfg, TaskSpec::standard_five(), 20);
    ModelParams before = p;
    AdamState st;
    st.cfg = AdamConfig{};  // lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8

    std::map<std::string, Matrix> grads;
    p.for_each_block([&](const std::string& name, Matrix& m) {
        grads[name] = Matrix(m.rows(), m.cols(), 1.0);
    });
    adam_step(p, grads, st);

    const double want_delta = -1e-3 / (1.0 + 1e-8);
    bool checked = false;
    p.for_each_block([&](const std::string& name, Matrix& m) {
        Matrix prev;
        before.for_each_block([&](const std::string& n2, Matrix& m2) {
            if (n2 == name) prev = m2;
        });
        for (std::size_t i = 0; i < m.size(); ++i) {
            CHECK(m[i] - prev[i] == doctest::Approx(want_delta).epsilon(1e-12));
            checked = true;
        }
    });
    CHECK(checked);
}

TEST_CASE("adam_step: zero gradients leave parameters unchanged") {
    ModelConfig cfg = tiny_model();
    ModelParams p = init_params(cfg, TaskSpec::standard_five(), 21);
    ModelParams before = p;
    AdamState st;
    std::map<std::string, Matrix> grads;
    p.for_each_block([&](const std::string& name, Matrix& m) {
        grads[name] = Matrix(m.rows(), m.cols(), 0.0);
    });
    for (int step = 0; step < 5; ++step) adam_step(p, grads, st);
    bool equal = true;
    p.for_each_block([&](const std::string& name, Matrix& m) {
        before.for_each_block([&](const std::string& n2, Matrix& m2) {
            if (n2 == name && !(m == m2)) equal = false;
        });
    });
    CHECK(equal);
}

TEST_CASE("adam_step: identical blocks with identical gradients stay identical") {
    ModelConfig cfg = tiny_model();
    ModelParams p = init_params(cfg, TaskSpec::standard_five(), 22);
    // make two towers bitwise identical
    p.towers.at(task::kLike) = p.towers.at(task::kFollow);
    AdamState st;
    Rng rng(23);
    for (int step = 0; step < 7; ++step) {
        std::map<std::string, Matrix> grads;
        p.for_each_block([&](const std::string& name, Matrix& m) {
            grads[name] = Matrix(m.rows(), m.cols(), 0.0);
        });
        // same random gradient for the twinned towers
        for (std::size_t layer = 0; layer < p.towers.at(task::kLike).size(); ++layer) {
            const auto& shape_w = p.towers.at(task::kLike)[layer].weight;
            Matrix g = testutil::random_matrix(rng, shape_w.rows(), shape_w.cols());
            grads["tower.Like." + std::to_string(layer) + ".weight"] = g;
            grads["tower.Follow." + std::to_string(layer) + ".weight"] = g;
        }
        adam_step(p, grads, st);
    }
    for (std::size_t layer = 0; layer < p.towers.at(task::kLike).size(); ++layer) {
        CHECK(p.towers.at(task::kLike)[layer].weight == p.towers.at(task::kFollow)[layer].weight);
        CHECK(p.towers.at(task::kLike)[layer].bias == p.towers.at(task::kFollow)[layer].bias);
    }
}

TEST_CASE("adam_step: NaN gradients abort naming the block") {
    ModelConfig cfg = tiny_model();
    ModelParams p = init_params(cfg, TaskSpec::standard_five(), 24);
    AdamState st;
    std::map<std::string, Matrix> grads;
    p.for_each_block([&](const std::string& name, Matrix& m) {
        grads[name] = Matrix(m.rows(), m.cols(), 0.0);
    });
    grads["encoder.0.weight"][0] = std::nan("");
    try {
        adam_step(p, grads, st);
        FAIL("expected divergence_error");
    } catch (const divergence_error& e) {
        CHECK(std::string(e.what()).find("encoder.0.weight") != std::string::npos);
    }
}

namespace {

// Forward + masked loss + backward for one batch; returns per-block grads.
std::map<std::string, Matrix> batch_gradients(ModelParams& params, const Dataset& ds,
                                              const std::vector<std::size_t>& idx,
                                              const LossConfig& loss) {
    const Batch batch = make_batch(ds, params.config, idx, loss);
    GradTape tape;
    ForwardBuild fb =
        build_forward(tape, params, batch.features, NormMode::kTrain, loss.tasks.tasks);
    auto [node, bd] = masked_loss(tape, fb.logits, batch, loss);
    (void)bd;
    return block_gradients(fb, tape.backward(node));
}

}  // namespace

TEST_CASE("gradient isolation: ad-only batches never touch promotion-only towers") {
    const ModelConfig cfg = tiny_model();
    const LossConfig loss = LossConfig::standard();
    Rng rng(30);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<RowSpec> rows;
        for (int i = 0; i < 8; ++i) {
            auto flip = [&]() { return rng.uniform01() < 0.4 ? 1 : 0; };
            rows.push_back(ad_row_all_labels(flip(), flip(), flip(), flip()));
        }
        const Dataset ds = make_dataset(cfg, rows, 100 + rep);
        ModelParams params = init_params(cfg, loss.tasks, 200 + rep);
        std::vector<std::size_t> idx(rows.size());
        std::iota(idx.begin(), idx.end(), 0);
        const auto grads = batch_gradients(params, ds, idx, loss);

        for (const auto& t : {task::kPromotionStream, task::kLike, task::kFollow}) {
            for (const auto& [name, g] : grads) {
                if (name.rfind("tower." + t + ".", 0) == 0) {
                    CHECK(g.l2_norm() == 0.0);
                }
            }
        }
        double encoder_norm = 0.0;
        for (const auto& [name, g] : grads) {
            if (name.rfind("encoder.", 0) == 0) encoder_norm += g.l2_norm();
        }
        CHECK(encoder_norm > 0.0);
    }
}

TEST_CASE("promotion-only batches update both stream towers") {
    const ModelConfig cfg = tiny_model();
    const LossConfig loss = LossConfig::standard();
    Rng rng(31);
    std::vector<RowSpec> rows;
    for (int i = 0; i < 8; ++i) {
        auto flip = [&]() { return rng.uniform01() < 0.4 ? 1 : 0; };
        rows.push_back(promo_row_all_labels(flip(), flip(), flip(), flip()));
    }
    const Dataset ds = make_dataset(cfg, rows, 300);
    ModelParams params = init_params(cfg, loss.tasks, 301);
    std::vector<std::size_t> idx(rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto grads = batch_gradients(params, ds, idx, loss);

    double promo_tower = 0.0, ad_tower = 0.0;
    for (const auto& [name, g] : grads) {
        if (name.rfind("tower.PromotionStream.", 0) == 0) promo_tower += g.l2_norm();
        if (name.rfind("tower.AdStream.", 0) == 0) ad_tower += g.l2_norm();
    }
    CHECK(promo_tower > 0.0);
    CHECK(ad_tower > 0.0);
}

TEST_CASE("doubling a task weight exactly doubles its gradients") {
    const ModelConfig cfg = tiny_model();
    Rng rng(32);
    std::vector<RowSpec> rows;
    for (int i = 0; i < 10; ++i) {
        auto flip = [&]() { return rng.uniform01() < 0.4 ? 1 : 0; };
        if (i % 2 == 0) {
            rows.push_back(promo_row_all_labels(flip(), flip(), flip(), flip()));
        } else {
            rows.push_back(ad_row_all_labels(flip(), flip(), flip(), flip()));
        }
    }
    const Dataset ds = make_dataset(cfg, rows, 400);
    std::vector<std::size_t> idx(rows.size());
    std::iota(idx.begin(), idx.end(), 0);

    LossConfig loss = LossConfig::standard();
    for (const auto& t : loss.tasks.tasks) loss.tasks.weights[t] = 0.0;
    loss.tasks.weights[task::kAdStream] = 1.0;

    ModelParams params = init_params(cfg, loss.tasks, 401);
    const auto g1 = batch_gradients(params, ds, idx, loss);

    loss.tasks.weights[task::kAdStream] = 2.0;
    ModelParams params2 = init_params(cfg, loss.tasks, 401);
    const auto g2 = batch_gradients(params2, ds, idx, loss);

    for (const auto& [name, g] : g1) {
        const Matrix& d = g2.at(name);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g[i] == 0.0) {
                CHECK(d[i] == 0.0);
            } else {
                CHECK(std::fabs(d[i] - 2.0 * g[i]) <= 1e-12 * std::fabs(2.0 * g[i]));
            }
        }
    }
}

TEST_CASE("masked loss equals the unmasked loss over the allowed subset") {
    // filter-then-average oracle: keep only (row, task) pairs with mask 1 and
    // label present, compute plain mean BCE per task, compare
    const ModelConfig cfg = tiny_model();
    const LossConfig loss = LossConfig::standard();
    Rng rng(33);
    std::vector<RowSpec> rows;
    for (int i = 0; i < 30; ++i) {
        auto flip = [&]() { return rng.uniform01() < 0.4 ? 1 : 0; };
        if (rng.uniform01() < 0.5) {
            rows.push_back(promo_row_all_labels(flip(), flip(), flip(), flip()));
        } else {
            rows.push_back(ad_row_all_labels(flip(), flip(), flip(), flip()));
        }
    }
    const Dataset ds = make_dataset(cfg, rows, 500);
    std::vector<std::size_t> idx(rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    const Batch batch = make_batch(ds, cfg, idx, loss);

    std::map<std::string, Matrix> logits;
    for (const auto& t : loss.tasks.tasks) {
        logits[t] = testutil::random_matrix(rng, rows.size(), 1, 1.2);
    }
    const LossBreakdown got = masked_loss_value(logits, batch, loss);

    for (const auto& t : loss.tasks.tasks) {
        const std::size_t ti = ds.task_index(t);
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = ds.rows[i];
            if (!r.label_present(ti)) continue;
            if (!loss.mask.allows(r.source, t)) continue;
            const double p = sigmoid_scalar(logits.at(t)[i]);
            const double y = r.labels[ti];
            sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
            ++n;
        }
        if (n == 0) {
            CHECK(got.task_mean.count(t) == 0);
        } else {
            CHECK(got.task_mean.at(t) == doctest::Approx(sum / n).epsilon(1e-10));
        }
    }
}

namespace {

Dataset synthetic_training_set(const ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
    // linearly separable-ish toy task: labels depend on the first user dim
    Dataset ds;
    ds.tasks = TaskSpec::standard_five().tasks;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        ImpressionRecord r;
        r.id = i;
        r.ts = 1000 + static_cast<std::int64_t>(i);
        r.source = i % 2 == 0 ? Source::kPromotion : Source::kAd;
        auto fill = [&](std::vector<double>& v, std::size_t d) {
            v.resize(d);
            for (auto& x : v) x = rng.normal();
        };
        fill(r.features.user, cfg.user_dim);
        fill(r.features.content, cfg.content_dim);
        fill(r.features.context, cfg.context_dim);
        fill(r.features.creative, cfg.creative_dim);
        const int y = r.features.user[0] + 0.5 * r.features.content[0] > 0.0 ? 1 : 0;
        r.labels.fill(-1);
        const std::size_t i_ps = ds.task_index(task::kPromotionStream);
        const std::size_t i_as = ds.task_index(task::kAdStream);
        const std::size_t i_ck = ds.task_index(task::kClick);
        const std::size_t i_lk = ds.task_index(task::kLike);
        const std::size_t i_fw = ds.task_index(task::kFollow);
        if (r.source == Source::kPromotion) {
            r.labels[i_ps] = static_cast<std::int8_t>(y);
            r.labels[i_as] = static_cast<std::int8_t>(y);
        } else {
            r.labels[i_as] = static_cast<std::int8_t>(y);
        }
        r.labels[i_ck] = static_cast<std::int8_t>(y);
        r.labels[i_lk] = static_cast<std::int8_t>(y);
        r.labels[i_fw] = static_cast<std::int8_t>(y);
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

TrainConfig toy_train_config(std::uint64_t seed, std::size_t epochs) {
    TrainConfig tc;
    tc.model = tiny_model();
    tc.loss = LossConfig::standard();
    tc.batch_size = 32;
    tc.epochs = epochs;
    tc.balanced = true;
    tc.seed = seed;
    return tc;
}

}  // namespace

TEST_CASE("train: deterministic given a seed") {
    const ModelConfig cfg = tiny_model();
    const Dataset train_set = synthetic_training_set(cfg, 400, 60);
    const Dataset val_set = synthetic_training_set(cfg, 100, 61);
    const TrainConfig tc = toy_train_config(7, 2);
    const TrainResult a = train(tc, train_set, val_set);
    const TrainResult b = train(tc, train_set, val_set);

    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t e = 0; e < a.log.size(); ++e) {
        CHECK(a.log[e].train_loss == b.log[e].train_loss);
    }
    bool equal = true;
    ModelParams ap = a.params;
    ModelParams bp = b.params;
    ap.for_each_block([&](const std::string& name, Matrix& m) {
        bp.for_each_block([&](const std::string& n2, Matrix& m2) {
            if (n2 == name && !(m == m2)) equal = false;
        });
    });
    CHECK(equal);
}

TEST_CASE("train: loss decreases on a separable toy task") {
    const ModelConfig cfg = tiny_model();
    const Dataset train_set = synthetic_training_set(cfg, 800, 62);
    const Dataset val_set = synthetic_training_set(cfg, 200, 63);
    TrainConfig tc = toy_train_config(8, 5);
    tc.adam.lr = 3e-3;
    const TrainResult r = train(tc, train_set, val_set);
    REQUIRE(r.log.size() == 5);
    for (std::size_t e = 1; e < r.log.size(); ++e) {
        CHECK(r.log[e].train_loss < r.log[e - 1].train_loss);
    }
    CHECK_FALSE(r.diverged);
}

TEST_CASE("train: a fully masked tower is bitwise untouched") {
    const ModelConfig cfg = tiny_model();
    const Dataset train_set = synthetic_training_set(cfg, 300, 64);
    const Dataset val_set = synthetic_training_set(cfg, 80, 65);
    TrainConfig tc = toy_train_config(9, 2);
    // mask PromotionStream everywhere
    tc.loss.mask.set(Source::kPromotion, task::kPromotionStream, false);
    tc.loss.mask.set(Source::kAd, task::kPromotionStream, false);

    const ModelParams init = init_params(tc.model, tc.loss.tasks, tc.seed);
    const TrainResult r = train(tc, train_set, val_set);

    ModelParams got = r.params;
    for (std::size_t layer = 0; layer < init.towers.at(task::kPromotionStream).size(); ++layer) {
        CHECK(got.towers.at(task::kPromotionStream)[layer].weight ==
              init.towers.at(task::kPromotionStream)[layer].weight);
        CHECK(got.towers.at(task::kPromotionStream)[layer].bias ==
              init.towers.at(task::kPromotionStream)[layer].bias);
    }
    // sanity: other towers did move
    bool click_moved = false;
    for (std::size_t layer = 0; layer < init.towers.at(task::kClick).size(); ++layer) {
        if (!(got.towers.at(task::kClick)[layer].weight ==
              init.towers.at(task::kClick)[layer].weight)) {
            click_moved = true;
        }
    }
    CHECK(click_moved);
}
