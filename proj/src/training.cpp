#include "podmtl/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "podmtl/evaluation.hpp"

namespace podmtl {

LabelRule LabelRule::standard(const TaskSpec& spec) {
    LabelRule r;
    for (const auto& t : spec.tasks) {
        const bool promo_only_label = (t == task::kPromotionStream);
        r.present[t] = {true, !promo_only_label};
    }
    return r;
}

bool LabelRule::available(const std::string& t, Source s) const {
    auto it = present.find(t);
    if (it == present.end()) throw config_error("LabelRule: no entry for task '" + t + "'");
    return it->second[static_cast<int>(s)];
}

LossConfig LossConfig::standard() {
    LossConfig cfg;
    cfg.tasks = TaskSpec::standard_five();
    cfg.mask = MaskPolicy::directional_default(cfg.tasks);
    cfg.labels = LabelRule::standard(cfg.tasks);
    return cfg;
}

Batch make_batch(const Dataset& data, const ModelConfig& model_cfg,
                 std::span<const std::size_t> row_indices, const LossConfig& cfg) {
    Batch b;
    const std::size_t n = row_indices.size();
    b.features = Matrix(n, model_cfg.input_dim());
    b.sources.resize(n);

    std::vector<std::size_t> task_idx(cfg.tasks.tasks.size());
    for (std::size_t t = 0; t < cfg.tasks.tasks.size(); ++t) {
        task_idx[t] = data.task_index(cfg.tasks.tasks[t]);
        b.labels[cfg.tasks.tasks[t]] = Matrix(n, 1);
        b.contrib[cfg.tasks.tasks[t]] = Matrix(n, 1);
    }

    for (std::size_t i = 0; i < n; ++i) {
        const ImpressionRecord& r = data.rows[row_indices[i]];
        b.sources[i] = r.source;
        const FeatureVector& f = r.features;
        if (f.user.size() != model_cfg.user_dim || f.content.size() != model_cfg.content_dim ||
            f.context.size() != model_cfg.context_dim ||
            f.creative.size() != model_cfg.creative_dim) {
            throw config_error("record " + std::to_string(r.id) +
                               ": feature group dims do not match model config");
        }
        std::size_t j = 0;
        for (double v : f.user) b.features(i, j++) = v;
        for (double v : f.content) b.features(i, j++) = v;
        for (double v : f.context) b.features(i, j++) = v;
        for (double v : f.creative) b.features(i, j++) = v;

        for (std::size_t t = 0; t < cfg.tasks.tasks.size(); ++t) {
            const std::string& name = cfg.tasks.tasks[t];
            const bool present = r.label_present(task_idx[t]);
            const bool allowed = cfg.mask.allows(r.source, name);
            if (present && allowed) {
                b.contrib.at(name)[i] = 1.0;
                b.labels.at(name)[i] = static_cast<double>(r.labels[task_idx[t]]);
            }
        }
    }
    return b;
}

std::pair<GradTape::NodeId, LossBreakdown> masked_loss(
    GradTape& tape, const std::map<std::string, GradTape::NodeId>& logits, const Batch& batch,
    const LossConfig& cfg) {
    LossBreakdown bd;
    std::optional<GradTape::NodeId> total;
    for (const auto& t : cfg.tasks.tasks) {
        auto it = logits.find(t);
        if (it == logits.end()) {
            throw config_error("masked_loss: missing logits for task '" + t + "'");
        }
        const Matrix& w = batch.contrib.at(t);
        double wsum = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) wsum += w[i];
        if (wsum <= 0.0) {
            bd.skipped.push_back(t);
            bd.task_rows[t] = 0;
            continue;
        }
        const GradTape::NodeId bce = tape.bce_with_logits(it->second, batch.labels.at(t));
        const GradTape::NodeId mean = tape.weighted_mean(bce, w);
        bd.task_mean[t] = tape.value(mean)[0];
        bd.task_rows[t] = static_cast<std::size_t>(wsum);
        const GradTape::NodeId weighted = tape.scale(mean, cfg.tasks.weight(t));
        total = total ? tape.add(*total, weighted) : weighted;
    }
    if (!total) {
        throw config_error(
            "masked_loss: no task has contributing rows; mask or label configuration is wrong");
    }
    bd.total = tape.value(*total)[0];
    return {*total, bd};
}

LossBreakdown masked_loss_value(const std::map<std::string, Matrix>& logits, const Batch& batch,
                                const LossConfig& cfg) {
    GradTape tape;
    std::map<std::string, GradTape::NodeId> nodes;
    for (const auto& [t, m] : logits) nodes[t] = tape.constant(m);
    return masked_loss(tape, nodes, batch, cfg).second;
}

// ---------------------------------------------------------------------------
// Batchers
// ---------------------------------------------------------------------------

BalancedBatcher::BalancedBatcher(std::size_t promo_count, std::size_t ad_count,
                                 std::size_t batch_size, std::uint64_t seed)
    : promo_count_(promo_count),
      ad_count_(ad_count),
      batch_size_(batch_size),
      rng_(derive_seed(seed, 0xBA7C4ULL)) {
    if (promo_count == 0) {
        throw config_error(
            "balanced batching: promotion pool is empty; use single-source training mode");
    }
    if (ad_count == 0) {
        throw config_error(
            "balanced batching: ad pool is empty; use single-source training mode");
    }
    if (batch_size < 2) throw config_error("balanced batching: batch size must be at least 2");
    const std::size_t larger = std::max(promo_count_, ad_count_);
    // An epoch consumes the larger pool once; per batch it contributes at
    // least floor(B/2) rows.
    batches_per_epoch_ = larger / (batch_size_ / 2 + batch_size_ % 2);
    if (batches_per_epoch_ == 0) batches_per_epoch_ = 1;
}

std::vector<BalancedBatcher::Draw> BalancedBatcher::next_epoch() {
    const bool promo_is_larger = promo_count_ >= ad_count_;
    const std::size_t larger_n = promo_is_larger ? promo_count_ : ad_count_;
    const std::size_t smaller_n = promo_is_larger ? ad_count_ : promo_count_;

    std::vector<std::size_t> larger_order(larger_n);
    std::iota(larger_order.begin(), larger_order.end(), 0);
    rng_.shuffle(larger_order);

    std::vector<Draw> epoch;
    std::size_t cursor = 0;
    while (true) {
        const std::size_t half = batch_size_ / 2;
        const bool extra_to_promo = (batch_counter_ % 2 == 0);
        std::size_t n_promo = half, n_ad = half;
        if (batch_size_ % 2 == 1) {
            (extra_to_promo ? n_promo : n_ad) += 1;
        }
        const std::size_t need_larger = promo_is_larger ? n_promo : n_ad;
        const std::size_t need_smaller = promo_is_larger ? n_ad : n_promo;
        if (cursor + need_larger > larger_order.size()) break;

        Draw d;
        auto& larger_rows = promo_is_larger ? d.promo_rows : d.ad_rows;
        auto& smaller_rows = promo_is_larger ? d.ad_rows : d.promo_rows;
        larger_rows.assign(larger_order.begin() + static_cast<std::ptrdiff_t>(cursor),
                           larger_order.begin() + static_cast<std::ptrdiff_t>(cursor + need_larger));
        cursor += need_larger;
        smaller_rows.resize(need_smaller);
        for (auto& r : smaller_rows) r = rng_.uniform_int(smaller_n);  // with replacement
        ++batch_counter_;
        epoch.push_back(std::move(d));
    }
    return epoch;
}

SimpleBatcher::SimpleBatcher(std::size_t count, std::size_t batch_size, std::uint64_t seed)
    : count_(count), batch_size_(batch_size), rng_(derive_seed(seed, 0x51BA7C4ULL)) {
    if (count == 0) throw config_error("batching: pool is empty");
    if (batch_size < 2) throw config_error("batching: batch size must be at least 2");
}

std::vector<std::vector<std::size_t>> SimpleBatcher::next_epoch() {
    std::vector<std::size_t> order(count_);
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(order);
    std::vector<std::vector<std::size_t>> epoch;
    for (std::size_t start = 0; start + batch_size_ <= count_; start += batch_size_) {
        epoch.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(start + batch_size_));
    }
    if (epoch.empty()) {
        // fewer rows than one batch: use everything (train mode still needs >= 2)
        if (count_ >= 2) epoch.push_back(order);
    }
    return epoch;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void adam_step(ModelParams& params, const std::map<std::string, Matrix>& grads,
               AdamState& state) {
    state.step += 1;
    const AdamConfig& c = state.cfg;
    double lr = c.lr;
    if (c.decay_every > 0) {
        lr *= std::pow(c.decay_factor,
                       static_cast<double>((state.step - 1) / c.decay_every));
    }
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

    params.for_each_block([&](const std::string& name, Matrix& p) {
        auto git = grads.find(name);
        if (git == grads.end()) {
            throw config_error("adam_step: no gradient for block '" + name + "'");
        }
        const Matrix& g = git->second;
        if (!g.same_shape(p)) {
            throw shape_error("adam_step: gradient for '" + name + "' has shape " +
                              g.shape_str() + ", parameter is " + p.shape_str());
        }
        if (!g.all_finite()) {
            throw divergence_error("adam_step: non-finite gradient in block '" + name + "'");
        }
        auto mit = state.moments.find(name);
        if (mit == state.moments.end()) {
            mit = state.moments
                      .emplace(name, std::make_pair(Matrix(p.rows(), p.cols()),
                                                    Matrix(p.rows(), p.cols())))
                      .first;
        }
        Matrix& m = mit->second.first;
        Matrix& v = mit->second.second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    });
}

std::map<std::string, Matrix> block_gradients(const ForwardBuild& fb, const Gradients& grads) {
    std::map<std::string, Matrix> out;
    for (const auto& [name, node] : fb.param_nodes) {
        out[name] = grads.at(node);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

std::map<std::string, std::optional<double>> validation_ap(ModelParams& params,
                                                           const Dataset& val,
                                                           const TrainConfig& cfg) {
    const EvalPolicy policy =
        EvalPolicy::native_defaults(cfg.loss.tasks, cfg.ad_heads_on_promo_eval);
    std::map<std::string, std::optional<double>> out;
    for (const auto& t : cfg.loss.tasks.tasks) {
        const std::vector<double> scores = score_dataset(params, val, t);
        const RankedPredictions rp = gather_task_rows(val, t, scores, policy);
        if (rp.labels.empty()) {
            out[t] = std::nullopt;
            continue;
        }
        out[t] = try_average_precision(rp.scores, rp.labels);
    }
    return out;
}

double stream_selection_score(const std::map<std::string, std::optional<double>>& val_ap,
                              const TaskSpec& tasks) {
    double sum = 0.0;
    int n = 0;
    for (const auto& t : {task::kPromotionStream, task::kAdStream}) {
        if (!tasks.has(t)) continue;
        auto it = val_ap.find(t);
        if (it != val_ap.end() && it->second) {
            sum += *it->second;
            ++n;
        }
    }
    return n > 0 ? sum / n : -1.0;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& train_data, const Dataset& val_data) {
    cfg.model.validate();
    cfg.loss.tasks.validate();
    if (train_data.rows.empty()) throw data_error("train: empty training set");
    if (val_data.rows.empty()) throw data_error("train: empty validation set");

    ModelParams params = init_params(cfg.model, cfg.loss.tasks, cfg.seed);
    AdamState adam;
    adam.cfg = cfg.adam;

    const std::vector<std::size_t> promo_idx = train_data.source_indices(Source::kPromotion);
    const std::vector<std::size_t> ad_idx = train_data.source_indices(Source::kAd);

    std::optional<BalancedBatcher> balanced;
    std::optional<SimpleBatcher> simple;
    if (cfg.balanced) {
        balanced.emplace(promo_idx.size(), ad_idx.size(), cfg.batch_size,
                         derive_seed(cfg.seed, 21));
    } else {
        simple.emplace(train_data.rows.size(), cfg.batch_size, derive_seed(cfg.seed, 22));
    }

    TrainResult result;
    result.params = params;
    double best_score = -2.0;
    bool have_checkpoint = false;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        std::map<std::string, double> task_loss_sum;
        std::map<std::string, std::size_t> task_loss_count;

        std::vector<std::vector<std::size_t>> batches;
        if (balanced) {
            for (auto& draw : balanced->next_epoch()) {
                std::vector<std::size_t> rows;
                rows.reserve(draw.promo_rows.size() + draw.ad_rows.size());
                for (std::size_t r : draw.promo_rows) rows.push_back(promo_idx[r]);
                for (std::size_t r : draw.ad_rows) rows.push_back(ad_idx[r]);
                batches.push_back(std::move(rows));
            }
        } else {
            batches = simple->next_epoch();
        }

        for (const auto& rows : batches) {
            Batch batch = make_batch(train_data, cfg.model, rows, cfg.loss);
            GradTape tape;
            ForwardBuild fb =
                build_forward(tape, params, batch.features, NormMode::kTrain,
                              cfg.loss.tasks.tasks);
            auto [loss_node, bd] = masked_loss(tape, fb.logits, batch, cfg.loss);
            if (!std::isfinite(bd.total)) {
                result.diverged = true;
                result.divergence_note =
                    "non-finite training loss at epoch " + std::to_string(epoch);
                break;
            }
            loss_sum += bd.total;
            ++loss_count;
            for (const auto& [t, v] : bd.task_mean) {
                task_loss_sum[t] += v;
                task_loss_count[t] += 1;
            }
            const Gradients grads = tape.backward(loss_node);
            try {
                adam_step(params, block_gradients(fb, grads), adam);
            } catch (const divergence_error& e) {
                result.diverged = true;
                result.divergence_note = e.what();
                break;
            }
        }
        if (result.diverged) break;

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        for (const auto& [t, s] : task_loss_sum) {
            log.task_loss[t] = s / static_cast<double>(task_loss_count[t]);
        }
        log.val_ap = validation_ap(params, val_data, cfg);
        log.selection_score = stream_selection_score(log.val_ap, cfg.loss.tasks);
        if (log.selection_score > best_score) {
            best_score = log.selection_score;
            result.params = params;
            result.best_epoch = epoch;
            log.selected = true;
            have_checkpoint = true;
        }
        result.log.push_back(std::move(log));
    }

    if (!have_checkpoint && !result.diverged) {
        // no epoch produced a usable validation score; keep the final state
        result.params = params;
        result.best_epoch = cfg.epochs;
    }
    return result;
}

std::vector<double> score_dataset(ModelParams& params, const Dataset& data,
                                  const std::string& head_task) {
    constexpr std::size_t kChunk = 4096;
    std::vector<double> scores;
    scores.reserve(data.rows.size());
    std::vector<std::size_t> rows;
    LossConfig features_only;  // empty task list: make_batch packs features only
    for (std::size_t start = 0; start < data.rows.size(); start += kChunk) {
        const std::size_t end = std::min(start + kChunk, data.rows.size());
        rows.resize(end - start);
        std::iota(rows.begin(), rows.end(), start);
        Batch b = make_batch(data, params.config, rows, features_only);
        Matrix p = predict_matrix(params, b.features, head_task);
        for (std::size_t i = 0; i < p.size(); ++i) scores.push_back(p[i]);
    }
    return scores;
}

}  // namespace podmtl
