#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "podmtl/dataio.hpp"
#include "podmtl/model.hpp"
#include "podmtl/tasks.hpp"

namespace podmtl {

/// Which sources carry a label for each task. The generator writes labels
/// accordingly; batches additionally respect per-row label presence.
struct LabelRule {
    std::map<std::string, std::array<bool, 2>> present;  // [promotion, ad]

    /// PromotionStream exists on promotion rows only; the other tasks carry
    /// labels on both channels (the ad stream label on a promotion row is
    /// that row's stream outcome).
    static LabelRule standard(const TaskSpec& spec);
    bool available(const std::string& t, Source s) const;
};

struct LossConfig {
    TaskSpec tasks;
    MaskPolicy mask;
    LabelRule labels;

    static LossConfig standard();
};

/// A materialized mini-batch: features plus, per task, labels and the 0/1
/// contribution weights (label present AND mask allows).
struct Batch {
    Matrix features;
    std::vector<Source> sources;
    std::map<std::string, Matrix> labels;   // n x 1
    std::map<std::string, Matrix> contrib;  // n x 1, entries in {0,1}
    std::size_t size() const { return sources.size(); }
};

Batch make_batch(const Dataset& data, const ModelConfig& model_cfg,
                 std::span<const std::size_t> row_indices, const LossConfig& cfg);

struct LossBreakdown {
    double total = 0.0;
    std::map<std::string, double> task_mean;           // mean BCE over contributing rows
    std::map<std::string, std::size_t> task_rows;      // contributing row count
    std::vector<std::string> skipped;                  // tasks with zero contributing rows
};

/// Masked weighted BCE over the tape: sum over tasks of weight * mean BCE
/// over contributing rows. Tasks with no contributing rows are skipped (so
/// their towers receive exactly zero gradient) and flagged in the breakdown.
/// Throws config_error when no task has any contributing row.
std::pair<GradTape::NodeId, LossBreakdown> masked_loss(GradTape& tape,
                                                       const std::map<std::string, GradTape::NodeId>& logits,
                                                       const Batch& batch,
                                                       const LossConfig& cfg);

/// Value-only form over plain logit matrices.
LossBreakdown masked_loss_value(const std::map<std::string, Matrix>& logits, const Batch& batch,
                                const LossConfig& cfg);

/// Source-balanced mini-batch index stream: each batch draws half its rows
/// from each pool (the extra row of an odd batch alternates), the larger
/// pool is consumed once per epoch in seeded-shuffle order, and the smaller
/// pool is resampled with replacement.
class BalancedBatcher {
public:
    BalancedBatcher(std::size_t promo_count, std::size_t ad_count, std::size_t batch_size,
                    std::uint64_t seed);

    struct Draw {
        std::vector<std::size_t> promo_rows;  // indices into the promotion pool
        std::vector<std::size_t> ad_rows;     // indices into the ad pool
    };

    /// All batches of the next epoch, in order.
    std::vector<Draw> next_epoch();
    std::size_t batches_per_epoch() const { return batches_per_epoch_; }

private:
    std::size_t promo_count_, ad_count_, batch_size_;
    std::size_t batches_per_epoch_ = 0;
    std::uint64_t batch_counter_ = 0;
    Rng rng_;
};

/// Plain single-pool batcher for unbalanced (single-source) training.
class SimpleBatcher {
public:
    SimpleBatcher(std::size_t count, std::size_t batch_size, std::uint64_t seed);
    std::vector<std::vector<std::size_t>> next_epoch();

private:
    std::size_t count_, batch_size_;
    Rng rng_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Step decay: lr * decay_factor^(step / decay_every); 0 = constant.
    double decay_factor = 1.0;
    std::uint64_t decay_every = 0;
};

struct AdamState {
    AdamConfig cfg;
    std::uint64_t step = 0;
    std::map<std::string, std::pair<Matrix, Matrix>> moments;  // block -> (m, v)
};

/// One Adam update with bias correction over every parameter block.
/// Throws divergence_error naming the block on non-finite gradients.
void adam_step(ModelParams& params, const std::map<std::string, Matrix>& grads,
               AdamState& state);

/// Extracts per-block gradients from a backward sweep.
std::map<std::string, Matrix> block_gradients(const ForwardBuild& fb, const Gradients& grads);

struct TrainConfig {
    ModelConfig model;
    LossConfig loss;
    AdamConfig adam;
    std::size_t batch_size = 512;
    std::size_t epochs = 3;
    bool balanced = true;
    bool ad_heads_on_promo_eval = false;
    std::uint64_t seed = 0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::map<std::string, double> task_loss;
    std::map<std::string, std::optional<double>> val_ap;
    double selection_score = 0.0;
    bool selected = false;
};

struct TrainResult {
    ModelParams params;  // best-validation checkpoint
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    bool diverged = false;
    std::string divergence_note;
};

/// Full loop: balanced batching, forward, masked loss, backward, Adam.
/// Model selection keeps the epoch checkpoint with the best validation AP
/// averaged over the stream tasks present. On divergence the last good
/// checkpoint is returned with the diverged flag set.
TrainResult train(const TrainConfig& cfg, const Dataset& train_data, const Dataset& val_data);

/// Infer-mode scores of one head over a whole dataset, processed in chunks.
std::vector<double> score_dataset(ModelParams& params, const Dataset& data,
                                  const std::string& head_task);

}  // namespace podmtl
