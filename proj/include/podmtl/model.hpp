#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "podmtl/matrix.hpp"
#include "podmtl/tape.hpp"
#include "podmtl/tasks.hpp"

namespace podmtl {

/// One impression's input features, grouped the way the encoder consumes
/// them: user, content, context, creative.
struct FeatureVector {
    std::vector<double> user;
    std::vector<double> content;
    std::vector<double> context;
    std::vector<double> creative;
};

enum class NormPlacement { kNone, kInput, kEncoderOutput };

std::string norm_placement_name(NormPlacement p);
NormPlacement norm_placement_from_name(const std::string& name);

struct ModelConfig {
    std::size_t user_dim = 16;
    std::size_t content_dim = 16;
    std::size_t context_dim = 8;
    std::size_t creative_dim = 8;
    std::vector<std::size_t> encoder_widths = {64, 32};
    std::vector<std::size_t> tower_widths = {16};  // hidden widths; scalar logit appended
    NormPlacement norm_placement = NormPlacement::kEncoderOutput;
    double norm_eps = 1e-5;
    double norm_momentum = 0.99;

    std::size_t input_dim() const {
        return user_dim + content_dim + context_dim + creative_dim;
    }
    std::size_t encoder_output_dim() const {
        return encoder_widths.empty() ? input_dim() : encoder_widths.back();
    }
    std::size_t norm_dim() const;
    void validate() const;
};

struct DenseLayer {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out
};

struct NormParams {
    Matrix gamma;  // 1 x d
    Matrix beta;   // 1 x d
    BatchNormRunning running;
};

/// All learnable state: the shared encoder, one tower per task, and the
/// normalization scale/shift plus running statistics.
struct ModelParams {
    ModelConfig config;
    TaskSpec tasks;
    std::vector<DenseLayer> encoder;
    NormParams norm;  // used when config.norm_placement != kNone
    std::map<std::string, std::vector<DenseLayer>> towers;

    /// Visits every trainable block in a stable order with stable names
    /// (encoder.<i>.weight, norm.gamma, tower.<task>.<i>.bias, ...).
    void for_each_block(const std::function<void(const std::string&, Matrix&)>& fn);
    void for_each_block(const std::function<void(const std::string&, const Matrix&)>& fn) const;
};

/// Deterministic parameter initialization: He-style normal weights scaled by
/// fan-in, zero biases, unit scale / zero shift / identity running stats for
/// the normalization layer.
ModelParams init_params(const ModelConfig& config, const TaskSpec& tasks, std::uint64_t seed);

/// Tape handles produced by one forward build.
struct ForwardBuild {
    GradTape::NodeId input;
    GradTape::NodeId encoded;
    std::map<std::string, GradTape::NodeId> logits;       // only requested tasks
    std::map<std::string, GradTape::NodeId> param_nodes;  // block name -> leaf node
};

/// Records the full forward pass on the tape: encoder over the concatenated
/// features, normalization per config, and one tower per requested task.
/// Every trainable block is registered as a tape parameter even when no
/// requested task consumes it, so gradient extraction stays total.
ForwardBuild build_forward(GradTape& tape, ModelParams& params, const Matrix& features,
                           NormMode mode, const std::vector<std::string>& head_tasks);

/// Concatenates the four feature groups of a batch, validating group widths
/// against the config. Throws config_error naming the offending group.
Matrix concat_features(const ModelConfig& config, std::span<const FeatureVector> batch);

/// Shared-encoder forward over a feature batch. Train mode updates running
/// normalization statistics.
Matrix encode(ModelParams& params, std::span<const FeatureVector> batch, NormMode mode);

/// Tower head over an encoded batch; returns per-row probabilities in (0,1).
Matrix predict_task(ModelParams& params, const Matrix& encoded, const std::string& task);

/// One shared encode feeding every tower. Identical to composing encode and
/// predict_task per task.
std::map<std::string, Matrix> predict_all(ModelParams& params,
                                          std::span<const FeatureVector> batch);

/// Infer-mode probabilities for one head over a prebuilt feature matrix.
Matrix predict_matrix(ModelParams& params, const Matrix& features, const std::string& task);

/// Versioned binary model file; round-trips bit-exactly.
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace podmtl
