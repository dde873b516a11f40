#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "podmtl/matrix.hpp"

namespace podmtl {

enum class NormMode { kTrain, kInfer };

/// Running first/second moment statistics for batch normalization,
/// updated by exponential moving average in train mode.
struct BatchNormRunning {
    Matrix mean;  // 1 x d
    Matrix var;   // 1 x d

    static BatchNormRunning identity(std::size_t dim) {
        BatchNormRunning r;
        r.mean = Matrix(1, dim, 0.0);
        r.var = Matrix(1, dim, 1.0);
        return r;
    }
};

/// Gradients produced by GradTape::backward, indexed by node id. Nodes the
/// loss does not reach keep an exactly-zero gradient.
class Gradients {
public:
    const Matrix& at(std::uint32_t node) const { return grads_[node]; }
    bool touched(std::uint32_t node) const { return touched_[node]; }
    std::size_t size() const { return grads_.size(); }

    /// Accumulates a gradient contribution into a node's buffer.
    void add(std::uint32_t node, const Matrix& delta) {
        accumulate(grads_[node], delta);
        touched_[node] = true;
    }

private:
    friend class GradTape;
    std::vector<Matrix> grads_;
    std::vector<bool> touched_;
};

/// Reverse-mode tape over dense matrix primitives. Records eagerly: each op
/// computes its value immediately and stores a pull-back closure. A tape is
/// built for one forward pass, swept backward at most a handful of times,
/// then discarded.
class GradTape {
public:
    using NodeId = std::uint32_t;

    /// Leaf holding a value that is not trained (inputs, labels).
    NodeId constant(Matrix value);
    /// Leaf holding a trainable value. Behaves like constant; the distinct
    /// name keeps call sites readable.
    NodeId parameter(Matrix value);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId add_row_broadcast(NodeId x, NodeId bias);
    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId scale(NodeId x, double c);

    /// Batch normalization with learnable scale/shift. Train mode normalizes
    /// by batch statistics (biased variance, eps inside the square root) and
    /// updates `running` in place; infer mode normalizes by `running`.
    /// Train mode requires at least 2 rows.
    NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, BatchNormRunning& running,
                     NormMode mode, double eps, double momentum);

    /// Elementwise binary cross-entropy computed from logits:
    /// max(z,0) - z*y + log(1+exp(-|z|)).
    NodeId bce_with_logits(NodeId logits, Matrix labels);

    /// sum(w .* x) / sum(w). Weights are fixed. sum(w) must be positive.
    NodeId weighted_mean(NodeId x, Matrix weights);

    const Matrix& value(NodeId id) const { return nodes_[id].value; }
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep seeding the root with 1.0 (root must be 1x1).
    Gradients backward(NodeId root) const;
    /// Reverse sweep with an explicit seed of the root's shape.
    Gradients backward(NodeId root, const Matrix& seed) const;

private:
    using PullFn = std::function<void(const GradTape&, const Matrix&, Gradients&)>;

    struct Node {
        Matrix value;
        PullFn pull;  // empty for leaves
    };

    NodeId push(Matrix value, PullFn pull);

    std::vector<Node> nodes_;
};

}  // namespace podmtl
