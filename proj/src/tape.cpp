#include "podmtl/tape.hpp"

#include <cmath>

namespace podmtl {

GradTape::NodeId GradTape::push(Matrix value, PullFn pull) {
    nodes_.push_back(Node{std::move(value), std::move(pull)});
    return static_cast<NodeId>(nodes_.size() - 1);
}

GradTape::NodeId GradTape::constant(Matrix value) { return push(std::move(value), {}); }

GradTape::NodeId GradTape::parameter(Matrix value) { return push(std::move(value), {}); }

GradTape::NodeId GradTape::matmul(NodeId a, NodeId b) {
    Matrix v = podmtl::matmul(value(a), value(b));
    v.require_finite("matmul");
    return push(std::move(v), [a, b](const GradTape& t, const Matrix& gout, Gradients& g) {
        g.add(a, matmul_nt(gout, t.value(b)));
        g.add(b, matmul_tn(t.value(a), gout));
    });
}

GradTape::NodeId GradTape::add(NodeId a, NodeId b) {
    Matrix v = podmtl::add(value(a), value(b));
    return push(std::move(v), [a, b](const GradTape&, const Matrix& gout, Gradients& g) {
        g.add(a, gout);
        g.add(b, gout);
    });
}

GradTape::NodeId GradTape::add_row_broadcast(NodeId x, NodeId bias) {
    Matrix v = podmtl::add_row_broadcast(value(x), value(bias));
    return push(std::move(v), [x, bias](const GradTape&, const Matrix& gout, Gradients& g) {
        g.add(x, gout);
        Matrix db(1, gout.cols());
        for (std::size_t i = 0; i < gout.rows(); ++i) {
            for (std::size_t j = 0; j < gout.cols(); ++j) db[j] += gout(i, j);
        }
        g.add(bias, db);
    });
}

GradTape::NodeId GradTape::relu(NodeId x) {
    Matrix v = podmtl::relu(value(x));
    return push(std::move(v), [x](const GradTape& t, const Matrix& gout, Gradients& g) {
        const Matrix& in = t.value(x);
        Matrix dx = gout;
        for (std::size_t i = 0; i < dx.size(); ++i) {
            if (in[i] <= 0.0) dx[i] = 0.0;
        }
        g.add(x, dx);
    });
}

GradTape::NodeId GradTape::sigmoid(NodeId x) {
    Matrix v = podmtl::sigmoid(value(x));
    NodeId self = static_cast<NodeId>(nodes_.size());
    return push(std::move(v), [x, self](const GradTape& t, const Matrix& gout, Gradients& g) {
        const Matrix& s = t.value(self);
        Matrix dx = gout;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= s[i] * (1.0 - s[i]);
        g.add(x, dx);
    });
}

GradTape::NodeId GradTape::scale(NodeId x, double c) {
    Matrix v = podmtl::scale(value(x), c);
    return push(std::move(v), [x, c](const GradTape&, const Matrix& gout, Gradients& g) {
        g.add(x, podmtl::scale(gout, c));
    });
}

GradTape::NodeId GradTape::batchnorm(NodeId x, NodeId gamma, NodeId beta,
                                     BatchNormRunning& running, NormMode mode, double eps,
                                     double momentum) {
    const Matrix& in = value(x);
    const std::size_t n = in.rows(), d = in.cols();
    const Matrix& gm = value(gamma);
    const Matrix& bt = value(beta);
    if (gm.rows() != 1 || gm.cols() != d || bt.rows() != 1 || bt.cols() != d) {
        throw shape_error("batchnorm: scale/shift " + gm.shape_str() + "/" + bt.shape_str() +
                          " do not match input " + in.shape_str());
    }
    if (running.mean.cols() != d || running.var.cols() != d) {
        throw shape_error("batchnorm: running stats do not match input width " +
                          std::to_string(d));
    }

    if (mode == NormMode::kTrain) {
        if (n < 2) {
            throw config_error("batchnorm: train mode needs a batch of at least 2 rows, got " +
                               std::to_string(n));
        }
        Matrix mu(1, d), var(1, d);
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += in(i, j);
            mu[j] = s / static_cast<double>(n);
        }
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double c = in(i, j) - mu[j];
                s += c * c;
            }
            var[j] = s / static_cast<double>(n);  // biased
        }
        Matrix inv_std(1, d);
        for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

        Matrix xhat(n, d);
        Matrix out(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                xhat(i, j) = (in(i, j) - mu[j]) * inv_std[j];
                out(i, j) = gm[j] * xhat(i, j) + bt[j];
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            running.mean[j] = momentum * running.mean[j] + (1.0 - momentum) * mu[j];
            running.var[j] = momentum * running.var[j] + (1.0 - momentum) * var[j];
        }
        out.require_finite("batchnorm");

        return push(std::move(out), [x, gamma, beta, xhat, inv_std, n, d](
                                        const GradTape& t, const Matrix& gout, Gradients& g) {
            const Matrix& gmv = t.value(gamma);
            Matrix dgamma(1, d), dbeta(1, d);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    dgamma[j] += gout(i, j) * xhat(i, j);
                    dbeta[j] += gout(i, j);
                }
            }
            // dxhat = gout .* gamma; standard fused train-mode input gradient
            Matrix sum_dxhat(1, d), sum_dxhat_xhat(1, d);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = gout(i, j) * gmv[j];
                    sum_dxhat[j] += dxh;
                    sum_dxhat_xhat[j] += dxh * xhat(i, j);
                }
            }
            Matrix dx(n, d);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = gout(i, j) * gmv[j];
                    dx(i, j) = inv_std[j] *
                               (dxh - inv_n * sum_dxhat[j] - xhat(i, j) * inv_n * sum_dxhat_xhat[j]);
                }
            }
            g.add(x, dx);
            g.add(gamma, dgamma);
            g.add(beta, dbeta);
        });
    }

    // Infer mode: normalize by running statistics, which are constants here.
    Matrix inv_std(1, d);
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(running.var[j] + eps);
    Matrix xhat(n, d);
    Matrix out(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            xhat(i, j) = (in(i, j) - running.mean[j]) * inv_std[j];
            out(i, j) = gm[j] * xhat(i, j) + bt[j];
        }
    }
    out.require_finite("batchnorm");
    return push(std::move(out), [x, gamma, beta, xhat, inv_std, n, d](
                                    const GradTape& t, const Matrix& gout, Gradients& g) {
        const Matrix& gmv = t.value(gamma);
        Matrix dgamma(1, d), dbeta(1, d);
        Matrix dx(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                dgamma[j] += gout(i, j) * xhat(i, j);
                dbeta[j] += gout(i, j);
                dx(i, j) = gout(i, j) * gmv[j] * inv_std[j];
            }
        }
        g.add(x, dx);
        g.add(gamma, dgamma);
        g.add(beta, dbeta);
    });
}

GradTape::NodeId GradTape::bce_with_logits(NodeId logits, Matrix labels) {
    const Matrix& z = value(logits);
    if (!z.same_shape(labels)) {
        throw shape_error("bce_with_logits: labels " + labels.shape_str() +
                          " do not match logits " + z.shape_str());
    }
    z.require_finite("bce_with_logits: logits");
    Matrix v = z;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double zi = z[i];
        const double yi = labels[i];
        v[i] = std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::fabs(zi)));
    }
    return push(std::move(v), [logits, labels](const GradTape& t, const Matrix& gout,
                                               Gradients& g) {
        const Matrix& z = t.value(logits);
        Matrix dz = gout;
        for (std::size_t i = 0; i < dz.size(); ++i) {
            dz[i] *= sigmoid_scalar(z[i]) - labels[i];
        }
        g.add(logits, dz);
    });
}

GradTape::NodeId GradTape::weighted_mean(NodeId x, Matrix weights) {
    const Matrix& v = value(x);
    if (!v.same_shape(weights)) {
        throw shape_error("weighted_mean: weights " + weights.shape_str() + " do not match " +
                          v.shape_str());
    }
    double wsum = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        wsum += weights[i];
        acc += weights[i] * v[i];
    }
    if (wsum <= 0.0) {
        throw config_error("weighted_mean: total weight is zero");
    }
    Matrix out = Matrix::scalar(acc / wsum);
    return push(std::move(out), [x, weights, wsum](const GradTape&, const Matrix& gout,
                                                   Gradients& g) {
        Matrix dx = weights;
        const double s = gout[0] / wsum;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= s;
        g.add(x, dx);
    });
}

Gradients GradTape::backward(NodeId root) const {
    const Matrix& rv = value(root);
    if (rv.rows() != 1 || rv.cols() != 1) {
        throw shape_error("backward: implicit unit seed needs a 1x1 root, got " + rv.shape_str());
    }
    return backward(root, Matrix::scalar(1.0));
}

Gradients GradTape::backward(NodeId root, const Matrix& seed) const {
    if (root >= nodes_.size()) {
        throw config_error("backward: unknown root node");
    }
    const Matrix& rv = value(root);
    if (!rv.same_shape(seed)) {
        throw shape_error("backward: seed " + seed.shape_str() + " does not match root " +
                          rv.shape_str());
    }
    Gradients g;
    g.grads_.reserve(nodes_.size());
    for (const Node& n : nodes_) {
        g.grads_.emplace_back(n.value.rows(), n.value.cols());
    }
    g.touched_.assign(nodes_.size(), false);
    g.add(root, seed);
    // Reverse sweep: each recorded operation is visited exactly once.
    for (std::uint32_t i = root + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (!n.pull || !g.touched_[i]) continue;
        n.pull(*this, g.grads_[i], g);
    }
    return g;
}

}  // namespace podmtl
