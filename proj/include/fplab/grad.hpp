#pragma once

// Reverse-mode gradients for the dense networks. Parameter gradients are flat
// vectors aligned with Network::flatten (per layer: W row-major, then b).

#include <cstddef>
#include <functional>
#include <vector>

#include "fplab/network.hpp"

namespace fplab {

// Accumulates dL/dtheta for one sample into gflat (pre-sized, zero-initialized
// by the caller) and returns dL/dx. dout is dL/dh_L for this sample; any batch
// averaging is folded into dout by the caller.
inline Vec backprop(const Network& net, const ForwardCache& c, const Vec& dout, Vec& gflat) {
    check_arg(dout.size() == net.output_dim(), "backprop: cotangent dim mismatch");
    check_arg(gflat.size() == net.param_count(), "backprop: grad buffer size mismatch");

    // Flat offsets of each layer's W block.
    std::vector<std::size_t> off(net.depth());
    std::size_t p = 0;
    for (std::size_t k = 0; k < net.depth(); ++k) {
        off[k] = p;
        p += net.layers()[k].W.data().size() + net.layers()[k].b.size();
    }

    Vec u = dout;
    for (std::size_t k = net.depth(); k-- > 0;) {
        const Layer& l = net.layers()[k];
        const Vec v = activation_vjp(l.act, c.pre[k], c.traj.states[k + 1], u);
        const Vec& hin = c.traj.states[k];
        const std::size_t rows = l.W.rows(), cols = l.W.cols();
        double* gw = gflat.data() + off[k];
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) gw[i * cols + j] += v[i] * hin[j];
        double* gb = gflat.data() + off[k] + rows * cols;
        for (std::size_t i = 0; i < rows; ++i) gb[i] += v[i];
        u = matvec_t(l.W, v);
    }
    return u;
}

struct BatchLoss {
    double value = 0.0;
    Vec grad;  // flat, same layout as Network::flatten
};

// Generic batch loss: per_sample(i, output) returns this sample's loss value
// and writes dL_i/dh_L into its second argument. Both loss and gradient are
// averaged over the batch.
inline BatchLoss loss_grad(const Network& net, const std::vector<Vec>& inputs,
                           const std::function<double(std::size_t, const Vec&, Vec&)>& per_sample) {
    check_arg(!inputs.empty(), "loss_grad: empty batch");
    BatchLoss out;
    out.grad.assign(net.param_count(), 0.0);
    const double inv_b = 1.0 / static_cast<double>(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const ForwardCache c = forward_cache(net, inputs[i]);
        Vec cot(net.output_dim(), 0.0);
        out.value += per_sample(i, c.traj.output(), cot) * inv_b;
        for (double& v : cot) v *= inv_b;
        backprop(net, c, cot, out.grad);
    }
    return out;
}

// Mean squared error against vector targets: (1/B) sum_i ||f(x_i) - y_i||^2.
inline BatchLoss mse_loss(const Network& net, const std::vector<Vec>& inputs,
                          const std::vector<Vec>& targets) {
    check_arg(inputs.size() == targets.size(), "mse_loss: batch size mismatch");
    return loss_grad(net, inputs, [&](std::size_t i, const Vec& out, Vec& cot) {
        check_arg(targets[i].size() == out.size(), "mse_loss: target dim mismatch");
        double l = 0.0;
        for (std::size_t j = 0; j < out.size(); ++j) {
            const double e = out[j] - targets[i][j];
            l += e * e;
            cot[j] = 2.0 * e;
        }
        return l;
    });
}

// Self-map residual energy: (1/B) sum_i ||f(x_i) - x_i||^2. The subtracted
// input is constant w.r.t. parameters, so only the network output carries
// gradient.
inline BatchLoss residual_loss(const Network& net, const std::vector<Vec>& inputs) {
    check_arg(net.is_square(), "residual_loss: network must map R^n -> R^n");
    return loss_grad(net, inputs, [&](std::size_t i, const Vec& out, Vec& cot) {
        double l = 0.0;
        for (std::size_t j = 0; j < out.size(); ++j) {
            const double e = out[j] - inputs[i][j];
            l += e * e;
            cot[j] = 2.0 * e;
        }
        return l;
    });
}

// Cross-entropy against integer class labels; requires a softmax head.
inline BatchLoss cross_entropy_loss(const Network& net, const std::vector<Vec>& inputs,
                                    const std::vector<std::size_t>& labels) {
    check_arg(inputs.size() == labels.size(), "cross_entropy_loss: batch size mismatch");
    check_arg(net.layers().back().act == Activation::softmax,
              "cross_entropy_loss: needs a softmax head");
    return loss_grad(net, inputs, [&](std::size_t i, const Vec& out, Vec& cot) {
        check_arg(labels[i] < out.size(), "cross_entropy_loss: label out of range");
        // dL/dp_c = -1[c = y]/p_y; the softmax Jacobian in backprop turns
        // this into the familiar p - onehot(y).
        cot[labels[i]] = -1.0 / out[labels[i]];
        return -std::log(out[labels[i]]);
    });
}

// Diagonal curvature proxy: exponential moving average of squared gradients
// plus damping. v_0 = 0, v_t = decay * v_{t-1} + (1 - decay) * g_t.^2; the
// returned entries are v_T + damping, hence always >= damping.
inline Vec curvature_proxy(const std::vector<Vec>& grad_history, double decay,
                           double damping = 1e-8) {
    check_arg(!grad_history.empty(), "curvature_proxy: empty history");
    check_arg(decay >= 0.0 && decay < 1.0, "curvature_proxy: decay must be in [0, 1)");
    check_arg(damping > 0.0, "curvature_proxy: damping must be positive");
    Vec v(grad_history.front().size(), 0.0);
    for (const Vec& g : grad_history) {
        check_arg(g.size() == v.size(), "curvature_proxy: ragged history");
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = decay * v[i] + (1.0 - decay) * g[i] * g[i];
    }
    for (double& x : v) x += damping;
    return v;
}

}  // namespace fplab
