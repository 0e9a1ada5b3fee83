#pragma once

// Dense feedforward networks at desk scale: at most 4 weight layers, at most
// 32 units per layer. Forward passes record the full state trajectory
// h_0 = x, h_k = act_k(W_k h_{k-1} + b_k) so downstream analyses (covers,
// contraction, backprop) can reuse intermediate states.

#include <cstddef>
#include <vector>

#include "fplab/common.hpp"
#include "fplab/rng.hpp"

namespace fplab {

enum class Activation { identity, tanh, relu, softmax };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

inline Vec apply_activation(Activation act, const Vec& z) {
    Vec h(z.size());
    switch (act) {
        case Activation::identity:
            h = z;
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < z.size(); ++i) h[i] = std::tanh(z[i]);
            break;
        case Activation::relu:
            for (std::size_t i = 0; i < z.size(); ++i) h[i] = z[i] > 0.0 ? z[i] : 0.0;
            break;
        case Activation::softmax: {
            double zmax = z[0];
            for (double v : z) zmax = std::max(zmax, v);
            double sum = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) {
                h[i] = std::exp(z[i] - zmax);
                sum += h[i];
            }
            for (double& v : h) v /= sum;
            break;
        }
    }
    return h;
}

// dL/dz given dL/dh. z is the pre-activation, h the activation output.
// relu uses the z > 0 convention (derivative 0 at the kink), matching the
// strict cover predicate.
inline Vec activation_vjp(Activation act, const Vec& z, const Vec& h, const Vec& u) {
    Vec v(z.size());
    switch (act) {
        case Activation::identity:
            v = u;
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < z.size(); ++i) v[i] = u[i] * (1.0 - h[i] * h[i]);
            break;
        case Activation::relu:
            for (std::size_t i = 0; i < z.size(); ++i) v[i] = z[i] > 0.0 ? u[i] : 0.0;
            break;
        case Activation::softmax: {
            // (diag(p) - p p^T) u = p .* (u - <p, u>)
            const double pu = dot(h, u);
            for (std::size_t i = 0; i < z.size(); ++i) v[i] = h[i] * (u[i] - pu);
            break;
        }
    }
    return v;
}

// Jacobian dh/dz as a full matrix (diagonal except for softmax).
inline Mat activation_jacobian(Activation act, const Vec& z, const Vec& h) {
    const std::size_t n = z.size();
    Mat j(n, n);
    switch (act) {
        case Activation::identity:
            return Mat::identity(n);
        case Activation::tanh:
            for (std::size_t i = 0; i < n; ++i) j(i, i) = 1.0 - h[i] * h[i];
            break;
        case Activation::relu:
            for (std::size_t i = 0; i < n; ++i) j(i, i) = z[i] > 0.0 ? 1.0 : 0.0;
            break;
        case Activation::softmax:
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < n; ++k)
                    j(i, k) = h[i] * ((i == k ? 1.0 : 0.0) - h[k]);
            break;
    }
    return j;
}

struct Layer {
    Mat W;
    Vec b;
    Activation act = Activation::identity;
};

class Network {
public:
    static constexpr std::size_t kMaxLayers = 4;
    static constexpr std::size_t kMaxWidth = 32;

    Network() = default;
    explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

    // Seeded init, uniform in +-scale/sqrt(fan_in).
    static Network random(const std::vector<std::size_t>& dims,
                          const std::vector<Activation>& acts, Rng& rng, double scale = 1.0) {
        check_arg(dims.size() >= 2, "Network::random: need input and output dims");
        check_arg(acts.size() == dims.size() - 1, "Network::random: one activation per layer");
        std::vector<Layer> layers;
        for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
            Layer l;
            l.W = Mat(dims[k + 1], dims[k]);
            const double s = scale / std::sqrt(static_cast<double>(dims[k]));
            for (double& w : l.W.data()) w = rng.uniform(-s, s);
            l.b = Vec(dims[k + 1], 0.0);
            l.act = acts[k];
            layers.push_back(std::move(l));
        }
        return Network(std::move(layers));
    }

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers_mut() { return layers_; }

    std::size_t depth() const { return layers_.size(); }
    std::size_t input_dim() const { return layers_.front().W.cols(); }
    std::size_t output_dim() const { return layers_.back().W.rows(); }
    bool is_square() const { return input_dim() == output_dim(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const Layer& l : layers_) n += l.W.data().size() + l.b.size();
        return n;
    }

    Vec flatten() const {
        Vec theta;
        theta.reserve(param_count());
        for (const Layer& l : layers_) {
            theta.insert(theta.end(), l.W.data().begin(), l.W.data().end());
            theta.insert(theta.end(), l.b.begin(), l.b.end());
        }
        return theta;
    }

    void unflatten(const Vec& theta) {
        check_arg(theta.size() == param_count(), "Network::unflatten: size mismatch");
        std::size_t p = 0;
        for (Layer& l : layers_) {
            for (double& w : l.W.data()) w = theta[p++];
            for (double& b : l.b) b = theta[p++];
        }
    }

    void validate() const {
        check_arg(!layers_.empty() && layers_.size() <= kMaxLayers,
                  "Network: layer count must be in [1, 4]");
        for (std::size_t k = 0; k < layers_.size(); ++k) {
            const Layer& l = layers_[k];
            check_arg(l.W.rows() >= 1 && l.W.rows() <= kMaxWidth && l.W.cols() >= 1 &&
                          l.W.cols() <= kMaxWidth,
                      "Network: layer width must be in [1, 32]");
            check_arg(l.b.size() == l.W.rows(), "Network: bias dim mismatch");
            check_arg(l.W.finite() && all_finite(l.b), "Network: non-finite parameters");
            if (k > 0)
                check_arg(l.W.cols() == layers_[k - 1].W.rows(),
                          "Network: layer dims do not chain");
            if (l.act == Activation::softmax)
                check_arg(k + 1 == layers_.size(), "Network: softmax only on the final layer");
        }
    }

private:
    std::vector<Layer> layers_;
};

// h_0 = input, h_k = post-activation state of layer k.
struct Trajectory {
    std::vector<Vec> states;

    const Vec& input() const { return states.front(); }
    const Vec& output() const { return states.back(); }
};

// Trajectory plus pre-activations, as needed by reverse mode.
struct ForwardCache {
    std::vector<Vec> pre;  // z_k, one per layer
    Trajectory traj;
};

inline ForwardCache forward_cache(const Network& net, const Vec& x) {
    check_arg(x.size() == net.input_dim(), "forward: input dim mismatch");
    check_arg(all_finite(x), "forward: non-finite input");
    ForwardCache c;
    c.traj.states.push_back(x);
    Vec h = x;
    for (const Layer& l : net.layers()) {
        Vec z = matvec(l.W, h);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += l.b[i];
        h = apply_activation(l.act, z);
        c.pre.push_back(std::move(z));
        c.traj.states.push_back(h);
    }
    return c;
}

inline Trajectory forward(const Network& net, const Vec& x) {
    return forward_cache(net, x).traj;
}

inline Vec forward_out(const Network& net, const Vec& x) {
    return forward(net, x).output();
}

// Jacobian of layer k's map h_{k-1} -> h_k at the cached states.
inline Mat layer_jacobian(const Network& net, const ForwardCache& c, std::size_t k) {
    const Layer& l = net.layers()[k];
    const Mat a = activation_jacobian(l.act, c.pre[k], c.traj.states[k + 1]);
    return matmul(a, l.W);
}

inline std::vector<Mat> layer_jacobians(const Network& net, const Vec& x) {
    const ForwardCache c = forward_cache(net, x);
    std::vector<Mat> js;
    for (std::size_t k = 0; k < net.depth(); ++k) js.push_back(layer_jacobian(net, c, k));
    return js;
}

// End-to-end Jacobian d f(x) / dx, the ordered product of layer Jacobians.
inline Mat jacobian(const Network& net, const Vec& x) {
    const ForwardCache c = forward_cache(net, x);
    Mat j = layer_jacobian(net, c, 0);
    for (std::size_t k = 1; k < net.depth(); ++k) j = matmul(layer_jacobian(net, c, k), j);
    return j;
}

}  // namespace fplab
