#pragma once

// Boundary-conditioned training in three stages, plus the blended objective
// and the contrastive embedding loss.
//
//  stage 0: distribution matching (cross-entropy = empirical KL + constant)
//  stage 1: supervised fit (squared error or cross-entropy)
//  stage 2: stage-1 descent combined with ascent on lambda * B(theta),
//           where B is a weighted sum of per-point rewards on outputs
//
// The stage-2 loop with lambda = 0 takes exactly the stage-1 code path, so
// the two produce bit-identical parameters and curves.

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fplab/grad.hpp"
#include "fplab/network.hpp"

namespace fplab {

// --- empirical KL against grouped conditional label frequencies -------------

struct LabeledBatch {
    std::vector<Vec> inputs;
    std::vector<std::size_t> labels;
};

struct KlDecomposition {
    double cross_entropy = 0.0;
    double empirical_entropy = 0.0;
    double kl = 0.0;  // computed directly, not as the difference
};

// Groups identical inputs (exact coordinate equality, which synthetic data
// guarantees) and treats each group's label histogram as the data
// conditional. kl is the grouped sum (1/N) sum_g sum_c n_gc log(p_hat / q);
// cross_entropy - empirical_entropy equals it up to rounding.
inline KlDecomposition empirical_kl(const Network& net, const LabeledBatch& batch) {
    check_arg(!batch.inputs.empty(), "empirical_kl: empty batch");
    check_arg(batch.inputs.size() == batch.labels.size(), "empirical_kl: size mismatch");
    check_arg(net.layers().back().act == Activation::softmax,
              "empirical_kl: needs a softmax head");
    const std::size_t classes = net.output_dim();
    const double n = static_cast<double>(batch.inputs.size());

    std::map<Vec, std::vector<std::size_t>> groups;  // input -> label counts
    for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
        check_arg(batch.labels[i] < classes, "empirical_kl: label out of range");
        auto& hist = groups[batch.inputs[i]];
        hist.resize(classes, 0);
        ++hist[batch.labels[i]];
    }

    KlDecomposition out;
    for (const auto& [x, hist] : groups) {
        const Vec q = forward_out(net, x);
        std::size_t m = 0;
        for (std::size_t c : hist) m += c;
        for (std::size_t c = 0; c < classes; ++c) {
            if (hist[c] == 0) continue;
            const double cnt = static_cast<double>(hist[c]);
            const double p_hat = cnt / static_cast<double>(m);
            out.cross_entropy -= cnt * std::log(q[c]) / n;
            out.empirical_entropy -= cnt * std::log(p_hat) / n;
            out.kl += cnt * std::log(p_hat / q[c]) / n;
        }
    }
    return out;
}

struct Stage0Result {
    Network net;
    std::vector<KlDecomposition> curve;  // index 0 = before training
};

inline Stage0Result stage0_pretrain(Network net, const LabeledBatch& batch, std::size_t steps,
                                    double lr) {
    check_arg(lr > 0.0, "stage0_pretrain: lr must be positive");
    Stage0Result out;
    for (std::size_t t = 0; t < steps; ++t) {
        out.curve.push_back(empirical_kl(net, batch));
        const BatchLoss bl = cross_entropy_loss(net, batch.inputs, batch.labels);
        check_run(std::isfinite(bl.value), "stage0_pretrain: loss became non-finite");
        Vec theta = net.flatten();
        axpy(theta, -lr, bl.grad);
        net.unflatten(theta);
    }
    out.curve.push_back(empirical_kl(net, batch));
    out.net = std::move(net);
    return out;
}

// --- supervised stage --------------------------------------------------------

struct SftData {
    std::vector<Vec> inputs;
    std::vector<Vec> targets;          // regression mode
    std::vector<std::size_t> labels;   // classification mode
    bool classification = false;
};

inline BatchLoss sft_loss(const Network& net, const SftData& data) {
    return data.classification ? cross_entropy_loss(net, data.inputs, data.labels)
                               : mse_loss(net, data.inputs, data.targets);
}

// --- weak boundary set --------------------------------------------------------

class Reward {
public:
    // r(h) = -||h - target||^2, with an analytic gradient.
    static Reward neg_squared_distance(Vec target) {
        Reward r;
        r.builtin_ = true;
        r.target_ = std::move(target);
        return r;
    }

    // Black-box reward; gradients fall back to central differences on h.
    static Reward custom(std::function<double(const Vec&)> fn) {
        check_arg(static_cast<bool>(fn), "Reward::custom: empty function");
        Reward r;
        r.builtin_ = false;
        r.fn_ = std::move(fn);
        return r;
    }

    double value(const Vec& h) const {
        if (builtin_) {
            check_arg(h.size() == target_.size(), "Reward: dim mismatch");
            double s = 0.0;
            for (std::size_t i = 0; i < h.size(); ++i) {
                const double d = h[i] - target_[i];
                s += d * d;
            }
            return -s;
        }
        return fn_(h);
    }

    Vec grad(const Vec& h, double fd_step = 1e-5) const {
        Vec g(h.size());
        if (builtin_) {
            check_arg(h.size() == target_.size(), "Reward: dim mismatch");
            for (std::size_t i = 0; i < h.size(); ++i) g[i] = -2.0 * (h[i] - target_[i]);
            return g;
        }
        Vec hp = h;
        for (std::size_t i = 0; i < h.size(); ++i) {
            hp[i] = h[i] + fd_step;
            const double fp = fn_(hp);
            hp[i] = h[i] - fd_step;
            const double fm = fn_(hp);
            hp[i] = h[i];
            g[i] = (fp - fm) / (2.0 * fd_step);
        }
        return g;
    }

private:
    bool builtin_ = true;
    Vec target_;
    std::function<double(const Vec&)> fn_;
};

struct WeakPoint {
    Vec x;
    double eps = 0.0;  // strength
    Reward reward = Reward::neg_squared_distance({});
};

using WeakBoundarySet = std::vector<WeakPoint>;

// B(theta) = sum_j eps_j * r_j(f(x_j))
inline double weak_boundary_value(const Network& net, const WeakBoundarySet& wb) {
    double b = 0.0;
    for (const WeakPoint& p : wb) b += p.eps * p.reward.value(forward_out(net, p.x));
    return b;
}

// Value, dB/dtheta, and the magnitude sum_j |eps_j r_j| used by the weakness
// guard. The reward gradient w.r.t. the output (analytic or FD) is pulled
// back through the network in reverse mode.
struct WeakBoundaryEval {
    double value = 0.0;
    double abs_sum = 0.0;
    Vec grad;
};

inline WeakBoundaryEval weak_boundary_eval(const Network& net, const WeakBoundarySet& wb) {
    WeakBoundaryEval out;
    out.grad.assign(net.param_count(), 0.0);
    for (const WeakPoint& p : wb) {
        const ForwardCache c = forward_cache(net, p.x);
        const double r = p.reward.value(c.traj.output());
        out.value += p.eps * r;
        out.abs_sum += std::abs(p.eps * r);
        Vec cot = p.reward.grad(c.traj.output());
        for (double& v : cot) v *= p.eps;
        backprop(net, c, cot, out.grad);
    }
    return out;
}

// --- stage 1 / stage 2 loops ---------------------------------------------------

struct WeaknessWarning {
    std::size_t step = 0;
    double boundary_magnitude = 0.0;  // |lambda| * sum_j |eps_j r_j|
    double base_loss = 0.0;

    std::string text() const {
        return "step " + std::to_string(step) + ": boundary term magnitude " +
               std::to_string(boundary_magnitude) + " exceeds 10% of base loss " +
               std::to_string(base_loss) + "; the weak-boundary premise is strained";
    }
};

struct StageResult {
    Network net;
    std::vector<double> base_curve;      // supervised loss per step, index 0 = initial
    std::vector<double> boundary_curve;  // B per step (empty when no boundary set)
    std::vector<WeaknessWarning> warnings;
};

inline StageResult stage2_perturbed(Network net, const SftData& base, const WeakBoundarySet& wb,
                                    double lambda, std::size_t steps, double lr) {
    check_arg(lr > 0.0, "stage training: lr must be positive");
    StageResult out;
    const bool use_boundary = lambda != 0.0 && !wb.empty();
    for (std::size_t t = 0; t < steps; ++t) {
        const BatchLoss bl = sft_loss(net, base);
        check_run(std::isfinite(bl.value), "stage training: loss became non-finite");
        out.base_curve.push_back(bl.value);
        Vec g = bl.grad;
        if (use_boundary) {
            const WeakBoundaryEval we = weak_boundary_eval(net, wb);
            out.boundary_curve.push_back(we.value);
            // rewards are maximized: the boundary term enters the descent
            // direction with a minus sign
            axpy(g, -lambda, we.grad);
            const double mag = std::abs(lambda) * we.abs_sum;
            if (mag > 0.1 * std::abs(bl.value)) out.warnings.push_back({t, mag, bl.value});
        }
        Vec theta = net.flatten();
        axpy(theta, -lr, g);
        net.unflatten(theta);
    }
    out.base_curve.push_back(sft_loss(net, base).value);
    if (use_boundary) out.boundary_curve.push_back(weak_boundary_value(net, wb));
    out.net = std::move(net);
    return out;
}

inline StageResult stage1_sft(Network net, const SftData& data, std::size_t steps, double lr) {
    return stage2_perturbed(std::move(net), data, {}, 0.0, steps, lr);
}

// --- unified objective ----------------------------------------------------------

struct BoundaryWeights {
    double alpha = 0.0;
    double beta = 0.0;
};

struct IntentionSpec {
    Vec probe;
    Vec target;
};

// alpha * KL(p_data || q_theta) + beta * ||f(probe) - target||^2
// + (1 - alpha - beta) * cross-entropy on the same labels.
inline double unified_loss(const Network& net, const LabeledBatch& batch,
                           const BoundaryWeights& w, const IntentionSpec& intention) {
    check_arg(w.alpha >= 0.0 && w.beta >= 0.0 && w.alpha + w.beta <= 1.0,
              "unified_loss: weights must be nonnegative with alpha + beta <= 1");
    double loss = 0.0;
    if (w.alpha != 0.0) loss += w.alpha * empirical_kl(net, batch).kl;
    if (w.beta != 0.0) {
        const Vec out = forward_out(net, intention.probe);
        check_arg(out.size() == intention.target.size(), "unified_loss: intention dim mismatch");
        double c = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out[i] - intention.target[i];
            c += d * d;
        }
        loss += w.beta * c;
    }
    const double w_sup = 1.0 - w.alpha - w.beta;
    if (w_sup != 0.0)
        loss += w_sup * cross_entropy_loss(net, batch.inputs, batch.labels).value;
    return loss;
}

// --- contrastive loss -------------------------------------------------------------

inline double squared_distance(const Vec& a, const Vec& b) {
    check_arg(a.size() == b.size(), "squared_distance: dim mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// -log( exp(-d(a, pos)) / (exp(-d(a, pos)) + sum_j exp(-d(a, neg_j))) ),
// evaluated as a stable log-sum-exp over the gaps d(a,pos) - d(a,neg_j).
inline double contrastive_loss(
    const Vec& anchor, const Vec& positive, const std::vector<Vec>& negatives,
    const std::function<double(const Vec&, const Vec&)>& metric = squared_distance) {
    check_arg(!negatives.empty(), "contrastive_loss: need at least one negative");
    const double d_pos = metric(anchor, positive);
    std::vector<double> gaps;
    gaps.reserve(negatives.size());
    double m = 0.0;  // the implicit exp(0) term from the positive itself
    for (const Vec& neg : negatives) {
        gaps.push_back(d_pos - metric(anchor, neg));
        m = std::max(m, gaps.back());
    }
    double s = std::exp(0.0 - m);
    for (double gap : gaps) s += std::exp(gap - m);
    return m + std::log(s);
}

}  // namespace fplab
