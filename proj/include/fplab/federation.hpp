#pragma once

// Single-process federation of K softmax classifiers fine-tuned from a shared
// frozen foundation net. Clients never exchange parameters or gradients: each
// one sees only the probe-set outputs of its peers (a mixture reference) and
// of the foundation, and couples to them through KL terms. Rounds have
// barrier semantics: every update is computed against the round-start
// snapshot, then all commits land at once, so the committed state does not
// depend on client order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "fplab/common.hpp"
#include "fplab/grad.hpp"
#include "fplab/io.hpp"
#include "fplab/network.hpp"
#include "fplab/rng.hpp"

namespace fplab {

struct FedHyper {
    double beta = 0.0;    // weight of KL(p_theta || p_foundation) on the probe set
    double lambda = 0.0;  // weight of KL(p_theta || q_peers) on the probe set
    double eta = 0.1;     // step size
    double damping = 1e-6;
    std::size_t probe_count = 64;
};

inline void validate_hyper(const FedHyper& h) {
    check_arg(h.beta >= 0.0 && h.lambda >= 0.0, "federation: weights must be nonnegative");
    check_arg(h.eta > 0.0, "federation: eta must be positive");
    check_arg(h.damping > 0.0, "federation: damping must be positive");
    check_arg(h.probe_count >= 1, "federation: need at least one probe");
}

struct ClientData {
    std::vector<Vec> inputs;
    std::vector<std::size_t> labels;
};

struct FederationState {
    Network foundation;
    std::vector<Network> clients;
    Mat alpha;  // mixing weights, row i over peers j; zero diagonal
    std::vector<ClientData> data;
    std::vector<bool> is_anchor;
    std::vector<std::uint64_t> anchor_hash;  // parameter checksum, set at freeze time
    FedHyper hyper;
    std::vector<Vec> probes;
    std::size_t round = 0;
};

inline void validate_federation(const FederationState& s) {
    const std::size_t k = s.clients.size();
    check_arg(k >= 2, "federation: need at least two clients");
    check_arg(s.foundation.layers().back().act == Activation::softmax,
              "federation: classifiers need a softmax head");
    for (const Network& c : s.clients) {
        check_arg(c.depth() == s.foundation.depth(), "federation: client depth differs");
        for (std::size_t l = 0; l < c.depth(); ++l) {
            const Layer& a = c.layers()[l];
            const Layer& b = s.foundation.layers()[l];
            check_arg(a.W.rows() == b.W.rows() && a.W.cols() == b.W.cols() && a.act == b.act,
                      "federation: client architecture differs from the foundation");
        }
    }
    check_arg(s.alpha.rows() == k && s.alpha.cols() == k, "federation: alpha must be K x K");
    for (std::size_t i = 0; i < k; ++i) {
        check_arg(s.alpha(i, i) == 0.0, "federation: alpha diagonal must be zero");
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            check_arg(s.alpha(i, j) >= 0.0, "federation: alpha entries must be nonnegative");
            row += s.alpha(i, j);
        }
        check_arg(std::abs(row - 1.0) <= 1e-10, "federation: alpha rows must sum to 1");
    }
    check_arg(s.data.size() == k, "federation: one data partition per client");
    const std::size_t classes = s.foundation.output_dim();
    for (const ClientData& d : s.data) {
        check_arg(!d.inputs.empty(), "federation: empty client partition");
        check_arg(d.inputs.size() == d.labels.size(), "federation: partition size mismatch");
        for (std::size_t y : d.labels)
            check_arg(y < classes, "federation: label out of range");
    }
    check_arg(s.is_anchor.size() == k && s.anchor_hash.size() == k,
              "federation: anchor bookkeeping size mismatch");
    check_arg(!s.probes.empty(), "federation: empty probe set");
    for (const Vec& p : s.probes)
        check_arg(p.size() == s.foundation.input_dim(), "federation: probe dim mismatch");
    validate_hyper(s.hyper);
}

// Clients start as copies of the foundation with uniform peer weights and no
// anchors. The probe set is a seeded with-replacement sample from the pooled
// client inputs, fixed for the lifetime of the state.
inline FederationState init_federation(const Network& foundation, std::size_t k,
                                       std::vector<ClientData> partitions,
                                       const FedHyper& hyper, std::uint64_t seed) {
    check_arg(k >= 2, "init_federation: need at least two clients");
    check_arg(partitions.size() == k, "init_federation: one partition per client");
    validate_hyper(hyper);
    FederationState s;
    s.foundation = foundation;
    s.clients.assign(k, foundation);
    s.alpha = Mat(k, k);
    const double w = 1.0 / static_cast<double>(k - 1);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) s.alpha(i, j) = i == j ? 0.0 : w;
    s.data = std::move(partitions);
    s.is_anchor.assign(k, false);
    s.anchor_hash.assign(k, 0);
    s.hyper = hyper;

    std::vector<Vec> pool;
    for (const ClientData& d : s.data)
        pool.insert(pool.end(), d.inputs.begin(), d.inputs.end());
    check_arg(!pool.empty(), "init_federation: empty client partition");
    Rng rng(mix_seed(seed, 0xfed0));
    for (std::size_t b = 0; b < hyper.probe_count; ++b)
        s.probes.push_back(pool[rng.index(pool.size())]);
    validate_federation(s);
    return s;
}

// KL(p || q) over a finite class set; p-zero terms contribute zero.
inline double kl_div(const Vec& p, const Vec& q) {
    check_arg(p.size() == q.size(), "kl_div: dim mismatch");
    double s = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        if (p[c] == 0.0) continue;
        check_run(q[c] > 0.0, "kl_div: reference puts zero mass on a used class");
        s += p[c] * std::log(p[c] / q[c]);
    }
    return s;
}

// q_{-i}(.|x) = sum_{j != i} alpha_ij p_j(.|x); a convex combination of
// probability vectors, so itself normalized up to rounding.
inline Vec mixture_reference(const FederationState& s, std::size_t i, const Vec& x) {
    check_arg(i < s.clients.size(), "mixture_reference: client index out of range");
    Vec q(s.foundation.output_dim(), 0.0);
    for (std::size_t j = 0; j < s.clients.size(); ++j) {
        if (j == i || s.alpha(i, j) == 0.0) continue;
        axpy(q, s.alpha(i, j), forward_out(s.clients[j], x));
    }
    return q;
}

// Probe-set context a client needs from outside itself in one round. A
// networked deployment would ship exactly this struct; nothing else about
// the peers is visible to the update rule.
struct PeerView {
    std::vector<Vec> mixture;         // q_{-i} per probe, empty when lambda = 0
    std::vector<Vec> foundation_out;  // foundation outputs per probe, empty when beta = 0
};

inline PeerView local_peer_view(const FederationState& s, std::size_t i) {
    PeerView v;
    if (s.hyper.lambda != 0.0)
        for (const Vec& p : s.probes) v.mixture.push_back(mixture_reference(s, i, p));
    if (s.hyper.beta != 0.0)
        for (const Vec& p : s.probes) v.foundation_out.push_back(forward_out(s.foundation, p));
    return v;
}

// Full client objective and its parameter gradient at `net`:
//   CE(batch) + beta * mean_probes KL(p || p_foundation)
//            + lambda * mean_probes KL(p || q_peers).
// The references in `view` are constants of the round, so gradient flows only
// through p. The KL cotangent is log p - log q; the softmax pullback
// annihilates the +1 that formally belongs in d(KL)/dp.
inline BatchLoss client_objective_eval(const Network& net, const ClientData& batch,
                                       const std::vector<Vec>& probes, const PeerView& view,
                                       const FedHyper& h) {
    BatchLoss out = cross_entropy_loss(net, batch.inputs, batch.labels);
    if (h.beta == 0.0 && h.lambda == 0.0) return out;
    check_arg(!probes.empty(), "client objective: empty probe set");
    const double inv_p = 1.0 / static_cast<double>(probes.size());
    for (std::size_t b = 0; b < probes.size(); ++b) {
        const ForwardCache c = forward_cache(net, probes[b]);
        const Vec& p = c.traj.output();
        Vec cot(p.size(), 0.0);
        bool used = false;
        if (h.beta != 0.0) {
            const Vec& p0 = view.foundation_out[b];
            out.value += h.beta * inv_p * kl_div(p, p0);
            for (std::size_t cl = 0; cl < p.size(); ++cl)
                if (p[cl] > 0.0)
                    cot[cl] += h.beta * inv_p * (std::log(p[cl]) - std::log(p0[cl]));
            used = true;
        }
        if (h.lambda != 0.0) {
            const Vec& q = view.mixture[b];
            out.value += h.lambda * inv_p * kl_div(p, q);
            for (std::size_t cl = 0; cl < p.size(); ++cl)
                if (p[cl] > 0.0)
                    cot[cl] += h.lambda * inv_p * (std::log(p[cl]) - std::log(q[cl]));
            used = true;
        }
        if (used) backprop(net, c, cot, out.grad);
    }
    return out;
}

inline double client_objective(const FederationState& s, std::size_t i, const ClientData& batch) {
    check_arg(i < s.clients.size(), "client_objective: client index out of range");
    return client_objective_eval(s.clients[i], batch, s.probes, local_peer_view(s, i), s.hyper)
        .value;
}

// Damped diagonal empirical Fisher: mean squared per-parameter score of the
// local likelihood over the batch, plus damping. Entries are >= damping.
inline Vec diag_fisher(const Network& net, const ClientData& batch, double damping) {
    check_arg(!batch.inputs.empty(), "diag_fisher: empty batch");
    check_arg(batch.inputs.size() == batch.labels.size(), "diag_fisher: batch size mismatch");
    check_arg(damping > 0.0, "diag_fisher: damping must be positive");
    Vec acc(net.param_count(), 0.0);
    Vec g(net.param_count(), 0.0);
    for (std::size_t n = 0; n < batch.inputs.size(); ++n) {
        const ForwardCache c = forward_cache(net, batch.inputs[n]);
        check_arg(batch.labels[n] < net.output_dim(), "diag_fisher: label out of range");
        Vec cot(net.output_dim(), 0.0);
        cot[batch.labels[n]] = -1.0 / c.traj.output()[batch.labels[n]];
        std::fill(g.begin(), g.end(), 0.0);
        backprop(net, c, cot, g);
        for (std::size_t p = 0; p < g.size(); ++p) acc[p] += g[p] * g[p];
    }
    const double inv_n = 1.0 / static_cast<double>(batch.inputs.size());
    for (double& v : acc) v = v * inv_n + damping;
    return acc;
}

// theta <- theta - eta * G^-1 grad with the supplied diagonal preconditioner.
inline Network preconditioned_step(const FederationState& s, std::size_t i,
                                   const ClientData& batch, const Vec& precond) {
    check_arg(i < s.clients.size(), "natural gradient step: client index out of range");
    check_arg(!s.is_anchor[i], "natural gradient step: client is frozen");
    const Network& net = s.clients[i];
    check_arg(precond.size() == net.param_count(), "natural gradient step: preconditioner size");
    for (double v : precond)
        check_arg(v > 0.0, "natural gradient step: preconditioner must be positive");
    const BatchLoss obj = client_objective_eval(net, batch, s.probes, local_peer_view(s, i),
                                                s.hyper);
    Vec theta = net.flatten();
    for (std::size_t p = 0; p < theta.size(); ++p)
        theta[p] -= s.hyper.eta * obj.grad[p] / precond[p];
    Network out = net;
    out.unflatten(theta);
    return out;
}

inline Network natural_gradient_step(const FederationState& s, std::size_t i,
                                     const ClientData& batch) {
    check_arg(i < s.clients.size(), "natural gradient step: client index out of range");
    return preconditioned_step(s, i, batch, diag_fisher(s.clients[i], batch, s.hyper.damping));
}

struct EquilibriumReport {
    Mat sym_kl;          // mean over probes of the symmetrized KL, zero diagonal
    double score = 0.0;  // mean off-diagonal entry
};

inline EquilibriumReport equilibrium_metric(const FederationState& s) {
    check_arg(!s.probes.empty(), "equilibrium_metric: empty probe set");
    const std::size_t k = s.clients.size();
    std::vector<std::vector<Vec>> outs(k);
    for (std::size_t i = 0; i < k; ++i)
        for (const Vec& p : s.probes) outs[i].push_back(forward_out(s.clients[i], p));
    EquilibriumReport rep;
    rep.sym_kl = Mat(k, k);
    const double inv_p = 1.0 / static_cast<double>(s.probes.size());
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            double m = 0.0;
            for (std::size_t b = 0; b < s.probes.size(); ++b)
                m += 0.5 * (kl_div(outs[i][b], outs[j][b]) + kl_div(outs[j][b], outs[i][b]));
            m = std::max(0.0, m * inv_p);
            rep.sym_kl(i, j) = m;
            rep.sym_kl(j, i) = m;
        }
    if (k > 1) {
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                if (i != j) sum += rep.sym_kl(i, j);
        rep.score = sum / static_cast<double>(k * (k - 1));
    }
    return rep;
}

struct RoundMetrics {
    std::size_t round = 0;
    Vec local_loss;  // per client, CE on its own partition
    Vec kl_mixture;  // per client, mean probe KL to its peer mixture
    Vec grad_norm;   // per client, full-objective gradient norm
    Mat sym_kl;
    double equilibrium = 0.0;
};

inline RoundMetrics collect_metrics(const FederationState& s) {
    RoundMetrics m;
    m.round = s.round;
    const std::size_t k = s.clients.size();
    const double inv_p = 1.0 / static_cast<double>(s.probes.size());
    for (std::size_t i = 0; i < k; ++i) {
        m.local_loss.push_back(
            cross_entropy_loss(s.clients[i], s.data[i].inputs, s.data[i].labels).value);
        double kl = 0.0;
        for (const Vec& p : s.probes)
            kl += kl_div(forward_out(s.clients[i], p), mixture_reference(s, i, p));
        m.kl_mixture.push_back(std::max(0.0, kl * inv_p));
        m.grad_norm.push_back(norm2(
            client_objective_eval(s.clients[i], s.data[i], s.probes, local_peer_view(s, i),
                                  s.hyper)
                .grad));
    }
    const EquilibriumReport eq = equilibrium_metric(s);
    m.sym_kl = eq.sym_kl;
    m.equilibrium = eq.score;
    return m;
}

// One synchronized round: every non-anchor client takes a natural-gradient
// step on its full partition, computed against the round-start snapshot;
// anchors are checksum-verified and carried over untouched; then all updates
// commit at once and metrics are taken on the committed state. `order` only
// schedules the computations, the committed state cannot depend on it.
inline RoundMetrics run_round(FederationState& s, const std::vector<std::size_t>& order) {
    validate_federation(s);
    const std::size_t k = s.clients.size();
    check_arg(order.size() == k, "run_round: order must cover all clients");
    std::vector<bool> seen(k, false);
    for (std::size_t i : order) {
        check_arg(i < k && !seen[i], "run_round: order must be a permutation");
        seen[i] = true;
    }
    for (std::size_t i = 0; i < k; ++i)
        if (s.is_anchor[i])
            check_run(fnv1a_doubles(s.clients[i].flatten()) == s.anchor_hash[i],
                      "run_round: anchor parameters changed");
    std::vector<Network> next = s.clients;
    for (std::size_t i : order)
        if (!s.is_anchor[i]) next[i] = natural_gradient_step(s, i, s.data[i]);
    s.clients = std::move(next);
    ++s.round;
    return collect_metrics(s);
}

inline RoundMetrics run_round(FederationState& s) {
    std::vector<std::size_t> order(s.clients.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    return run_round(s, order);
}

struct FixedPointCheck {
    Vec grad_norms;          // full-objective gradient norm, every client
    bool converged = false;  // all non-anchor norms below tol
};

inline FixedPointCheck fixed_point_check(const FederationState& s, double tol) {
    validate_federation(s);
    check_arg(tol > 0.0, "fixed_point_check: tol must be positive");
    FixedPointCheck out;
    out.converged = true;
    for (std::size_t i = 0; i < s.clients.size(); ++i) {
        out.grad_norms.push_back(norm2(
            client_objective_eval(s.clients[i], s.data[i], s.probes, local_peer_view(s, i),
                                  s.hyper)
                .grad));
        if (!s.is_anchor[i] && !(out.grad_norms.back() < tol)) out.converged = false;
    }
    return out;
}

// Replaces the anchor set. Anchors are excluded from updates and their
// parameter checksum is re-verified every round.
inline void freeze_anchors(FederationState& s, const std::vector<std::size_t>& anchors) {
    for (std::size_t i : anchors)
        check_arg(i < s.clients.size(), "freeze_anchors: index out of range");
    s.is_anchor.assign(s.clients.size(), false);
    s.anchor_hash.assign(s.clients.size(), 0);
    for (std::size_t i : anchors) {
        s.is_anchor[i] = true;
        s.anchor_hash[i] = fnv1a_doubles(s.clients[i].flatten());
    }
}

// Seeded symmetry breaking: adds independent uniform(-scale, scale) noise to
// every non-anchor client's parameters. Fresh federations start with all
// clients identical, which identical data would preserve forever.
inline void perturb_clients(FederationState& s, double scale, std::uint64_t seed) {
    check_arg(scale > 0.0, "perturb_clients: scale must be positive");
    for (std::size_t i = 0; i < s.clients.size(); ++i) {
        if (s.is_anchor[i]) continue;
        Rng rng(mix_seed(seed, i));
        Vec theta = s.clients[i].flatten();
        for (double& v : theta) v += rng.uniform(-scale, scale);
        s.clients[i].unflatten(theta);
    }
}

// The same step rule run for one client alone: coupling forced off, prior
// kept. Round r of a lambda = 0 federation reproduces this bit for bit.
inline std::vector<Network> train_single(const Network& foundation, const ClientData& data,
                                         FedHyper hyper, const std::vector<Vec>& probes,
                                         std::size_t rounds) {
    hyper.lambda = 0.0;
    validate_hyper(hyper);
    check_arg(!data.inputs.empty() && data.inputs.size() == data.labels.size(),
              "train_single: bad partition");
    check_arg(!probes.empty(), "train_single: empty probe set");
    PeerView view;
    if (hyper.beta != 0.0)
        for (const Vec& p : probes) view.foundation_out.push_back(forward_out(foundation, p));
    std::vector<Network> traj{foundation};
    Network net = foundation;
    for (std::size_t r = 0; r < rounds; ++r) {
        const BatchLoss obj = client_objective_eval(net, data, probes, view, hyper);
        const Vec fisher = diag_fisher(net, data, hyper.damping);
        Vec theta = net.flatten();
        for (std::size_t p = 0; p < theta.size(); ++p)
            theta[p] -= hyper.eta * obj.grad[p] / fisher[p];
        net.unflatten(theta);
        traj.push_back(net);
    }
    return traj;
}

// round, client, local_loss, kl_mixture, grad_norm, equilibrium_score
inline std::string federation_csv(const std::vector<RoundMetrics>& rounds) {
    Csv t({"round", "client", "local_loss", "kl_mixture", "grad_norm", "equilibrium_score"});
    for (const RoundMetrics& m : rounds)
        for (std::size_t i = 0; i < m.local_loss.size(); ++i)
            t.row({fmt_size(m.round), fmt_size(i), fmt_double(m.local_loss[i]),
                   fmt_double(m.kl_mixture[i]), fmt_double(m.grad_norm[i]),
                   fmt_double(m.equilibrium)});
    return t.str();
}

}  // namespace fplab
