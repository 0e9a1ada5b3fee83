#pragma once

// Activation cover geometry. The cover of node n at layer k is the set of
// dataset indices whose activation h_k[n] clears the threshold tau (or
// |h_k[n]| > tau in magnitude mode, the natural reading for tanh units).
// Layer indices are 0-based positions in net.layers(); layer k means the
// post-activation state h_{k+1} of the forward trajectory.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fplab/io.hpp"
#include "fplab/network.hpp"

namespace fplab {

struct CoverRule {
    double tau = 0.0;
    bool magnitude = false;

    bool covers(double a) const { return (magnitude ? std::abs(a) : a) > tau; }

    // Default per activation family: strictly-active region for relu and
    // identity, |a| > 0.5 for saturating tanh units.
    static CoverRule for_activation(Activation act) {
        if (act == Activation::tanh) return {0.5, true};
        return {0.0, false};
    }
};

struct CoverMap {
    std::size_t iteration = 0;
    CoverRule rule;
    std::size_t n_samples = 0;
    // covers[layer][node] = sorted sample indices above threshold
    std::vector<std::vector<std::vector<std::uint32_t>>> covers;

    bool same_shape(const CoverMap& other) const {
        if (covers.size() != other.covers.size()) return false;
        for (std::size_t k = 0; k < covers.size(); ++k)
            if (covers[k].size() != other.covers[k].size()) return false;
        return true;
    }
};

inline CoverMap cover_map(const Network& net, const std::vector<Vec>& dataset,
                          const CoverRule& rule, std::size_t iteration = 0) {
    check_arg(!dataset.empty(), "cover_map: empty dataset");
    check_arg(std::isfinite(rule.tau), "cover_map: tau must be finite");

    CoverMap m;
    m.iteration = iteration;
    m.rule = rule;
    m.n_samples = dataset.size();
    m.covers.resize(net.depth());
    for (std::size_t k = 0; k < net.depth(); ++k) m.covers[k].resize(net.layers()[k].W.rows());

    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Trajectory t = forward(net, dataset[i]);
        for (std::size_t k = 0; k < net.depth(); ++k) {
            const Vec& h = t.states[k + 1];
            for (std::size_t n = 0; n < h.size(); ++n)
                if (rule.covers(h[n])) m.covers[k][n].push_back(static_cast<std::uint32_t>(i));
        }
    }
    return m;
}

inline CoverMap cover_map(const Network& net, const std::vector<Vec>& dataset, double tau,
                          std::size_t iteration = 0) {
    return cover_map(net, dataset, CoverRule{tau, false}, iteration);
}

// All (layer, node) pairs active on a single input.
inline std::vector<std::pair<std::size_t, std::size_t>> active_covers(const Network& net,
                                                                      const Vec& x,
                                                                      const CoverRule& rule) {
    check_arg(std::isfinite(rule.tau), "active_covers: tau must be finite");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const Trajectory t = forward(net, x);
    for (std::size_t k = 0; k < net.depth(); ++k) {
        const Vec& h = t.states[k + 1];
        for (std::size_t n = 0; n < h.size(); ++n)
            if (rule.covers(h[n])) out.emplace_back(k, n);
    }
    return out;
}

inline std::vector<std::pair<std::size_t, std::size_t>> active_covers(const Network& net,
                                                                      const Vec& x, double tau) {
    return active_covers(net, x, CoverRule{tau, false});
}

// Fraction of dataset samples covered by at least one node at the layer.
inline double coverage_fraction(const CoverMap& m, std::size_t layer) {
    check_arg(layer < m.covers.size(), "coverage_fraction: layer out of range");
    std::vector<bool> covered(m.n_samples, false);
    for (const auto& node_cover : m.covers[layer])
        for (std::uint32_t i : node_cover) covered[i] = true;
    std::size_t cnt = 0;
    for (bool b : covered) cnt += b;
    return static_cast<double>(cnt) / static_cast<double>(m.n_samples);
}

// 1 - |A and B| / |A or B| on sorted index vectors; two empty sets count as
// identical (distance 0).
inline double jaccard_distance(const std::vector<std::uint32_t>& a,
                               const std::vector<std::uint32_t>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0, ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
        if (a[ia] == b[ib]) {
            ++inter;
            ++ia;
            ++ib;
        } else if (a[ia] < b[ib]) {
            ++ia;
        } else {
            ++ib;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

struct CoverDriftReport {
    std::vector<std::vector<double>> node_jaccard;  // [layer][node]
    std::vector<double> mean_drift_per_layer;
    std::vector<double> coverage_before;
    std::vector<double> coverage_after;
};

inline CoverDriftReport cover_drift(const CoverMap& before, const CoverMap& after) {
    check_arg(before.same_shape(after), "cover_drift: cover maps have different shapes");
    check_arg(before.n_samples == after.n_samples,
              "cover_drift: cover maps built from different dataset sizes");
    CoverDriftReport rep;
    for (std::size_t k = 0; k < before.covers.size(); ++k) {
        std::vector<double> row;
        double sum = 0.0;
        for (std::size_t n = 0; n < before.covers[k].size(); ++n) {
            const double d = jaccard_distance(before.covers[k][n], after.covers[k][n]);
            row.push_back(d);
            sum += d;
        }
        rep.mean_drift_per_layer.push_back(row.empty() ? 0.0
                                                       : sum / static_cast<double>(row.size()));
        rep.node_jaccard.push_back(std::move(row));
        rep.coverage_before.push_back(coverage_fraction(before, k));
        rep.coverage_after.push_back(coverage_fraction(after, k));
    }
    return rep;
}

// One row per (snapshot, layer, node); jaccard_vs_prev is 0 for the first
// snapshot by convention.
inline Csv covers_csv(const std::vector<CoverMap>& snapshots) {
    check_arg(!snapshots.empty(), "covers_csv: no snapshots");
    Csv csv({"iteration", "layer", "node", "cover_size", "jaccard_vs_prev"});
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        const CoverMap& m = snapshots[s];
        if (s > 0)
            check_arg(m.same_shape(snapshots[s - 1]), "covers_csv: snapshot shapes differ");
        for (std::size_t k = 0; k < m.covers.size(); ++k)
            for (std::size_t n = 0; n < m.covers[k].size(); ++n) {
                const double j =
                    s == 0 ? 0.0
                           : jaccard_distance(snapshots[s - 1].covers[k][n], m.covers[k][n]);
                csv.row({fmt_size(m.iteration), fmt_size(k), fmt_size(n),
                         fmt_size(m.covers[k][n].size()), fmt_double(j)});
            }
    }
    return csv;
}

}  // namespace fplab
