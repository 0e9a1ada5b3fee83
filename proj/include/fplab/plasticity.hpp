#pragma once

// Gaussian level-set fields, the accumulated-curvature number R built from
// their Hessians, the capacity formula C_eff = C0/(1+R), and the rigidity
// curve that tracks both across training checkpoints.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fplab/common.hpp"
#include "fplab/io.hpp"
#include "fplab/network.hpp"
#include "fplab/rng.hpp"

namespace fplab {

// --- Gaussian component -------------------------------------------------------

struct GaussianComponent {
    Vec mu;
    Mat sigma;  // symmetric positive definite
    double c = 0.5;  // level in (0, 1)
};

inline void validate_component(const GaussianComponent& g) {
    check_arg(!g.mu.empty(), "gaussian component: empty center");
    check_arg(g.sigma.rows() == g.mu.size() && g.sigma.cols() == g.mu.size(),
              "gaussian component: sigma shape mismatch");
    for (std::size_t i = 0; i < g.sigma.rows(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            check_arg(std::abs(g.sigma(i, j) - g.sigma(j, i)) <=
                          1e-12 * std::max(1.0, std::abs(g.sigma(i, j))),
                      "gaussian component: sigma not symmetric");
    check_arg(g.c > 0.0 && g.c < 1.0, "gaussian component: level must lie in (0, 1)");
    cholesky(g.sigma);  // throws when not positive definite
}

// phi(x) = exp(-1/2 (x-mu)^T Sigma^{-1} (x-mu)), in (0, 1], equal to 1 at mu
inline double gaussian_value(const GaussianComponent& g, const Vec& x) {
    validate_component(g);
    check_arg(x.size() == g.mu.size(), "gaussian_value: dimension mismatch");
    const Mat l = cholesky(g.sigma);
    const Vec d = sub(x, g.mu);
    return std::exp(-0.5 * dot(d, cholesky_solve(l, d)));
}

// closed-form Hessian of phi: phi(x) * (Sigma^{-1} d d^T Sigma^{-1} - Sigma^{-1})
inline Mat gaussian_hessian(const GaussianComponent& g, const Vec& x) {
    validate_component(g);
    check_arg(x.size() == g.mu.size(), "gaussian_hessian: dimension mismatch");
    const std::size_t n = g.mu.size();
    const Mat inv = spd_inverse(g.sigma);
    const Vec d = sub(x, g.mu);
    const Vec u = matvec(inv, d);
    const double phi = std::exp(-0.5 * dot(d, u));
    Mat h(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) h(i, j) = phi * (u[i] * u[j] - inv(i, j));
    return h;
}

// --- level-set sampling ----------------------------------------------------------

struct LevelSetSample {
    std::vector<Vec> points;
    std::size_t requested = 0;
    std::size_t proposals = 0;
    double acceptance_rate = 0.0;
    bool shortfall = false;  // proposal budget ran out at a healthy rate
};

// Rejection sampling of the band |phi(x) - c| < band. Proposals are uniform
// over the box of half-width R = sqrt(-2 ln(c - band)) mapped through the
// Cholesky factor of Sigma: its image encloses the phi >= c - band ellipsoid
// tightly no matter how ill-conditioned Sigma is, and reduces to the
// axis-aligned box with half-widths R * sqrt(Sigma_ii) for diagonal Sigma.
// An acceptance rate below 1e-4 aborts (the band is effectively
// unreachable); exhausting max_proposals at a viable rate returns a
// shortfall report instead.
inline LevelSetSample level_set_sample(const GaussianComponent& g, std::size_t n, double band,
                                       std::uint64_t seed,
                                       std::size_t max_proposals = 2'000'000) {
    validate_component(g);
    check_arg(n > 0, "level_set_sample: need n > 0");
    check_arg(band > 0.0, "level_set_sample: band must be positive");
    check_arg(g.c - band > 0.0, "level_set_sample: band swallows the level (c - band <= 0)");

    const std::size_t dim = g.mu.size();
    const double radius = std::sqrt(-2.0 * std::log(g.c - band));

    const Mat l = cholesky(g.sigma);
    LevelSetSample out;
    out.requested = n;
    Rng rng(seed);
    Vec y(dim);
    while (out.points.size() < n && out.proposals < max_proposals) {
        for (std::size_t i = 0; i < dim; ++i) y[i] = rng.uniform(-radius, radius);
        const Vec x = addv(g.mu, matvec(l, y));
        ++out.proposals;
        const Vec d = sub(x, g.mu);
        const double phi = std::exp(-0.5 * dot(d, cholesky_solve(l, d)));
        if (std::abs(phi - g.c) < band) out.points.push_back(x);
        if (out.proposals >= 10000 &&
            static_cast<double>(out.points.size()) < 1e-4 * static_cast<double>(out.proposals))
            check_run(false, "level_set_sample: acceptance rate below 1e-4 after " +
                                 std::to_string(out.proposals) +
                                 " proposals; band too narrow for this component");
    }
    out.acceptance_rate =
        static_cast<double>(out.points.size()) / static_cast<double>(out.proposals);
    out.shortfall = out.points.size() < n;
    return out;
}

// --- accumulated curvature ---------------------------------------------------------

// R = sum over components of the mean squared Frobenius norm of the Gaussian
// Hessian over that component's level band, estimated by rejection samples.
// band is band_frac * c per component, keeping c - band positive for any
// level in (0, 1).
inline double curvature_functional(const std::vector<GaussianComponent>& components,
                                   std::size_t samples_per_component, std::uint64_t seed,
                                   double band_frac = 0.1) {
    check_arg(!components.empty(), "curvature_functional: no components");
    check_arg(samples_per_component >= 10, "curvature_functional: need >= 10 samples");
    check_arg(band_frac > 0.0 && band_frac < 1.0, "curvature_functional: band_frac in (0,1)");

    double r = 0.0;
    for (std::size_t i = 0; i < components.size(); ++i) {
        const GaussianComponent& g = components[i];
        const LevelSetSample s = level_set_sample(g, samples_per_component, band_frac * g.c,
                                                  mix_seed(seed, i));
        check_run(!s.shortfall, "curvature_functional: level-set sampling fell short (" +
                                    std::to_string(s.points.size()) + "/" +
                                    std::to_string(s.requested) + " points)");
        double acc = 0.0;
        for (const Vec& x : s.points) acc += frobenius_sq(gaussian_hessian(g, x));
        r += acc / static_cast<double>(s.points.size());
    }
    return r;
}

// C_eff = C0 / (1 + R)
inline double effective_capacity(double c0, double r) {
    check_arg(c0 > 0.0, "effective_capacity: C0 must be positive");
    check_arg(r >= 0.0, "effective_capacity: R must be nonnegative");
    return c0 / (1.0 + r);
}

// --- rigidity tracking ----------------------------------------------------------------

struct Checkpoint {
    std::size_t step = 0;
    Network net;
};

struct RigidityPoint {
    std::size_t step = 0;
    double R = 0.0;
    double C_eff = 0.0;
};

struct RigidityCurve {
    double C0 = 1.0;
    std::vector<RigidityPoint> points;

    std::string csv() const {
        Csv t({"step", "R", "C_eff"});
        for (const RigidityPoint& p : points)
            t.row({fmt_size(p.step), fmt_double(p.R), fmt_double(p.C_eff)});
        return t.str();
    }
};

namespace detail {

// Deterministic farthest-point k-centers with a few Lloyd refinements. No
// randomness: the first center is the point of largest norm (lowest index on
// ties), so identical clouds always produce identical fits.
inline std::vector<std::size_t> assign_clusters(const std::vector<Vec>& pts,
                                                const std::vector<Vec>& centers) {
    std::vector<std::size_t> label(pts.size(), 0);
    for (std::size_t p = 0; p < pts.size(); ++p) {
        double best = norm2(sub(pts[p], centers[0]));
        for (std::size_t k = 1; k < centers.size(); ++k) {
            const double d = norm2(sub(pts[p], centers[k]));
            if (d < best) {
                best = d;
                label[p] = k;
            }
        }
    }
    return label;
}

inline std::vector<Vec> k_centers(const std::vector<Vec>& pts, std::size_t k) {
    std::vector<Vec> centers;
    std::size_t first = 0;
    for (std::size_t p = 1; p < pts.size(); ++p)
        if (norm2(pts[p]) > norm2(pts[first])) first = p;
    centers.push_back(pts[first]);
    while (centers.size() < k) {
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t p = 0; p < pts.size(); ++p) {
            double d = norm2(sub(pts[p], centers[0]));
            for (std::size_t c = 1; c < centers.size(); ++c)
                d = std::min(d, norm2(sub(pts[p], centers[c])));
            if (d > far_d) {
                far_d = d;
                far = p;
            }
        }
        centers.push_back(pts[far]);
    }
    for (int it = 0; it < 5; ++it) {
        const std::vector<std::size_t> label = assign_clusters(pts, centers);
        std::vector<Vec> next(k, Vec(pts[0].size(), 0.0));
        std::vector<std::size_t> count(k, 0);
        for (std::size_t p = 0; p < pts.size(); ++p) {
            axpy(next[label[p]], 1.0, pts[p]);
            ++count[label[p]];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (count[c] > 0) centers[c] = scalev(next[c], 1.0 / static_cast<double>(count[c]));
    }
    return centers;
}

// per-cluster moments, covariance damped to keep it positive definite
inline std::vector<GaussianComponent> fit_components(const std::vector<Vec>& pts,
                                                     std::size_t k, double level) {
    const std::size_t dim = pts[0].size();
    const std::vector<Vec> centers = k_centers(pts, k);
    const std::vector<std::size_t> label = assign_clusters(pts, centers);
    std::vector<GaussianComponent> comps;
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<const Vec*> members;
        for (std::size_t p = 0; p < pts.size(); ++p)
            if (label[p] == c) members.push_back(&pts[p]);
        if (members.empty()) continue;
        GaussianComponent g;
        g.c = level;
        g.mu.assign(dim, 0.0);
        for (const Vec* m : members) axpy(g.mu, 1.0, *m);
        g.mu = scalev(g.mu, 1.0 / static_cast<double>(members.size()));
        g.sigma = Mat(dim, dim);
        for (const Vec* m : members) {
            const Vec d = sub(*m, g.mu);
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < dim; ++j) g.sigma(i, j) += d[i] * d[j];
        }
        for (std::size_t i = 0; i < dim * dim; ++i)
            g.sigma.data()[i] /= static_cast<double>(members.size());
        for (std::size_t i = 0; i < dim; ++i) g.sigma(i, i) += 1e-6;
        comps.push_back(std::move(g));
    }
    return comps;
}

}  // namespace detail

// At each checkpoint: forward the evaluation inputs, read the last hidden
// layer's activations, fit K Gaussian components to that cloud (deterministic
// k-centers + per-cluster moments, level exp(-1/2)), and evaluate the
// curvature functional. The seed drives only the level-set sampling, so a
// repeated checkpoint repeats its row exactly.
inline RigidityCurve rigidity_track(const std::vector<Checkpoint>& checkpoints,
                                    const std::vector<Vec>& eval_inputs, std::size_t k,
                                    double c0, std::uint64_t seed,
                                    std::size_t samples_per_component = 200) {
    check_arg(checkpoints.size() >= 2, "rigidity_track: need >= 2 checkpoints");
    check_arg(!eval_inputs.empty(), "rigidity_track: no evaluation inputs");
    check_arg(k >= 1, "rigidity_track: need K >= 1");
    check_arg(c0 > 0.0, "rigidity_track: C0 must be positive");

    RigidityCurve curve;
    curve.C0 = c0;
    const double level = std::exp(-0.5);
    for (const Checkpoint& ck : checkpoints) {
        const std::size_t n_layers = ck.net.layers().size();
        const std::size_t cloud_index = n_layers >= 2 ? n_layers - 1 : 1;
        std::vector<Vec> cloud;
        for (const Vec& x : eval_inputs)
            cloud.push_back(forward_cache(ck.net, x).traj.states[cloud_index]);
        const std::size_t dim = cloud[0].size();
        check_arg(cloud.size() >= k * (dim + 1),
                  "rigidity_track: need at least K*(dim+1) samples to fit moments");
        const std::vector<GaussianComponent> comps = detail::fit_components(cloud, k, level);
        const double r = curvature_functional(comps, samples_per_component, seed);
        curve.points.push_back({ck.step, r, effective_capacity(c0, r)});
    }
    return curve;
}

}  // namespace fplab
