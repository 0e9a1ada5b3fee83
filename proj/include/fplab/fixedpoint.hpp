#pragma once

// Fixed-point machinery for square networks f: R^n -> R^n. The residual
// e(x) = f(x) - x drives everything: iteration convergence, training, the
// constrained (Lagrangian) variant, and local contraction analysis at the
// points the iteration finds.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <vector>

#include "fplab/grad.hpp"
#include "fplab/network.hpp"
#include "fplab/spectral.hpp"

namespace fplab {

struct Residual {
    Vec e;
    double norm = 0.0;
};

inline Residual residual(const Network& net, const Vec& x) {
    check_arg(net.is_square(), "residual: network must map R^n -> R^n");
    Residual r;
    r.e = sub(forward_out(net, x), x);
    r.norm = norm2(r.e);
    return r;
}

inline double mean_residual(const Network& net, const std::vector<Vec>& data) {
    check_arg(!data.empty(), "mean_residual: empty data");
    double s = 0.0;
    for (const Vec& x : data) s += residual(net, x).norm;
    return s / static_cast<double>(data.size());
}

struct FixedPointReport {
    Vec point;
    double residual_norm = 0.0;
    double jacobian_radius = 0.0;
    bool stable = false;
    std::size_t iterations_used = 0;
    Vec basin_seed;
};

enum class IterateOutcome { converged, max_steps, diverged };

struct IterateOptions {
    std::size_t max_steps = 10000;
    double tol = 1e-9;
    double blowup = 1e12;      // ||h|| beyond this counts as divergence
    double noise_sigma = 0.0;  // isotropic per-step noise when > 0
    std::uint64_t noise_seed = 0;
    bool record_states = true;
    double spectral_tol = 1e-9;
    int spectral_max_iter = 10000;
};

struct IterateResult {
    IterateOutcome outcome = IterateOutcome::max_steps;
    std::vector<Vec> states;  // h_0 .. h_T when recording is on
    std::optional<FixedPointReport> report;
    std::size_t steps = 0;
};

inline IterateResult iterate(const Network& net, const Vec& h0, const IterateOptions& opt = {}) {
    check_arg(net.is_square(), "iterate: network must map R^n -> R^n");
    check_arg(opt.tol > 0.0 && opt.max_steps >= 1, "iterate: bad tolerance or budget");

    IterateResult res;
    Rng rng(opt.noise_seed);
    Vec h = h0;
    if (opt.record_states) res.states.push_back(h);

    for (std::size_t t = 1; t <= opt.max_steps; ++t) {
        Vec next = forward_out(net, h);
        if (opt.noise_sigma > 0.0)
            for (double& v : next) v += rng.normal(0.0, opt.noise_sigma);
        res.steps = t;
        if (opt.record_states) res.states.push_back(next);
        if (!all_finite(next) || norm2(next) > opt.blowup) {
            res.outcome = IterateOutcome::diverged;
            return res;
        }
        const double step_norm = norm2(sub(next, h));
        h = std::move(next);
        if (step_norm < opt.tol) {
            res.outcome = IterateOutcome::converged;
            FixedPointReport rep;
            rep.point = h;
            rep.residual_norm = residual(net, h).norm;
            rep.jacobian_radius =
                spectral_radius(jacobian(net, h), opt.spectral_tol, opt.spectral_max_iter);
            rep.stable = rep.jacobian_radius < 1.0;
            rep.iterations_used = t;
            rep.basin_seed = h0;
            res.report = std::move(rep);
            return res;
        }
    }
    res.outcome = IterateOutcome::max_steps;
    return res;
}

// --- residual training -----------------------------------------------------

struct ResidualTrainResult {
    Network net;
    std::vector<double> loss_curve;  // mean squared residual; index 0 = before training
    double initial_mean_residual = 0.0;
    double final_mean_residual = 0.0;
};

namespace detail {

// One descent step on E(theta) + lambda * (||theta||^2 - c); lambda = 0 gives
// the unconstrained step bit-for-bit (the axpy with 2*lambda = 0 adds signed
// zeros, which never changes a finite value). Shared by both trainers so the
// frozen-lambda equivalence holds exactly.
inline double residual_descent_step(Network& net, const std::vector<Vec>& data, double lr,
                                    double lambda, double* grad_norm_out = nullptr) {
    const BatchLoss bl = residual_loss(net, data);
    check_run(std::isfinite(bl.value), "residual training: loss became non-finite");
    Vec theta = net.flatten();
    Vec g = bl.grad;
    axpy(g, 2.0 * lambda, theta);  // d/dtheta of lambda * (||theta||^2 - c)
    if (grad_norm_out) *grad_norm_out = norm2(g);
    axpy(theta, -lr, g);
    net.unflatten(theta);
    return bl.value;
}

}  // namespace detail

inline ResidualTrainResult train_residual(Network net, const std::vector<Vec>& data,
                                          std::size_t steps, double lr) {
    check_arg(net.is_square(), "train_residual: network must map R^n -> R^n");
    check_arg(!data.empty(), "train_residual: empty data");
    check_arg(lr > 0.0, "train_residual: lr must be positive");

    ResidualTrainResult out;
    out.initial_mean_residual = mean_residual(net, data);
    for (std::size_t t = 0; t < steps; ++t)
        out.loss_curve.push_back(detail::residual_descent_step(net, data, lr, 0.0));
    out.loss_curve.push_back(residual_loss(net, data).value);
    out.final_mean_residual = mean_residual(net, data);
    out.net = std::move(net);
    return out;
}

// --- constrained training (saddle of E + lambda g) --------------------------

struct LagrangianTracePoint {
    double energy = 0.0;
    double g = 0.0;  // ||theta||^2 - c
    double lambda = 0.0;
};

struct LagrangianOptions {
    std::size_t steps = 2000;
    double lr_theta = 0.05;
    double lr_lambda = 0.1;
    double lambda0 = 0.0;
    double g_tol = 1e-3;     // early stop needs |g| below this ...
    double grad_tol = 1e-3;  // ... and ||d/dtheta (E + lambda g)|| below this
    double lambda_cap = 1e12;
};

struct LagrangianResult {
    Network net;
    double lambda = 0.0;
    std::vector<LagrangianTracePoint> trace;  // per step, plus the terminal state
    bool stationary = false;
    double final_grad_norm = 0.0;
    double final_g = 0.0;
};

inline LagrangianResult lagrangian_train(Network net, const std::vector<Vec>& data, double c,
                                         const LagrangianOptions& opt = {}) {
    check_arg(net.is_square(), "lagrangian_train: network must map R^n -> R^n");
    check_arg(!data.empty(), "lagrangian_train: empty data");
    check_arg(c > 0.0, "lagrangian_train: constraint budget must be positive");

    LagrangianResult out;
    double lambda = opt.lambda0;
    for (std::size_t t = 0; t < opt.steps; ++t) {
        const Vec theta = net.flatten();
        const double g = dot(theta, theta) - c;

        // simultaneous descent/ascent: both updates use the current point
        double grad_norm = 0.0;
        const double energy =
            detail::residual_descent_step(net, data, opt.lr_theta, lambda, &grad_norm);
        out.trace.push_back({energy, g, lambda});

        if (std::abs(g) < opt.g_tol && grad_norm < opt.grad_tol) {
            // undo nothing: theta already moved, but we are within tolerance
            out.stationary = true;
            out.final_grad_norm = grad_norm;
            break;
        }
        lambda += opt.lr_lambda * g;
        check_run(std::abs(lambda) <= opt.lambda_cap,
                  "lagrangian_train: lambda overflowed the cap (diverging ascent)");
        if (t + 1 == opt.steps) out.final_grad_norm = grad_norm;
    }
    const Vec theta = net.flatten();
    out.final_g = dot(theta, theta) - c;
    out.trace.push_back({residual_loss(net, data).value, out.final_g, lambda});
    out.lambda = lambda;
    out.net = std::move(net);
    return out;
}

// --- contraction analysis ---------------------------------------------------

struct ContractionReport {
    std::vector<double> layer_rhos;
    double end_to_end_rho = 0.0;
    bool stable = false;
    double residual_norm = 0.0;
};

inline ContractionReport contraction_report(const Network& net, const Vec& x_star,
                                            double tol = 1e-9) {
    check_arg(net.is_square(), "contraction_report: network must map R^n -> R^n");
    ContractionReport rep;
    rep.residual_norm = residual(net, x_star).norm;
    check_arg(rep.residual_norm <= 10.0 * tol,
              "contraction_report: x_star is not a fixed point at this tolerance");

    const ForwardCache c = forward_cache(net, x_star);
    Mat prod;
    for (std::size_t k = 0; k < net.depth(); ++k) {
        const Mat jk = layer_jacobian(net, c, k);
        rep.layer_rhos.push_back(spectral_radius(jk));
        prod = k == 0 ? jk : matmul(jk, prod);
    }
    rep.end_to_end_rho = spectral_radius(prod);
    rep.stable = rep.end_to_end_rho < 1.0;
    return rep;
}

// --- structured perturbation f + eps * g -------------------------------------

struct PerturbationReport {
    double rho_base = 0.0;
    double rho_perturbed = 0.0;
    bool accelerated = false;  // strictly smaller perturbed radius
};

inline PerturbationReport perturbation_accel(const Mat& j_f, const Mat& j_g, double eps) {
    check_arg(j_f.rows() == j_f.cols() && j_g.rows() == j_g.cols() &&
                  j_f.rows() == j_g.rows(),
              "perturbation_accel: Jacobians must be square and matched");
    PerturbationReport rep;
    rep.rho_base = spectral_radius(j_f);
    rep.rho_perturbed = spectral_radius(add(j_f, scale(j_g, eps)));
    rep.accelerated = rep.rho_perturbed < rep.rho_base;
    return rep;
}

inline PerturbationReport perturbation_accel(const Network& f, const Network& g, double eps,
                                             const Vec& x_star) {
    check_arg(f.is_square() && g.is_square() && f.input_dim() == g.input_dim(),
              "perturbation_accel: networks must be square with matching dims");
    return perturbation_accel(jacobian(f, x_star), jacobian(g, x_star), eps);
}

// --- curvature-preconditioned update ----------------------------------------

inline Vec preconditioned_step(const Vec& theta, const Vec& grad, const Vec& g_diag,
                               double lr) {
    check_arg(theta.size() == grad.size() && theta.size() == g_diag.size(),
              "preconditioned_step: size mismatch");
    Vec out = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        check_arg(g_diag[i] > 0.0, "preconditioned_step: curvature proxy must be positive");
        out[i] -= lr * grad[i] / g_diag[i];
    }
    return out;
}

struct PreconditionedAnalysis {
    Mat j_eff;  // I - lr * G^{-1} H
    double rho = 0.0;
    bool convergent = false;
};

// For a quadratic loss with Hessian H and diagonal preconditioner G, the
// parameter-update map is affine with Jacobian I - lr * G^{-1} H.
inline PreconditionedAnalysis preconditioned_analysis(const Mat& hessian, const Vec& g_diag,
                                                      double lr) {
    check_arg(hessian.rows() == hessian.cols() && hessian.rows() == g_diag.size(),
              "preconditioned_analysis: size mismatch");
    PreconditionedAnalysis a;
    a.j_eff = Mat::identity(g_diag.size());
    for (std::size_t i = 0; i < g_diag.size(); ++i) {
        check_arg(g_diag[i] > 0.0, "preconditioned_analysis: curvature proxy must be positive");
        for (std::size_t j = 0; j < g_diag.size(); ++j)
            a.j_eff(i, j) -= lr * hessian(i, j) / g_diag[i];
    }
    a.rho = spectral_radius(a.j_eff);
    a.convergent = a.rho < 1.0;
    return a;
}

// --- enumeration over an init grid -------------------------------------------

struct EnumeratedFixedPoint {
    FixedPointReport report;
    std::vector<Vec> basin_seeds;  // every grid start that landed here
};

struct EnumerationResult {
    std::vector<EnumeratedFixedPoint> fixed_points;
    std::vector<Vec> divergent_seeds;
    std::vector<Vec> unconverged_seeds;
};

// Distinct limits are merged within radius 10 * tol. Converged limits are
// sorted lexicographically before greedy clustering so the outcome does not
// depend on the order of init_grid.
inline EnumerationResult enumerate_fixed_points(const Network& net,
                                                const std::vector<Vec>& init_grid,
                                                const IterateOptions& opt = {}) {
    check_arg(!init_grid.empty(), "enumerate_fixed_points: empty grid");
    check_arg(opt.noise_sigma == 0.0, "enumerate_fixed_points: enumeration must be noiseless");

    struct Hit {
        FixedPointReport report;
    };
    std::vector<Hit> hits;
    EnumerationResult out;
    for (const Vec& seed : init_grid) {
        IterateOptions o = opt;
        o.record_states = false;
        const IterateResult r = iterate(net, seed, o);
        switch (r.outcome) {
            case IterateOutcome::converged:
                hits.push_back({*r.report});
                break;
            case IterateOutcome::diverged:
                out.divergent_seeds.push_back(seed);
                break;
            case IterateOutcome::max_steps:
                out.unconverged_seeds.push_back(seed);
                break;
        }
    }

    std::sort(hits.begin(), hits.end(),
              [](const Hit& a, const Hit& b) { return a.report.point < b.report.point; });

    const double merge_radius = 10.0 * opt.tol;
    for (const Hit& h : hits) {
        EnumeratedFixedPoint* home = nullptr;
        for (EnumeratedFixedPoint& fp : out.fixed_points)
            if (norm2(sub(h.report.point, fp.report.point)) <= merge_radius) {
                home = &fp;
                break;
            }
        if (home) {
            home->basin_seeds.push_back(h.report.basin_seed);
            // keep the member with the smallest residual as the representative
            if (h.report.residual_norm < home->report.residual_norm) home->report = h.report;
        } else {
            out.fixed_points.push_back({h.report, {h.report.basin_seed}});
        }
    }
    for (EnumeratedFixedPoint& fp : out.fixed_points)
        std::sort(fp.basin_seeds.begin(), fp.basin_seeds.end());
    return out;
}

}  // namespace fplab
