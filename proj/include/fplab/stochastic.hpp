#pragma once

// Monte Carlo side of the library: pre-activation statistics against their
// closed-form sums, Boole's inequality on deviation events, least-squares
// contraction fits across depth, the exponential chain-error model, and the
// distribution of noisy fixed-point iterates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fplab/common.hpp"
#include "fplab/fixedpoint.hpp"
#include "fplab/io.hpp"
#include "fplab/network.hpp"
#include "fplab/rng.hpp"

namespace fplab {

// --- input samplers --------------------------------------------------------

// Draws network inputs. When the coordinates are independent with known
// moments, the per-node pre-activation mean and variance have closed forms;
// samplers advertise that through the moment fields.
struct InputSampler {
    std::function<Vec(Rng&)> draw;
    bool independent = false;
    Vec coord_mean;
    Vec coord_var;
};

inline InputSampler gaussian_sampler(std::size_t dim, double mean, double sigma) {
    check_arg(dim > 0 && sigma >= 0.0, "gaussian_sampler: need dim > 0, sigma >= 0");
    InputSampler s;
    s.draw = [dim, mean, sigma](Rng& rng) {
        Vec x(dim);
        for (double& v : x) v = mean + sigma * rng.normal();
        return x;
    };
    s.independent = true;
    s.coord_mean.assign(dim, mean);
    s.coord_var.assign(dim, sigma * sigma);
    return s;
}

inline InputSampler uniform_sampler(std::size_t dim, double lo, double hi) {
    check_arg(dim > 0 && hi >= lo, "uniform_sampler: need dim > 0, hi >= lo");
    InputSampler s;
    s.draw = [dim, lo, hi](Rng& rng) { return rng.uniform_vec(dim, lo, hi); };
    s.independent = true;
    s.coord_mean.assign(dim, 0.5 * (lo + hi));
    s.coord_var.assign(dim, (hi - lo) * (hi - lo) / 12.0);
    return s;
}

// --- pre-activation statistics ----------------------------------------------

struct ActivationStats {
    std::size_t layer = 0;
    std::size_t n_samples = 0;
    Vec mc_mean;
    Vec mc_var;  // unbiased sample variance
    bool analytic = false;
    Vec an_mean;
    Vec an_var;
};

// Per-node mean and variance of the pre-activation a = W h + b at the given
// layer, estimated over n_samples draws. When every layer before the target
// is an identity-activation affine map and the sampler has independent
// coordinates, a is an affine form of the raw input and the sum formulas
// E[a] = sum c_j mu_j + d, Var(a) = sum c_j^2 var_j apply; those values are
// reported alongside the Monte Carlo ones.
inline ActivationStats activation_stats(const Network& net, std::size_t layer,
                                        const InputSampler& sampler, std::size_t n_samples,
                                        std::uint64_t seed) {
    check_arg(layer < net.layers().size(), "activation_stats: layer out of range");
    check_arg(n_samples >= 100, "activation_stats: need n_samples >= 100");
    check_arg(static_cast<bool>(sampler.draw), "activation_stats: sampler has no draw fn");

    const std::size_t in_dim = net.layers().front().W.cols();
    const std::size_t width = net.layers()[layer].W.rows();

    ActivationStats out;
    out.layer = layer;
    out.n_samples = n_samples;
    out.mc_mean.assign(width, 0.0);
    out.mc_var.assign(width, 0.0);

    Rng rng(seed);
    Vec sum(width, 0.0), sumsq(width, 0.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
        Vec x = sampler.draw(rng);
        check_run(x.size() == in_dim, "activation_stats: sampler dimension mismatch");
        for (double v : x) check_run(std::isfinite(v), "activation_stats: non-finite draw");
        for (std::size_t l = 0; l < layer; ++l) {
            const Layer& L = net.layers()[l];
            x = apply_activation(L.act, addv(matvec(L.W, x), L.b));
        }
        const Layer& T = net.layers()[layer];
        const Vec a = addv(matvec(T.W, x), T.b);
        for (std::size_t n = 0; n < width; ++n) {
            sum[n] += a[n];
            sumsq[n] += a[n] * a[n];
        }
    }
    const double nd = static_cast<double>(n_samples);
    for (std::size_t n = 0; n < width; ++n) {
        out.mc_mean[n] = sum[n] / nd;
        out.mc_var[n] = std::max(0.0, (sumsq[n] - nd * out.mc_mean[n] * out.mc_mean[n]) /
                                          (nd - 1.0));
    }

    bool linear_prefix = sampler.independent;
    for (std::size_t l = 0; l < layer && linear_prefix; ++l)
        linear_prefix = net.layers()[l].act == Activation::identity;
    if (linear_prefix) {
        check_arg(sampler.coord_mean.size() == in_dim && sampler.coord_var.size() == in_dim,
                  "activation_stats: sampler moments have wrong dimension");
        // compose the affine prefix, then the target layer's own map
        Mat C = Mat::identity(in_dim);
        Vec d(in_dim, 0.0);
        for (std::size_t l = 0; l < layer; ++l) {
            const Layer& L = net.layers()[l];
            d = addv(matvec(L.W, d), L.b);
            C = matmul(L.W, C);
        }
        const Layer& T = net.layers()[layer];
        const Vec e = addv(matvec(T.W, d), T.b);
        const Mat A = matmul(T.W, C);
        out.analytic = true;
        out.an_mean.assign(width, 0.0);
        out.an_var.assign(width, 0.0);
        for (std::size_t n = 0; n < width; ++n) {
            double m = e[n], v = 0.0;
            for (std::size_t j = 0; j < in_dim; ++j) {
                m += A(n, j) * sampler.coord_mean[j];
                v += A(n, j) * A(n, j) * sampler.coord_var[j];
            }
            out.an_mean[n] = m;
            out.an_var[n] = v;
        }
    }
    return out;
}

// --- union bound -------------------------------------------------------------

struct DeviationSpec {
    std::vector<std::function<bool(const Vec&)>> events;
};

struct UnionBoundReport {
    double p_union = 0.0;
    double sum_p = 0.0;
    double slack = 0.0;  // sum_p - p_union, >= 0 by counting
    bool holds = false;
    std::vector<double> event_freq;
};

// Empirical frequencies of the events and of their union on one shared sample
// set. Boole's inequality is an identity of the counts, so holds is asserted,
// not merely reported.
inline UnionBoundReport union_bound_check(const std::vector<Vec>& samples,
                                          const DeviationSpec& spec) {
    check_arg(!samples.empty(), "union_bound_check: samples must be nonempty");
    check_arg(!spec.events.empty(), "union_bound_check: no events");
    UnionBoundReport rep;
    rep.event_freq.assign(spec.events.size(), 0.0);
    std::size_t union_count = 0;
    std::vector<std::size_t> counts(spec.events.size(), 0);
    for (const Vec& x : samples) {
        bool any = false;
        for (std::size_t i = 0; i < spec.events.size(); ++i) {
            if (spec.events[i](x)) {
                ++counts[i];
                any = true;
            }
        }
        if (any) ++union_count;
    }
    const double n = static_cast<double>(samples.size());
    rep.p_union = static_cast<double>(union_count) / n;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        rep.event_freq[i] = static_cast<double>(counts[i]) / n;
        rep.sum_p += rep.event_freq[i];
    }
    rep.slack = rep.sum_p - rep.p_union;
    rep.holds = rep.p_union <= rep.sum_p + 1e-12;
    check_run(rep.holds, "union_bound_check: counting identity violated");
    return rep;
}

// --- depth contraction fit -----------------------------------------------------

struct ContractionFit {
    double rho = std::numeric_limits<double>::quiet_NaN();
    double xi = std::numeric_limits<double>::quiet_NaN();
    double r_squared = 0.0;
    bool degenerate = false;  // zero-variance regressor, no slope to report
    bool contractive = false;
    std::vector<std::pair<double, double>> depth_errors;  // (e_j, e_{j+1}) pooled
};

// Per-depth mean of the recorded states; the simplest stand-in for a
// coherent reference region at each depth.
inline std::vector<Vec> depth_centers(const std::vector<Trajectory>& trajectories) {
    check_arg(!trajectories.empty(), "depth_centers: no trajectories");
    const std::size_t depths = trajectories.front().states.size();
    std::vector<Vec> centers(depths);
    for (std::size_t j = 0; j < depths; ++j) {
        check_arg(trajectories.front().states[j].size() > 0, "depth_centers: empty state");
        centers[j].assign(trajectories.front().states[j].size(), 0.0);
    }
    for (const Trajectory& t : trajectories) {
        check_arg(t.states.size() == depths, "depth_centers: ragged trajectory set");
        for (std::size_t j = 0; j < depths; ++j) axpy(centers[j], 1.0, t.states[j]);
    }
    const double inv = 1.0 / static_cast<double>(trajectories.size());
    for (Vec& c : centers) c = scalev(c, inv);
    return centers;
}

// e_j = ||h_j - center_j|| per trajectory; pooled least squares for
// e_{j+1} = rho e_j + xi. A flat regressor (all e_j equal) has no defined
// slope and is flagged degenerate instead of fitted.
inline ContractionFit depth_contraction_fit(const std::vector<Trajectory>& trajectories,
                                            const std::vector<Vec>& centers) {
    check_arg(centers.size() >= 2, "depth_contraction_fit: need >= 2 depths");
    check_arg(trajectories.size() >= 10, "depth_contraction_fit: need >= 10 trajectories");

    ContractionFit fit;
    for (const Trajectory& t : trajectories) {
        check_arg(t.states.size() >= centers.size(),
                  "depth_contraction_fit: trajectory shorter than centers");
        Vec e(centers.size());
        for (std::size_t j = 0; j < centers.size(); ++j)
            e[j] = norm2(sub(t.states[j], centers[j]));
        for (std::size_t j = 0; j + 1 < centers.size(); ++j)
            fit.depth_errors.emplace_back(e[j], e[j + 1]);
    }

    const double n = static_cast<double>(fit.depth_errors.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& [x, y] : fit.depth_errors) {
        sx += x;
        sy += y;
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : fit.depth_errors) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (sxx <= 1e-24 * n) {
        fit.degenerate = true;
        return fit;
    }
    fit.rho = sxy / sxx;
    fit.xi = my - fit.rho * mx;
    double ss_res = 0.0;
    for (const auto& [x, y] : fit.depth_errors) {
        const double r = y - (fit.rho * x + fit.xi);
        ss_res += r * r;
    }
    fit.r_squared = syy <= 1e-30 ? 1.0 : 1.0 - ss_res / syy;
    fit.contractive = fit.rho < 1.0;
    return fit;
}

// --- chain error model ----------------------------------------------------------

// Probability that n consecutive exact steps all succeed when each fails
// independently with probability eps.
inline double chain_error_model(double eps, std::size_t n) {
    check_arg(eps >= 0.0 && eps <= 1.0, "chain_error_model: eps must be in [0, 1]");
    return std::pow(1.0 - eps, static_cast<double>(n));
}

// --- chain model vs measured plateau ----------------------------------------------

struct ExpVsUnionRow {
    std::size_t depth = 0;
    double measured_freq = 0.0;  // P(||x_d - x*|| > threshold)
    double chain_pred = 0.0;     // 1 - (1 - eps_fit)^depth
    double union_sum = 0.0;      // sum of per-coordinate deviation frequencies
};

struct ExpVsUnionReport {
    Vec x_star;
    double stationary_scale = 0.0;  // RMS distance from x* in the pilot tail
    double threshold = 0.0;
    double eps_fit = 0.0;
    std::vector<ExpVsUnionRow> rows;
    bool plateau = false;
    double plateau_ratio = std::numeric_limits<double>::quiet_NaN();

    std::string csv() const {
        Csv t({"depth", "measured_freq", "chain_pred", "union_sum"});
        for (const ExpVsUnionRow& r : rows)
            t.row({fmt_size(r.depth), fmt_double(r.measured_freq), fmt_double(r.chain_pred),
                   fmt_double(r.union_sum)});
        return t.str();
    }
};

namespace detail {

inline Vec noisy_step(const Network& net, const Vec& x, double sigma, Rng& rng) {
    Vec y = forward_out(net, x);
    if (sigma > 0.0)
        for (double& v : y) v += sigma * rng.normal();
    return y;
}

// Noiseless fixed point plus the contraction check shared by the stochastic
// drivers. Throws when iteration fails or the point is not attracting.
inline FixedPointReport attracting_fixed_point(const Network& net, const char* who) {
    const std::size_t dim = net.layers().front().W.cols();
    IterateOptions opt;
    opt.tol = 1e-12;
    opt.record_states = false;
    const IterateResult res = iterate(net, Vec(dim, 0.0), opt);
    check_arg(res.outcome == IterateOutcome::converged && res.report.has_value(),
              std::string(who) + ": noiseless iteration did not converge");
    check_arg(res.report->jacobian_radius < 1.0,
              std::string(who) + ": fixed point is not contracting");
    return *res.report;
}

}  // namespace detail

// Runs depth-indexed noisy iterations from the noiseless fixed point and
// compares three numbers per depth: the measured frequency of leaving a ball
// around x*, the exponential chain model fitted to the shallowest depth, and
// the per-coordinate union-bound sum. The ball radius is 2x the stationary
// RMS distance estimated by a pilot run (floored at 1e-7 so the sigma = 0
// case is not dominated by iteration tolerance).
inline ExpVsUnionReport exp_vs_union_experiment(const Network& net, double sigma,
                                                const std::vector<std::size_t>& depths,
                                                std::size_t n_runs, std::uint64_t seed) {
    check_arg(sigma >= 0.0, "exp_vs_union: sigma must be >= 0");
    check_arg(!depths.empty(), "exp_vs_union: no depths requested");
    check_arg(n_runs >= 10, "exp_vs_union: need n_runs >= 10");
    for (std::size_t i = 0; i + 1 < depths.size(); ++i)
        check_arg(depths[i] < depths[i + 1], "exp_vs_union: depths must be increasing");
    check_arg(depths.front() >= 1, "exp_vs_union: depths start at 1");

    ExpVsUnionReport rep;
    const FixedPointReport fp = detail::attracting_fixed_point(net, "exp_vs_union");
    rep.x_star = fp.point;
    const std::size_t dim = rep.x_star.size();

    {
        const std::size_t pilot_steps = 400;
        Rng rng(mix_seed(seed, 0x9110711));
        Vec x = rep.x_star;
        double acc = 0.0;
        std::size_t used = 0;
        for (std::size_t t = 0; t < pilot_steps; ++t) {
            x = detail::noisy_step(net, x, sigma, rng);
            if (t >= pilot_steps / 2) {
                const double d = norm2(sub(x, rep.x_star));
                acc += d * d;
                ++used;
            }
        }
        rep.stationary_scale = std::sqrt(acc / static_cast<double>(used));
        rep.threshold = std::max(2.0 * rep.stationary_scale, 1e-7);
    }
    const double coord_tau = rep.threshold / std::sqrt(static_cast<double>(dim));

    for (const std::size_t depth : depths) {
        ExpVsUnionRow row;
        row.depth = depth;
        std::size_t hits = 0;
        std::vector<std::size_t> coord_hits(dim, 0);
        for (std::size_t r = 0; r < n_runs; ++r) {
            Rng rng(mix_seed(mix_seed(seed, depth), r));
            Vec x = rep.x_star;
            for (std::size_t t = 0; t < depth; ++t) x = detail::noisy_step(net, x, sigma, rng);
            const Vec dev = sub(x, rep.x_star);
            if (norm2(dev) > rep.threshold) ++hits;
            for (std::size_t i = 0; i < dim; ++i)
                if (std::abs(dev[i]) > coord_tau) ++coord_hits[i];
        }
        row.measured_freq = static_cast<double>(hits) / static_cast<double>(n_runs);
        for (std::size_t i = 0; i < dim; ++i)
            row.union_sum += static_cast<double>(coord_hits[i]) / static_cast<double>(n_runs);
        rep.rows.push_back(row);
    }

    // chain model calibrated to the shallowest depth: eps solves
    // 1 - (1 - eps)^d0 = measured_freq(d0)
    const double f0 = rep.rows.front().measured_freq;
    const double d0 = static_cast<double>(rep.rows.front().depth);
    rep.eps_fit = f0 >= 1.0 ? 1.0 : 1.0 - std::pow(1.0 - f0, 1.0 / d0);
    for (ExpVsUnionRow& row : rep.rows)
        row.chain_pred = 1.0 - chain_error_model(rep.eps_fit, row.depth);

    if (rep.rows.size() >= 4) {
        const std::size_t q = rep.rows.size() / 4;
        const auto quarter_mean = [&](std::size_t lo, std::size_t hi) {
            double s = 0.0;
            for (std::size_t i = lo; i < hi; ++i) s += rep.rows[i].measured_freq;
            return s / static_cast<double>(hi - lo);
        };
        const double second = quarter_mean(q, 2 * q);
        const double last = quarter_mean(rep.rows.size() - q, rep.rows.size());
        rep.plateau_ratio = second == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                          : last / second;
        rep.plateau = second > 0.0 && std::abs(last - second) <= 0.2 * second;
    }
    return rep;
}

// --- stochastic fixed point ---------------------------------------------------------

struct StochasticSummary {
    Vec x_star;      // noiseless fixed point
    Vec mean;        // empirical mean of post-burn-in draws
    Mat cov;         // unbiased sample covariance
    Vec q05, q50, q95;
    Vec mean_shift;  // mean - x_star
    Vec delta_bar;   // mean - f(mean): residual of the averaged fixed point
    std::size_t n_draws = 0;
};

// Iterates x <- f(x) + sigma * noise from the noiseless fixed point, discards
// burn_in steps, then summarizes n_draws states: the distributional object
// that replaces the pointwise fixed point once noise enters.
inline StochasticSummary stochastic_fixed_point(const Network& net, double sigma,
                                                std::size_t burn_in, std::size_t n_draws,
                                                std::uint64_t seed) {
    check_arg(sigma >= 0.0, "stochastic_fixed_point: sigma must be >= 0");
    check_arg(n_draws >= 10, "stochastic_fixed_point: need n_draws >= 10");

    StochasticSummary out;
    const FixedPointReport fp = detail::attracting_fixed_point(net, "stochastic_fixed_point");
    out.x_star = fp.point;
    out.n_draws = n_draws;
    const std::size_t dim = out.x_star.size();

    Rng rng(mix_seed(seed, 0x5f0c4a57));
    Vec x = out.x_star;
    for (std::size_t t = 0; t < burn_in; ++t) x = detail::noisy_step(net, x, sigma, rng);

    std::vector<Vec> draws;
    draws.reserve(n_draws);
    out.mean.assign(dim, 0.0);
    for (std::size_t t = 0; t < n_draws; ++t) {
        x = detail::noisy_step(net, x, sigma, rng);
        draws.push_back(x);
        axpy(out.mean, 1.0, x);
    }
    out.mean = scalev(out.mean, 1.0 / static_cast<double>(n_draws));

    out.cov = Mat(dim, dim);
    for (const Vec& d : draws) {
        const Vec c = sub(d, out.mean);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j) out.cov(i, j) += c[i] * c[j];
    }
    for (std::size_t i = 0; i < dim * dim; ++i)
        out.cov.data()[i] /= static_cast<double>(n_draws - 1);

    const auto quantile = [](std::vector<double>& v, double p) {
        std::sort(v.begin(), v.end());
        const double pos = p * static_cast<double>(v.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        const double w = pos - static_cast<double>(lo);
        return (1.0 - w) * v[lo] + w * v[hi];
    };
    out.q05.resize(dim);
    out.q50.resize(dim);
    out.q95.resize(dim);
    std::vector<double> col(n_draws);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t t = 0; t < n_draws; ++t) col[t] = draws[t][i];
        out.q05[i] = quantile(col, 0.05);
        out.q50[i] = quantile(col, 0.50);
        out.q95[i] = quantile(col, 0.95);
    }
    out.mean_shift = sub(out.mean, out.x_star);
    out.delta_bar = sub(out.mean, forward_out(net, out.mean));
    return out;
}

}  // namespace fplab
