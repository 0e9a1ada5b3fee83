#pragma once

// Test-side oracles. These are deliberately independent of the library's own
// code paths: finite differences instead of reverse mode, a dense eigensolver
// instead of power iteration, bisection instead of fixed-point iteration.

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "fplab/common.hpp"

namespace oracles {

using fplab::Mat;
using fplab::Vec;

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-12});
}

// Central-difference gradient of a scalar function of a flat vector.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double h = 1e-5) {
    Vec g(x.size());
    Vec xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        xp[i] = xi + h;
        const double fp = f(xp);
        xp[i] = xi - h;
        const double fm = f(xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Central-difference Jacobian of a vector field.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h = 1e-5) {
    const Vec f0 = f(x);
    Mat j(f0.size(), x.size());
    Vec xp = x;
    for (std::size_t c = 0; c < x.size(); ++c) {
        const double xc = x[c];
        xp[c] = xc + h;
        const Vec fp = f(xp);
        xp[c] = xc - h;
        const Vec fm = f(xp);
        xp[c] = xc;
        for (std::size_t r = 0; r < f0.size(); ++r) j(r, c) = (fp[r] - fm[r]) / (2.0 * h);
    }
    return j;
}

// Central-difference Hessian of a scalar function.
inline Mat fd_hessian(const std::function<double(const Vec&)>& f, const Vec& x,
                      double h = 1e-4) {
    const std::size_t n = x.size();
    Mat hess(n, n);
    Vec xp = x;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double v;
            if (i == j) {
                const double f0 = f(x);
                xp[i] = x[i] + h;
                const double fp = f(xp);
                xp[i] = x[i] - h;
                const double fm = f(xp);
                xp[i] = x[i];
                v = (fp - 2.0 * f0 + fm) / (h * h);
            } else {
                xp[i] = x[i] + h;
                xp[j] = x[j] + h;
                const double fpp = f(xp);
                xp[j] = x[j] - h;
                const double fpm = f(xp);
                xp[i] = x[i] - h;
                xp[j] = x[j] + h;
                const double fmp = f(xp);
                xp[j] = x[j] - h;
                const double fmm = f(xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            }
            hess(i, j) = v;
            hess(j, i) = v;
        }
    }
    return hess;
}

// Dense eigenvalue brute force (real Schur via Eigen); max |lambda|.
inline double eigen_spectral_radius(const Mat& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
    const Eigen::EigenSolver<Eigen::MatrixXd> solver(e, /*computeEigenvectors=*/false);
    double r = 0.0;
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i)
        r = std::max(r, std::abs(solver.eigenvalues()[i]));
    return r;
}

// Bisection root finder; requires a sign change on [lo, hi].
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double tol = 1e-12) {
    double flo = f(lo);
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((flo <= 0.0) == (fm <= 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace oracles
