#pragma once

// Spectral radius of small dense real matrices by power iteration with two
// extraction routes:
//
//  - Rayleigh route: converges when the dominant eigenvalue is real and
//    simple (residual ||My - lam y|| small).
//  - Recurrence route: fits M^2 x = p Mx + q x over the running Krylov triple
//    and reads |lambda| off the quadratic mu^2 - p mu - q. This captures
//    dominant complex conjugate pairs; for 2x2 inputs Cayley-Hamilton makes
//    the fit exact on the first step.
//
// Exactly diagonal matrices short-circuit to max |diag| so the common
// diagonal test cases are exact. Spectra with three or more equimodular
// dominant eigenvalues (e.g. 3-cycle permutations) do not converge and are
// reported as such rather than returning a silent value.

#include <cmath>
#include <cstddef>
#include <string>

#include "fplab/common.hpp"
#include "fplab/rng.hpp"

namespace fplab {

struct SpectralResult {
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline bool exactly_diagonal(const Mat& m) {
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (i != j && m(i, j) != 0.0) return false;
    return true;
}

}  // namespace detail

inline SpectralResult spectral_radius_info(const Mat& m, double tol = 1e-9,
                                           int max_iter = 10000) {
    check_arg(m.rows() == m.cols() && m.rows() >= 1, "spectral_radius: matrix must be square");
    check_arg(m.finite(), "spectral_radius: non-finite entries");
    check_arg(tol > 0.0 && max_iter >= 1, "spectral_radius: bad tolerance or budget");

    const std::size_t n = m.rows();
    if (detail::exactly_diagonal(m)) {
        double r = 0.0;
        for (std::size_t i = 0; i < n; ++i) r = std::max(r, std::abs(m(i, i)));
        return {r, 0, true};
    }

    Rng rng(0x5eedf00dULL);  // fixed stream: the routine itself is deterministic
    int crushed_restarts = 0;
    for (int restart = 0; restart < 3; ++restart) {
        Vec x = rng.normal_vec(n);
        double nx = norm2(x);
        for (double& v : x) v /= nx;
        bool crushed = false;

        for (int t = 1; t <= max_iter; ++t) {
            const Vec y_raw = matvec(m, x);
            const double ny = norm2(y_raw);
            if (ny < 1e-150) {
                // Iterates from a random start collapsed to (numerical) zero.
                // One collapse could be bad luck with the kernel; repeated
                // collapses mean the matrix is (numerically) nilpotent.
                crushed = true;
                break;
            }
            Vec y = y_raw;
            for (double& v : y) v /= ny;
            const Vec z = matvec(m, y);  // z = M y, so ny * z = M^2 x

            // Rayleigh route.
            const double lam = dot(y, z);
            double res_r = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = z[i] - lam * y[i];
                res_r += d * d;
            }
            res_r = std::sqrt(res_r);
            if (res_r <= tol * std::max(std::abs(lam), 1e-12))
                return {std::abs(lam), t, true};

            // Recurrence route on (x, y_raw, ny*z).
            const double yy = ny * ny;  // y_raw . y_raw
            const double yx = dot(y_raw, x);
            const double xx = 1.0;  // x is unit
            const double det = yy * xx - yx * yx;
            if (det > 1e-14 * yy) {
                double yz = 0.0, xz = 0.0, zz = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double zi = ny * z[i];
                    yz += y_raw[i] * zi;
                    xz += x[i] * zi;
                    zz += zi * zi;
                }
                const double p = (yz * xx - xz * yx) / det;
                const double q = (xz * yy - yz * yx) / det;
                double res_q = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = ny * z[i] - p * y_raw[i] - q * x[i];
                    res_q += d * d;
                }
                res_q = std::sqrt(res_q) / std::max(std::sqrt(zz), 1e-150);
                if (res_q <= tol) {
                    const double disc = p * p + 4.0 * q;
                    double est;
                    if (disc >= 0.0) {
                        const double sd = std::sqrt(disc);
                        est = std::max(std::abs(p + sd), std::abs(p - sd)) / 2.0;
                    } else {
                        est = std::sqrt(-q);  // complex pair: |lambda|^2 = -q
                    }
                    return {est, t, true};
                }
            }
            x = y;
        }
        if (crushed) {
            if (++crushed_restarts >= 2) return {0.0, crushed_restarts, true};
        }
    }
    return {0.0, max_iter, false};
}

inline double spectral_radius(const Mat& m, double tol = 1e-9, int max_iter = 10000) {
    const SpectralResult r = spectral_radius_info(m, tol, max_iter);
    check_run(r.converged, "spectral_radius: no convergence within " +
                               std::to_string(max_iter) +
                               " iterations (three or more equimodular dominant "
                               "eigenvalues, or budget too small)");
    return r.value;
}

}  // namespace fplab
