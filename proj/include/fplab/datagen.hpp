#pragma once

// Synthetic scalar targets in four complexity classes (linear, low-order
// polynomial, high-order nested oscillation, discontinuous piecewise), the
// curvature-plus-jump complexity score over a box partition, per-sample data
// complexity sums, and a deterministic minibatch stream.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "fplab/common.hpp"
#include "fplab/io.hpp"
#include "fplab/rng.hpp"

namespace fplab {

// --- function specs ---------------------------------------------------------

enum class FnClass { linear, polynomial, high_order, piecewise };

// Scalar-valued targets on [-1,1]^dim. Class fields are only read for the
// matching class:
//   linear      f(x) = a . x + b
//   polynomial  f(x) = sum_d coeffs[d] * sum_j x_j^d   (degree = coeffs.size()-1)
//   high_order  depth-nested sin/tanh with frequency freq, seeded by sum x_j
//   piecewise   affine pieces split along axis 0 with configured jumps
struct FunctionSpec {
    FnClass cls = FnClass::linear;
    std::size_t dim = 1;
    std::uint64_t seed = 0;

    Vec lin_a;
    double lin_b = 0.0;

    Vec poly_coeffs;

    std::size_t h_depth = 3;
    double h_freq = 3.0;

    Vec d_boundaries;  // strictly increasing, inside (-1, 1)
    Vec d_jumps;       // one per boundary
    Vec d_slopes;      // one per piece = boundaries + 1

    static FunctionSpec linear(Vec a, double b, std::uint64_t seed = 0) {
        FunctionSpec s;
        s.cls = FnClass::linear;
        s.dim = a.size();
        s.lin_a = std::move(a);
        s.lin_b = b;
        s.seed = seed;
        return s;
    }

    static FunctionSpec polynomial(std::size_t dim, Vec coeffs, std::uint64_t seed = 0) {
        FunctionSpec s;
        s.cls = FnClass::polynomial;
        s.dim = dim;
        s.poly_coeffs = std::move(coeffs);
        s.seed = seed;
        return s;
    }

    static FunctionSpec high_order(std::size_t dim, std::size_t depth, double freq,
                                   std::uint64_t seed = 0) {
        FunctionSpec s;
        s.cls = FnClass::high_order;
        s.dim = dim;
        s.h_depth = depth;
        s.h_freq = freq;
        s.seed = seed;
        return s;
    }

    static FunctionSpec piecewise(std::size_t dim, Vec boundaries, Vec jumps, Vec slopes,
                                  std::uint64_t seed = 0) {
        FunctionSpec s;
        s.cls = FnClass::piecewise;
        s.dim = dim;
        s.d_boundaries = std::move(boundaries);
        s.d_jumps = std::move(jumps);
        s.d_slopes = std::move(slopes);
        s.seed = seed;
        return s;
    }
};

inline void validate_spec(const FunctionSpec& s) {
    check_arg(s.dim >= 1, "function spec: dim must be >= 1");
    switch (s.cls) {
        case FnClass::linear:
            check_arg(s.lin_a.size() == s.dim, "function spec: linear coefficient size");
            break;
        case FnClass::polynomial:
            check_arg(s.poly_coeffs.size() >= 3, "function spec: polynomial degree must be >= 2");
            check_arg(s.poly_coeffs.back() != 0.0,
                      "function spec: leading polynomial coefficient is zero");
            break;
        case FnClass::high_order:
            check_arg(s.h_depth >= 1, "function spec: composition depth must be >= 1");
            check_arg(s.h_freq >= 3.0, "function spec: frequency must be >= 3");
            break;
        case FnClass::piecewise:
            check_arg(!s.d_boundaries.empty(), "function spec: piecewise needs >= 2 pieces");
            for (std::size_t i = 0; i < s.d_boundaries.size(); ++i) {
                check_arg(s.d_boundaries[i] > -1.0 && s.d_boundaries[i] < 1.0,
                          "function spec: boundaries must lie inside (-1, 1)");
                if (i) check_arg(s.d_boundaries[i - 1] < s.d_boundaries[i],
                                 "function spec: boundaries must increase strictly");
            }
            check_arg(s.d_jumps.size() == s.d_boundaries.size(),
                      "function spec: one jump per boundary");
            check_arg(s.d_slopes.size() == s.d_boundaries.size() + 1,
                      "function spec: one slope per piece");
            break;
    }
}

// index of the affine piece containing x (0 for the other classes)
inline std::size_t piece_of(const FunctionSpec& s, const Vec& x) {
    if (s.cls != FnClass::piecewise) return 0;
    std::size_t p = 0;
    while (p < s.d_boundaries.size() && x[0] >= s.d_boundaries[p]) ++p;
    return p;
}

inline std::function<double(const Vec&)> make_function(const FunctionSpec& s) {
    validate_spec(s);
    switch (s.cls) {
        case FnClass::linear:
            return [s](const Vec& x) { return dot(s.lin_a, x) + s.lin_b; };
        case FnClass::polynomial:
            return [s](const Vec& x) {
                double y = 0.0;
                for (std::size_t d = 0; d < s.poly_coeffs.size(); ++d) {
                    if (s.poly_coeffs[d] == 0.0) continue;
                    double power_sum = d == 0 ? 1.0 : 0.0;
                    if (d > 0)
                        for (double xj : x) power_sum += std::pow(xj, static_cast<double>(d));
                    y += s.poly_coeffs[d] * power_sum;
                }
                return y;
            };
        case FnClass::high_order:
            return [s](const Vec& x) {
                double v = std::accumulate(x.begin(), x.end(), 0.0);
                for (std::size_t d = 0; d < s.h_depth; ++d)
                    v = d % 2 == 0 ? std::sin(s.h_freq * v) : std::tanh(s.h_freq * v);
                return v;
            };
        case FnClass::piecewise: {
            // piece offsets chosen so the jump at boundary i is exactly
            // d_jumps[i]: right limit = left limit + jump
            Vec offsets(s.d_slopes.size(), 0.0);
            for (std::size_t i = 0; i < s.d_boundaries.size(); ++i) {
                const double b = s.d_boundaries[i];
                const double left = offsets[i] + s.d_slopes[i] * b;
                offsets[i + 1] = left + s.d_jumps[i] - s.d_slopes[i + 1] * b;
            }
            return [s, offsets](const Vec& x) {
                const std::size_t p = piece_of(s, x);
                return offsets[p] + s.d_slopes[p] * x[0];
            };
        }
    }
    check_run(false, "make_function: unreachable");
    return {};
}

// --- dataset generation ------------------------------------------------------------

struct Dataset {
    FunctionSpec spec;
    std::vector<Vec> inputs;
    Vec outputs;
    std::vector<std::size_t> piece_ids;

    std::string csv() const {
        std::vector<std::string> header;
        for (std::size_t j = 0; j < spec.dim; ++j) header.push_back("x_" + std::to_string(j));
        header.push_back("y");
        header.push_back("piece_id");
        Csv t(header);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            std::vector<std::string> cells;
            for (double v : inputs[i]) cells.push_back(fmt_double(v));
            cells.push_back(fmt_double(outputs[i]));
            cells.push_back(fmt_size(piece_ids[i]));
            t.row(cells);
        }
        return t.str();
    }
};

inline Dataset generate(const FunctionSpec& spec, std::size_t n) {
    validate_spec(spec);
    check_arg(n >= 1, "generate: need n >= 1");
    const auto fn = make_function(spec);
    Dataset ds;
    ds.spec = spec;
    Rng rng(spec.seed);
    for (std::size_t i = 0; i < n; ++i) {
        Vec x = rng.uniform_vec(spec.dim, -1.0, 1.0);
        ds.outputs.push_back(fn(x));
        ds.piece_ids.push_back(piece_of(spec, x));
        ds.inputs.push_back(std::move(x));
    }
    return ds;
}

// --- nonlinearity score ---------------------------------------------------------------

struct Box {
    Vec lo;
    Vec hi;
};

// the piecewise spec's natural partition: axis-0 intervals times [-1,1] on
// the remaining axes; a single full box for the other classes
inline std::vector<Box> piece_partition(const FunctionSpec& s) {
    validate_spec(s);
    std::vector<double> cuts{-1.0};
    if (s.cls == FnClass::piecewise)
        cuts.insert(cuts.end(), s.d_boundaries.begin(), s.d_boundaries.end());
    cuts.push_back(1.0);
    std::vector<Box> boxes;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        Box b;
        b.lo.assign(s.dim, -1.0);
        b.hi.assign(s.dim, 1.0);
        b.lo[0] = cuts[i];
        b.hi[0] = cuts[i + 1];
        boxes.push_back(std::move(b));
    }
    return boxes;
}

struct ComplexityReport {
    std::vector<double> curvature_terms;  // one per piece
    std::vector<double> boundary_terms;   // one per shared face
    double c_nonlinear = 0.0;             // sum of every term above
    double c_data_batch = 0.0;            // filled by callers that score a batch
    bool cancellation_warning = false;    // fd_step below 1e-7
};

namespace detail {

inline Mat fd_hessian_of(const std::function<double(const Vec&)>& f, const Vec& x,
                         double h) {
    const std::size_t n = x.size();
    Mat hess(n, n);
    Vec p = x;
    const double f0 = f(x);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double v;
            if (i == j) {
                p[i] = x[i] + h;
                const double fp = f(p);
                p[i] = x[i] - h;
                const double fm = f(p);
                p[i] = x[i];
                v = (fp - 2.0 * f0 + fm) / (h * h);
            } else {
                p[i] = x[i] + h;
                p[j] = x[j] + h;
                const double fpp = f(p);
                p[j] = x[j] - h;
                const double fpm = f(p);
                p[i] = x[i] - h;
                p[j] = x[j] + h;
                const double fmp = f(p);
                p[j] = x[j] - h;
                const double fmm = f(p);
                p[i] = x[i];
                p[j] = x[j];
                v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            }
            hess(i, j) = v;
            hess(j, i) = v;
        }
    }
    return hess;
}

// regular grid strictly inside the box, margin >= 2 fd_step from each face
// so central differences never cross a piece boundary
inline std::vector<Vec> interior_grid(const Box& b, double fd_step,
                                      std::size_t per_axis) {
    const std::size_t dim = b.lo.size();
    std::vector<Vec> pts{Vec()};
    for (std::size_t a = 0; a < dim; ++a) {
        const double margin = 2.0 * fd_step;
        const double lo = b.lo[a] + margin, hi = b.hi[a] - margin;
        check_arg(hi > lo, "nonlinear_complexity: box thinner than the FD margin");
        std::vector<Vec> next;
        for (const Vec& base : pts)
            for (std::size_t g = 0; g < per_axis; ++g) {
                Vec p = base;
                p.push_back(per_axis == 1
                                ? 0.5 * (lo + hi)
                                : lo + (hi - lo) * static_cast<double>(g) /
                                           static_cast<double>(per_axis - 1));
                next.push_back(std::move(p));
            }
        pts = std::move(next);
    }
    return pts;
}

}  // namespace detail

// C = sum over pieces of the mean Frobenius norm of the FD Hessian on an
// interior grid, plus one two-sided jump estimate per shared face between
// adjacent boxes. The partition must tile the domain: non-overlap and
// coverage are checked on a seeded probe set.
inline ComplexityReport nonlinear_complexity(const std::function<double(const Vec&)>& f,
                                             const std::vector<Box>& partition,
                                             double fd_step = 1e-4,
                                             std::size_t grid_per_axis = 5) {
    check_arg(!partition.empty(), "nonlinear_complexity: empty partition");
    check_arg(fd_step > 0.0, "nonlinear_complexity: fd_step must be positive");
    check_arg(grid_per_axis >= 1, "nonlinear_complexity: grid_per_axis must be >= 1");
    const std::size_t dim = partition.front().lo.size();
    for (const Box& b : partition) {
        check_arg(b.lo.size() == dim && b.hi.size() == dim,
                  "nonlinear_complexity: ragged partition");
        for (std::size_t a = 0; a < dim; ++a)
            check_arg(b.lo[a] < b.hi[a], "nonlinear_complexity: degenerate box");
    }

    // hull and tiling probe
    Box hull = partition.front();
    for (const Box& b : partition)
        for (std::size_t a = 0; a < dim; ++a) {
            hull.lo[a] = std::min(hull.lo[a], b.lo[a]);
            hull.hi[a] = std::max(hull.hi[a], b.hi[a]);
        }
    {
        Rng rng(0xc0ffee);
        for (int t = 0; t < 200; ++t) {
            Vec p(dim);
            for (std::size_t a = 0; a < dim; ++a) p[a] = rng.uniform(hull.lo[a], hull.hi[a]);
            std::size_t inside = 0;
            for (const Box& b : partition) {
                bool in = true;
                for (std::size_t a = 0; a < dim && in; ++a)
                    in = p[a] >= b.lo[a] && p[a] <= b.hi[a];
                if (in) ++inside;
            }
            check_arg(inside >= 1, "nonlinear_complexity: partition does not cover the hull");
            check_arg(inside <= 1, "nonlinear_complexity: partition boxes overlap");
        }
    }

    ComplexityReport rep;
    rep.cancellation_warning = fd_step < 1e-7;

    for (const Box& b : partition) {
        const std::vector<Vec> grid = detail::interior_grid(b, fd_step, grid_per_axis);
        double acc = 0.0;
        for (const Vec& p : grid)
            acc += std::sqrt(frobenius_sq(detail::fd_hessian_of(f, p, fd_step)));
        rep.curvature_terms.push_back(acc / static_cast<double>(grid.size()));
    }

    // shared faces: a.hi[k] == b.lo[k] with overlap on every other axis
    for (std::size_t i = 0; i < partition.size(); ++i)
        for (std::size_t j = 0; j < partition.size(); ++j) {
            if (i == j) continue;
            const Box& a = partition[i];
            const Box& b = partition[j];
            for (std::size_t k = 0; k < dim; ++k) {
                if (std::abs(a.hi[k] - b.lo[k]) > 1e-12) continue;
                Box face;  // overlap region on the remaining axes
                face.lo.assign(dim, 0.0);
                face.hi.assign(dim, 0.0);
                bool touches = true;
                for (std::size_t q = 0; q < dim && touches; ++q) {
                    if (q == k) continue;
                    face.lo[q] = std::max(a.lo[q], b.lo[q]);
                    face.hi[q] = std::min(a.hi[q], b.hi[q]);
                    touches = face.hi[q] - face.lo[q] > 8.0 * fd_step;
                }
                if (!touches) continue;
                // grid over the face, two-sided limit across it
                std::vector<Vec> pts{Vec()};
                for (std::size_t q = 0; q < dim; ++q) {
                    std::vector<Vec> next;
                    for (const Vec& base : pts) {
                        if (q == k) {
                            Vec p = base;
                            p.push_back(a.hi[k]);
                            next.push_back(std::move(p));
                            continue;
                        }
                        const double margin = 2.0 * fd_step;
                        const double lo = face.lo[q] + margin, hi = face.hi[q] - margin;
                        for (std::size_t g = 0; g < grid_per_axis; ++g) {
                            Vec p = base;
                            p.push_back(grid_per_axis == 1
                                            ? 0.5 * (lo + hi)
                                            : lo + (hi - lo) * static_cast<double>(g) /
                                                       static_cast<double>(grid_per_axis - 1));
                            next.push_back(std::move(p));
                        }
                    }
                    pts = std::move(next);
                }
                double acc = 0.0;
                for (Vec p : pts) {
                    p[k] = a.hi[k] + fd_step;
                    const double right = f(p);
                    p[k] = a.hi[k] - fd_step;
                    const double left = f(p);
                    acc += std::abs(right - left);
                }
                rep.boundary_terms.push_back(acc / static_cast<double>(pts.size()));
            }
        }

    for (double v : rep.curvature_terms) rep.c_nonlinear += v;
    for (double v : rep.boundary_terms) rep.c_nonlinear += v;
    return rep;
}

// --- data complexity --------------------------------------------------------------------

// per-sample structural tags: semantic scope, time, scale, modality, and the
// local-nonlinearity estimate
struct AxisTags {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double m = 0.0;
    double n = 0.0;
};

struct AxisWeights {
    double x = 1.0, y = 1.0, z = 1.0, m = 1.0, n = 1.0;
};

inline double axis_score(const AxisTags& t, const AxisWeights& w) {
    return w.x * t.x + w.y * t.y + w.z * t.z + w.m * t.m + w.n * t.n;
}

// batch complexity = plain sum of per-sample scores; additive over disjoint
// batches by construction, equal to the full-dataset sum when the batch is
// the whole dataset
inline double data_complexity_batch(const std::vector<AxisTags>& batch,
                                    const std::function<double(const AxisTags&)>& scorer) {
    check_arg(static_cast<bool>(scorer), "data_complexity_batch: no scorer");
    double s = 0.0;
    for (const AxisTags& t : batch) s += scorer(t);
    return s;
}

inline double data_complexity_batch(const std::vector<AxisTags>& batch,
                                    const AxisWeights& w = {}) {
    return data_complexity_batch(
        batch, std::function<double(const AxisTags&)>(
                   [&w](const AxisTags& t) { return axis_score(t, w); }));
}

// default tags for a synthetic dataset: the abstract axes stay zero, the
// n axis carries the local FD-curvature of the target at each sample
inline std::vector<AxisTags> curvature_tags(const Dataset& ds, double fd_step = 1e-4) {
    const auto fn = make_function(ds.spec);
    std::vector<AxisTags> tags;
    for (const Vec& x : ds.inputs) {
        AxisTags t;
        t.n = std::sqrt(frobenius_sq(detail::fd_hessian_of(fn, x, fd_step)));
        tags.push_back(t);
    }
    return tags;
}

// --- minibatch stream ----------------------------------------------------------------------

// Disjoint index batches per epoch: epoch e shuffles 0..n-1 under
// mix_seed(seed, e) and cuts the permutation into ceil(n/b) slices, so the
// union of one epoch's batches is the dataset exactly and two samplers with
// one seed emit identical streams.
class MinibatchSampler {
public:
    MinibatchSampler(std::size_t n, std::size_t b, std::uint64_t seed)
        : n_(n), b_(b), seed_(seed) {
        check_arg(n >= 1, "minibatch sampler: empty dataset");
        check_arg(b >= 1 && b <= n, "minibatch sampler: need 1 <= b <= n");
    }

    std::vector<std::vector<std::size_t>> epoch(std::size_t e) const {
        std::vector<std::size_t> order(n_);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(seed_, e));
        rng.shuffle(order);
        std::vector<std::vector<std::size_t>> batches;
        for (std::size_t at = 0; at < n_; at += b_) {
            const std::size_t end = std::min(at + b_, n_);
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
        }
        return batches;
    }

private:
    std::size_t n_, b_;
    std::uint64_t seed_;
};

}  // namespace fplab
