#pragma once

// Small dense linear algebra for desk-scale experiments. Everything is
// std::vector<double> based; matrices are row-major. Sizes stay tiny
// (networks cap out around 32 units) so clarity wins over blocking tricks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fplab {

using Vec = std::vector<double>;

inline void check_arg(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline void check_run(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

inline bool all_finite(const Vec& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Mat diag(const Vec& d) {
        Mat m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    static Mat from_rows(const std::vector<Vec>& rows) {
        check_arg(!rows.empty(), "Mat::from_rows: empty");
        Mat m(rows.size(), rows[0].size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            check_arg(rows[i].size() == m.cols_, "Mat::from_rows: ragged rows");
            for (std::size_t j = 0; j < m.cols_; ++j) m(i, j) = rows[i][j];
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool finite() const { return all_finite(data_); }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline Vec matvec(const Mat& m, const Vec& x) {
    check_arg(m.cols() == x.size(), "matvec: dimension mismatch");
    Vec y(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

// y = m^T x
inline Vec matvec_t(const Mat& m, const Vec& x) {
    check_arg(m.rows() == x.size(), "matvec_t: dimension mismatch");
    Vec y(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) y[j] += m(i, j) * x[i];
    return y;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    check_arg(a.cols() == b.rows(), "matmul: dimension mismatch");
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Mat transpose(const Mat& m) {
    Mat t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

inline Mat scale(const Mat& m, double s) {
    Mat r = m;
    for (double& x : r.data()) x *= s;
    return r;
}

inline Mat add(const Mat& a, const Mat& b) {
    check_arg(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    Mat c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

inline double dot(const Vec& a, const Vec& b) {
    check_arg(a.size() == b.size(), "dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

inline double norm_inf(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline Vec sub(const Vec& a, const Vec& b) {
    check_arg(a.size() == b.size(), "sub: dimension mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vec addv(const Vec& a, const Vec& b) {
    check_arg(a.size() == b.size(), "addv: dimension mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec scalev(const Vec& v, double s) {
    Vec r = v;
    for (double& x : r) x *= s;
    return r;
}

// a += s * b
inline void axpy(Vec& a, double s, const Vec& b) {
    check_arg(a.size() == b.size(), "axpy: dimension mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

inline double frobenius_sq(const Mat& m) {
    double s = 0.0;
    for (double x : m.data()) s += x * x;
    return s;
}

// Cholesky factor L (lower) with A = L L^T. Throws if A is not SPD.
inline Mat cholesky(const Mat& a) {
    check_arg(a.rows() == a.cols(), "cholesky: matrix not square");
    const std::size_t n = a.rows();
    Mat l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                check_arg(s > 0.0, "cholesky: matrix not positive definite");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

// Solve A x = b given the Cholesky factor of A.
inline Vec cholesky_solve(const Mat& l, const Vec& b) {
    const std::size_t n = l.rows();
    check_arg(b.size() == n, "cholesky_solve: dimension mismatch");
    Vec y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    Vec x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
        x[ii] = s / l(ii, ii);
    }
    return x;
}

inline Mat spd_inverse(const Mat& a) {
    const Mat l = cholesky(a);
    const std::size_t n = a.rows();
    Mat inv(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        Vec e(n, 0.0);
        e[j] = 1.0;
        Vec col = cholesky_solve(l, e);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    }
    return inv;
}

// FNV-1a, used for config hashes and anchor checksums. Stable across runs.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a_doubles(const std::vector<double>& v) {
    std::uint64_t h = 14695981039346656037ull;
    for (double d : v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(d));
        std::memcpy(&bits, &d, sizeof(bits));
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= 1099511628211ull;
        }
    }
    return h;
}

}  // namespace fplab
