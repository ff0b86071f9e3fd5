#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pcp/errors.hpp"

namespace pcp {

using Vec = std::vector<double>;

// Dense row-major matrix, just large enough for this project's needs.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline void require_dim(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
}

// y = A x
inline Vec matvec(const Matrix& a, const Vec& x) {
    require_dim(a.cols == x.size(), "matvec: shape mismatch");
    Vec y(a.rows, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* row = a.data.data() + r * a.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

// y = A^T x
inline Vec matvec_t(const Matrix& a, const Vec& x) {
    require_dim(a.rows == x.size(), "matvec_t: shape mismatch");
    Vec y(a.cols, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* row = a.data.data() + r * a.cols;
        const double xr = x[r];
        for (std::size_t c = 0; c < a.cols; ++c) y[c] += row[c] * xr;
    }
    return y;
}

// A += u v^T
inline void add_outer(Matrix& a, const Vec& u, const Vec& v) {
    require_dim(a.rows == u.size() && a.cols == v.size(), "add_outer: shape mismatch");
    for (std::size_t r = 0; r < a.rows; ++r) {
        double* row = a.data.data() + r * a.cols;
        const double ur = u[r];
        for (std::size_t c = 0; c < a.cols; ++c) row[c] += ur * v[c];
    }
}

inline double dot(const Vec& a, const Vec& b) {
    require_dim(a.size() == b.size(), "dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double l2_distance(const Vec& a, const Vec& b) {
    require_dim(a.size() == b.size(), "l2_distance: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace pcp
