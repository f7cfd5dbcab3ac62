#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "crowdscan/error.hpp"

namespace crowdscan {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
    double norm_sq() const { return x * x + y * y; }
    /// Chebyshev (max-coordinate) norm, the LCS match metric.
    double norm_inf() const { return std::max(std::fabs(x), std::fabs(y)); }

    Vec2 normalized(double fallback_eps = 1e-12) const {
        const double n = norm();
        if (n < fallback_eps) return {0.0, 0.0};
        return {x / n, y / n};
    }

    /// 90-degree counterclockwise rotation (in x-right, y-down pixel axes
    /// this is the left-hand normal).
    Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

struct Mat3 {
    // row-major
    std::array<double, 9> a{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    double& operator()(int r, int c) { return a[std::size_t(r) * 3 + c]; }
    double operator()(int r, int c) const { return a[std::size_t(r) * 3 + c]; }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat3 operator*(double s) const {
        Mat3 r = *this;
        for (auto& v : r.a) v *= s;
        return r;
    }

    std::array<double, 3> apply(const std::array<double, 3>& v) const {
        return {a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
                a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
                a[6] * v[0] + a[7] * v[1] + a[8] * v[2]};
    }

    double det() const {
        return a[0] * (a[4] * a[8] - a[5] * a[7])
             - a[1] * (a[3] * a[8] - a[5] * a[6])
             + a[2] * (a[3] * a[7] - a[4] * a[6]);
    }

    Mat3 inverse() const {
        const double d = det();
        if (std::fabs(d) < 1e-300)
            throw Error(Errc::NonInvertible, "matrix determinant is zero");
        const double inv = 1.0 / d;
        Mat3 r;
        r.a = {(a[4] * a[8] - a[5] * a[7]) * inv,
               (a[2] * a[7] - a[1] * a[8]) * inv,
               (a[1] * a[5] - a[2] * a[4]) * inv,
               (a[5] * a[6] - a[3] * a[8]) * inv,
               (a[0] * a[8] - a[2] * a[6]) * inv,
               (a[2] * a[3] - a[0] * a[5]) * inv,
               (a[3] * a[7] - a[4] * a[6]) * inv,
               (a[1] * a[6] - a[0] * a[7]) * inv,
               (a[0] * a[4] - a[1] * a[3]) * inv};
        return r;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : a) m = std::max(m, std::fabs(v));
        return m;
    }
};

/// Eigen-decomposition of a small dense symmetric matrix by cyclic Jacobi
/// rotations. Returns eigenvalues ascending with matching eigenvectors in
/// the columns of `vectors` (row-major n x n). Deterministic.
struct SymEigen {
    std::vector<double> values;   // n, ascending
    std::vector<double> vectors;  // n*n, column j is the eigenvector of values[j]
};

inline SymEigen jacobi_eigen_sym(std::vector<double> m, int n) {
    std::vector<double> v(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[std::size_t(i) * n + i] = 1.0;

    auto at = [&](int r, int c) -> double& { return m[std::size_t(r) * n + c]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        if (off < 1e-30) break;

        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (int k = 0; k < n; ++k) {
                    const double mkp = at(k, p), mkq = at(k, q);
                    at(k, p) = c * mkp - s * mkq;
                    at(k, q) = s * mkp + c * mkq;
                }
                for (int k = 0; k < n; ++k) {
                    const double mpk = at(p, k), mqk = at(q, k);
                    at(p, k) = c * mpk - s * mqk;
                    at(q, k) = s * mpk + c * mqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v[std::size_t(k) * n + p];
                    const double vkq = v[std::size_t(k) * n + q];
                    v[std::size_t(k) * n + p] = c * vkp - s * vkq;
                    v[std::size_t(k) * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    // sort ascending by eigenvalue, reordering vector columns
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a_, int b_) {
        return m[std::size_t(a_) * n + a_] < m[std::size_t(b_) * n + b_];
    });

    SymEigen out;
    out.values.resize(std::size_t(n));
    out.vectors.resize(std::size_t(n) * n);
    for (int j = 0; j < n; ++j) {
        const int src = order[std::size_t(j)];
        out.values[std::size_t(j)] = m[std::size_t(src) * n + src];
        for (int i = 0; i < n; ++i)
            out.vectors[std::size_t(i) * n + j] = v[std::size_t(i) * n + src];
    }
    return out;
}

} // namespace crowdscan
