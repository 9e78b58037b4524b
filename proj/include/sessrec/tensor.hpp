#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sessrec/common.hpp"

namespace sessrec {

using Vec = std::vector<double>;

/// Dense row-major matrix of 64-bit floats. Shapes are fixed at construction.
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& at(size_t r, size_t c) { return a[r * cols + c]; }
    double at(size_t r, size_t c) const { return a[r * cols + c]; }
    double* row(size_t r) { return a.data() + r * cols; }
    const double* row(size_t r) const { return a.data() + r * cols; }
    size_t size() const { return a.size(); }
    void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

inline void check_same_length(const Vec& a, const Vec& b, const char* what) {
    if (a.size() != b.size())
        throw ShapeError(std::string(what) + ": length mismatch " +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

inline double dot(const Vec& a, const Vec& b) {
    check_same_length(a, b, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// y += s * x
inline void axpy(Vec& y, double s, const Vec& x) {
    check_same_length(y, x, "axpy");
    for (size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

inline void scale(Vec& v, double s) {
    for (double& x : v) x *= s;
}

inline Vec add(const Vec& a, const Vec& b) {
    check_same_length(a, b, "add");
    Vec r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

/// y = M x
inline Vec matvec(const Mat& m, const Vec& x) {
    if (m.cols != x.size())
        throw ShapeError("matvec: " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                         " times vector of length " + std::to_string(x.size()));
    Vec y(m.rows, 0.0);
    for (size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        double s = 0.0;
        for (size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
    return y;
}

/// y = M^T x
inline Vec matvec_t(const Mat& m, const Vec& x) {
    if (m.rows != x.size())
        throw ShapeError("matvec_t: " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                         "^T times vector of length " + std::to_string(x.size()));
    Vec y(m.cols, 0.0);
    for (size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        const double xr = x[r];
        for (size_t c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
    }
    return y;
}

/// M += g x^T  (outer-product accumulation, the shape of every weight gradient here)
inline void add_outer(Mat& m, const Vec& g, const Vec& x) {
    if (m.rows != g.size() || m.cols != x.size())
        throw ShapeError("add_outer: target " + std::to_string(m.rows) + "x" + std::to_string(m.cols));
    for (size_t r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        const double gr = g[r];
        for (size_t c = 0; c < m.cols; ++c) row[c] += gr * x[c];
    }
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// Numerically stable softmax: max-subtracted, entries positive, sums to 1.
inline Vec softmax(const Vec& v) {
    if (v.empty()) throw ShapeError("softmax: empty input");
    if (!all_finite(v)) throw NumericError("softmax: non-finite input");
    double m = *std::max_element(v.begin(), v.end());
    Vec out(v.size());
    double sum = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

inline double log_sum_exp(const Vec& v) {
    if (v.empty()) throw ShapeError("log_sum_exp: empty input");
    if (!all_finite(v)) throw NumericError("log_sum_exp: non-finite input");
    double m = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - m);
    return m + std::log(sum);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace sessrec
