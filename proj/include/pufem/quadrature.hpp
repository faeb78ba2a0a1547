#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "common.hpp"

namespace pufem {

/// One-dimensional quadrature rule on a caller-defined interval.
struct Quad1D {
    std::vector<double> x;
    std::vector<double> w;
};

/// Gauss-Legendre nodes/weights on [-1,1], computed by Newton iteration on
/// the Legendre recurrence; accurate to machine precision for n <= ~200.
inline Quad1D gauss_legendre(int n) {
    require(n >= 1, "gauss_legendre: n >= 1 required");
    Quad1D q;
    q.x.resize(n);
    q.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = x;
            for (int j = 2; j <= n; ++j) {
                double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) {
                // one polishing step, then stop
                p0 = 1;
                p1 = x;
                for (int j = 2; j <= n; ++j) {
                    double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1);
                x -= p1 / dp;
                break;
            }
        }
        q.x[i] = -x;
        q.x[n - 1 - i] = x;
        double w = 2.0 / ((1 - x * x) * dp * dp);
        q.w[i] = w;
        q.w[n - 1 - i] = w;
    }
    return q;
}

/// Map a [-1,1] rule onto [a,b] and integrate f.
template <class F>
double integrate_gl(F&& f, double a, double b, const Quad1D& rule) {
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0;
    for (std::size_t i = 0; i < rule.x.size(); ++i)
        s += rule.w[i] * f(mid + half * rule.x[i]);
    return s * half;
}

namespace detail {

template <class F>
double adaptive_rec(F& f, double a, double b, double whole, double tol,
                    const Quad1D& rule, int depth) {
    check(depth < 60, "adaptive_integrate: interval subdivision did not converge");
    double m = 0.5 * (a + b);
    double left = integrate_gl(f, a, m, rule);
    double right = integrate_gl(f, m, b, rule);
    double err = std::abs(left + right - whole);
    if (err <= tol) return left + right;
    return adaptive_rec(f, a, m, left, 0.5 * tol, rule, depth + 1) +
           adaptive_rec(f, m, b, right, 0.5 * tol, rule, depth + 1);
}

} // namespace detail

/// Adaptive quadrature of f over [a,b] to absolute tolerance abs_tol.
/// Bisection with 15-point Gauss panels; the error estimate compares a panel
/// against its two halves. Throws if the subdivision does not converge.
template <class F>
double adaptive_integrate(F&& f, double a, double b, double abs_tol = 1e-14) {
    require(b >= a, "adaptive_integrate: b < a");
    if (a == b) return 0.0;
    static const Quad1D rule = gauss_legendre(15);
    double whole = integrate_gl(f, a, b, rule);
    return detail::adaptive_rec(f, a, b, whole, abs_tol, rule, 0);
}

/// Tensor-product Gauss rule over an axis-aligned box.
template <int D, class F>
double integrate_box(F&& f, const no_deduce<Vec<D>>& lo, const no_deduce<Vec<D>>& hi,
                     const Quad1D& rule) {
    const int n = static_cast<int>(rule.x.size());
    double total = 0;
    MultiIndex<D> idx{};
    while (true) {
        Vec<D> p{};
        double w = 1;
        for (int k = 0; k < D; ++k) {
            double mid = 0.5 * (lo[k] + hi[k]), half = 0.5 * (hi[k] - lo[k]);
            p[k] = mid + half * rule.x[idx[k]];
            w *= half * rule.w[idx[k]];
        }
        total += w * f(p);
        int k = D - 1;
        while (k >= 0) {
            if (++idx[k] < n) break;
            idx[k] = 0;
            --k;
        }
        if (k < 0) break;
    }
    return total;
}

} // namespace pufem
