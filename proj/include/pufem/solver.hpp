#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "common.hpp"

namespace pufem {

struct SolveReport {
    std::vector<double> x;
    int iterations = 0;
    double rel_residual = 0;
    bool converged = false;
    bool breakdown = false;
};

/// Conjugate gradients with Jacobi preconditioning. Stops at relative
/// preconditioned residual <= tol; sets `breakdown` when p^T A p <= 0 (the
/// operator is not positive definite on the Krylov space) or when the
/// diagonal is not strictly positive.
template <class Op>
SolveReport solve_pcg(const Op& A, const std::vector<double>& diag,
                      const std::vector<double>& b, double tol = 1e-12,
                      int maxiter = 2000) {
    const std::int64_t n = static_cast<std::int64_t>(b.size());
    SolveReport rep;
    rep.x.assign(n, 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        if (!(diag[i] > 0)) {
            rep.breakdown = true;
            return rep;
        }
    std::vector<double> r = b, z(n), p(n), Ap(n);
    for (std::int64_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    double rho = 0;
    for (std::int64_t i = 0; i < n; ++i) rho += r[i] * z[i];
    const double rho0 = rho;
    if (rho0 <= 0) { // b = 0
        rep.converged = true;
        return rep;
    }
    p = z;
    for (int it = 0; it < maxiter; ++it) {
        A.matvec(p.data(), Ap.data());
        double pAp = 0;
        for (std::int64_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
        if (pAp <= 0) {
            rep.breakdown = true;
            rep.iterations = it;
            rep.rel_residual = std::sqrt(rho / rho0);
            return rep;
        }
        double alpha = rho / pAp;
        for (std::int64_t i = 0; i < n; ++i) {
            rep.x[i] += alpha * p[i];
            r[i] -= alpha * Ap[i];
        }
        for (std::int64_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
        double rho_new = 0;
        for (std::int64_t i = 0; i < n; ++i) rho_new += r[i] * z[i];
        rep.iterations = it + 1;
        rep.rel_residual = std::sqrt(std::max(rho_new, 0.0) / rho0);
        if (rep.rel_residual <= tol) {
            rep.converged = true;
            return rep;
        }
        double beta = rho_new / rho;
        rho = rho_new;
        for (std::int64_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return rep;
}

enum class SpdFlag { positive_definite, indefinite, singular };

struct ConditionReport {
    double lambda_min = 0;
    double lambda_max = 0;
    double cond = std::numeric_limits<double>::infinity();
    SpdFlag flag = SpdFlag::positive_definite;
    int iterations = 0;
};

namespace detail {

/// Number of eigenvalues of the symmetric tridiagonal (a, b) below x
/// (Sturm / LDL^T sign count).
inline int tridiag_count_below(const std::vector<double>& a,
                               const std::vector<double>& b, double x) {
    int count = 0;
    double d = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double off = i == 0 ? 0.0 : b[i - 1];
        d = a[i] - x - (i == 0 ? 0.0 : off * off / d);
        if (d == 0.0) d = -1e-300;
        if (d < 0) ++count;
    }
    return count;
}

inline double tridiag_extreme(const std::vector<double>& a, const std::vector<double>& b,
                              bool largest) {
    double lo = a[0], hi = a[0];
    for (std::size_t i = 0; i < a.size(); ++i) {
        double r = (i > 0 ? std::abs(b[i - 1]) : 0.0) +
                   (i + 1 < a.size() ? std::abs(b[i]) : 0.0);
        lo = std::min(lo, a[i] - r);
        hi = std::max(hi, a[i] + r);
    }
    const int m = static_cast<int>(a.size());
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++it) {
        double mid = 0.5 * (lo + hi);
        int below = tridiag_count_below(a, b, mid);
        if (largest ? below < m : below < 1)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Estimate the extreme eigenvalues (hence the condition number) of
/// D^{-1/2} A D^{-1/2} by Lanczos with full reorthogonalization, where D is
/// the cached diagonal. Flags indefiniteness (negative Ritz value, or a zero
/// diagonal entry with a nonzero row) and singularity (zero row, or a Ritz
/// value at rounding level).
template <class Op>
ConditionReport estimate_condition(const Op& A, const std::vector<double>& diag,
                                   int maxiter = 400, double tol = 1e-8,
                                   std::uint64_t seed = 0x5eed) {
    const std::int64_t n = static_cast<std::int64_t>(diag.size());
    ConditionReport rep;
    require(n > 0, "estimate_condition: empty system");

    for (std::int64_t i = 0; i < n; ++i) {
        if (diag[i] > 0) continue;
        if (diag[i] < 0) {
            rep.flag = SpdFlag::indefinite;
            return rep;
        }
        // zero diagonal: decide singular (zero row) vs indefinite
        std::vector<double> e(n, 0.0), y(n);
        e[i] = 1.0;
        A.matvec(e.data(), y.data());
        double nrm = 0;
        for (std::int64_t k = 0; k < n; ++k) nrm += y[k] * y[k];
        rep.flag = nrm == 0.0 ? SpdFlag::singular : SpdFlag::indefinite;
        return rep;
    }

    std::vector<double> s(n);
    for (std::int64_t i = 0; i < n; ++i) s[i] = 1.0 / std::sqrt(diag[i]);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> v(n), w(n), tmp(n);
    for (auto& x : v) x = gauss(rng);
    double nv = 0;
    for (auto x : v) nv += x * x;
    nv = std::sqrt(nv);
    for (auto& x : v) x /= nv;

    const int m_cap = static_cast<int>(std::min<std::int64_t>(n, maxiter));
    std::vector<std::vector<double>> V;
    V.reserve(m_cap);
    std::vector<double> alpha, beta;
    double prev_min = 0, prev_max = 0;
    int stable = 0;

    for (int j = 0; j < m_cap; ++j) {
        V.push_back(v);
        // w = S A S v
        for (std::int64_t i = 0; i < n; ++i) tmp[i] = s[i] * v[i];
        A.matvec(tmp.data(), w.data());
        for (std::int64_t i = 0; i < n; ++i) w[i] *= s[i];
        double a = 0;
        for (std::int64_t i = 0; i < n; ++i) a += w[i] * v[i];
        alpha.push_back(a);
        // full reorthogonalization (two passes)
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& u : V) {
                double c = 0;
                for (std::int64_t i = 0; i < n; ++i) c += w[i] * u[i];
                for (std::int64_t i = 0; i < n; ++i) w[i] -= c * u[i];
            }
        double nb = 0;
        for (std::int64_t i = 0; i < n; ++i) nb += w[i] * w[i];
        nb = std::sqrt(nb);

        rep.lambda_min = detail::tridiag_extreme(alpha, beta, false);
        rep.lambda_max = detail::tridiag_extreme(alpha, beta, true);
        rep.iterations = j + 1;

        double scale = std::max(std::abs(rep.lambda_max), std::abs(rep.lambda_min));
        bool exhausted = nb <= 1e-13 * std::max(1.0, scale) ||
                         static_cast<std::int64_t>(j) + 1 == n;
        if (j > 3) {
            double dmin = std::abs(rep.lambda_min - prev_min),
                   dmax = std::abs(rep.lambda_max - prev_max);
            if (dmin <= tol * std::max(1e-30, std::abs(rep.lambda_min)) &&
                dmax <= tol * std::abs(rep.lambda_max))
                ++stable;
            else
                stable = 0;
        }
        prev_min = rep.lambda_min;
        prev_max = rep.lambda_max;
        if (exhausted || stable >= 3) break;

        beta.push_back(nb);
        for (std::int64_t i = 0; i < n; ++i) v[i] = w[i] / nb;
    }

    double scale = std::max(std::abs(rep.lambda_max), std::abs(rep.lambda_min));
    if (rep.lambda_min < -1e-10 * scale)
        rep.flag = SpdFlag::indefinite;
    else if (rep.lambda_min <= 1e-12 * scale)
        rep.flag = SpdFlag::singular;
    else {
        rep.flag = SpdFlag::positive_definite;
        rep.cond = rep.lambda_max / rep.lambda_min;
    }
    return rep;
}

inline const char* to_string(SpdFlag f) {
    switch (f) {
        case SpdFlag::positive_definite: return "positive_definite";
        case SpdFlag::indefinite: return "indefinite";
        default: return "singular";
    }
}

} // namespace pufem
