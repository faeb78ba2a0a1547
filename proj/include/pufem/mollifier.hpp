#pragma once

#include <cmath>
#include <vector>

#include "common.hpp"
#include "quadrature.hpp"

namespace pufem {

/// Normalization constant K = \int_{-1/2}^{1/2} exp(-1/(1-4x^2)) dx, so that
/// the mollifier below has unit L1 norm. Computed once by adaptive
/// quadrature to 1e-15 absolute and cached; K = 0.221996908084039719...
inline double mollifier_normalization() {
    static const double K = adaptive_integrate(
        [](double x) {
            double d = 1.0 - 4.0 * x * x;
            return d > 0 ? std::exp(-1.0 / d) : 0.0;
        },
        -0.5, 0.5, 1e-16);
    return K;
}

/// One-dimensional Friedrichs mollifier, zeta(x) = K^{-1} exp(-1/(1-4x^2))
/// for |x| < 1/2 and 0 otherwise. Smooth, even, unit integral.
inline double zeta1(double x) {
    if (std::abs(x) >= 0.5 - 1e-12) return 0.0;
    double d = 1.0 - 4.0 * x * x;
    return std::exp(-1.0 / d) / mollifier_normalization();
}

/// d-dimensional mollifier as a tensor product of zeta1.
template <int D>
double zeta(const no_deduce<Vec<D>>& x) {
    double v = 1;
    for (int k = 0; k < D; ++k) {
        v *= zeta1(x[k]);
        if (v == 0.0) return 0.0;
    }
    return v;
}

/// Derivatives of zeta1. Writing zeta = K^{-1} e^{g}, g = -1/(1-4x^2), every
/// derivative has the form zeta^{(k)} = N_k(x)/(1-4x^2)^{2k} * zeta with a
/// polynomial numerator N_k obtained from the recurrence
///   N_{k+1} = (N_k' D - 2k N_k D') D - 8x N_k,   D = 1-4x^2, D' = -8x,
/// which is built symbolically once up to max_order. Values within 1e-12 of
/// the support endpoints return exactly 0 (the exponential factor underflows
/// long before the rational prefactor can overflow there).
class ZetaDerivatives {
  public:
    explicit ZetaDerivatives(int max_order = 6) : max_order_(max_order) {
        require(max_order >= 0, "ZetaDerivatives: max_order >= 0 required");
        numer_.resize(max_order + 1);
        numer_[0] = {1.0};
        for (int k = 0; k < max_order; ++k) numer_[k + 1] = next(numer_[k], k);
    }

    int max_order() const { return max_order_; }

    /// zeta1^{(k)}(x); k = 0 is zeta1 itself.
    double eval(int k, double x) const {
        require(k >= 0 && k <= max_order_,
                "ZetaDerivatives::eval: derivative order out of range");
        if (std::abs(x) >= 0.5 - 1e-12) return 0.0;
        if (k == 0) return zeta1(x);
        double d = 1.0 - 4.0 * x * x;
        return polyval(numer_[k], x) / std::pow(d, 2 * k) * zeta1(x);
    }

  private:
    using Poly = std::vector<double>; // coefficients, ascending powers

    static double polyval(const Poly& p, double x) {
        double v = 0;
        for (std::size_t i = p.size(); i-- > 0;) v = v * x + p[i];
        return v;
    }

    static Poly mul(const Poly& a, const Poly& b) {
        Poly r(a.size() + b.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
        return r;
    }

    static Poly add(Poly a, const Poly& b, double scale) {
        if (b.size() > a.size()) a.resize(b.size(), 0.0);
        for (std::size_t i = 0; i < b.size(); ++i) a[i] += scale * b[i];
        return a;
    }

    static Poly derive(const Poly& p) {
        if (p.size() <= 1) return {0.0};
        Poly r(p.size() - 1);
        for (std::size_t i = 1; i < p.size(); ++i) r[i - 1] = double(i) * p[i];
        return r;
    }

    static Poly next(const Poly& nk, int k) {
        const Poly den = {1.0, 0.0, -4.0};  // 1 - 4x^2
        const Poly dden = {0.0, -8.0};      // -8x
        Poly t = mul(add(mul(derive(nk), den), mul(nk, dden), -2.0 * k), den);
        return add(t, mul(nk, dden), 1.0);
    }

    int max_order_;
    std::vector<Poly> numer_;
};

} // namespace pufem
