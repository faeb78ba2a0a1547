#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <vector>

#include "common.hpp"
#include "mollifier.hpp"
#include "quadrature.hpp"

namespace pufem {

struct PartitionConfig {
    int resolution = 4096;    ///< table nodes on [-1,1] (resolution+1 points)
    double build_tol = 1e-14; ///< adaptive-quadrature tolerance per table value
    int max_derivative = 6;   ///< highest derivative order served
};

/// Reference partition function
///   phi(x) = \int_{(-1/2,1/2)} zeta1(x - y) dy,
/// supported on [-1,1], with phi(0) = 1, phi(+-1/2) = 1/2 and the
/// partition-of-unity identity phi(x) + phi(x-1) = 1 on [0,1].
///
/// Values come from a uniform table on [-1,1] with cubic Hermite
/// interpolation between (value, derivative) pairs; the tabulated
/// derivatives are exact, phi'(x) = zeta1(x+1/2) - zeta1(x-1/2).
/// Derivatives of order k >= 1 are never obtained from the spline but from
/// the closed form phi^{(k)}(x) = zeta1^{(k-1)}(x+1/2) - zeta1^{(k-1)}(x-1/2).
class PartitionFunction {
  public:
    explicit PartitionFunction(const PartitionConfig& cfg = {})
        : cfg_(cfg), dzeta_(cfg.max_derivative > 0 ? cfg.max_derivative - 1 : 0) {
        require(cfg.resolution >= 16, "PartitionFunction: resolution too small");
        const int n = cfg.resolution;
        step_ = 2.0 / n;
        val_.resize(n + 1);
        der_.resize(n + 1);
        for (int j = 0; j <= n / 2; ++j) {
            double t = -1.0 + step_ * j; // t <= 0; mirror the rest
            double lo = std::max(t - 0.5, -0.5), hi = std::min(t + 0.5, 0.5);
            double v = 0.0;
            if (hi > lo)
                v = adaptive_integrate([](double y) { return zeta1(y); }, lo, hi,
                                       cfg.build_tol);
            val_[j] = v;
            val_[n - j] = v; // phi is even
        }
        for (int j = 0; j <= n; ++j) {
            double t = -1.0 + step_ * j;
            der_[j] = zeta1(t + 0.5) - zeta1(t - 0.5);
        }
    }

    const PartitionConfig& config() const { return cfg_; }

    /// phi(x); exactly 0 for |x| >= 1.
    double value(double x) const {
        if (std::abs(x) >= 1.0) return 0.0;
        double s = (x + 1.0) / step_;
        int j = static_cast<int>(s);
        if (j >= cfg_.resolution) j = cfg_.resolution - 1;
        double u = s - j;
        double v0 = val_[j], v1 = val_[j + 1];
        double d0 = der_[j] * step_, d1 = der_[j + 1] * step_;
        double u2 = u * u, u3 = u2 * u;
        return (2 * u3 - 3 * u2 + 1) * v0 + (u3 - 2 * u2 + u) * d0 +
               (-2 * u3 + 3 * u2) * v1 + (u3 - u2) * d1;
    }

    /// phi^{(k)}(x); k = 0 falls back to value(). Closed form, not spline
    /// differentiation. Exactly 0 for |x| >= 1.
    double derivative(double x, int k) const {
        require(k >= 0 && k <= cfg_.max_derivative,
                "PartitionFunction::derivative: order out of range");
        if (k == 0) return value(x);
        if (std::abs(x) >= 1.0) return 0.0;
        return dzeta_.eval(k - 1, x + 0.5) - dzeta_.eval(k - 1, x - 0.5);
    }

    /// Two-column CSV dump (x, phi) of the raw table nodes.
    void dump_csv(std::ostream& os) const {
        os << "x,phi\n";
        char line[80];
        for (int j = 0; j <= cfg_.resolution; ++j) {
            std::snprintf(line, sizeof line, "%.17g,%.17g\n", -1.0 + step_ * j,
                          val_[j]);
            os << line;
        }
    }

  private:
    PartitionConfig cfg_;
    ZetaDerivatives dzeta_;
    double step_ = 0;
    std::vector<double> val_;
    std::vector<double> der_;
};

} // namespace pufem
