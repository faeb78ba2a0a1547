#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <vector>

#include "common.hpp"
#include "mesh.hpp"
#include "space.hpp"

namespace pufem {

/// A coefficient vector (one per component) interpreted as a smooth field
/// sum_k c_k psi_k. Scalar fields have one component, vorticity fields have
/// 1 (2D) or 3 (3D).
template <int D>
struct SmoothedField {
    const PufemSpace<D>* space = nullptr;
    std::vector<std::vector<double>> coeffs;

    int components() const { return static_cast<int>(coeffs.size()); }
};

template <int D>
SmoothedField<D> make_field(const PufemSpace<D>& space,
                            std::vector<std::vector<double>> coeffs) {
    for (const auto& c : coeffs)
        require(static_cast<std::int64_t>(c.size()) == space.size(),
                "make_field: coefficient length mismatch");
    return SmoothedField<D>{&space, std::move(coeffs)};
}

/// Evaluate all components at x into out[0..components); scratch avoids
/// per-point allocations in hot loops.
template <int D>
void evaluate_into(const SmoothedField<D>& f, const no_deduce<Vec<D>>& x, BasisValues& scratch,
                   double* out) {
    f.space->eval_basis(x, scratch);
    const int nc = f.components();
    for (int c = 0; c < nc; ++c) out[c] = 0.0;
    for (std::size_t j = 0; j < scratch.dof.size(); ++j) {
        const double v = scratch.val[j];
        const std::int64_t k = scratch.dof[j];
        for (int c = 0; c < nc; ++c) out[c] += f.coeffs[c][k] * v;
    }
}

template <int D>
std::vector<double> evaluate(const SmoothedField<D>& f, const no_deduce<Vec<D>>& x) {
    BasisValues scratch;
    std::vector<double> out(f.components());
    evaluate_into(f, x, scratch, out.data());
    return out;
}

/// false (out untouched) when x lies outside the active element set.
template <int D>
bool try_evaluate(const SmoothedField<D>& f, const no_deduce<Vec<D>>& x, double* out) {
    if (f.space->classification().id_of(f.space->grid().locate(x)) < 0) return false;
    BasisValues scratch;
    evaluate_into(f, x, scratch, out);
    return true;
}

/// sqrt(sum_q w_q |u_sigma(x_q) - u(x_q)|^2); `exact` writes components() values.
template <int D, class F>
double l2_error(const SmoothedField<D>& f, F&& exact, const QuadratureRule<D>& rule,
                int threads = 1) {
    const int nc = f.components();
    const std::int64_t n = static_cast<std::int64_t>(rule.points.size());
    std::vector<double> partial(std::max(threads, 1), 0.0);
    parallel_chunks(n, threads, [&](std::int64_t b, std::int64_t e, int tid) {
        BasisValues scratch;
        std::vector<double> uh(nc), ue(nc);
        double acc = 0;
        for (std::int64_t q = b; q < e; ++q) {
            evaluate_into(f, rule.points[q], scratch, uh.data());
            exact(rule.points[q], ue.data());
            double s2 = 0;
            for (int c = 0; c < nc; ++c) {
                double d = uh[c] - ue[c];
                s2 += d * d;
            }
            acc += rule.weights[q] * s2;
        }
        partial[tid] += acc;
    });
    double total = 0;
    for (double p : partial) total += p;
    return std::sqrt(std::max(total, 0.0));
}

template <int D>
double l2_norm(const SmoothedField<D>& f, const QuadratureRule<D>& rule,
               int threads = 1) {
    return l2_error(
        f, [&](const Vec<D>&, double* out) {
            for (int c = 0; c < f.components(); ++c) out[c] = 0.0;
        },
        rule, threads);
}

/// sqrt(sum_q w_q sum_c |grad u_sigma_c - G_c|^2); `exact_grad` writes
/// components()*D values, component-major.
template <int D, class G>
double h1_seminorm_error(const SmoothedField<D>& f, G&& exact_grad,
                         const QuadratureRule<D>& rule, int threads = 1) {
    const int nc = f.components();
    const auto derivs = monomial_exponents<D>(1);
    int slot[D];
    for (int k = 0; k < D; ++k) {
        slot[k] = -1;
        for (std::size_t i = 0; i < derivs.size(); ++i)
            if (abs_sum(derivs[i]) == 1 && derivs[i][k] == 1)
                slot[k] = static_cast<int>(i);
        check(slot[k] >= 0, "h1_seminorm_error: derivative enumeration broken");
    }
    const std::int64_t n = static_cast<std::int64_t>(rule.points.size());
    std::vector<double> partial(std::max(threads, 1), 0.0);
    parallel_chunks(n, threads, [&](std::int64_t b, std::int64_t e, int tid) {
        BasisDerivatives scratch;
        std::vector<double> gh(nc * D), ge(nc * D);
        double acc = 0;
        for (std::int64_t q = b; q < e; ++q) {
            f.space->eval_basis_derivatives(rule.points[q], 1, scratch);
            for (auto& v : gh) v = 0.0;
            for (std::size_t j = 0; j < scratch.dof.size(); ++j) {
                const std::int64_t dof = scratch.dof[j];
                for (int c = 0; c < nc; ++c) {
                    const double cj = f.coeffs[c][dof];
                    for (int k = 0; k < D; ++k)
                        gh[c * D + k] += cj * scratch.val[j * scratch.n_deriv + slot[k]];
                }
            }
            exact_grad(rule.points[q], ge.data());
            double s2 = 0;
            for (int i = 0; i < nc * D; ++i) {
                double d = gh[i] - ge[i];
                s2 += d * d;
            }
            acc += rule.weights[q] * s2;
        }
        partial[tid] += acc;
    });
    double total = 0;
    for (double p : partial) total += p;
    return std::sqrt(std::max(total, 0.0));
}

/// Discrete moment of the field, I_m(u_sigma x^alpha), per component. For the
/// conservation identity, pass the same rule that assembled the mass matrix.
template <int D>
std::vector<double> moment(const SmoothedField<D>& f, const no_deduce<MultiIndex<D>>& alpha,
                           const QuadratureRule<D>& rule) {
    const int nc = f.components();
    std::vector<double> m(nc, 0.0), uh(nc);
    BasisValues scratch;
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
        evaluate_into(f, rule.points[q], scratch, uh.data());
        double mono = 1.0;
        for (int k = 0; k < D; ++k)
            for (int a = 0; a < alpha[k]; ++a) mono *= rule.points[q][k];
        const double w = rule.weights[q] * mono;
        for (int c = 0; c < nc; ++c) m[c] += w * uh[c];
    }
    return m;
}

/// Particle moment sum_i Gamma_i x_i^alpha, per component.
template <int D>
std::vector<double> moment(const Particles<D>& particles,
                           const no_deduce<MultiIndex<D>>& alpha) {
    std::vector<double> m(particles.comps, 0.0);
    for (std::size_t i = 0; i < particles.x.size(); ++i) {
        double mono = 1.0;
        for (int k = 0; k < D; ++k)
            for (int a = 0; a < alpha[k]; ++a) mono *= particles.x[i][k];
        for (int c = 0; c < particles.comps; ++c) m[c] += mono * particles.value(i, c);
    }
    return m;
}

template <int D>
struct BiotSavartResult {
    std::vector<Vec<D>> velocity;
    std::int64_t skipped = 0;
};

/// Direct summation of the Biot-Savart law over a quadrature of the smoothed
/// vorticity. 3D: u(x) = -(1/4pi) sum_q w_q (x-y_q)/|x-y_q|^3 x omega(y_q),
/// 2D (scalar vorticity): u(x) = sum_q w_q (1/2pi) (-r_2, r_1)/|r|^2 omega(y_q)
/// with r = x - y_q. Terms with |x-y_q| < eta are skipped and counted.
template <int D>
BiotSavartResult<D> biot_savart_direct(const SmoothedField<D>& vorticity,
                                       const no_deduce<std::vector<Vec<D>>>& eval_points,
                                       const QuadratureRule<D>& rule, double eta,
                                       int threads = 1) {
    static_assert(D == 2 || D == 3, "Biot-Savart kernel is 2D or 3D");
    require(eta > 0, "biot_savart_direct: eta must be positive");
    const int nc = D == 3 ? 3 : 1;
    require(vorticity.components() == nc, "biot_savart_direct: component mismatch");

    const std::int64_t nq = static_cast<std::int64_t>(rule.points.size());
    std::vector<double> w_omega(nq * nc);
    parallel_chunks(nq, threads, [&](std::int64_t b, std::int64_t e, int) {
        BasisValues scratch;
        double uh[3];
        for (std::int64_t q = b; q < e; ++q) {
            evaluate_into(vorticity, rule.points[q], scratch, uh);
            for (int c = 0; c < nc; ++c) w_omega[q * nc + c] = rule.weights[q] * uh[c];
        }
    });

    BiotSavartResult<D> res;
    res.velocity.assign(eval_points.size(), Vec<D>{});
    std::vector<std::int64_t> skipped(std::max(threads, 1), 0);
    const double eta2 = eta * eta;
    const std::int64_t ne = static_cast<std::int64_t>(eval_points.size());
    parallel_chunks(ne, threads, [&](std::int64_t b, std::int64_t e, int tid) {
        for (std::int64_t i = b; i < e; ++i) {
            const Vec<D> x = eval_points[i];
            Vec<D> u{};
            for (std::int64_t q = 0; q < nq; ++q) {
                Vec<D> r = x - rule.points[q];
                const double r2 = dot(r, r);
                if (r2 < eta2) {
                    ++skipped[tid];
                    continue;
                }
                if constexpr (D == 3) {
                    const double s = 1.0 / (r2 * std::sqrt(r2));
                    const double* wo = &w_omega[q * 3];
                    u[0] -= s * (r[1] * wo[2] - r[2] * wo[1]);
                    u[1] -= s * (r[2] * wo[0] - r[0] * wo[2]);
                    u[2] -= s * (r[0] * wo[1] - r[1] * wo[0]);
                } else {
                    const double s = w_omega[q] / r2;
                    u[0] -= s * r[1];
                    u[1] += s * r[0];
                }
            }
            const double scale = D == 3 ? 1.0 / (4.0 * std::numbers::pi)
                                        : 1.0 / (2.0 * std::numbers::pi);
            res.velocity[i] = scale * u;
        }
    });
    for (auto s : skipped) res.skipped += s;
    return res;
}

/// Proxy for the negative-norm error: the largest weak error
/// |integral (u_sigma - u) theta| over the fixed test family
/// theta(x) = prod_k cos(pi m_k x_k), m_k in {0,1,2}. This is a proxy, not
/// the W^{-(P+1),2} norm itself.
template <int D, class F>
double weak_error_proxy(const SmoothedField<D>& f, F&& exact,
                        const QuadratureRule<D>& rule) {
    const int nc = f.components();
    Index<D> m{};
    double worst = 0;
    bool done = false;
    while (!done) {
        std::vector<double> acc(nc, 0.0), uh(nc), ue(nc);
        BasisValues scratch;
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            double theta = 1.0;
            for (int k = 0; k < D; ++k)
                theta *= std::cos(std::numbers::pi * m[k] * rule.points[q][k]);
            evaluate_into(f, rule.points[q], scratch, uh.data());
            exact(rule.points[q], ue.data());
            for (int c = 0; c < nc; ++c)
                acc[c] += rule.weights[q] * (uh[c] - ue[c]) * theta;
        }
        for (int c = 0; c < nc; ++c) worst = std::max(worst, std::abs(acc[c]));
        done = true;
        for (int k = 0; k < D; ++k) {
            if (++m[k] <= 2) {
                done = false;
                break;
            }
            m[k] = 0;
        }
    }
    return worst;
}

/// CSV of (point coords, field components); points outside the active set get
/// "nan" entries.
template <int D>
void write_field_csv(const SmoothedField<D>& f, const no_deduce<std::vector<Vec<D>>>& points,
                     std::ostream& os) {
    const int nc = f.components();
    const char* axes[] = {"x", "y", "z"};
    for (int k = 0; k < D; ++k) os << axes[k] << ",";
    for (int c = 0; c < nc; ++c) os << "u" << c << (c + 1 < nc ? "," : "\n");
    std::vector<double> val(nc);
    char buf[32];
    for (const auto& p : points) {
        bool ok = try_evaluate(f, p, val.data());
        for (int k = 0; k < D; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", p[k]);
            os << buf << ",";
        }
        for (int c = 0; c < nc; ++c) {
            if (ok) {
                std::snprintf(buf, sizeof buf, "%.17g", val[c]);
                os << buf;
            } else {
                os << "nan";
            }
            os << (c + 1 < nc ? "," : "\n");
        }
    }
}

} // namespace pufem
