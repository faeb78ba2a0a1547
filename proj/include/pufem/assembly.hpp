#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "common.hpp"
#include "grid.hpp"
#include "mesh.hpp"
#include "space.hpp"
#include "sparse.hpp"

namespace pufem {

struct ReferenceTableConfig {
    int quad_order = 16;  ///< Gauss points per panel and axis
    double tol = 1e-12;   ///< convergence threshold under panel doubling
    int max_panels = 256;
};

/// Precomputed reference-element integrals on (0,1)^D for the local basis
/// g_{c,alpha}(t) = prod_k phi(t_k - c_k) (t_k - c_k)^{alpha_k} with corner
/// c in {0,1}^D. mass(i,j) = \int g_i g_j; stab(i,j) = sum over |gamma| = P+1
/// of \int D^gamma g_i D^gamma g_j. Element contributions are sigma^D times
/// these values: the sigma^{2(P+1)} stabilization prefactor cancels the
/// sigma^{-2(P+1)} of the mapped derivatives exactly.
///
/// Everything factorizes per axis, so only 1-D integrals are computed; they
/// use composite Gauss panels, doubled until no entry moves by more than tol
/// relative to its magnitude (throws on non-convergence at max_panels).
template <int D>
class ReferenceIntegralTable {
  public:
    ReferenceIntegralTable(const PartitionFunction& pf, int P,
                           const ReferenceTableConfig& cfg = {})
        : degree_(P), monomials_(monomial_exponents<D>(P)) {
        require(P >= 0, "ReferenceIntegralTable: P >= 0");
        nm_ = static_cast<int>(monomials_.size());
        nloc_ = (1 << D) * nm_;
        build_1d(pf, cfg);
        build_tensors();
    }

    int nloc() const { return nloc_; }
    double mass(int i, int j) const { return mass_[i * nloc_ + j]; }
    double stab(int i, int j) const { return stab_[i * nloc_ + j]; }

    /// 1-D factor \int_0^1 D^q[phi(t-m) t^a ...] D^q[phi(t-n) ...] dt.
    double factor(int q, int m, int a, int n, int b) const {
        return i1d_[idx(q, m, a, n, b)];
    }

  private:
    int idx(int q, int m, int a, int n, int b) const {
        return (((q * 2 + m) * (degree_ + 1) + a) * 2 + n) * (degree_ + 1) + b;
    }

    // d^q/dt^q [ phi(t - m) (t - m)^a ]
    static double gfun(const PartitionFunction& pf, double t, int m, int a, int q) {
        double u = t - m;
        double s = 0;
        for (int j = 0; j <= q; ++j) {
            int md = q - j;
            if (md > a) continue;
            s += double(binomial(q, j)) * pf.derivative(u, j) *
                 falling_factorial(a, md) * std::pow(u, a - md);
        }
        return s;
    }

    void build_1d(const PartitionFunction& pf, const ReferenceTableConfig& cfg) {
        const int qmax = degree_ + 1;
        const int count = (qmax + 1) * 2 * (degree_ + 1) * 2 * (degree_ + 1);
        Quad1D rule = gauss_legendre(cfg.quad_order);
        auto compute = [&](int panels) {
            std::vector<double> out(count, 0.0);
            for (int p = 0; p < panels; ++p) {
                double a = double(p) / panels, b = double(p + 1) / panels;
                double mid = 0.5 * (a + b), half = 0.5 * (b - a);
                for (std::size_t g = 0; g < rule.x.size(); ++g) {
                    double t = mid + half * rule.x[g];
                    double w = half * rule.w[g];
                    double gv[2][PufemSpace<D>::kMaxP + 1][PufemSpace<D>::kMaxP + 2];
                    for (int m = 0; m < 2; ++m)
                        for (int aa = 0; aa <= degree_; ++aa)
                            for (int q = 0; q <= qmax; ++q)
                                gv[m][aa][q] = gfun(pf, t, m, aa, q);
                    for (int q = 0; q <= qmax; ++q)
                        for (int m = 0; m < 2; ++m)
                            for (int aa = 0; aa <= degree_; ++aa)
                                for (int n = 0; n < 2; ++n)
                                    for (int bb = 0; bb <= degree_; ++bb)
                                        out[idx(q, m, aa, n, bb)] +=
                                            w * gv[m][aa][q] * gv[n][bb][q];
                }
            }
            return out;
        };
        int panels = 4;
        std::vector<double> prev = compute(panels);
        while (true) {
            panels *= 2;
            check(panels <= cfg.max_panels,
                  "ReferenceIntegralTable: 1-D integrals did not converge");
            std::vector<double> cur = compute(panels);
            // Convergence is judged per entry, relative to the entry's own
            // magnitude (with an absolute floor of tol): high-derivative
            // factors reach O(1e3) and their panel sums carry a roundoff
            // floor well above an absolute 1e-12.
            double diff = 0;
            for (int i = 0; i < count; ++i)
                diff = std::max(diff, std::abs(cur[i] - prev[i]) /
                                          std::max(1.0, std::abs(cur[i])));
            prev = std::move(cur);
            if (diff <= cfg.tol) break;
        }
        i1d_ = std::move(prev);
    }

    void build_tensors() {
        mass_.assign(std::size_t(nloc_) * nloc_, 0.0);
        stab_.assign(std::size_t(nloc_) * nloc_, 0.0);
        std::vector<MultiIndex<D>> gammas = exact_degree_exponents<D>(degree_ + 1);
        for (int ci = 0; ci < (1 << D); ++ci)
            for (int mi = 0; mi < nm_; ++mi) {
                int i = ci * nm_ + mi;
                for (int cj = 0; cj < (1 << D); ++cj)
                    for (int mj = 0; mj < nm_; ++mj) {
                        int j = cj * nm_ + mj;
                        double m = 1;
                        for (int k = 0; k < D; ++k)
                            m *= factor(0, (ci >> k) & 1, monomials_[mi][k],
                                        (cj >> k) & 1, monomials_[mj][k]);
                        mass_[std::size_t(i) * nloc_ + j] = m;
                        double s = 0;
                        for (const auto& gamma : gammas) {
                            double t = 1;
                            for (int k = 0; k < D; ++k)
                                t *= factor(gamma[k], (ci >> k) & 1, monomials_[mi][k],
                                            (cj >> k) & 1, monomials_[mj][k]);
                            s += t;
                        }
                        stab_[std::size_t(i) * nloc_ + j] = s;
                    }
            }
    }

    int degree_;
    std::vector<MultiIndex<D>> monomials_;
    int nm_ = 0;
    int nloc_ = 0;
    std::vector<double> i1d_;
    std::vector<double> mass_;
    std::vector<double> stab_;
};

struct AssemblyOptions {
    /// Use the reference-element tables for pairs where neither basis
    /// function has cut support. When false, every pair is integrated with
    /// the particle rule, which makes the discrete moment identity exact.
    bool use_reference_tables = true;
    int threads = 1;
};

/// Rule nodes grouped by containing active element. Throws if a node falls
/// into an inactive element.
template <int D>
struct RuleBuckets {
    std::vector<std::int64_t> offsets; // per element id, size n_elements+1
    std::vector<int> order;            // rule-node indices, element-major

    RuleBuckets(const GridClassification<D>& cls, const QuadratureRule<D>& rule) {
        std::vector<int> elem_of(rule.points.size());
        std::vector<std::int64_t> count(cls.elements.size() + 1, 0);
        for (std::size_t i = 0; i < rule.points.size(); ++i) {
            int id = cls.id_of(cls.grid.locate(rule.points[i]));
            check(id >= 0, "quadrature node outside the active element set");
            elem_of[i] = id;
            count[id + 1] += 1;
        }
        for (std::size_t e = 1; e < count.size(); ++e) count[e] += count[e - 1];
        offsets = count;
        order.resize(rule.points.size());
        std::vector<std::int64_t> cursor(offsets.begin(), offsets.end() - 1);
        for (std::size_t i = 0; i < rule.points.size(); ++i)
            order[cursor[elem_of[i]]++] = static_cast<int>(i);
    }
};

/// Mass matrix of the perturbed projection problem. Pairs where at least one
/// basis function has cut support are integrated with the particle rule;
/// all-uncut pairs take the exact reference-element values (these pairs only
/// live on interior elements).
template <int D>
SymmetricSparseMatrix assemble_mass(const PufemSpace<D>& space,
                                    const QuadratureRule<D>& rule,
                                    const ReferenceIntegralTable<D>& table,
                                    const AssemblyOptions& opts = {}) {
    const GridClassification<D>& cls = space.classification();
    const double sigd = std::pow(space.grid().sigma, D);
    const int nloc = space.local_size();
    const int nm = space.monomials_per_node();
    RuleBuckets<D> buckets(cls, rule);

    std::vector<char> node_cut(cls.nodes.size());
    for (std::size_t i = 0; i < cls.nodes.size(); ++i)
        node_cut[i] = node_has_cut_support(cls, cls.nodes[i]) ? 1 : 0;

    const std::int64_t n_elems = static_cast<std::int64_t>(cls.elements.size());
    std::vector<SparseAccumulator> parts(std::max(1, opts.threads),
                                         SparseAccumulator(space.size()));
    parallel_chunks(n_elems, opts.threads, [&](std::int64_t b, std::int64_t e, int tid) {
        SparseAccumulator& acc = parts[tid];
        std::vector<std::int64_t> dofs;
        std::vector<double> local(std::size_t(nloc) * nloc);
        std::vector<double> vals(nloc);
        std::vector<char> corner_cut(std::size_t(1) << D);
        for (std::int64_t el = b; el < e; ++el) {
            space.local_dofs(static_cast<int>(el), dofs);
            bool any_cut_node = false;
            for (int c = 0; c < (1 << D); ++c) {
                corner_cut[c] = node_cut[dofs[std::size_t(c) * nm] / nm];
                any_cut_node = any_cut_node || corner_cut[c];
            }
            bool all_ref = opts.use_reference_tables && !any_cut_node;
            std::fill(local.begin(), local.end(), 0.0);
            if (!all_ref) {
                for (std::int64_t q = buckets.offsets[el]; q < buckets.offsets[el + 1]; ++q) {
                    int pt = buckets.order[q];
                    space.eval_local(static_cast<int>(el), rule.points[pt], vals.data());
                    double w = rule.weights[pt];
                    for (int i = 0; i < nloc; ++i) {
                        double wi = w * vals[i];
                        if (wi == 0.0) continue;
                        for (int j = i; j < nloc; ++j)
                            local[std::size_t(i) * nloc + j] += wi * vals[j];
                    }
                }
            }
            if (opts.use_reference_tables) {
                for (int i = 0; i < nloc; ++i) {
                    if (corner_cut[i / nm]) continue;
                    for (int j = i; j < nloc; ++j) {
                        if (corner_cut[j / nm]) continue;
                        local[std::size_t(i) * nloc + j] = sigd * table.mass(i, j);
                    }
                }
            }
            for (int i = 0; i < nloc; ++i)
                for (int j = i; j < nloc; ++j) {
                    double v = local[std::size_t(i) * nloc + j];
                    if (v != 0.0) acc.add(dofs[i], dofs[j], v);
                }
        }
    });
    for (std::size_t t = 1; t < parts.size(); ++t) parts[0].merge(parts[t]);
    return SymmetricSparseMatrix(parts[0]);
}

/// Stabilization matrix J: reference stabilization blocks on cut elements.
/// Rows/columns of basis functions whose patch avoids all cut elements stay
/// empty. Scale by epsilon when combining (see SystemBundle).
template <int D>
SymmetricSparseMatrix assemble_stabilization(const PufemSpace<D>& space,
                                             const ReferenceIntegralTable<D>& table,
                                             const AssemblyOptions& opts = {}) {
    const GridClassification<D>& cls = space.classification();
    const double sigd = std::pow(space.grid().sigma, D);
    const int nloc = space.local_size();
    const std::int64_t n_elems = static_cast<std::int64_t>(cls.elements.size());
    std::vector<SparseAccumulator> parts(std::max(1, opts.threads),
                                         SparseAccumulator(space.size()));
    parallel_chunks(n_elems, opts.threads, [&](std::int64_t b, std::int64_t e, int tid) {
        SparseAccumulator& acc = parts[tid];
        std::vector<std::int64_t> dofs;
        for (std::int64_t el = b; el < e; ++el) {
            if (cls.element_class[el] != ElementClass::cut) continue;
            space.local_dofs(static_cast<int>(el), dofs);
            for (int i = 0; i < nloc; ++i)
                for (int j = i; j < nloc; ++j) {
                    double v = sigd * table.stab(i, j);
                    if (v != 0.0) acc.add(dofs[i], dofs[j], v);
                }
        }
    });
    for (std::size_t t = 1; t < parts.size(); ++t) parts[0].merge(parts[t]);
    return SymmetricSparseMatrix(parts[0]);
}

/// Right-hand sides b_k = sum_i Gamma_i psi_k(x_i), one vector per particle
/// component. Throws if a particle sits outside the active element set.
template <int D>
std::vector<std::vector<double>> assemble_rhs(const PufemSpace<D>& space,
                                              const Particles<D>& particles) {
    std::vector<std::vector<double>> b(particles.comps,
                                       std::vector<double>(space.size(), 0.0));
    BasisValues bv;
    for (std::size_t i = 0; i < particles.size(); ++i) {
        space.eval_basis(particles.x[i], bv);
        for (std::size_t k = 0; k < bv.dof.size(); ++k)
            for (int c = 0; c < particles.comps; ++c)
                b[c][bv.dof[k]] += particles.value(i, c) * bv.val[k];
    }
    return b;
}

/// Right-hand side \int f psi_k by per-element tensor Gauss quadrature over
/// every active element. Intended for uncut configurations (where the active
/// elements tile the domain exactly), e.g. polynomial-reproduction checks.
template <int D, class F>
std::vector<double> assemble_rhs_function(const PufemSpace<D>& space, F&& f,
                                          int gauss_order = 16) {
    const GridClassification<D>& cls = space.classification();
    std::vector<double> b(space.size(), 0.0);
    Quad1D g = gauss_legendre(gauss_order);
    std::vector<std::int64_t> dofs;
    std::vector<double> vals(space.local_size());
    for (std::size_t el = 0; el < cls.elements.size(); ++el) {
        space.local_dofs(static_cast<int>(el), dofs);
        Vec<D> lo = space.grid().node_position(cls.elements[el]);
        Vec<D> hi = lo;
        for (int k = 0; k < D; ++k) hi[k] += space.grid().sigma;
        MultiIndex<D> it{};
        while (true) {
            Vec<D> p{};
            double w = 1;
            for (int k = 0; k < D; ++k) {
                double mid = 0.5 * (lo[k] + hi[k]), half = 0.5 * (hi[k] - lo[k]);
                p[k] = mid + half * g.x[it[k]];
                w *= half * g.w[it[k]];
            }
            space.eval_local(static_cast<int>(el), p, vals.data());
            double fw = w * f(p);
            for (int i = 0; i < space.local_size(); ++i) b[dofs[i]] += fw * vals[i];
            int k = D - 1;
            while (k >= 0) {
                if (++it[k] < static_cast<int>(g.x.size())) break;
                it[k] = 0;
                --k;
            }
            if (k < 0) break;
        }
    }
    return b;
}

/// A = M + epsilon J with lazily combined matvec and cached diagonal.
struct SystemBundle {
    const SymmetricSparseMatrix* mass = nullptr;
    const SymmetricSparseMatrix* stab = nullptr; // may be null (no cut elements)
    double epsilon = 0;
    std::vector<double> diag;

    SystemBundle(const SymmetricSparseMatrix& m, const SymmetricSparseMatrix* j,
                 double eps)
        : mass(&m), stab(j), epsilon(eps), diag(m.diagonal()) {
        if (stab && epsilon != 0.0) {
            require(stab->size() == mass->size(), "SystemBundle: size mismatch");
            for (std::int64_t i = 0; i < mass->size(); ++i)
                diag[i] += epsilon * stab->diagonal()[i];
        }
    }

    std::int64_t size() const { return mass->size(); }

    void matvec(const double* x, double* y) const {
        mass->matvec(x, y);
        if (!stab || epsilon == 0.0) return;
        std::vector<double> t(size());
        stab->matvec(x, t.data());
        for (std::int64_t i = 0; i < size(); ++i) y[i] += epsilon * t[i];
    }
};

} // namespace pufem
