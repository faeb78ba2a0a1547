#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "common.hpp"
#include "grid.hpp"
#include "partition.hpp"

namespace pufem {

/// Sparse basis evaluation: entry j is (dof[j], val[j]); at most
/// 2^D * binomial(P+D, D) entries (the functions of the containing element's
/// corner nodes).
struct BasisValues {
    std::vector<std::int64_t> dof;
    std::vector<double> val;
};

/// Like BasisValues but with all derivatives |beta| <= order per entry,
/// flattened as val[entry * n_deriv + deriv]; derivative multi-indices are
/// enumerated by monomial_exponents<D>(order).
struct BasisDerivatives {
    std::vector<std::int64_t> dof;
    std::vector<double> val;
    int n_deriv = 0;
};

/// Partition-of-unity FEM space on the active nodes of a classified grid:
/// basis functions psi = phi_j(x) * ((x - x_j)/sigma)^alpha for every active
/// node j and every monomial |alpha| <= P. DOFs are ordered node-major
/// (nodes lexicographic, monomials graded-lex within a node).
template <int D>
class PufemSpace {
  public:
    PufemSpace(const GridClassification<D>& cls, const PartitionFunction& pf, int P)
        : cls_(&cls), pf_(&pf), degree_(P), monomials_(monomial_exponents<D>(P)) {
        require(P >= 0 && P <= kMaxP, "PufemSpace: degree out of range");
        require(pf.config().max_derivative >= P + 1,
                "PufemSpace: partition function serves too few derivatives");
        nm_ = static_cast<int>(monomials_.size());
    }

    int degree() const { return degree_; }
    int monomials_per_node() const { return nm_; }
    int local_size() const { return (1 << D) * nm_; }
    std::int64_t size() const { return std::int64_t(cls_->nodes.size()) * nm_; }
    const std::vector<MultiIndex<D>>& monomials() const { return monomials_; }
    const GridClassification<D>& classification() const { return *cls_; }
    const CartesianGrid<D>& grid() const { return cls_->grid; }
    const PartitionFunction& partition() const { return *pf_; }

    std::int64_t dof_index(int node, int mono) const {
        return std::int64_t(node) * nm_ + mono;
    }

    /// Element containing x; throws if x is not in an active element.
    int locate_active(const Vec<D>& x) const {
        int id = cls_->id_of(cls_->grid.locate(x));
        require(id >= 0, "PufemSpace: point not inside an active element");
        return id;
    }

    /// Global dof indices of the element's local basis, order
    /// (corner c = 0..2^D-1 by bit pattern, monomial).
    void local_dofs(int element, std::vector<std::int64_t>& out) const {
        const Index<D>& e = cls_->elements[element];
        out.resize(local_size());
        int pos = 0;
        for (int c = 0; c < (1 << D); ++c) {
            Index<D> n = e;
            for (int k = 0; k < D; ++k) n[k] += (c >> k) & 1;
            int node = cls_->node_id.at(n);
            for (int m = 0; m < nm_; ++m) out[pos++] = dof_index(node, m);
        }
    }

    /// Values of the local basis at x (known containing element), order as
    /// in local_dofs. vals must hold local_size() doubles.
    void eval_local(int element, const Vec<D>& x, double* vals) const {
        const CartesianGrid<D>& g = cls_->grid;
        Vec<D> lower = g.node_position(cls_->elements[element]);
        double phi[D][2];
        double pw[D][2][kMaxP + 1];
        for (int k = 0; k < D; ++k) {
            double u0 = (x[k] - lower[k]) / g.sigma;
            double u[2] = {u0, u0 - 1.0};
            for (int b = 0; b < 2; ++b) {
                phi[k][b] = pf_->value(u[b]);
                double p = 1;
                for (int a = 0; a <= degree_; ++a) {
                    pw[k][b][a] = p;
                    p *= u[b];
                }
            }
        }
        int pos = 0;
        for (int c = 0; c < (1 << D); ++c) {
            double base = 1;
            for (int k = 0; k < D; ++k) base *= phi[k][(c >> k) & 1];
            for (int m = 0; m < nm_; ++m) {
                double v = base;
                for (int k = 0; k < D; ++k) v *= pw[k][(c >> k) & 1][monomials_[m][k]];
                vals[pos++] = v;
            }
        }
    }

    /// Sparse evaluation of all basis functions nonzero at x.
    void eval_basis(const Vec<D>& x, BasisValues& out) const {
        int e = locate_active(x);
        local_dofs(e, out.dof);
        out.val.resize(local_size());
        eval_local(e, x, out.val.data());
    }

    /// Sparse evaluation of all derivatives |beta| <= order. Axis factors of
    /// derivative order q use the closed-form partition-function derivatives;
    /// the q = 0 factor uses the table value. Each derivative carries the
    /// mapping factor sigma^{-|beta|}.
    void eval_basis_derivatives(const Vec<D>& x, int order, BasisDerivatives& out) const {
        require(order >= 0 && order <= pf_->config().max_derivative &&
                    order <= kMaxP + 1,
                "eval_basis_derivatives: order out of range");
        int e = locate_active(x);
        local_dofs(e, out.dof);
        const std::vector<MultiIndex<D>>& derivs = deriv_exponents(order);
        out.n_deriv = static_cast<int>(derivs.size());
        out.val.assign(local_size() * derivs.size(), 0.0);

        const CartesianGrid<D>& g = cls_->grid;
        Vec<D> lower = g.node_position(cls_->elements[e]);
        // g1[k][b][a][q] = d^q/du^q [ phi(u) u^a ] at u = u_b on axis k
        double g1[D][2][kMaxP + 1][kMaxP + 2];
        double dphi[kMaxP + 2];
        for (int k = 0; k < D; ++k) {
            double u0 = (x[k] - lower[k]) / g.sigma;
            double u[2] = {u0, u0 - 1.0};
            for (int b = 0; b < 2; ++b) {
                double pw[kMaxP + 1];
                double p = 1;
                for (int a = 0; a <= degree_; ++a) {
                    pw[a] = p;
                    p *= u[b];
                }
                for (int q = 0; q <= order; ++q) dphi[q] = pf_->derivative(u[b], q);
                for (int a = 0; a <= degree_; ++a)
                    for (int q = 0; q <= order; ++q) {
                        double s = 0;
                        for (int m = 0; m <= q; ++m) {
                            int mono_d = q - m; // derivatives falling on u^a
                            if (mono_d > a) continue;
                            s += double(binomial(q, m)) * dphi[m] *
                                 falling_factorial(a, mono_d) * pw[a - mono_d];
                        }
                        g1[k][b][a][q] = s;
                    }
            }
        }
        double inv_sigma_pow[kMaxP + 2 + 1];
        inv_sigma_pow[0] = 1;
        for (int q = 1; q <= order + 1 && q < kMaxP + 3; ++q)
            inv_sigma_pow[q] = inv_sigma_pow[q - 1] / g.sigma;

        int pos = 0;
        for (int c = 0; c < (1 << D); ++c) {
            for (int m = 0; m < nm_; ++m, ++pos) {
                for (std::size_t di = 0; di < derivs.size(); ++di) {
                    const MultiIndex<D>& beta = derivs[di];
                    double v = inv_sigma_pow[abs_sum<D>(beta)];
                    for (int k = 0; k < D; ++k)
                        v *= g1[k][(c >> k) & 1][monomials_[m][k]][beta[k]];
                    out.val[pos * derivs.size() + di] = v;
                }
            }
        }
    }

    /// Derivative multi-index enumeration shared with callers.
    static const std::vector<MultiIndex<D>>& deriv_exponents(int order) {
        static thread_local std::vector<std::vector<MultiIndex<D>>> cache;
        if (static_cast<int>(cache.size()) <= order) cache.resize(order + 1);
        if (cache[order].empty()) cache[order] = monomial_exponents<D>(order);
        return cache[order];
    }

    static constexpr int kMaxP = 5;

  private:
    const GridClassification<D>* cls_;
    const PartitionFunction* pf_;
    int degree_;
    std::vector<MultiIndex<D>> monomials_;
    int nm_ = 0;
};

} // namespace pufem
