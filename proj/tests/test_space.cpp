#include <catch2/catch_amalgamated.hpp>

#include <pufem/pufem.hpp>

#include "oracles.hpp"

#include <algorithm>
#include <cmath>

using namespace pufem;

namespace {

const PartitionFunction& table() {
    static PartitionFunction pf;
    return pf;
}

template <int D>
struct Setup {
    SimplicialMesh<D> mesh;
    GridClassification<D> cls;
    Setup(double sigma, const Vec<D>& origin, int mesh_level) {
        mesh = refine_uniform(unit_cube_mesh<D>(), mesh_level);
        CartesianGrid<D> grid{sigma, origin};
        auto geom = cube_domain<D>(mesh);
        cls = classify_elements(grid, geom);
    }
};

// factorial of a multi-index
template <int D>
double mi_factorial(const MultiIndex<D>& a) {
    double f = 1;
    for (int k = 0; k < D; ++k)
        for (int j = 2; j <= a[k]; ++j) f *= j;
    return f;
}

} // namespace

TEST_CASE("dof counts follow nodes times monomials") {
    Setup<3> unit(1.0, Vec<3>{-0.5, -0.5, -0.5}, 1);
    PufemSpace<3> space(unit.cls, table(), 1);
    CHECK(space.monomials_per_node() == 4);
    CHECK(space.local_size() == 32);
    CHECK(space.size() == 32); // 8 nodes, 4 monomials

    Setup<2> square(0.5, Vec<2>{0.0, 0.0}, 2);
    PufemSpace<2> p0(square.cls, table(), 0);
    CHECK(p0.size() == 9);
    PufemSpace<2> p2(square.cls, table(), 2);
    CHECK(p2.monomials_per_node() == 6);
    CHECK(p2.size() == 9 * 6);
}

TEST_CASE("space rejects unsupported degrees") {
    Setup<2> square(0.5, Vec<2>{0.0, 0.0}, 2);
    CHECK_THROWS(PufemSpace<2>(square.cls, table(), -1));
    CHECK_THROWS(PufemSpace<2>(square.cls, table(), 9));
    PartitionFunction shallow(PartitionConfig{256, 1e-12, 1});
    CHECK_THROWS(PufemSpace<2>(square.cls, shallow, 2));
}

TEST_CASE("constant-monomial basis value is one at its own node") {
    Setup<2> square(0.5, Vec<2>{-0.25, -0.25}, 2);
    PufemSpace<2> space(square.cls, table(), 1);
    BasisValues vals;
    for (int n = 0; n < static_cast<int>(square.cls.nodes.size()); ++n) {
        Vec<2> xn = square.cls.grid.node_position(square.cls.nodes[n]);
        // nodes on the active-region hull may fall outside every active
        // element under floor-locate; skip those
        int id = square.cls.id_of(square.cls.grid.locate(xn));
        if (id < 0) continue;
        space.eval_basis(xn, vals);
        // phi_j(x_n) = delta_jn and the shifted monomials vanish at their own
        // node, so the whole patch evaluates to zero except dof (n, 0)
        for (std::size_t j = 0; j < vals.dof.size(); ++j) {
            double want = vals.dof[j] == space.dof_index(n, 0) ? 1.0 : 0.0;
            CHECK(vals.val[j] == Catch::Approx(want).margin(1e-12));
        }
    }
}

TEST_CASE("basis values vanish outside the patch") {
    Setup<2> square(0.5, Vec<2>{-0.25, -0.25}, 2);
    PufemSpace<2> space(square.cls, table(), 1);
    BasisValues vals;
    space.eval_basis(Vec<2>{0.45, 0.45}, vals);
    // the far corner node (-1,-1) is two elements away
    std::int64_t far = space.dof_index(square.cls.node_id.at(Index<2>{-1, -1}), 0);
    for (std::size_t j = 0; j < vals.dof.size(); ++j)
        CHECK(vals.dof[j] != far);
}

TEST_CASE("partition of unity holds for the constant monomials") {
    Setup<2> square(0.5, Vec<2>{-0.25, -0.25}, 2);
    PufemSpace<2> space(square.cls, table(), 2);
    oracles::Rng rng(77);
    BasisValues vals;
    for (int i = 0; i < 300; ++i) {
        Vec<2> x{rng.uniform(-0.49, 0.49), rng.uniform(-0.49, 0.49)};
        space.eval_basis(x, vals);
        double sum = 0;
        for (std::size_t j = 0; j < vals.dof.size(); ++j)
            if (vals.dof[j] % space.monomials_per_node() == 0) sum += vals.val[j];
        CHECK(sum == Catch::Approx(1.0).margin(1e-10));
    }
}

TEST_CASE("derivative sums of the partition vanish") {
    Setup<2> square(0.5, Vec<2>{-0.25, -0.25}, 2);
    PufemSpace<2> space(square.cls, table(), 1);
    oracles::Rng rng(78);
    BasisDerivatives der;
    const auto& betas = PufemSpace<2>::deriv_exponents(2);
    for (int i = 0; i < 100; ++i) {
        Vec<2> x{rng.uniform(-0.49, 0.49), rng.uniform(-0.49, 0.49)};
        space.eval_basis_derivatives(x, 2, der);
        REQUIRE(der.n_deriv == static_cast<int>(betas.size()));
        for (int di = 0; di < der.n_deriv; ++di) {
            int order = 0;
            for (int k = 0; k < 2; ++k) order += betas[di][k];
            if (order == 0) continue;
            double sum = 0;
            for (std::size_t j = 0; j < der.dof.size(); ++j)
                if (der.dof[j] % space.monomials_per_node() == 0)
                    sum += der.val[j * der.n_deriv + di];
            // derivatives scale like sigma^-order; normalize before comparing
            CHECK(std::abs(sum) * std::pow(0.5, order) < 1e-8);
        }
    }
}

TEST_CASE("Taylor coefficients reproduce polynomials exactly") {
    // p(x) = x0^2 - 2 x0 x1 + 3 x1 + 1 lies in the degree-2 space; writing its
    // Taylor expansion around each node gives coefficients that must
    // reproduce p pointwise
    Setup<2> square(0.5, Vec<2>{-0.25, -0.25}, 2);
    PufemSpace<2> space(square.cls, table(), 2);
    const double sigma = square.cls.grid.sigma;

    auto p = [](const Vec<2>& x) {
        return x[0] * x[0] - 2 * x[0] * x[1] + 3 * x[1] + 1;
    };
    auto dp = [](const MultiIndex<2>& a, const Vec<2>& x) -> double {
        if (a[0] == 0 && a[1] == 0) return x[0] * x[0] - 2 * x[0] * x[1] + 3 * x[1] + 1;
        if (a[0] == 1 && a[1] == 0) return 2 * x[0] - 2 * x[1];
        if (a[0] == 0 && a[1] == 1) return -2 * x[0] + 3;
        if (a[0] == 2 && a[1] == 0) return 2;
        if (a[0] == 1 && a[1] == 1) return -2;
        return 0; // (0,2) and beyond
    };

    std::vector<double> coeff(space.size());
    for (std::size_t n = 0; n < square.cls.nodes.size(); ++n) {
        Vec<2> xn = square.cls.grid.node_position(square.cls.nodes[n]);
        for (int m = 0; m < space.monomials_per_node(); ++m) {
            const MultiIndex<2>& a = space.monomials()[m];
            double scale = std::pow(sigma, a[0] + a[1]) / mi_factorial<2>(a);
            coeff[space.dof_index(static_cast<int>(n), m)] = scale * dp(a, xn);
        }
    }

    oracles::Rng rng(79);
    BasisValues vals;
    for (int i = 0; i < 300; ++i) {
        Vec<2> x{rng.uniform(-0.49, 0.49), rng.uniform(-0.49, 0.49)};
        space.eval_basis(x, vals);
        double got = 0;
        for (std::size_t j = 0; j < vals.dof.size(); ++j)
            got += coeff[vals.dof[j]] * vals.val[j];
        CHECK(got == Catch::Approx(p(x)).margin(1e-10));
    }
}

TEST_CASE("basis derivatives match finite differences") {
    Setup<2> square(0.5, Vec<2>{-0.25, -0.25}, 2);
    PufemSpace<2> space(square.cls, table(), 1);
    oracles::Rng rng(80);
    BasisValues plus, minus;
    BasisDerivatives der;
    const auto& betas = PufemSpace<2>::deriv_exponents(1);
    int slot_dx = -1, slot_dy = -1;
    for (std::size_t di = 0; di < betas.size(); ++di) {
        if (betas[di][0] == 1 && betas[di][1] == 0) slot_dx = static_cast<int>(di);
        if (betas[di][0] == 0 && betas[di][1] == 1) slot_dy = static_cast<int>(di);
    }
    REQUIRE(slot_dx >= 0);
    REQUIRE(slot_dy >= 0);

    const double h = 1e-6;
    for (int i = 0; i < 50; ++i) {
        Vec<2> x{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
        space.eval_basis_derivatives(x, 1, der);
        for (int axis = 0; axis < 2; ++axis) {
            Vec<2> xp = x, xm = x;
            xp[axis] += h;
            xm[axis] -= h;
            space.eval_basis(xp, plus);
            space.eval_basis(xm, minus);
            if (plus.dof != der.dof || minus.dof != der.dof) continue; // crossed an element
            int slot = axis == 0 ? slot_dx : slot_dy;
            for (std::size_t j = 0; j < der.dof.size(); ++j) {
                double fd = (plus.val[j] - minus.val[j]) / (2 * h);
                double got = der.val[j * der.n_deriv + slot];
                double scale = std::max({1.0, std::abs(got), std::abs(fd)});
                CHECK(std::abs(got - fd) < 1e-6 * scale);
            }
        }
    }
}

TEST_CASE("derivatives scale like inverse powers of sigma") {
    Setup<2> coarse(0.5, Vec<2>{0.0, 0.0}, 2);
    Setup<2> fine(0.25, Vec<2>{0.0, 0.0}, 2);
    PufemSpace<2> sc(coarse.cls, table(), 1);
    PufemSpace<2> sf(fine.cls, table(), 1);

    // compare the same basis function at the same patch-relative position
    Vec<2> xc{0.2, 0.15}, xf{0.1, 0.075};
    BasisDerivatives dc, df;
    sc.eval_basis_derivatives(xc, 2, dc);
    sf.eval_basis_derivatives(xf, 2, df);
    const auto& betas = PufemSpace<2>::deriv_exponents(2);

    // node (0,0) exists in both grids at the origin; constant monomial
    auto find = [](const PufemSpace<2>& s, const BasisDerivatives& d,
                   std::int64_t dof) {
        for (std::size_t j = 0; j < d.dof.size(); ++j)
            if (d.dof[j] == dof) return static_cast<int>(j);
        return -1;
    };
    std::int64_t dof_c = sc.dof_index(coarse.cls.node_id.at(Index<2>{0, 0}), 0);
    std::int64_t dof_f = sf.dof_index(fine.cls.node_id.at(Index<2>{0, 0}), 0);
    int jc = find(sc, dc, dof_c), jf = find(sf, df, dof_f);
    REQUIRE(jc >= 0);
    REQUIRE(jf >= 0);

    for (std::size_t di = 0; di < betas.size(); ++di) {
        int order = betas[di][0] + betas[di][1];
        double vc = dc.val[jc * dc.n_deriv + di];
        double vf = df.val[jf * df.n_deriv + di];
        CHECK(vf == Catch::Approx(std::pow(2.0, order) * vc).epsilon(1e-10).margin(1e-10));
    }
}

TEST_CASE("locate_active rejects points outside the active region") {
    Setup<2> square(0.5, Vec<2>{-0.25, -0.25}, 2);
    PufemSpace<2> space(square.cls, table(), 1);
    CHECK_THROWS(space.locate_active(Vec<2>{2.0, 2.0}));
    CHECK_NOTHROW(space.locate_active(Vec<2>{0.0, 0.0}));
}

TEST_CASE("local dof enumeration covers corners times monomials") {
    Setup<2> square(0.5, Vec<2>{-0.25, -0.25}, 2);
    PufemSpace<2> space(square.cls, table(), 1);
    std::vector<std::int64_t> dofs;
    int id = space.locate_active(Vec<2>{0.0, 0.0});
    space.local_dofs(id, dofs);
    REQUIRE(static_cast<int>(dofs.size()) == space.local_size());
    // all distinct, all valid
    std::sort(dofs.begin(), dofs.end());
    CHECK(std::adjacent_find(dofs.begin(), dofs.end()) == dofs.end());
    CHECK(dofs.front() >= 0);
    CHECK(dofs.back() < space.size());
}
