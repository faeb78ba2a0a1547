#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "quadrature.hpp"

namespace pufem {

/// Simplicial mesh (triangles for D=2, tetrahedra for D=3) with positively
/// oriented cells.
template <int D>
struct SimplicialMesh {
    static_assert(D == 2 || D == 3, "meshes are 2- or 3-dimensional");
    std::vector<Vec<D>> vertices;
    std::vector<std::array<int, D + 1>> cells;
};

template <int D>
double signed_cell_volume(const SimplicialMesh<D>& m, const std::array<int, D + 1>& c) {
    if constexpr (D == 2) {
        Vec<2> a = m.vertices[c[1]] - m.vertices[c[0]];
        Vec<2> b = m.vertices[c[2]] - m.vertices[c[0]];
        return 0.5 * (a[0] * b[1] - a[1] * b[0]);
    } else {
        Vec<3> a = m.vertices[c[1]] - m.vertices[c[0]];
        Vec<3> b = m.vertices[c[2]] - m.vertices[c[0]];
        Vec<3> d = m.vertices[c[3]] - m.vertices[c[0]];
        double det = a[0] * (b[1] * d[2] - b[2] * d[1]) -
                     a[1] * (b[0] * d[2] - b[2] * d[0]) +
                     a[2] * (b[0] * d[1] - b[1] * d[0]);
        return det / 6.0;
    }
}

template <int D>
double total_volume(const SimplicialMesh<D>& m) {
    double v = 0;
    for (const auto& c : m.cells) v += signed_cell_volume(m, c);
    return v;
}

template <int D>
double max_edge_length(const SimplicialMesh<D>& m) {
    double h = 0;
    for (const auto& c : m.cells)
        for (int i = 0; i <= D; ++i)
            for (int j = i + 1; j <= D; ++j)
                h = std::max(h, norm2(m.vertices[c[i]] - m.vertices[c[j]]));
    return h;
}

namespace detail {

template <int D>
void fix_orientation(SimplicialMesh<D>& m, std::array<int, D + 1>& c) {
    if (signed_cell_volume(m, c) < 0) std::swap(c[D - 1], c[D]);
}

} // namespace detail

/// Triangulation of the square (-1/2,1/2)^2 into 4 triangles around the
/// center (one per edge).
inline SimplicialMesh<2> unit_cube_mesh_2d() {
    SimplicialMesh<2> m;
    m.vertices = {{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}, {0.0, 0.0}};
    m.cells = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
    return m;
}

/// Triangulation of the cube (-1/2,1/2)^3 into 24 tetrahedra: cube center +
/// face center + one face edge per cell. All cell volumes are 1/24 and the
/// maximum edge length is 1 (the cube edge).
inline SimplicialMesh<3> unit_cube_mesh_3d() {
    SimplicialMesh<3> m;
    for (int c = 0; c < 8; ++c)
        m.vertices.push_back({(c & 1) ? 0.5 : -0.5, (c & 2) ? 0.5 : -0.5,
                              (c & 4) ? 0.5 : -0.5});
    // face descriptions: axis, side, corner cycle around the face
    struct Face {
        int corners[4];
    };
    const Face faces[6] = {
        {{0, 2, 6, 4}}, // x = -1/2
        {{1, 5, 7, 3}}, // x = +1/2
        {{0, 4, 5, 1}}, // y = -1/2
        {{2, 3, 7, 6}}, // y = +1/2
        {{0, 1, 3, 2}}, // z = -1/2
        {{4, 6, 7, 5}}, // z = +1/2
    };
    int center = static_cast<int>(m.vertices.size());
    m.vertices.push_back({0.0, 0.0, 0.0});
    for (const auto& f : faces) {
        Vec<3> fc{0, 0, 0};
        for (int i = 0; i < 4; ++i) fc = fc + m.vertices[f.corners[i]];
        fc = 0.25 * fc;
        int fci = static_cast<int>(m.vertices.size());
        m.vertices.push_back(fc);
        for (int i = 0; i < 4; ++i) {
            std::array<int, 4> cell{f.corners[i], f.corners[(i + 1) % 4], fci, center};
            detail::fix_orientation(m, cell);
            m.cells.push_back(cell);
        }
    }
    return m;
}

template <int D>
SimplicialMesh<D> unit_cube_mesh() {
    if constexpr (D == 2)
        return unit_cube_mesh_2d();
    else
        return unit_cube_mesh_3d();
}

/// One step of uniform refinement. Triangles split into 4 congruent
/// children; tetrahedra into 8 (4 corner children plus the interior
/// octahedron cut along its shortest diagonal, ties resolved by the fixed
/// diagonal order 01-23, 02-13, 03-12). Total volume is preserved exactly.
template <int D>
SimplicialMesh<D> refine_uniform(const SimplicialMesh<D>& m) {
    SimplicialMesh<D> r;
    r.vertices = m.vertices;
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
        auto key = std::minmax(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        int id = static_cast<int>(r.vertices.size());
        r.vertices.push_back(0.5 * (m.vertices[a] + m.vertices[b]));
        midpoint.emplace(key, id);
        return id;
    };
    for (const auto& c : m.cells) {
        if constexpr (D == 2) {
            int m01 = mid(c[0], c[1]), m02 = mid(c[0], c[2]), m12 = mid(c[1], c[2]);
            std::array<std::array<int, 3>, 4> kids = {{{c[0], m01, m02},
                                                       {c[1], m12, m01},
                                                       {c[2], m02, m12},
                                                       {m01, m12, m02}}};
            for (auto kid : kids) {
                detail::fix_orientation(r, kid);
                r.cells.push_back(kid);
            }
        } else {
            int m01 = mid(c[0], c[1]), m02 = mid(c[0], c[2]), m03 = mid(c[0], c[3]);
            int m12 = mid(c[1], c[2]), m13 = mid(c[1], c[3]), m23 = mid(c[2], c[3]);
            std::array<std::array<int, 4>, 4> corners = {{{c[0], m01, m02, m03},
                                                          {c[1], m01, m12, m13},
                                                          {c[2], m02, m12, m23},
                                                          {c[3], m03, m13, m23}}};
            for (auto kid : corners) {
                detail::fix_orientation(r, kid);
                r.cells.push_back(kid);
            }
            // octahedron m01 m02 m03 m12 m13 m23; diagonals (m01,m23),
            // (m02,m13), (m03,m12) with their equatorial cycles
            const int diag[3][2] = {{m01, m23}, {m02, m13}, {m03, m12}};
            const int ring[3][4] = {{m02, m03, m13, m12},
                                    {m01, m03, m23, m12},
                                    {m01, m02, m23, m13}};
            int best = 0;
            double bl = norm2(r.vertices[m01] - r.vertices[m23]);
            for (int t = 1; t < 3; ++t) {
                double l = norm2(r.vertices[diag[t][0]] - r.vertices[diag[t][1]]);
                if (l < bl - 1e-14) {
                    bl = l;
                    best = t;
                }
            }
            for (int i = 0; i < 4; ++i) {
                std::array<int, 4> kid{diag[best][0], diag[best][1], ring[best][i],
                                       ring[best][(i + 1) % 4]};
                detail::fix_orientation(r, kid);
                r.cells.push_back(kid);
            }
        }
    }
    return r;
}

template <int D>
SimplicialMesh<D> refine_uniform(SimplicialMesh<D> m, int levels) {
    for (int l = 0; l < levels; ++l) m = refine_uniform(m);
    return m;
}

template <int D>
SimplicialMesh<D> translate(SimplicialMesh<D> m, const no_deduce<Vec<D>>& t) {
    for (auto& v : m.vertices) v = v + t;
    return m;
}

/// Quadrature rule over a meshed domain: nodes with positive weights.
template <int D>
struct QuadratureRule {
    std::vector<Vec<D>> points;
    std::vector<double> weights;
};

/// Midpoint rule (order m = 1): one node per cell at the centroid, weight =
/// cell volume. Rejects nonpositively oriented cells.
template <int D>
QuadratureRule<D> midpoint_rule(const SimplicialMesh<D>& m) {
    QuadratureRule<D> q;
    q.points.reserve(m.cells.size());
    q.weights.reserve(m.cells.size());
    for (const auto& c : m.cells) {
        double v = signed_cell_volume(m, c);
        check(v > 0, "midpoint_rule: nonpositive cell volume");
        Vec<D> p{};
        for (int i = 0; i <= D; ++i) p = p + m.vertices[c[i]];
        q.points.push_back(1.0 / (D + 1) * p);
        q.weights.push_back(v);
    }
    return q;
}

/// Per-cell tensor Gauss rule of q points per axis, collapsed onto each
/// simplex (Duffy map). All weights positive; used for error norms.
template <int D>
QuadratureRule<D> cell_gauss_rule(const SimplicialMesh<D>& m, int q) {
    require(q >= 1, "cell_gauss_rule: q >= 1");
    Quad1D g = gauss_legendre(q);
    // shift to [0,1]
    for (int i = 0; i < q; ++i) {
        g.x[i] = 0.5 * (g.x[i] + 1.0);
        g.w[i] = 0.5 * g.w[i];
    }
    QuadratureRule<D> rule;
    for (const auto& c : m.cells) {
        double vol = signed_cell_volume(m, c);
        check(vol > 0, "cell_gauss_rule: nonpositive cell volume");
        const Vec<D>& a = m.vertices[c[0]];
        if constexpr (D == 2) {
            Vec<2> e1 = m.vertices[c[1]] - a, e2 = m.vertices[c[2]] - a;
            for (int i = 0; i < q; ++i)
                for (int j = 0; j < q; ++j) {
                    double xi = g.x[i], eta = g.x[j];
                    double l1 = xi, l2 = eta * (1 - xi);
                    rule.points.push_back(a + l1 * e1 + l2 * e2);
                    rule.weights.push_back(2.0 * vol * (1 - xi) * g.w[i] * g.w[j]);
                }
        } else {
            Vec<3> e1 = m.vertices[c[1]] - a, e2 = m.vertices[c[2]] - a,
                   e3 = m.vertices[c[3]] - a;
            for (int i = 0; i < q; ++i)
                for (int j = 0; j < q; ++j)
                    for (int k = 0; k < q; ++k) {
                        double xi = g.x[i], eta = g.x[j], zt = g.x[k];
                        double l1 = xi, l2 = eta * (1 - xi),
                               l3 = zt * (1 - xi) * (1 - eta);
                        rule.points.push_back(a + l1 * e1 + l2 * e2 + l3 * e3);
                        rule.weights.push_back(6.0 * vol * (1 - xi) * (1 - xi) *
                                               (1 - eta) * g.w[i] * g.w[j] * g.w[k]);
                    }
        }
    }
    return rule;
}

// ---- plain-text mesh format -------------------------------------------------
// header "dim nv nc", nv coordinate lines, nc lines of D+1 zero-based
// vertex indices.

template <int D>
void write_mesh(const SimplicialMesh<D>& m, std::ostream& os) {
    os << D << ' ' << m.vertices.size() << ' ' << m.cells.size() << '\n';
    char buf[96];
    for (const auto& v : m.vertices) {
        if constexpr (D == 2)
            std::snprintf(buf, sizeof buf, "%.17g %.17g\n", v[0], v[1]);
        else
            std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v[0], v[1], v[2]);
        os << buf;
    }
    for (const auto& c : m.cells) {
        for (int i = 0; i <= D; ++i) os << c[i] << (i == D ? '\n' : ' ');
    }
}

template <int D>
SimplicialMesh<D> read_mesh(std::istream& is) {
    int dim = 0;
    std::size_t nv = 0, nc = 0;
    check(static_cast<bool>(is >> dim >> nv >> nc), "read_mesh: malformed header");
    check(dim == D, "read_mesh: dimension mismatch");
    SimplicialMesh<D> m;
    m.vertices.resize(nv);
    for (auto& v : m.vertices)
        for (int k = 0; k < D; ++k)
            check(static_cast<bool>(is >> v[k]), "read_mesh: truncated vertex data");
    m.cells.resize(nc);
    for (auto& c : m.cells) {
        for (int i = 0; i <= D; ++i) {
            check(static_cast<bool>(is >> c[i]), "read_mesh: truncated cell data");
            check(c[i] >= 0 && c[i] < static_cast<int>(nv),
                  "read_mesh: vertex index out of range");
        }
        check(signed_cell_volume(m, c) > 0, "read_mesh: nonpositive cell volume");
    }
    return m;
}

// ---- particle fields --------------------------------------------------------

/// Weighted point values ("circulations"): Gamma_{i,c} = w_i * u_c(x_i) for a
/// quadrature rule (x_i, w_i). Flattened row-major, comps values per point.
template <int D>
struct Particles {
    std::vector<Vec<D>> x;
    std::vector<double> gamma;
    int comps = 1;

    std::size_t size() const { return x.size(); }
    double value(std::size_t i, int c) const { return gamma[i * comps + c]; }
};

/// Sample a smooth field into particles; fn(x, out) writes comps values.
template <int D, class F>
Particles<D> sample_particles(const QuadratureRule<D>& rule, int comps, F&& fn) {
    require(comps >= 1, "sample_particles: comps >= 1");
    Particles<D> p;
    p.comps = comps;
    p.x = rule.points;
    p.gamma.resize(rule.points.size() * comps);
    std::vector<double> buf(comps);
    for (std::size_t i = 0; i < rule.points.size(); ++i) {
        fn(rule.points[i], buf.data());
        for (int c = 0; c < comps; ++c) p.gamma[i * comps + c] = rule.weights[i] * buf[c];
    }
    return p;
}

template <int D>
void write_particles_csv(const Particles<D>& p, std::ostream& os) {
    for (int k = 0; k < D; ++k) os << 'x' << k << ',';
    for (int c = 0; c < p.comps; ++c) os << "gamma" << c << (c + 1 == p.comps ? '\n' : ',');
    char buf[32];
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (int k = 0; k < D; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g,", p.x[i][k]);
            os << buf;
        }
        for (int c = 0; c < p.comps; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", p.value(i, c));
            os << buf << (c + 1 == p.comps ? '\n' : ',');
        }
    }
}

} // namespace pufem
