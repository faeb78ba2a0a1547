#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <limits>
#include <ostream>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "mesh.hpp"
#include "partition.hpp"

namespace pufem {

/// Axis-aligned Cartesian grid of spacing sigma. Nodes sit at
/// origin + sigma * i, element Q_i spans [node_i, node_i + sigma)^d, the
/// patch of node i is the open cube of width 2*sigma centered at the node.
template <int D>
struct CartesianGrid {
    static_assert(D == 2 || D == 3, "grids are 2- or 3-dimensional");
    double sigma = 1.0;
    Vec<D> origin{};

    Vec<D> node_position(const Index<D>& i) const {
        Vec<D> p{};
        for (int k = 0; k < D; ++k) p[k] = origin[k] + sigma * double(i[k]);
        return p;
    }

    /// Index of the element containing x (points on a grid plane belong to
    /// the upper element, matching floor()).
    Index<D> locate(const Vec<D>& x) const {
        Index<D> i{};
        for (int k = 0; k < D; ++k)
            i[k] = static_cast<std::int64_t>(std::floor((x[k] - origin[k]) / sigma));
        return i;
    }
};

/// Domain description for the fictitious-domain classification. `inside` is
/// the predicate of the CLOSED domain (points on the boundary pass), so that
/// an exactly grid-aligned domain classifies its tiles as interior. `mesh`
/// carries the particle mesh whose quadrature nodes force activity.
///
/// `box_classify`, when set, decides an axis-aligned box [lo, hi] exactly:
/// +1 contained in the closed domain, 0 positive-measure overlap, -1 no
/// overlap (zero-measure face contact counts as -1). Point sampling can miss
/// arbitrarily thin boundary slivers, so domains that admit an exact test
/// should provide one; classification then never consults `inside`.
template <int D>
struct DomainGeometry {
    std::function<bool(const Vec<D>&)> inside;
    const SimplicialMesh<D>* mesh = nullptr;
    std::function<int(const Vec<D>&, const Vec<D>&)> box_classify;
};

/// Closed cube (-w,w)^D carrying the given mesh.
template <int D>
DomainGeometry<D> cube_domain(const SimplicialMesh<D>& mesh, double half_width = 0.5,
                              double tol = 1e-12) {
    DomainGeometry<D> g;
    g.mesh = &mesh;
    double w = half_width + tol;
    g.inside = [w](const Vec<D>& x) {
        for (int k = 0; k < D; ++k)
            if (std::abs(x[k]) > w) return false;
        return true;
    };
    g.box_classify = [w, half_width, tol](const Vec<D>& lo, const Vec<D>& hi) {
        bool contained = true;
        for (int k = 0; k < D; ++k) {
            if (std::min(hi[k], half_width) - std::max(lo[k], -half_width) <= tol)
                return -1;
            contained = contained && lo[k] >= -w && hi[k] <= w;
        }
        return contained ? 1 : 0;
    };
    return g;
}

enum class ElementClass : char { cut = 0, interior = 1 };

/// Result of classify_elements: the active elements (lexicographically
/// sorted), their classes, and the active nodes (nodes incident to at least
/// one active element).
template <int D>
struct GridClassification {
    CartesianGrid<D> grid;
    std::vector<Index<D>> elements;
    std::vector<ElementClass> element_class;
    std::vector<Index<D>> nodes;
    std::vector<int> chain_distance; // per element, filled by verify_chain_condition
    std::unordered_map<Index<D>, int, IndexHash<D>> element_id;
    std::unordered_map<Index<D>, int, IndexHash<D>> node_id;

    int n_interior = 0;
    int n_cut = 0;

    bool is_active(const Index<D>& e) const { return element_id.count(e) != 0; }

    int id_of(const Index<D>& e) const {
        auto it = element_id.find(e);
        return it == element_id.end() ? -1 : it->second;
    }

    /// Rebuild lookup tables, node list and class counts from elements /
    /// element_class (also used by tests constructing synthetic layouts).
    void finalize() {
        std::vector<std::pair<Index<D>, ElementClass>> order(elements.size());
        for (std::size_t i = 0; i < elements.size(); ++i)
            order[i] = {elements[i], element_class[i]};
        std::sort(order.begin(), order.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        element_id.clear();
        node_id.clear();
        nodes.clear();
        n_interior = n_cut = 0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            elements[i] = order[i].first;
            element_class[i] = order[i].second;
            element_id.emplace(elements[i], static_cast<int>(i));
            (element_class[i] == ElementClass::interior ? n_interior : n_cut) += 1;
        }
        for (const auto& e : elements) {
            Index<D> lo = e, hi = e;
            for (int k = 0; k < D; ++k) hi[k] += 1;
            for_each_index<D>(lo, hi, [&](const Index<D>& n) {
                if (!node_id.count(n)) node_id.emplace(n, 0);
            });
        }
        nodes.reserve(node_id.size());
        for (const auto& kv : node_id) nodes.push_back(kv.first);
        std::sort(nodes.begin(), nodes.end());
        for (std::size_t i = 0; i < nodes.size(); ++i)
            node_id[nodes[i]] = static_cast<int>(i);
        chain_distance.assign(elements.size(), -1);
    }
};

/// Classify grid elements against a domain. With an exact box test the
/// element is active iff its box overlaps the domain in positive measure (or
/// holds a quadrature node of geom.mesh), interior iff contained. Otherwise
/// an element is active iff it contains a quadrature node of geom.mesh
/// (midpoint rule) or one of its samples_per_axis^D interior sample points is
/// inside; an active element is interior iff all 2^D corners and all sample
/// points are inside, else cut.
template <int D>
GridClassification<D> classify_elements(const CartesianGrid<D>& grid,
                                        const DomainGeometry<D>& geom,
                                        int samples_per_axis = 4) {
    require(grid.sigma > 0, "classify_elements: sigma must be positive");
    require(geom.mesh != nullptr, "classify_elements: geometry carries no mesh");
    require(samples_per_axis >= 1, "classify_elements: samples_per_axis >= 1");

    GridClassification<D> cls;
    cls.grid = grid;

    QuadratureRule<D> rule = midpoint_rule(*geom.mesh);
    std::unordered_map<Index<D>, char, IndexHash<D>> has_node;
    for (const auto& p : rule.points) has_node[grid.locate(p)] = 1;

    Vec<D> lo = geom.mesh->vertices.at(0), hi = lo;
    for (const auto& v : geom.mesh->vertices)
        for (int k = 0; k < D; ++k) {
            lo[k] = std::min(lo[k], v[k]);
            hi[k] = std::max(hi[k], v[k]);
        }
    Index<D> ilo = grid.locate(lo), ihi = grid.locate(hi);
    for (int k = 0; k < D; ++k) {
        ilo[k] -= 1;
        ihi[k] += 1;
    }

    const double ds = 1.0 / samples_per_axis;
    for_each_index<D>(ilo, ihi, [&](const Index<D>& e) {
        Vec<D> base = grid.node_position(e);
        bool active, interior;
        if (geom.box_classify) {
            Vec<D> bhi = base;
            for (int k = 0; k < D; ++k) bhi[k] += grid.sigma;
            int side = geom.box_classify(base, bhi);
            active = side >= 0 || has_node.count(e) != 0;
            interior = side > 0;
        } else {
            active = has_node.count(e) != 0;
            bool all_samples_inside = true;
            Index<D> slo{}, shi{};
            for (int k = 0; k < D; ++k) shi[k] = samples_per_axis - 1;
            for_each_index<D>(slo, shi, [&](const Index<D>& s) {
                if (active && !all_samples_inside) return;
                Vec<D> p{};
                for (int k = 0; k < D; ++k)
                    p[k] = base[k] + grid.sigma * ds * (double(s[k]) + 0.5);
                bool in = geom.inside(p);
                active = active || in;
                all_samples_inside = all_samples_inside && in;
            });
            interior = active && all_samples_inside;
            if (interior) {
                Index<D> clo{}, chi{};
                for (int k = 0; k < D; ++k) chi[k] = 1;
                for_each_index<D>(clo, chi, [&](const Index<D>& c) {
                    if (!interior) return;
                    Vec<D> p{};
                    for (int k = 0; k < D; ++k)
                        p[k] = base[k] + grid.sigma * double(c[k]);
                    interior = geom.inside(p);
                });
            }
        }
        if (!active) return;
        cls.elements.push_back(e);
        cls.element_class.push_back(interior ? ElementClass::interior
                                             : ElementClass::cut);
    });
    cls.finalize();
    return cls;
}

/// Active elements incident to a node (up to 2^D).
template <int D>
std::vector<int> incident_elements(const GridClassification<D>& cls,
                                   const no_deduce<Index<D>>& node) {
    std::vector<int> out;
    Index<D> clo{}, chi{};
    for (int k = 0; k < D; ++k) chi[k] = 1;
    for_each_index<D>(clo, chi, [&](const Index<D>& c) {
        Index<D> e = node;
        for (int k = 0; k < D; ++k) e[k] -= c[k];
        int id = cls.id_of(e);
        if (id >= 0) out.push_back(id);
    });
    return out;
}

/// True iff the node's patch intersects a cut element (then every basis
/// function at this node has "cut support" for the assembly pair rule).
template <int D>
bool node_has_cut_support(const GridClassification<D>& cls,
                          const no_deduce<Index<D>>& node) {
    for (int id : incident_elements(cls, node))
        if (cls.element_class[id] == ElementClass::cut) return true;
    return false;
}

namespace detail {

/// Multi-source BFS from the interior elements, expanding through cut
/// elements only (node-sharing adjacency). Returns per-element distances
/// (interior 0, unreachable cut -1).
template <int D>
std::vector<int> chain_distances(const GridClassification<D>& cls) {
    std::vector<int> dist(cls.elements.size(), -1);
    std::deque<int> queue;
    for (std::size_t i = 0; i < cls.elements.size(); ++i)
        if (cls.element_class[i] == ElementClass::interior) {
            dist[i] = 0;
            queue.push_back(static_cast<int>(i));
        }
    Index<D> nlo{}, nhi{};
    for (int k = 0; k < D; ++k) {
        nlo[k] = -1;
        nhi[k] = 1;
    }
    while (!queue.empty()) {
        int cur = queue.front();
        queue.pop_front();
        Index<D> base = cls.elements[cur];
        for_each_index<D>(nlo, nhi, [&](const Index<D>& off) {
            Index<D> nb = base;
            bool self = true;
            for (int k = 0; k < D; ++k) {
                nb[k] += off[k];
                self = self && off[k] == 0;
            }
            if (self) return;
            int id = cls.id_of(nb);
            if (id < 0 || dist[id] >= 0) return;
            if (cls.element_class[id] != ElementClass::cut) return;
            dist[id] = dist[cur] + 1;
            queue.push_back(id);
        });
    }
    return dist;
}

} // namespace detail

/// Verify the chain condition: every cut element must reach an interior
/// element through cut elements in at most k_max steps. Returns the maximal
/// distance over cut elements (0 when there are none) and stores per-element
/// distances; throws when a cut element is unreachable or too far.
template <int D>
int verify_chain_condition(GridClassification<D>& cls, int k_max = 3) {
    require(k_max >= 1, "verify_chain_condition: k_max >= 1");
    cls.chain_distance = detail::chain_distances(cls);
    int worst = 0;
    for (std::size_t i = 0; i < cls.elements.size(); ++i) {
        if (cls.element_class[i] != ElementClass::cut) continue;
        int d = cls.chain_distance[i];
        check(d >= 0, "chain condition violated: cut element unreachable from the interior");
        check(d <= k_max, "chain condition violated: cut element farther than k_max");
        worst = std::max(worst, d);
    }
    return worst;
}

/// Optional repair pass: reclassify interior elements to cut along the
/// shortest active path from each offending cut element towards the interior
/// set, until the chain condition verifies or no progress is possible.
template <int D>
void repair_chain_condition(GridClassification<D>& cls, int k_max = 3) {
    Index<D> nlo{}, nhi{};
    for (int k = 0; k < D; ++k) {
        nlo[k] = -1;
        nhi[k] = 1;
    }
    for (int pass = 0; pass < 64; ++pass) {
        std::vector<int> dist = detail::chain_distances(cls);
        std::vector<int> offenders;
        for (std::size_t i = 0; i < cls.elements.size(); ++i)
            if (cls.element_class[i] == ElementClass::cut &&
                (dist[i] < 0 || dist[i] > k_max))
                offenders.push_back(static_cast<int>(i));
        if (offenders.empty()) {
            cls.chain_distance = dist;
            int n_int = 0, n_cut = 0;
            for (auto c : cls.element_class)
                (c == ElementClass::interior ? n_int : n_cut) += 1;
            cls.n_interior = n_int;
            cls.n_cut = n_cut;
            return;
        }
        // BFS over all active elements from the offender; stop at the first
        // interior element that has an interior neighbour, then flip the
        // interior elements on the path to cut.
        bool progress = false;
        for (int off : offenders) {
            std::vector<int> prev(cls.elements.size(), -2);
            std::deque<int> queue{off};
            prev[off] = -1;
            int found = -1;
            while (!queue.empty() && found < 0) {
                int cur = queue.front();
                queue.pop_front();
                Index<D> base = cls.elements[cur];
                for_each_index<D>(nlo, nhi, [&](const Index<D>& o) {
                    if (found >= 0) return;
                    Index<D> nb = base;
                    bool self = true;
                    for (int k = 0; k < D; ++k) {
                        nb[k] += o[k];
                        self = self && o[k] == 0;
                    }
                    if (self) return;
                    int id = cls.id_of(nb);
                    if (id < 0 || prev[id] != -2) return;
                    prev[id] = cur;
                    if (cls.element_class[id] == ElementClass::interior)
                        found = id;
                    else
                        queue.push_back(id);
                });
            }
            if (found < 0) continue;
            for (int cur = found; cur != off && cur >= 0; cur = prev[cur])
                if (cls.element_class[cur] == ElementClass::interior) {
                    cls.element_class[cur] = ElementClass::cut;
                    progress = true;
                }
        }
        check(progress, "repair_chain_condition: no interior element reachable");
    }
    check(false, "repair_chain_condition: did not converge");
}

/// Debug CSV: element index, class, chain distance (verify first).
template <int D>
void dump_classification_csv(const GridClassification<D>& cls, std::ostream& os) {
    for (int k = 0; k < D; ++k) os << 'i' << k << ',';
    os << "class,chain\n";
    for (std::size_t i = 0; i < cls.elements.size(); ++i) {
        for (int k = 0; k < D; ++k) os << cls.elements[i][k] << ',';
        os << (cls.element_class[i] == ElementClass::interior ? "interior" : "cut")
           << ',' << (cls.chain_distance.empty() ? -1 : cls.chain_distance[i]) << '\n';
    }
}

/// Partition-of-unity weight of a grid node at x: prod_k phi((x_k - n_k)/sigma).
template <int D>
double pou_value(const PartitionFunction& pf, const CartesianGrid<D>& grid,
                 const no_deduce<Index<D>>& node, const no_deduce<Vec<D>>& x) {
    Vec<D> n = grid.node_position(node);
    double v = 1;
    for (int k = 0; k < D; ++k) {
        v *= pf.value((x[k] - n[k]) / grid.sigma);
        if (v == 0) return 0;
    }
    return v;
}

/// Sum of all node weights at x (the 2^D nodes of the containing element
/// carry all nonzero contributions). Equals 1 up to table tolerance.
template <int D>
double pou_sum(const PartitionFunction& pf, const CartesianGrid<D>& grid,
               const no_deduce<Vec<D>>& x) {
    Index<D> e = grid.locate(x);
    double s = 0;
    Index<D> clo{}, chi{};
    for (int k = 0; k < D; ++k) chi[k] = 1;
    for_each_index<D>(clo, chi, [&](const Index<D>& c) {
        Index<D> n = e;
        for (int k = 0; k < D; ++k) n[k] += c[k];
        s += pou_value(pf, grid, n, x);
    });
    return s;
}

} // namespace pufem
