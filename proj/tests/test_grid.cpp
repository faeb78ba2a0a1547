#include <catch2/catch_amalgamated.hpp>

#include <pufem/pufem.hpp>

#include "oracles.hpp"

#include <sstream>

using namespace pufem;

TEST_CASE("locate and node_position are consistent") {
    CartesianGrid<2> grid{0.25, Vec<2>{-0.1, 0.3}};
    oracles::Rng rng(101);
    for (int i = 0; i < 200; ++i) {
        Vec<2> x{rng.uniform(-3, 3), rng.uniform(-3, 3)};
        Index<2> e = grid.locate(x);
        Vec<2> lo = grid.node_position(e);
        for (int k = 0; k < 2; ++k) {
            CHECK(lo[k] <= x[k]);
            CHECK(x[k] < lo[k] + grid.sigma + 1e-12);
        }
    }
}

namespace {
template <int D>
GridClassification<D> classify_cube(double sigma, const Vec<D>& origin,
                                    const SimplicialMesh<D>& mesh) {
    CartesianGrid<D> grid{sigma, origin};
    auto geom = cube_domain<D>(mesh);
    return classify_elements(grid, geom);
}
} // namespace

TEST_CASE("aligned 2x2 grid tiles the square: all interior") {
    auto mesh = refine_uniform(unit_cube_mesh_2d(), 2);
    auto cls = classify_cube<2>(0.5, Vec<2>{0.0, 0.0}, mesh);
    CHECK(cls.elements.size() == 4);
    CHECK(cls.n_interior == 4);
    CHECK(cls.n_cut == 0);
    CHECK(cls.nodes.size() == 9);
}

TEST_CASE("quarter-shifted grid: one interior element ringed by cut ones") {
    auto mesh = refine_uniform(unit_cube_mesh_2d(), 2);
    auto cls = classify_cube<2>(0.5, Vec<2>{-0.25, -0.25}, mesh);
    CHECK(cls.elements.size() == 9);
    CHECK(cls.n_interior == 1);
    CHECK(cls.n_cut == 8);
    // the surviving interior element is the central one
    int id = cls.id_of(Index<2>{0, 0});
    REQUIRE(id >= 0);
    CHECK(cls.element_class[id] == ElementClass::interior);
}

TEST_CASE("unit grid captures the cube as a single interior element") {
    auto mesh = refine_uniform(unit_cube_mesh_3d(), 1);
    auto cls = classify_cube<3>(1.0, Vec<3>{-0.5, -0.5, -0.5}, mesh);
    CHECK(cls.elements.size() == 1);
    CHECK(cls.n_interior == 1);
    CHECK(cls.nodes.size() == 8);
}

TEST_CASE("thin boundary slivers are classified active") {
    // the grid plane sits 1e-9 inside the domain boundary; point sampling
    // cannot see the sliver but the exact box test must
    auto mesh = refine_uniform(unit_cube_mesh_2d(), 3);
    auto cls = classify_cube<2>(0.5, Vec<2>{-1e-9, -0.25}, mesh);
    CHECK(cls.elements.size() == 9);
    CHECK(cls.n_interior == 1);
    CHECK(cls.n_cut == 8);
    int sliver = cls.id_of(Index<2>{1, 0});
    REQUIRE(sliver >= 0);
    CHECK(cls.element_class[sliver] == ElementClass::cut);

    // every particle must land in an active element, else assembly refuses
    auto rule = midpoint_rule(mesh);
    for (const auto& p : rule.points) CHECK(cls.is_active(cls.grid.locate(p)));
}

TEST_CASE("zero-measure face contact stays inactive") {
    auto mesh = refine_uniform(unit_cube_mesh_2d(), 2);
    auto cls = classify_cube<2>(0.5, Vec<2>{0.0, 0.0}, mesh);
    CHECK(cls.id_of(Index<2>{1, 0}) == -1);
    CHECK(cls.id_of(Index<2>{-2, -1}) == -1);
}

TEST_CASE("incident elements around a node") {
    auto mesh = refine_uniform(unit_cube_mesh_2d(), 2);
    auto cls = classify_cube<2>(0.5, Vec<2>{-0.25, -0.25}, mesh);
    // node shared by the interior element and three ring elements
    CHECK(incident_elements(cls, Index<2>{0, 0}).size() == 4);
    // extreme corner node of the ring
    CHECK(incident_elements(cls, Index<2>{-1, -1}).size() == 1);
    CHECK(incident_elements(cls, Index<2>{2, 2}).size() == 1);
}

TEST_CASE("cut support detection") {
    auto mesh = refine_uniform(unit_cube_mesh_2d(), 2);
    auto aligned = classify_cube<2>(0.5, Vec<2>{0.0, 0.0}, mesh);
    for (const auto& n : aligned.nodes) CHECK_FALSE(node_has_cut_support(aligned, n));

    auto shifted = classify_cube<2>(0.5, Vec<2>{-0.25, -0.25}, mesh);
    for (const auto& n : shifted.nodes) CHECK(node_has_cut_support(shifted, n));
}

TEST_CASE("chain condition on real classifications") {
    auto mesh = refine_uniform(unit_cube_mesh_2d(), 2);
    auto aligned = classify_cube<2>(0.5, Vec<2>{0.0, 0.0}, mesh);
    CHECK(verify_chain_condition(aligned) == 0);

    auto shifted = classify_cube<2>(0.5, Vec<2>{-0.25, -0.25}, mesh);
    CHECK(verify_chain_condition(shifted) == 1);
    for (std::size_t i = 0; i < shifted.elements.size(); ++i)
        if (shifted.element_class[i] == ElementClass::cut)
            CHECK(shifted.chain_distance[i] == 1);
}

namespace {
// straight tail of cut elements hanging off a single interior one
GridClassification<2> tail_classification(int tail) {
    GridClassification<2> cls;
    cls.grid = CartesianGrid<2>{1.0, Vec<2>{0.0, 0.0}};
    cls.elements.push_back(Index<2>{0, 0});
    cls.element_class.push_back(ElementClass::interior);
    for (int k = 1; k <= tail; ++k) {
        cls.elements.push_back(Index<2>{k, 0});
        cls.element_class.push_back(ElementClass::cut);
    }
    cls.finalize();
    return cls;
}
} // namespace

TEST_CASE("verify_chain_condition flags distant cut elements") {
    auto ok = tail_classification(3);
    CHECK(verify_chain_condition(ok, 3) == 3);

    auto bad = tail_classification(5);
    CHECK_THROWS(verify_chain_condition(bad, 3));
    CHECK(verify_chain_condition(bad, 5) == 5);
}

TEST_CASE("verify_chain_condition flags unreachable cut elements") {
    GridClassification<2> cls;
    cls.grid = CartesianGrid<2>{1.0, Vec<2>{0.0, 0.0}};
    cls.elements = {Index<2>{0, 0}, Index<2>{5, 5}};
    cls.element_class = {ElementClass::interior, ElementClass::cut};
    cls.finalize();
    CHECK_THROWS(verify_chain_condition(cls, 3));
}

TEST_CASE("repair is a no-op on conforming classifications") {
    auto mesh = refine_uniform(unit_cube_mesh_2d(), 2);
    auto cls = classify_cube<2>(0.5, Vec<2>{-0.25, -0.25}, mesh);
    repair_chain_condition(cls, 3);
    CHECK(cls.n_interior == 1);
    CHECK(cls.n_cut == 8);
}

TEST_CASE("repair throws when the classification cannot conform") {
    auto bad = tail_classification(5);
    CHECK_THROWS(repair_chain_condition(bad, 3));
}

TEST_CASE("partition of unity sums to one over the grid") {
    PartitionFunction pf;
    oracles::Rng rng(55);
    for (int trial = 0; trial < 10; ++trial) {
        double sigma = std::pow(10.0, rng.uniform(-3.0, 0.0));
        CartesianGrid<3> grid{sigma, Vec<3>{rng.uniform(-1, 1), rng.uniform(-1, 1),
                                            rng.uniform(-1, 1)}};
        for (int i = 0; i < 100; ++i) {
            Vec<3> x{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
            CHECK(pou_sum(pf, grid, x) == Catch::Approx(1.0).margin(1e-10));
        }
    }
}

TEST_CASE("pou_value scales with sigma") {
    PartitionFunction pf;
    CartesianGrid<2> coarse{0.5, Vec<2>{0, 0}};
    CartesianGrid<2> fine{0.25, Vec<2>{0, 0}};
    // same relative position within the patch of node (1,1)
    Vec<2> xc{0.5 + 0.2, 0.5 - 0.15};
    Vec<2> xf{0.25 + 0.1, 0.25 - 0.075};
    CHECK(pou_value(pf, coarse, Index<2>{1, 1}, xc) ==
          Catch::Approx(pou_value(pf, fine, Index<2>{1, 1}, xf)).epsilon(1e-13));
}

TEST_CASE("classification csv lists every active element") {
    auto mesh = refine_uniform(unit_cube_mesh_2d(), 2);
    auto cls = classify_cube<2>(0.5, Vec<2>{-0.25, -0.25}, mesh);
    verify_chain_condition(cls);
    std::stringstream ss;
    dump_classification_csv(cls, ss);
    std::string line;
    int rows = 0;
    while (std::getline(ss, line))
        if (!line.empty() && line[0] != '#' && line.find("class") == std::string::npos)
            ++rows;
    CHECK(rows == 9);
}
