#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "minesched/blockmodel.hpp"

using namespace minesched;

namespace {

BlockModel tiny(std::array<int, 3> dims, int n_scenarios = 1, uint64_t seed = 7,
                SlopePattern pattern = SlopePattern::five_point) {
    SupplyScenarioSpec spec;
    spec.n_scenarios = n_scenarios;
    spec.seed = seed;
    return generate_block_model(dims, spec, pattern);
}

}  // namespace

TEST_CASE("index/coords bijection") {
    auto m = tiny({3, 4, 2});
    for (int i = 0; i < m.n_blocks(); ++i) {
        auto b = m.id_from_index(i);
        auto b2 = m.id_from_coords(b.x, b.y, b.z);
        CHECK(b2.index == i);
        CHECK(m.contains(b));
    }
    CHECK_THROWS_AS(m.id_from_index(-1), std::out_of_range);
    CHECK_THROWS_AS(m.id_from_index(m.n_blocks()), std::out_of_range);
    CHECK_THROWS_AS(m.id_from_coords(3, 0, 0), std::out_of_range);
}

TEST_CASE("single block has no precedence arcs") {
    auto m = tiny({1, 1, 1});
    CHECK(m.predecessors(0).empty());
    CHECK(m.successors(0).empty());
}

TEST_CASE("surface blocks have no predecessors") {
    auto m = tiny({4, 4, 3});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            CHECK(m.predecessors(m.id_from_coords(x, y, 0).index).empty());
}

TEST_CASE("five-point predecessors are the cross at z-1, clipped at borders") {
    auto m = tiny({3, 3, 2});
    // center block at z=1: full 5-block cross above
    {
        auto preds = predecessors(m, m.id_from_coords(1, 1, 1));
        std::set<int32_t> got;
        for (auto& p : preds) {
            CHECK(p.z == 0);
            CHECK(std::abs(p.x - 1) + std::abs(p.y - 1) <= 1);
            got.insert(p.index);
        }
        CHECK(got.size() == 5);
    }
    // corner block at z=1: cross clipped to 3
    {
        auto preds = predecessors(m, m.id_from_coords(0, 0, 1));
        CHECK(preds.size() == 3);
        for (auto& p : preds) CHECK(p.z == 0);
    }
}

TEST_CASE("one-point pattern gives a single predecessor per buried block") {
    auto m = tiny({2, 2, 3}, 1, 7, SlopePattern::one_point);
    for (int z = 1; z < 3; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) {
                auto preds = m.predecessors(m.id_from_coords(x, y, z).index);
                REQUIRE(preds.size() == 1);
                auto p = m.id_from_index(preds[0]);
                CHECK(p.x == x);
                CHECK(p.y == y);
                CHECK(p.z == z - 1);
            }
}

TEST_CASE("predecessors/successors are mutually consistent and acyclic") {
    auto m = tiny({4, 3, 3});
    int arcs_fwd = 0, arcs_bwd = 0;
    for (int i = 0; i < m.n_blocks(); ++i) {
        arcs_fwd += static_cast<int>(m.predecessors(i).size());
        arcs_bwd += static_cast<int>(m.successors(i).size());
        for (int32_t p : m.predecessors(i)) {
            auto& succ = m.successors(p);
            CHECK(std::count(succ.begin(), succ.end(), i) == 1);
            CHECK(m.id_from_index(p).z == m.id_from_index(i).z - 1);  // acyclic by construction
        }
    }
    CHECK(arcs_fwd == arcs_bwd);
}

TEST_CASE("transitive closure of a deep column matches a brute-force walk") {
    auto m = tiny({5, 5, 4});
    // closure via BFS over predecessor arcs
    auto closure = [&](int32_t start) {
        std::set<int32_t> seen;
        std::vector<int32_t> stack{start};
        while (!stack.empty()) {
            int32_t b = stack.back();
            stack.pop_back();
            for (int32_t p : m.predecessors(b))
                if (seen.insert(p).second) stack.push_back(p);
        }
        return seen;
    };
    // brute force: block (x,y,z') is an ancestor of (2,2,3) iff |dx|+|dy| <= z-z'
    auto anc = closure(m.id_from_coords(2, 2, 3).index);
    int expected = 0;
    for (int z = 0; z < 3; ++z)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x) {
                bool in = std::abs(x - 2) + std::abs(y - 2) <= 3 - z;
                expected += in ? 1 : 0;
                CHECK(anc.count(m.id_from_coords(x, y, z).index) == (in ? 1u : 0u));
            }
    CHECK(static_cast<int>(anc.size()) == expected);
}

TEST_CASE("generation is deterministic in the seed") {
    auto a = tiny({6, 5, 4}, 3, 99);
    auto b = tiny({6, 5, 4}, 3, 99);
    auto c = tiny({6, 5, 4}, 3, 100);
    CHECK(a.content_hash() == b.content_hash());
    CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("zero variance collapses every grade to the mean") {
    SupplyScenarioSpec spec;
    spec.n_scenarios = 4;
    spec.variance = 0.0;
    spec.mean_grade = 0.37;
    spec.seed = 5;
    auto m = generate_block_model({3, 3, 3}, spec);
    for (const auto& b : m.blocks())
        for (double g : b.grade) CHECK(g == doctest::Approx(0.37));
}

TEST_CASE("grades are nonnegative and material respects the threshold") {
    auto m = tiny({8, 8, 4}, 5, 11);
    const double thr = m.spec().ore_threshold;
    for (const auto& b : m.blocks()) {
        REQUIRE(b.grade.size() == 5);
        for (size_t s = 0; s < b.grade.size(); ++s) {
            CHECK(b.grade[s] >= 0.0);
            CHECK((b.material[s] == MaterialType::ore) == (b.grade[s] >= thr));
        }
    }
    CHECK(m.total_tonnage() == doctest::Approx(8 * 8 * 4 * 10000.0));
}

TEST_CASE("realized grades have roughly the requested moments") {
    SupplyScenarioSpec spec;
    spec.n_scenarios = 10;
    spec.mean_grade = 0.5;
    spec.variance = 0.01;  // sd = 0.1, mean 5 sds above zero: truncation negligible
    spec.correlation_range = 2.0;
    spec.seed = 3;
    auto m = generate_block_model({10, 10, 6}, spec);
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (const auto& b : m.blocks())
        for (double g : b.grade) {
            sum += g;
            sum2 += g * g;
            ++n;
        }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.05));
    CHECK(var == doctest::Approx(0.01).epsilon(0.35));
}

TEST_CASE("neighbouring blocks are positively correlated in-scenario") {
    SupplyScenarioSpec spec;
    spec.n_scenarios = 20;
    spec.variance = 0.04;
    spec.correlation_range = 3.0;
    spec.seed = 21;
    auto m = generate_block_model({10, 10, 5}, spec);
    // correlation of (g[b], g[b+x]) pooled across scenarios
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    int n = 0;
    for (int s = 0; s < spec.n_scenarios; ++s)
        for (int z = 0; z < 5; ++z)
            for (int y = 0; y < 10; ++y)
                for (int x = 0; x + 1 < 10; ++x) {
                    double a = m.attrs(m.id_from_coords(x, y, z).index).grade[s];
                    double b = m.attrs(m.id_from_coords(x + 1, y, z).index).grade[s];
                    sx += a; sy += b; sxx += a * a; syy += b * b; sxy += a * b;
                    ++n;
                }
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double va = sxx / n - (sx / n) * (sx / n);
    const double vb = syy / n - (sy / n) * (sy / n);
    const double corr = cov / std::sqrt(va * vb);
    CHECK(corr > 0.5);
}

TEST_CASE("scenarios differ from each other") {
    auto m = tiny({6, 6, 3}, 3, 77);
    bool any_differ = false;
    for (const auto& b : m.blocks())
        if (b.grade[0] != b.grade[1]) any_differ = true;
    CHECK(any_differ);
}

TEST_CASE("block graph on (3,3,3) has 27 nodes and 54 undirected edges") {
    auto m = tiny({3, 3, 3});
    auto g = block_graph(m);
    CHECK(g.n_nodes == 27);
    CHECK(g.n_edges() == 54);
    REQUIRE(g.row_begin.size() == 28);
    CHECK(g.row_begin.back() == 108);
    // symmetry: each arc appears in both directions
    for (int b = 0; b < g.n_nodes; ++b)
        for (int32_t e = g.row_begin[b]; e < g.row_begin[b + 1]; ++e) {
            int32_t nb = g.neighbors[e];
            bool back = false;
            for (int32_t e2 = g.row_begin[nb]; e2 < g.row_begin[nb + 1]; ++e2)
                if (g.neighbors[e2] == b) back = true;
            CHECK(back);
        }
    // degree of the center block is 6
    CHECK(g.row_begin[m.id_from_coords(1, 1, 1).index + 1] -
              g.row_begin[m.id_from_coords(1, 1, 1).index] == 6);
}

TEST_CASE("instance JSON round trip preserves content and precedence") {
    auto m = tiny({4, 3, 2}, 2, 123);
    auto text = save_instance_json(m);
    auto back = load_instance_json(text);
    CHECK(back.content_hash() == m.content_hash());
    CHECK(back.nx() == 4);
    CHECK(back.n_scenarios() == 2);
    CHECK(back.slope_pattern() == SlopePattern::five_point);
    for (int i = 0; i < m.n_blocks(); ++i) {
        CHECK(back.predecessors(i) == m.predecessors(i));
        CHECK(back.attrs(i).tonnage == m.attrs(i).tonnage);
        REQUIRE(back.attrs(i).grade.size() == m.attrs(i).grade.size());
        for (size_t s = 0; s < m.attrs(i).grade.size(); ++s) {
            CHECK(back.attrs(i).grade[s] == m.attrs(i).grade[s]);
            CHECK(back.attrs(i).material[s] == m.attrs(i).material[s]);
        }
    }
}

TEST_CASE("generator rejects bad parameters") {
    SupplyScenarioSpec spec;
    CHECK_THROWS_AS(generate_block_model({0, 2, 2}, spec), std::invalid_argument);
    spec.n_scenarios = 0;
    CHECK_THROWS_AS(generate_block_model({2, 2, 2}, spec), std::invalid_argument);
    spec.n_scenarios = 1;
    spec.variance = -1.0;
    CHECK_THROWS_AS(generate_block_model({2, 2, 2}, spec), std::invalid_argument);
    spec.variance = 0.04;
    spec.correlation_range = 0.0;
    CHECK_THROWS_AS(generate_block_model({2, 2, 2}, spec), std::invalid_argument);
}
