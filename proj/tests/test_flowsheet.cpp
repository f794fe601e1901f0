#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "minesched/anneal.hpp"
#include "minesched/flowsheet.hpp"
#include "minesched/perturb.hpp"
#include "oracle.hpp"

using namespace minesched;
using namespace minesched::testfx;
using minesched::oracle::oracle_evaluate;

TEST_CASE("flowsheet construction rejects malformed graphs") {
    auto mk_nodes = [] {
        std::vector<FlowNode> n(3);
        n[0].id = "mine";
        n[0].kind = NodeKind::mine;
        n[1].id = "mill";
        n[1].kind = NodeKind::processor;
        n[2].id = "mkt";
        n[2].kind = NodeKind::market_sink;
        return n;
    };
    const std::vector<std::pair<int, int>> ok_arcs{{0, 1}, {1, 2}};

    CHECK_THROWS_AS(Flowsheet(mk_nodes(), ok_arcs, 0), std::invalid_argument);  // bad horizon
    {
        auto n = mk_nodes();
        n[1].id = "mine";  // duplicate id
        CHECK_THROWS_AS(Flowsheet(std::move(n), ok_arcs, 3), std::invalid_argument);
    }
    {
        auto n = mk_nodes();
        n[0].kind = NodeKind::processor;  // no mine
        CHECK_THROWS_AS(Flowsheet(std::move(n), ok_arcs, 3), std::invalid_argument);
    }
    {
        auto n = mk_nodes();
        n[1].kind = NodeKind::mine;  // two mines
        CHECK_THROWS_AS(Flowsheet(std::move(n), ok_arcs, 3), std::invalid_argument);
    }
    {
        auto n = mk_nodes();
        n[1].recovery = 1.5;
        CHECK_THROWS_AS(Flowsheet(std::move(n), ok_arcs, 3), std::invalid_argument);
    }
    {
        auto n = mk_nodes();
        n[1].capacity_per_period = 10.0;
        n[1].target_lower = 20.0;  // target above capacity
        CHECK_THROWS_AS(Flowsheet(std::move(n), ok_arcs, 3), std::invalid_argument);
    }
    // structural defects
    CHECK_THROWS_AS(Flowsheet(mk_nodes(), {{0, 1}, {1, 2}, {1, 1}}, 3), std::invalid_argument);
    CHECK_THROWS_AS(Flowsheet(mk_nodes(), {{0, 1}, {0, 1}, {1, 2}}, 3), std::invalid_argument);
    CHECK_THROWS_AS(Flowsheet(mk_nodes(), {{0, 1}, {1, 2}, {1, 0}}, 3), std::invalid_argument);
    CHECK_THROWS_AS(Flowsheet(mk_nodes(), {{0, 1}, {1, 2}, {2, 1}}, 3), std::invalid_argument);
    CHECK_THROWS_AS(Flowsheet(mk_nodes(), {{0, 1}}, 3), std::invalid_argument);  // mill dead-ends
    {
        // cycle between two interior processors
        std::vector<FlowNode> n(4);
        n[0].id = "mine";
        n[0].kind = NodeKind::mine;
        n[1].id = "a";
        n[1].kind = NodeKind::processor;
        n[2].id = "b";
        n[2].kind = NodeKind::processor;
        n[3].id = "mkt";
        n[3].kind = NodeKind::market_sink;
        CHECK_THROWS_AS(Flowsheet(std::move(n), {{0, 1}, {1, 2}, {2, 1}, {2, 3}}, 3),
                        std::invalid_argument);
    }
}

TEST_CASE("flowsheet derived tables: destinations, splitters, stream layout") {
    const Flowsheet fs = rich_fs(4);
    CHECK(fs.mine() == 0);
    CHECK(fs.destinations() == std::vector<int>{2, 3, 1, 4});  // mill, leach, stockpile, dump

    // Only the stockpile qualifies as a splitter: 2 out-arcs + the hold slot.
    REQUIRE(fs.splitters().size() == 1);
    CHECK(fs.splitters()[0].node == 1);
    CHECK(fs.splitters()[0].n_slots == 3);
    CHECK(fs.splitter_of(1) == 0);
    CHECK(fs.splitter_of(2) == -1);
    CHECK(fs.stream_var_count() == 3 * 4);
    CHECK(fs.stream_offset(0, 2) == 6);

    const auto sv = fs.uniform_stream_vars();
    REQUIRE(sv.size() == 12);
    for (double v : sv) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

    // topological order puts the mine first and only sinks last
    CHECK(fs.topo_order().front() == 0);
    const int last = fs.topo_order().back();
    CHECK(fs.node(last).kind == NodeKind::market_sink);

    CHECK(simple_fs(3).splitters().empty());
    CHECK(simple_fs(3).stream_var_count() == 0);
}

TEST_CASE("solution validation catches every class of defect") {
    const BlockModel model = small_model({2, 2, 2}, 2, 7);
    const Flowsheet fs = rich_fs(3);
    const Solution good = all_period0(model, fs);
    CHECK_NOTHROW(validate_solution(model, fs, good));

    Solution s = good;
    s.extract_period.pop_back();
    CHECK_THROWS_AS(validate_solution(model, fs, s), std::invalid_argument);

    s = good;
    s.destination[0] = 4;  // only 4 destinations: slots 0..3
    CHECK_THROWS_AS(validate_solution(model, fs, s), std::invalid_argument);
    s.destination[0] = -1;
    CHECK_THROWS_AS(validate_solution(model, fs, s), std::invalid_argument);

    s = good;
    s.stream_vars[0] = 0.9;  // slice no longer sums to 1
    CHECK_THROWS_AS(validate_solution(model, fs, s), std::invalid_argument);
    s.stream_vars[0] = -0.1;
    s.stream_vars[1] = 0.6 + 1.0 / 3;
    CHECK_THROWS_AS(validate_solution(model, fs, s), std::invalid_argument);

    s = good;
    s.extract_period[0] = 3;  // beyond horizon
    CHECK_THROWS_AS(validate_solution(model, fs, s), std::invalid_argument);

    // precedence: a bottom block mined while the block above it is not
    s = good;
    const int32_t below = model.id_from_coords(0, 0, 1).index;
    const int32_t above = model.id_from_coords(0, 0, 0).index;
    s.extract_period[static_cast<size_t>(above)] = 2;
    s.extract_period[static_cast<size_t>(below)] = 1;
    CHECK_THROWS_AS(validate_solution(model, fs, s), std::invalid_argument);
    s.extract_period[static_cast<size_t>(above)] = kNotMined;
    CHECK_THROWS_AS(validate_solution(model, fs, s), std::invalid_argument);
    for (int x = 0; x < 2; ++x)  // not mining the bottom layer at all is legal
        for (int y = 0; y < 2; ++y)
            s.extract_period[static_cast<size_t>(model.id_from_coords(x, y, 1).index)] = kNotMined;
    CHECK_NOTHROW(validate_solution(model, fs, s));
}

TEST_CASE("empty schedule evaluates to exactly zero") {
    const BlockModel model = small_model({2, 2, 1}, 3, 11);
    const Flowsheet fs = rich_fs(3);
    const EconomicTerms econ = econ_with(const_prices(3, 2.78, 2));
    const Solution sol = nothing_mined(model, fs);
    const auto b = evaluate(model, fs, econ, sol, all_scenarios(model, econ.price_paths));
    CHECK(b.total == 0.0);
    CHECK(b.revenue_term == 0.0);
    CHECK(b.penalty_term == 0.0);
    for (double v : b.npv) CHECK(v == 0.0);
}

TEST_CASE("single block through the mill matches the hand computation") {
    const BlockModel model = one_block(1000.0, {0.01});
    const Flowsheet fs = simple_fs(1);
    const EconomicTerms econ = econ_with(const_prices(1, 2.78));
    const Solution sol = all_period0(model, fs);  // slot 0 = mill

    const auto b = evaluate(model, fs, econ, sol, all_scenarios(model, econ.price_paths));
    // metal 10 t, recovered 9 t, 2204.62 lb/t at 2.78 /lb; 2/t mining, 8/t milling
    const double revenue = 1000.0 * 0.01 * 0.9 * 2204.62 * 2.78;
    CHECK(revenue == doctest::Approx(55159.5924).epsilon(1e-10));
    CHECK(b.revenue_term == doctest::Approx(revenue - 10000.0).epsilon(1e-12));
    CHECK(b.penalty_term == 0.0);
    CHECK(b.total == doctest::Approx(45159.5924).epsilon(1e-10));
    REQUIRE(b.npv.size() == 1);
    CHECK(b.npv[0] == doctest::Approx(b.total).epsilon(1e-12));

    // routing everything to the dump instead earns nothing and still pays mining
    const Solution dumped = all_period0(model, fs, 1);
    const auto bd = evaluate(model, fs, econ, dumped, all_scenarios(model, econ.price_paths));
    CHECK(bd.total == doctest::Approx(-2000.0).epsilon(1e-12));
}

TEST_CASE("one period of delay discounts revenue and cost by 1/1.1") {
    const BlockModel model = one_block(1000.0, {0.01});
    const Flowsheet fs = simple_fs(2);
    const EconomicTerms econ = econ_with(const_prices(2, 2.78));
    const auto scen = all_scenarios(model, econ.price_paths);

    Solution at0 = all_period0(model, fs);
    Solution at1 = all_period0(model, fs);
    at1.extract_period[0] = 1;
    const auto b0 = evaluate(model, fs, econ, at0, scen);
    const auto b1 = evaluate(model, fs, econ, at1, scen);
    CHECK(b1.total == doctest::Approx(b0.total / 1.1).epsilon(1e-12));
}

TEST_CASE("revenue scales linearly in price when costs are zero") {
    const BlockModel model = one_block(1000.0, {0.01});
    const Flowsheet fs = simple_fs(1);
    EconomicTerms lo = econ_with(const_prices(1, 2.78), /*mining_cost=*/0.0);
    EconomicTerms hi = econ_with(const_prices(1, 5.56), /*mining_cost=*/0.0);
    lo.price_paths.price_floor = 0.0;
    hi.price_paths.price_floor = 0.0;
    Flowsheet free_fs = [&] {
        std::vector<FlowNode> nodes(4);
        nodes[0].id = "mine";
        nodes[0].kind = NodeKind::mine;
        nodes[1].id = "mill";
        nodes[1].kind = NodeKind::processor;
        nodes[1].recovery = 0.9;
        nodes[2].id = "dump";
        nodes[2].kind = NodeKind::market_sink;
        nodes[2].price_factor = 0.0;
        nodes[3].id = "market";
        nodes[3].kind = NodeKind::market_sink;
        return Flowsheet(std::move(nodes), {{0, 1}, {0, 2}, {1, 3}}, 1);
    }();
    const Solution sol = all_period0(model, free_fs);
    const auto blo = evaluate(model, free_fs, lo, sol, all_scenarios(model, lo.price_paths));
    const auto bhi = evaluate(model, free_fs, hi, sol, all_scenarios(model, hi.price_paths));
    CHECK(bhi.total == doctest::Approx(2.0 * blo.total).epsilon(1e-12));
}

TEST_CASE("capacity overrun accrues penalty_up per excess tonne, undiscounted") {
    const BlockModel model = one_block(1000.0, {0.01});
    const Flowsheet fs = simple_fs(2, /*mine_cap=*/0.0, /*mill_cap=*/400.0);
    const EconomicTerms econ = econ_with(const_prices(2, 2.78));
    const auto scen = all_scenarios(model, econ.price_paths);

    Solution sol = all_period0(model, fs);
    const auto b0 = evaluate(model, fs, econ, sol, scen);
    CHECK(b0.penalty_term == doctest::Approx(10.0 * 600.0).epsilon(1e-12));

    sol.extract_period[0] = 1;  // the deviation does not discount with the period
    const auto b1 = evaluate(model, fs, econ, sol, scen);
    CHECK(b1.penalty_term == doctest::Approx(10.0 * 600.0).epsilon(1e-12));
    CHECK(b1.revenue_term == doctest::Approx(b0.revenue_term / 1.1).epsilon(1e-12));

    // detail tensors carry the deviation at the mill only
    const auto d = Evaluator(model, fs, econ, scen).evaluate(sol, true);
    CHECK(d.dev_up[d.at(1, 1, 0)] == doctest::Approx(600.0).epsilon(1e-12));
    CHECK(d.dev_up[d.at(1, 0, 0)] == 0.0);
    CHECK(d.dev_up[d.at(0, 1, 0)] == 0.0);
}

TEST_CASE("shortfall below a lower target accrues penalty_down every period") {
    const BlockModel model = one_block(1000.0, {0.01});
    std::vector<FlowNode> nodes(3);
    nodes[0].id = "mine";
    nodes[0].kind = NodeKind::mine;
    nodes[1].id = "mill";
    nodes[1].kind = NodeKind::processor;
    nodes[1].recovery = 0.9;
    nodes[1].capacity_per_period = 2000.0;
    nodes[1].target_lower = 800.0;
    nodes[2].id = "mkt";
    nodes[2].kind = NodeKind::market_sink;
    const Flowsheet fs(std::move(nodes), {{0, 1}, {1, 2}}, 2);
    EconomicTerms econ = econ_with(const_prices(2, 2.78), 2.0, 10.0, /*penalty_down=*/1.5);

    const Solution sol = nothing_mined(model, fs);
    const auto b = evaluate(model, fs, econ, sol, all_scenarios(model, econ.price_paths));
    CHECK(b.penalty_term == doctest::Approx(1.5 * 800.0 * 2).epsilon(1e-12));
    CHECK(b.total == doctest::Approx(-2400.0).epsilon(1e-12));
}

TEST_CASE("stockpile holds material across periods and abandons end inventory") {
    const BlockModel model = one_block(1000.0, {0.01});
    const Flowsheet fs = rich_fs(2);
    const EconomicTerms econ = econ_with(const_prices(2, 2.78));
    const auto scen = all_scenarios(model, econ.price_paths);

    Solution sol = all_period0(model, fs, /*dest=*/2);  // slot 2 = stockpile
    // t0: hold everything; t1: release everything to the mill (slot layout:
    // [hold, ->mill, ->leach] per the stockpile's arc order)
    sol.stream_vars = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

    const auto b = Evaluator(model, fs, econ, scen).evaluate(sol, true);
    const double rev = 1000.0 * 0.01 * 0.9 * 2204.62 * 2.78 / 1.1;
    const double cost = 2.0 * 1000.0 + 0.5 * 1000.0 + 8.0 * 1000.0 / 1.1;
    CHECK(b.total == doctest::Approx(rev - cost).epsilon(1e-12));
    CHECK(b.inv_mass[b.at(1, 0, 0)] == doctest::Approx(1000.0).epsilon(1e-12));
    CHECK(b.inv_mass[b.at(1, 1, 0)] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b.in_mass[b.at(2, 1, 0)] == doctest::Approx(1000.0).epsilon(1e-12));

    // never releasing forfeits the metal entirely: mining + rehandle cost only
    sol.stream_vars = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0};
    const auto held = Evaluator(model, fs, econ, scen).evaluate(sol, true);
    CHECK(held.total == doctest::Approx(-2500.0).epsilon(1e-12));
    CHECK(held.inv_mass[held.at(1, 1, 0)] == doctest::Approx(1000.0).epsilon(1e-12));
}

TEST_CASE("grade bins clamp the top grade into the last bin") {
    SupplyScenarioSpec spec;
    spec.n_scenarios = 1;
    std::vector<BlockAttributes> blocks(2);
    blocks[0].tonnage = 100.0;
    blocks[0].grade = {1.0};  // the max grade
    blocks[1].tonnage = 100.0;
    blocks[1].grade = {0.39};
    const BlockModel model({2, 1, 1}, blocks, spec, SlopePattern::five_point);
    const Flowsheet fs = simple_fs(1);  // 5 bins, width 0.2
    const EconomicTerms econ = econ_with(const_prices(1, 2.78));
    Evaluator ev(model, fs, econ, all_scenarios(model, econ.price_paths));
    CHECK(ev.bin_of(0, 0) == 4);
    CHECK(ev.bin_of(1, 0) == 1);
}

TEST_CASE("mass is conserved from mine to sinks plus leftover inventory") {
    const BlockModel model = small_model({3, 3, 2}, 3, 23);
    const Flowsheet fs = rich_fs(3);
    const EconomicTerms econ = econ_with(const_prices(3, 2.78, 2));
    const auto scen = all_scenarios(model, econ.price_paths);
    Solution sol = initial_solution(model, fs, econ);
    // push some flow through the stockpile so inventory is non-trivial
    for (int t = 0; t < 3; ++t) sol.destination[static_cast<size_t>(t)] = 2;
    sol.stream_vars = {0.6, 0.3, 0.1, 0.5, 0.25, 0.25, 0.9, 0.05, 0.05};

    const auto b = Evaluator(model, fs, econ, scen).evaluate(sol, true);
    double mined_total = 0.0;
    for (int32_t blk = 0; blk < model.n_blocks(); ++blk)
        if (sol.extract_period[static_cast<size_t>(blk)] != kNotMined)
            mined_total += model.attrs(blk).tonnage;

    for (int si = 0; si < b.n_supply; ++si) {
        double delivered = 0.0;
        for (int n = 0; n < fs.n_nodes(); ++n) {
            if (fs.node(n).kind != NodeKind::market_sink) continue;
            for (int t = 0; t < b.n_periods; ++t) delivered += b.in_mass[b.at(n, t, si)];
        }
        double leftover = 0.0;
        for (int n = 0; n < fs.n_nodes(); ++n)
            if (fs.node(n).kind == NodeKind::stockpile)
                leftover += b.inv_mass[b.at(n, b.n_periods - 1, si)];
        CHECK(delivered + leftover == doctest::Approx(mined_total).epsilon(1e-9));
    }
}

TEST_CASE("evaluator agrees with the brute-force oracle on random instances") {
    for (uint64_t seed : {101ull, 202ull, 303ull, 404ull}) {
        const BlockModel model = small_model({3, 2, 2}, 3, seed);
        const Flowsheet fs = rich_fs(4, /*mine_cap=*/45000.0, /*mill_cap=*/25000.0);
        MrjParams mp;
        const EconomicTerms econ = econ_with(simulate_mrj(mp, /*n_periods=*/4, /*n_paths=*/2, seed + 1));
        const auto scen = all_scenarios(model, econ.price_paths);

        Solution sol = initial_solution(model, fs, econ);
        auto rng = make_rng(seed, 99);
        const auto dist = uniform_distribution(model.n_blocks());
        for (int i = 0; i < 60; ++i) {  // visit varied feasible states
            Perturbation p;
            switch (i % 3) {
                case 0: p = perturb_extraction(model, fs, sol, dist, rng); break;
                case 1: p = perturb_destination(fs, sol, rng); break;
                default: p = perturb_stream(fs, sol, rng, 0.25); break;
            }
            apply(sol, p);
        }
        validate_solution(model, fs, sol);

        const auto got = evaluate(model, fs, econ, sol, scen);
        const auto want = oracle_evaluate(model, fs, econ, sol, scen);
        CHECK(got.total == doctest::Approx(want.total).epsilon(1e-9));
        CHECK(got.revenue_term == doctest::Approx(want.revenue_term).epsilon(1e-9));
        CHECK(got.penalty_term == doctest::Approx(want.penalty_term).epsilon(1e-9));
        REQUIRE(got.npv.size() == want.npv.size());
        for (size_t i = 0; i < got.npv.size(); ++i)
            CHECK(got.npv[i] == doctest::Approx(want.npv[i]).epsilon(1e-9));
    }
}

TEST_CASE("delta evaluation equals a from-scratch evaluation for every move kind") {
    const BlockModel model = small_model({3, 3, 2}, 2, 31);
    const Flowsheet fs = rich_fs(3, 60000.0, 40000.0);
    const EconomicTerms econ = econ_with(const_prices(3, 2.78, 2));
    const auto scen = all_scenarios(model, econ.price_paths);

    Evaluator ev(model, fs, econ, scen);
    Solution sol = initial_solution(model, fs, econ);
    ev.evaluate(sol, false);
    auto rng = make_rng(77, 1);
    const auto dist = uniform_distribution(model.n_blocks());

    for (int i = 0; i < 120; ++i) {
        Perturbation p;
        switch (i % 3) {
            case 0: p = perturb_extraction(model, fs, sol, dist, rng); break;
            case 1: p = perturb_destination(fs, sol, rng); break;
            default: p = perturb_stream(fs, sol, rng, 0.2); break;
        }
        apply(sol, p);
        const auto inc = ev.evaluate_delta(sol, p, false);
        const auto full = evaluate(model, fs, econ, sol, scen);
        CHECK(inc.total == doctest::Approx(full.total).epsilon(1e-9));
        CHECK(inc.revenue_term == doctest::Approx(full.revenue_term).epsilon(1e-9));
        CHECK(inc.penalty_term == doctest::Approx(full.penalty_term).epsilon(1e-9));
        if (i % 2 == 0) {
            ev.commit_candidate();
        } else {
            undo(sol, p);
        }
    }
}

TEST_CASE("evaluator enforces the candidate protocol") {
    const BlockModel model = small_model({2, 2, 1}, 2, 5);
    const Flowsheet fs = rich_fs(2);
    const EconomicTerms econ = econ_with(const_prices(2, 2.78));
    Evaluator ev(model, fs, econ, all_scenarios(model, econ.price_paths));
    Solution sol = all_period0(model, fs);
    auto rng = make_rng(1, 2);

    // delta before any committed evaluation
    Perturbation p0 = perturb_destination(fs, sol, rng);
    apply(sol, p0);
    CHECK_THROWS_AS(ev.evaluate_delta(sol, p0, false), std::logic_error);
    undo(sol, p0);

    ev.evaluate(sol, false);
    CHECK(ev.committed_version() == sol.version);
    CHECK_THROWS_AS(ev.commit_candidate(), std::logic_error);

    // perturbation generated against a stale version
    Perturbation p1 = perturb_destination(fs, sol, rng);
    Perturbation p2 = perturb_stream(fs, sol, rng, 0.2);
    apply(sol, p1);
    ev.evaluate_delta(sol, p1, false);
    ev.commit_candidate();
    p2.base_version = 12345;
    CHECK_THROWS_AS(ev.evaluate_delta(sol, p2, false), std::runtime_error);

    // perturbation not applied to the solution yet
    Perturbation p3 = perturb_destination(fs, sol, rng);
    CHECK_THROWS_AS(ev.evaluate_delta(sol, p3, false), std::runtime_error);
}

TEST_CASE("non-finite prices surface as an error instead of a silent NaN") {
    const BlockModel model = one_block(1000.0, {0.01});
    const Flowsheet fs = simple_fs(2);
    EconomicTerms econ = econ_with(const_prices(2, 2.78));
    econ.price_paths.prices[1] = std::nan("");
    const Solution sol = all_period0(model, fs);
    Evaluator ev(model, fs, econ, all_scenarios(model, econ.price_paths));
    CHECK_THROWS_AS(ev.evaluate(sol, false), std::runtime_error);
}

TEST_CASE("scenario subsets average over exactly the selected draws") {
    SupplyScenarioSpec spec;
    spec.n_scenarios = 2;
    std::vector<BlockAttributes> blocks(1);
    blocks[0].tonnage = 1000.0;
    blocks[0].grade = {0.01, 0.03};
    const BlockModel model({1, 1, 1}, blocks, spec, SlopePattern::five_point);
    std::vector<FlowNode> nodes(3);  // cost-free mill so value is linear in grade
    nodes[0].id = "mine";
    nodes[0].kind = NodeKind::mine;
    nodes[1].id = "mill";
    nodes[1].kind = NodeKind::processor;
    nodes[1].recovery = 0.9;
    nodes[2].id = "mkt";
    nodes[2].kind = NodeKind::market_sink;
    const Flowsheet fs(std::move(nodes), {{0, 1}, {1, 2}}, 1);
    EconomicTerms econ = econ_with(const_prices(1, 2.78, 1), 0.0);

    ScenarioSet only0{{0}, {0}};
    ScenarioSet only1{{1}, {0}};
    ScenarioSet both{{0, 1}, {0}};
    const double f0 = evaluate(model, fs, econ, all_period0(model, fs), only0).total;
    const double f1 = evaluate(model, fs, econ, all_period0(model, fs), only1).total;
    const double fb = evaluate(model, fs, econ, all_period0(model, fs), both).total;
    CHECK(f1 == doctest::Approx(3.0 * f0).epsilon(1e-12));  // grade 0.03 vs 0.01, no costs
    CHECK(fb == doctest::Approx(0.5 * (f0 + f1)).epsilon(1e-12));
}

TEST_CASE("npv quantiles interpolate over the joint-scenario NPVs") {
    ObjectiveBreakdown b;
    b.npv = {100.0, 20.0, 40.0, 80.0, 60.0, 10.0, 30.0, 50.0, 70.0, 90.0};
    const std::array<double, 3> probs{0.1, 0.5, 0.9};
    const auto q = npv_quantiles(b, probs);
    CHECK(q[0] == doctest::Approx(19.0).epsilon(1e-12));
    CHECK(q[1] == doctest::Approx(55.0).epsilon(1e-12));
    CHECK(q[2] == doctest::Approx(91.0).epsilon(1e-12));
    ObjectiveBreakdown empty;
    CHECK_THROWS_AS(npv_quantiles(empty, probs), std::invalid_argument);
}

TEST_CASE("breakdown exports: json fields and csv shape") {
    const BlockModel model = one_block(1000.0, {0.01});
    const Flowsheet fs = simple_fs(2);
    const EconomicTerms econ = econ_with(const_prices(2, 2.78));
    const auto scen = all_scenarios(model, econ.price_paths);
    const auto b = Evaluator(model, fs, econ, scen).evaluate(all_period0(model, fs), true);

    const auto j = nlohmann::json::parse(breakdown_json(b));
    CHECK(j.at("total").get<double>() == doctest::Approx(b.total).epsilon(1e-12));
    CHECK(j.at("npv").size() == 1);

    const std::string csv = breakdown_csv(b, fs, econ);
    const auto rows = static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(rows == 1 + 1 * 2 * 4);  // header + supply * periods * nodes
    CHECK(csv.rfind("scenario,period,node,mass,metal,revenue,penalty\n", 0) == 0);

    ObjectiveBreakdown shallow;
    CHECK_THROWS_AS(breakdown_csv(shallow, fs, econ), std::invalid_argument);
}

TEST_CASE("solution json round trip preserves the content hash") {
    const BlockModel model = small_model({2, 2, 2}, 2, 3);
    const Flowsheet fs = rich_fs(3);
    Solution sol = all_period0(model, fs);
    sol.extract_period[3] = 2;
    sol.destination[1] = 3;
    sol.stream_vars[0] = 0.25;
    sol.stream_vars[1] = 0.5;
    sol.stream_vars[2] = 0.25;
    sol.version = 42;  // not part of the content hash, not serialized

    const Solution back = load_solution_json(save_solution_json(sol));
    CHECK(solution_hash(back) == solution_hash(sol));
    CHECK(back.version == 0);
    CHECK_THROWS_AS(load_solution_json("{\"format\":\"other\"}"), std::exception);
}
