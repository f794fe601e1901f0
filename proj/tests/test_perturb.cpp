#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "fixtures.hpp"
#include "minesched/anneal.hpp"
#include "minesched/perturb.hpp"

using namespace minesched;
using namespace minesched::testfx;

namespace {

Flowsheet chain_fs(int n_periods) {  // mine -> mill -> market: one destination, no splitters
    std::vector<FlowNode> nodes(3);
    nodes[0].id = "mine";
    nodes[0].kind = NodeKind::mine;
    nodes[1].id = "mill";
    nodes[1].kind = NodeKind::processor;
    nodes[1].recovery = 0.9;
    nodes[1].processing_cost = 8.0;
    nodes[2].id = "market";
    nodes[2].kind = NodeKind::market_sink;
    return Flowsheet(std::move(nodes), {{0, 1}, {1, 2}}, n_periods);
}

/// Column of `n` blocks (1x1xn), uniform attributes.
BlockModel column_model(int n, double tonnage = 100.0, double grade = 0.5) {
    SupplyScenarioSpec spec;
    spec.n_scenarios = 1;
    std::vector<BlockAttributes> blocks(static_cast<size_t>(n));
    for (auto& b : blocks) {
        b.tonnage = tonnage;
        b.grade = {grade};
    }
    return BlockModel({1, 1, n}, std::move(blocks), spec, SlopePattern::five_point);
}

}  // namespace

TEST_CASE("sampling distribution validation") {
    SamplingDistribution d;
    d.probabilities = {0.5, 0.3, 0.2};
    CHECK_NOTHROW(d.finalize());
    d.probabilities = {0.5, -0.1, 0.6};
    CHECK_THROWS_AS(d.finalize(), std::invalid_argument);
    d.probabilities = {0.5, 0.3};  // sums to 0.8
    CHECK_THROWS_AS(d.finalize(), std::invalid_argument);
    CHECK_THROWS_AS(uniform_distribution(0), std::invalid_argument);

    const auto u = uniform_distribution(7);
    CHECK(u.n() == 7);
    CHECK(u.cdf.back() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sample_block reproduces the target frequencies") {
    SamplingDistribution d;
    d.probabilities = {0.5, 0.0, 0.3, 0.2};
    d.finalize();
    auto rng = make_rng(2024, 0);
    const int N = 100000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < N; ++i) ++counts[static_cast<size_t>(sample_block(d, rng))];

    CHECK(counts[1] == 0);  // zero-probability block is unreachable
    for (size_t k : {size_t{0}, size_t{2}, size_t{3}}) {
        const double p = d.probabilities[k];
        const double se = std::sqrt(p * (1.0 - p) / N);
        CHECK(std::abs(counts[k] / static_cast<double>(N) - p) < 3.5 * se);
    }

    SamplingDistribution raw;
    raw.probabilities = {1.0};
    CHECK_THROWS_AS(sample_block(raw, rng), std::logic_error);  // not finalized
    raw.finalize();
    for (int i = 0; i < 10; ++i) CHECK(sample_block(raw, rng) == 0);
}

TEST_CASE("extraction shift on a lone block explores both directions") {
    const BlockModel model = column_model(1);
    const auto dist = uniform_distribution(1);
    auto rng = make_rng(5, 0);

    // T=2, block at period 0: -1 is off the grid, so every draw lands on 1
    {
        const Flowsheet fs = chain_fs(2);
        Solution sol = all_period0(model, fs);
        for (int i = 0; i < 20; ++i) {
            const Perturbation p = perturb_extraction(model, fs, sol, dist, rng);
            REQUIRE(p.kind == PerturbKind::extraction_shift);
            REQUIRE(p.moves.size() == 1);
            CHECK(p.moves[0].block == 0);
            CHECK(p.moves[0].from_period == 0);
            CHECK(p.moves[0].to_period == 1);
            CHECK(p.work_units() == 1);
        }
    }
    // T=1: the only move is dropping off the schedule, and back on from there
    {
        const Flowsheet fs = chain_fs(1);
        Solution sol = all_period0(model, fs);
        Perturbation p = perturb_extraction(model, fs, sol, dist, rng);
        REQUIRE(p.moves.size() == 1);
        CHECK(p.moves[0].to_period == kNotMined);
        apply(sol, p);
        Perturbation q = perturb_extraction(model, fs, sol, dist, rng);
        REQUIRE(q.moves.size() == 1);
        CHECK(q.moves[0].from_period == kNotMined);
        CHECK(q.moves[0].to_period == 0);
    }
}

TEST_CASE("extraction shift drags violated neighbors to the target period") {
    const BlockModel model = column_model(2);  // block 0 above block 1
    const Flowsheet fs = chain_fs(3);
    SamplingDistribution bottom_only;
    bottom_only.probabilities = {0.0, 1.0};
    bottom_only.finalize();
    SamplingDistribution top_only;
    top_only.probabilities = {1.0, 0.0};
    top_only.finalize();
    auto rng = make_rng(17, 1);

    // both at period 2; pulling the bottom block earlier must drag the top one
    bool saw_drag = false, saw_drop = false;
    for (int i = 0; i < 60 && !(saw_drag && saw_drop); ++i) {
        Solution sol = all_period0(model, fs);
        sol.extract_period = {2, 2};
        const Perturbation p = perturb_extraction(model, fs, sol, bottom_only, rng);
        REQUIRE(!p.moves.empty());
        CHECK(p.moves[0].block == 1);
        if (p.moves[0].to_period == 1) {  // moved earlier: predecessor dragged along
            REQUIRE(p.moves.size() == 2);
            CHECK(p.moves[1].block == 0);
            CHECK(p.moves[1].to_period == 1);
            CHECK(p.work_units() == 2);
            saw_drag = true;
        } else {  // moved later, off the schedule; no successors to repair
            CHECK(p.moves[0].to_period == kNotMined);
            CHECK(p.moves.size() == 1);
            saw_drop = true;
        }
        apply(sol, p);
        CHECK_NOTHROW(validate_solution(model, fs, sol));
    }
    CHECK(saw_drag);
    CHECK(saw_drop);

    // both at period 1; pushing the top block later must drag the bottom one
    bool saw_push = false;
    for (int i = 0; i < 60 && !saw_push; ++i) {
        Solution sol = all_period0(model, fs);
        sol.extract_period = {1, 1};
        const Perturbation p = perturb_extraction(model, fs, sol, top_only, rng);
        REQUIRE(!p.moves.empty());
        CHECK(p.moves[0].block == 0);
        if (p.moves[0].to_period == 2) {
            REQUIRE(p.moves.size() == 2);
            CHECK(p.moves[1].block == 1);
            CHECK(p.moves[1].to_period == 2);
            saw_push = true;
        }
        apply(sol, p);
        CHECK_NOTHROW(validate_solution(model, fs, sol));
    }
    CHECK(saw_push);
}

TEST_CASE("a thousand random extraction shifts always stay feasible and undo exactly") {
    const BlockModel model = small_model({3, 3, 3}, 2, 99);
    const Flowsheet fs = rich_fs(4);
    const EconomicTerms econ = econ_with(const_prices(4, 2.78));
    Solution sol = initial_solution(model, fs, econ);
    const auto dist = uniform_distribution(model.n_blocks());
    auto rng = make_rng(7, 3);

    for (int i = 0; i < 1000; ++i) {
        const uint64_t before = solution_hash(sol);
        const uint64_t ver = sol.version;
        const Perturbation p = perturb_extraction(model, fs, sol, dist, rng);
        apply(sol, p);
        CHECK_NOTHROW(validate_solution(model, fs, sol));
        if (i % 2 == 0) {
            undo(sol, p);
            CHECK(solution_hash(sol) == before);
            CHECK(sol.version == ver);
        }
    }
    CHECK_NOTHROW(validate_solution(model, fs, sol));
}

TEST_CASE("mixed perturbations round-trip bit-exactly through apply/undo") {
    const BlockModel model = small_model({3, 2, 2}, 2, 42);
    const Flowsheet fs = rich_fs(3);
    const EconomicTerms econ = econ_with(const_prices(3, 2.78));
    Solution sol = initial_solution(model, fs, econ);
    const auto dist = uniform_distribution(model.n_blocks());
    auto rng = make_rng(8, 4);

    for (int i = 0; i < 1000; ++i) {
        Perturbation p;
        switch (i % 3) {
            case 0: p = perturb_extraction(model, fs, sol, dist, rng); break;
            case 1: p = perturb_destination(fs, sol, rng); break;
            default: p = perturb_stream(fs, sol, rng, 0.3); break;
        }
        const uint64_t before = solution_hash(sol);
        apply(sol, p);
        CHECK_NOTHROW(validate_solution(model, fs, sol));
        undo(sol, p);
        REQUIRE(solution_hash(sol) == before);
        // leave some applied state behind so later moves start elsewhere
        if (i % 5 == 0) apply(sol, p);
    }
}

TEST_CASE("destination change targets one policy cell and never repeats the old slot") {
    const Flowsheet fs = rich_fs(3);
    const BlockModel model = small_model({2, 2, 1}, 1, 1);
    Solution sol = all_period0(model, fs);
    auto rng = make_rng(12, 0);

    std::set<std::pair<int, int>> cells;
    for (int i = 0; i < 300; ++i) {
        const Perturbation p = perturb_destination(fs, sol, rng);
        REQUIRE(p.kind == PerturbKind::destination_change);
        CHECK(p.new_dest != p.old_dest);
        CHECK(p.new_dest >= 0);
        CHECK(p.new_dest < 4);
        CHECK(p.dest_flat == p.bin * 3 + p.period);
        CHECK(p.work_units() == 1);
        cells.insert({p.bin, p.period});
        apply(sol, p);
        CHECK(sol.destination[static_cast<size_t>(p.dest_flat)] == p.new_dest);
        undo(sol, p);
    }
    CHECK(cells.size() == 15);  // every (bin, period) cell eventually drawn
}

TEST_CASE("destination change degrades to a no-op with a single destination") {
    const Flowsheet fs = chain_fs(3);
    const BlockModel model = column_model(2);
    Solution sol = all_period0(model, fs);
    auto rng = make_rng(3, 3);

    const Perturbation p = perturb_destination(fs, sol, rng);
    CHECK(p.kind == PerturbKind::none);
    CHECK(p.is_noop());
    const uint64_t before = solution_hash(sol);
    apply(sol, p);  // version-only edit
    CHECK(sol.version == 1);
    CHECK(solution_hash(sol) == before);
    undo(sol, p);
    CHECK(sol.version == 0);
}

TEST_CASE("stream renormalization follows the keep-and-rescale rule") {
    using vec = std::vector<double>;
    // the worked example: (0.5, 0.5) with +0.2 on the first slot
    const vec a = renormalized_stream({0.5, 0.5}, 0, 0.2);
    CHECK(a[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(0.3).epsilon(1e-12));

    // zero noise leaves the slice untouched, bit for bit
    const vec b0 = {0.25, 0.5, 0.25};
    CHECK(renormalized_stream(b0, 1, 0.0) == b0);

    // clamping at 1 starves the siblings
    const vec c = renormalized_stream({0.9, 0.1}, 0, 0.5);
    CHECK(c[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c[1] == doctest::Approx(0.0).epsilon(1e-12));

    // all-zero siblings share the remainder equally
    const vec d = renormalized_stream({1.0, 0.0, 0.0}, 0, -0.4);
    CHECK(d[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(d[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(d[2] == doctest::Approx(0.2).epsilon(1e-12));

    // a clamp that lands back on the old value is also a no-op
    const vec e0 = {1.0, 0.0};
    CHECK(renormalized_stream(e0, 0, 0.3) == e0);

    CHECK_THROWS_AS(renormalized_stream({0.5, 0.5}, 2, 0.1), std::invalid_argument);

    // fuzz: stays on the simplex for arbitrary slices and noises
    auto rng = make_rng(31, 7);
    for (int i = 0; i < 2000; ++i) {
        const int n = 2 + static_cast<int>(i % 4);
        vec slice(static_cast<size_t>(n));
        double sum = 0.0;
        for (auto& v : slice) sum += (v = uniform01(rng));
        for (auto& v : slice) v /= sum;
        const int slot = static_cast<int>(i) % n;
        const double noise = (uniform01(rng) - 0.5) * 3.0;
        const vec out = renormalized_stream(slice, slot, noise);
        double out_sum = 0.0;
        for (double v : out) {
            CHECK(v >= 0.0);
            out_sum += v;
        }
        CHECK(out_sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("stream perturbation edits one splitter slice and survives validation") {
    const Flowsheet fs = rich_fs(4);
    const BlockModel model = small_model({2, 2, 1}, 1, 9);
    Solution sol = all_period0(model, fs);
    auto rng = make_rng(21, 2);

    for (int i = 0; i < 200; ++i) {
        const Perturbation p = perturb_stream(fs, sol, rng, 0.2);
        REQUIRE(p.kind == PerturbKind::stream_change);
        CHECK(p.splitter == 0);
        CHECK(p.stream_base == fs.stream_offset(p.splitter, p.sp_period));
        REQUIRE(p.old_stream.size() == 3);
        REQUIRE(p.new_stream.size() == 3);
        apply(sol, p);
        CHECK_NOTHROW(validate_solution(model, fs, sol));
        if (i % 2 != 0) undo(sol, p);
    }

    // sigma 0 still yields a structurally valid (if unchanged) edit
    const Perturbation z = perturb_stream(fs, sol, rng, 0.0);
    CHECK(z.kind == PerturbKind::stream_change);
    CHECK(z.new_stream == z.old_stream);
    CHECK_THROWS_AS(perturb_stream(fs, sol, rng, -0.1), std::invalid_argument);

    // no splitters anywhere: a no-op
    const Flowsheet plain = chain_fs(2);
    Solution psol = all_period0(column_model(1), plain);
    CHECK(perturb_stream(plain, psol, rng, 0.2).kind == PerturbKind::none);
}

TEST_CASE("apply and undo enforce the version protocol strictly") {
    const Flowsheet fs = rich_fs(3);
    const BlockModel model = small_model({2, 2, 1}, 1, 13);
    Solution sol = all_period0(model, fs);
    auto rng = make_rng(14, 5);

    Perturbation p = perturb_destination(fs, sol, rng);
    CHECK_THROWS_AS(undo(sol, p), std::logic_error);  // undo before apply
    apply(sol, p);
    CHECK(sol.version == 1);
    CHECK_THROWS_AS(apply(sol, p), std::logic_error);  // double apply
    undo(sol, p);
    CHECK(sol.version == 0);
    CHECK_THROWS_AS(undo(sol, p), std::logic_error);  // double undo

    apply(sol, p);
    Perturbation q = perturb_stream(fs, sol, rng, 0.2);
    apply(sol, q);
    CHECK_THROWS_AS(undo(sol, p), std::logic_error);  // p is no longer the top edit
    undo(sol, q);
    undo(sol, p);
    CHECK(sol.version == 0);

    // a perturbation generated against version 0 cannot apply at version 1
    Perturbation stale = perturb_destination(fs, sol, rng);
    apply(sol, perturb_destination(fs, sol, rng));
    CHECK_THROWS_AS(apply(sol, stale), std::logic_error);
}

TEST_CASE("perturbation size mismatch with the sampling distribution is rejected") {
    const BlockModel model = column_model(3);
    const Flowsheet fs = chain_fs(2);
    const Solution sol = all_period0(model, fs);
    auto rng = make_rng(1, 1);
    const auto wrong = uniform_distribution(2);
    CHECK_THROWS_AS(perturb_extraction(model, fs, sol, wrong, rng), std::invalid_argument);
}
