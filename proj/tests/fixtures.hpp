#pragma once

// Shared builders for small instances, flowsheets, and price sets used across
// the unit tests and acceptance checks.

#include <vector>

#include "minesched/anneal.hpp"
#include "minesched/blockmodel.hpp"
#include "minesched/flowsheet.hpp"
#include "minesched/market.hpp"

namespace minesched::testfx {

inline PricePathSet const_prices(int n_periods, double price, int n_paths = 1) {
    PricePathSet s;
    s.n_paths = n_paths;
    s.n_periods = n_periods;
    s.model_tag = "const";
    s.prices.assign(static_cast<size_t>(n_paths) * static_cast<size_t>(n_periods), price);
    return s;
}

inline BlockModel small_model(std::array<int, 3> dims, int n_scenarios, uint64_t seed,
                              double mean_grade = 0.5, double variance = 0.04) {
    SupplyScenarioSpec spec;
    spec.n_scenarios = n_scenarios;
    spec.mean_grade = mean_grade;
    spec.variance = variance;
    spec.correlation_range = 1.5;
    spec.seed = seed;
    return generate_block_model(dims, spec);
}

/// mine -> {mill, dump}, mill -> market. No splitters.
inline Flowsheet simple_fs(int n_periods, double mine_cap = 0.0, double mill_cap = 0.0,
                           int n_bins = 5) {
    std::vector<FlowNode> nodes(4);
    nodes[0].id = "mine";
    nodes[0].kind = NodeKind::mine;
    nodes[0].capacity_per_period = mine_cap;
    nodes[1].id = "mill";
    nodes[1].kind = NodeKind::processor;
    nodes[1].recovery = 0.9;
    nodes[1].processing_cost = 8.0;
    nodes[1].capacity_per_period = mill_cap;
    nodes[2].id = "dump";
    nodes[2].kind = NodeKind::market_sink;
    nodes[2].price_factor = 0.0;
    nodes[3].id = "market";
    nodes[3].kind = NodeKind::market_sink;
    return Flowsheet(std::move(nodes), {{0, 1}, {0, 2}, {1, 3}}, n_periods, n_bins);
}

/// mine -> {mill, leach, stockpile, dump}; stockpile -> {mill, leach} (a
/// 3-slot splitter with its hold fraction); processors -> market.
inline Flowsheet rich_fs(int n_periods, double mine_cap = 0.0, double mill_cap = 0.0,
                         int n_bins = 5) {
    std::vector<FlowNode> nodes(6);
    nodes[0].id = "mine";
    nodes[0].kind = NodeKind::mine;
    nodes[0].capacity_per_period = mine_cap;
    nodes[1].id = "stockpile";
    nodes[1].kind = NodeKind::stockpile;
    nodes[1].processing_cost = 0.5;
    nodes[2].id = "mill";
    nodes[2].kind = NodeKind::processor;
    nodes[2].recovery = 0.9;
    nodes[2].processing_cost = 8.0;
    nodes[2].capacity_per_period = mill_cap;
    nodes[3].id = "leach";
    nodes[3].kind = NodeKind::processor;
    nodes[3].recovery = 0.55;
    nodes[3].processing_cost = 3.0;
    nodes[4].id = "dump";
    nodes[4].kind = NodeKind::market_sink;
    nodes[4].price_factor = 0.0;
    nodes[5].id = "market";
    nodes[5].kind = NodeKind::market_sink;
    return Flowsheet(std::move(nodes),
                     {{0, 2}, {0, 3}, {0, 1}, {0, 4}, {1, 2}, {1, 3}, {2, 5}, {3, 5}}, n_periods,
                     n_bins);
}

inline EconomicTerms econ_with(PricePathSet prices, double mining_cost = 2.0,
                               double penalty_up = 10.0, double penalty_down = 0.0) {
    EconomicTerms e;
    e.price_paths = std::move(prices);
    e.mining_cost = mining_cost;
    e.penalty_up = penalty_up;
    e.penalty_down = penalty_down;
    return e;
}

/// Everything mined in period 0 (valid when there is no capacity pressure),
/// all bins to destination slot `dest`, uniform streams.
inline Solution all_period0(const BlockModel& model, const Flowsheet& fs, int dest = 0) {
    Solution sol;
    sol.extract_period.assign(static_cast<size_t>(model.n_blocks()), 0);
    sol.destination.assign(static_cast<size_t>(fs.n_bins()) * static_cast<size_t>(fs.n_periods()),
                           dest);
    sol.stream_vars = fs.uniform_stream_vars();
    return sol;
}

inline Solution nothing_mined(const BlockModel& model, const Flowsheet& fs) {
    Solution sol = all_period0(model, fs);
    sol.extract_period.assign(static_cast<size_t>(model.n_blocks()), kNotMined);
    return sol;
}

/// A single-block model with explicit attributes, for hand computations.
inline BlockModel one_block(double tonnage, std::vector<double> grades) {
    SupplyScenarioSpec spec;
    spec.n_scenarios = static_cast<int>(grades.size());
    BlockAttributes b;
    b.tonnage = tonnage;
    b.grade = std::move(grades);
    b.material.assign(b.grade.size(), MaterialType::ore);
    return BlockModel({1, 1, 1}, {b}, spec, SlopePattern::five_point);
}

}  // namespace minesched::testfx
