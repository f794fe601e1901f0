#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "minesched/blockmodel.hpp"
#include "minesched/market.hpp"

namespace minesched {

struct Perturbation;  // perturb.hpp

enum class NodeKind : uint8_t { mine = 0, stockpile = 1, processor = 2, market_sink = 3 };

struct FlowNode {
    std::string id;
    NodeKind kind = NodeKind::processor;
    double capacity_per_period = 0.0;  // inflow tonnes per period; 0 = uncapacitated
    bool capacity_enforced = true;     // accrue per-scenario deviations when capacity > 0
    double target_lower = 0.0;         // inflow tonnes per period; 0 = no lower target
    double recovery = 1.0;             // processors: fraction of metal kept
    double processing_cost = 0.0;      // currency per inflow tonne (non-mine nodes)
    double price_factor = 1.0;         // market sinks: scales the commodity price (0 = dump)
};

/// A splitter is any non-mine node whose outflow is governed by per-period
/// stream variables: slot 0 is the stockpile hold fraction (stockpiles only),
/// remaining slots follow the node's outgoing arcs in arc-definition order.
struct Splitter {
    int node = -1;
    int n_slots = 0;
    int base = 0;  // offset of (period 0, slot 0) in Solution::stream_vars
};

/// Directed material-flow graph: one mine, interior stockpiles/processors,
/// terminal market sinks. Immutable after construction; all derived routing
/// tables are built and validated up front.
class Flowsheet {
public:
    Flowsheet() = default;
    Flowsheet(std::vector<FlowNode> nodes, std::vector<std::pair<int, int>> arcs, int n_periods,
              int n_bins = 5);

    int n_nodes() const { return static_cast<int>(nodes_.size()); }
    const FlowNode& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
    const std::vector<FlowNode>& nodes() const { return nodes_; }
    const std::vector<std::pair<int, int>>& arcs() const { return arcs_; }
    int n_periods() const { return n_periods_; }
    int n_bins() const { return n_bins_; }

    int mine() const { return mine_; }
    /// Successors of the mine, the codomain of the destination policy.
    const std::vector<int>& destinations() const { return destinations_; }
    const std::vector<int>& topo_order() const { return topo_; }
    const std::vector<int>& out_arcs(int node) const {
        return out_arcs_[static_cast<size_t>(node)];
    }

    const std::vector<Splitter>& splitters() const { return splitters_; }
    /// Index into splitters() for a node, or -1.
    int splitter_of(int node) const { return splitter_of_[static_cast<size_t>(node)]; }
    int stream_var_count() const { return stream_var_count_; }
    int stream_offset(int splitter_index, int period) const {
        const auto& sp = splitters_[static_cast<size_t>(splitter_index)];
        return sp.base + period * sp.n_slots;
    }

    /// Equal shares per slot for every splitter and period.
    std::vector<double> uniform_stream_vars() const;

private:
    std::vector<FlowNode> nodes_;
    std::vector<std::pair<int, int>> arcs_;
    int n_periods_ = 0;
    int n_bins_ = 5;

    int mine_ = -1;
    std::vector<int> destinations_;
    std::vector<int> topo_;
    std::vector<std::vector<int>> out_arcs_;
    std::vector<Splitter> splitters_;
    std::vector<int> splitter_of_;
    int stream_var_count_ = 0;
};

struct EconomicTerms {
    PricePathSet price_paths;         // demand scenarios
    double discount_rate = 0.10;      // per period
    double mining_cost = 2.0;         // currency per tonne extracted
    double penalty_up = 10.0;         // currency per tonne of upper deviation
    double penalty_down = 0.0;        // currency per tonne below a lower target
    double unit_conversion = 2204.62; // price units per tonne of metal (lb/t here)
};

constexpr int16_t kNotMined = -1;

struct Solution {
    std::vector<int16_t> extract_period;  // per block; kNotMined or [0, n_periods)
    std::vector<int32_t> destination;     // [bin * n_periods + t] -> destination slot
    std::vector<double> stream_vars;      // Flowsheet splitter layout
    uint64_t version = 0;

    int32_t dest_at(int bin, int t, int n_periods) const {
        return destination[static_cast<size_t>(bin) * static_cast<size_t>(n_periods) +
                           static_cast<size_t>(t)];
    }
};

/// Content hash over schedule, destination policy, and stream variables
/// (version excluded); the restore-correctness checks compare these.
uint64_t solution_hash(const Solution& sol);

/// Throws std::invalid_argument on any reserve/precedence/policy/simplex violation.
void validate_solution(const BlockModel& model, const Flowsheet& fs, const Solution& sol);

/// Joint scenario selection: which supply realizations and price paths to
/// average over. Joint index = supply_position * n_price + price_position.
struct ScenarioSet {
    std::vector<int> supply;  // indices into the model's grade scenarios
    std::vector<int> price;   // indices into EconomicTerms::price_paths
    int n_joint() const { return static_cast<int>(supply.size() * price.size()); }
};

ScenarioSet all_scenarios(const BlockModel& model, const PricePathSet& prices);

struct ObjectiveBreakdown {
    double total = 0.0;         // revenue_term - penalty_term
    double revenue_term = 0.0;  // scenario-averaged discounted revenues minus costs
    double penalty_term = 0.0;  // scenario-averaged deviation penalties (undiscounted)

    // Detailed views, filled only when requested (evaluate defaults to detailed;
    // the solver's delta path skips them).
    bool detailed = false;
    int n_nodes = 0, n_periods = 0, n_supply = 0, n_price = 0;
    std::vector<double> npv;  // per joint scenario, supply-major; penalties excluded
    // per (node, period, supply scenario), index (n * T + t) * n_supply + s:
    std::vector<double> dev_up, dev_down;
    std::vector<double> in_mass, in_metal;    // inflow at each node
    std::vector<double> out_mass, out_metal;  // outflow (post-recovery metal)
    std::vector<double> inv_mass, inv_metal;  // stockpile end-of-period inventory

    size_t at(int node, int t, int s) const {
        return (static_cast<size_t>(node) * static_cast<size_t>(n_periods) +
                static_cast<size_t>(t)) *
                   static_cast<size_t>(n_supply) +
               static_cast<size_t>(s);
    }
};

std::vector<double> npv_quantiles(const ObjectiveBreakdown& b, std::span<const double> probs);

/// Evaluates the scenario-averaged objective over a flow graph, incrementally
/// where possible. Holds per-(bin, period, scenario) injection aggregates so a
/// perturbation re-evaluation only touches the blocks it moved; downstream
/// propagation is recomputed in full (it is small next to the block sums).
///
/// Protocol: evaluate(sol) rebuilds everything and commits. For a candidate
/// move: apply the perturbation to sol, call evaluate_delta(sol, p), then
/// either commit_candidate() on acceptance or undo the perturbation.
class Evaluator {
public:
    Evaluator(const BlockModel& model, const Flowsheet& fs, const EconomicTerms& econ,
              const ScenarioSet& scen);

    ObjectiveBreakdown evaluate(const Solution& sol, bool detailed = true);
    ObjectiveBreakdown evaluate_delta(const Solution& sol, const Perturbation& p,
                                      bool detailed = false);
    void commit_candidate();

    uint64_t committed_version() const { return committed_version_; }
    /// Grade bin of a block under a supply scenario (position in scen.supply).
    int bin_of(int32_t block, int supply_pos) const {
        return bins_[static_cast<size_t>(block) * static_cast<size_t>(n_supply_) +
                     static_cast<size_t>(supply_pos)];
    }
    int n_supply() const { return n_supply_; }
    const BlockModel& model() const { return model_; }
    const Flowsheet& flowsheet() const { return fs_; }
    const EconomicTerms& econ() const { return econ_; }
    const ScenarioSet& scenarios() const { return scen_; }

private:
    struct Totals {
        double revenue = 0.0, penalty = 0.0;
    };
    Totals propagate(const std::vector<double>& bin_mass, const std::vector<double>& bin_metal,
                     const std::vector<double>& mined, const Solution& sol,
                     ObjectiveBreakdown* detail);
    void rebuild_aggregates(const Solution& sol, std::vector<double>& bin_mass,
                            std::vector<double>& bin_metal, std::vector<double>& mined) const;
    size_t agg_index(int bin, int t, int s) const {
        return (static_cast<size_t>(bin) * static_cast<size_t>(T_) + static_cast<size_t>(t)) *
                   static_cast<size_t>(n_supply_) +
               static_cast<size_t>(s);
    }

    const BlockModel& model_;
    const Flowsheet& fs_;
    const EconomicTerms& econ_;
    ScenarioSet scen_;
    int T_ = 0;
    int n_supply_ = 0;

    std::vector<double> disc_;        // (1+r)^-t
    std::vector<double> mean_price_;  // over selected price paths
    std::vector<uint8_t> bins_;       // [block x supply position]
    std::vector<double> metal_;       // tonnage * grade, [block x supply position]

    // committed state (matches committed_version_) and candidate buffers
    std::vector<double> bin_mass_, bin_metal_, mined_;
    std::vector<double> cand_bin_mass_, cand_bin_metal_, cand_mined_;
    uint64_t committed_version_ = 0;
    bool has_committed_ = false;
    bool cand_valid_ = false;
    bool cand_touched_aggregates_ = false;
    uint64_t cand_version_ = 0;

    // propagation scratch
    std::vector<double> scratch_in_mass_, scratch_in_metal_, scratch_inv_mass_,
        scratch_inv_metal_, scratch_rev_units_, scratch_cost_disc_, scratch_penalty_;
};

/// One-shot convenience wrapper over Evaluator::evaluate.
ObjectiveBreakdown evaluate(const BlockModel& model, const Flowsheet& fs,
                            const EconomicTerms& econ, const Solution& sol,
                            const ScenarioSet& scen);

std::string breakdown_json(const ObjectiveBreakdown& b);
/// CSV columns: scenario,period,node,mass,metal,revenue,penalty — per supply
/// scenario; revenue is the price-path-averaged discounted value at sinks.
std::string breakdown_csv(const ObjectiveBreakdown& b, const Flowsheet& fs,
                          const EconomicTerms& econ);

std::string save_solution_json(const Solution& sol);
Solution load_solution_json(const std::string& text);

}  // namespace minesched
