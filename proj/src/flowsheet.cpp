#include "minesched/flowsheet.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "minesched/common.hpp"
#include "minesched/perturb.hpp"

namespace minesched {

using json = nlohmann::ordered_json;

Flowsheet::Flowsheet(std::vector<FlowNode> nodes, std::vector<std::pair<int, int>> arcs,
                     int n_periods, int n_bins)
    : nodes_(std::move(nodes)), arcs_(std::move(arcs)), n_periods_(n_periods), n_bins_(n_bins) {
    if (n_periods_ < 1 || n_periods_ > 32767)
        throw std::invalid_argument("Flowsheet: n_periods out of range");
    if (n_bins_ < 1 || n_bins_ > 255) throw std::invalid_argument("Flowsheet: n_bins out of range");
    if (nodes_.empty()) throw std::invalid_argument("Flowsheet: no nodes");

    std::set<std::string> ids;
    for (int i = 0; i < n_nodes(); ++i) {
        const auto& n = nodes_[static_cast<size_t>(i)];
        if (n.id.empty()) throw std::invalid_argument("Flowsheet: empty node id");
        if (!ids.insert(n.id).second)
            throw std::invalid_argument("Flowsheet: duplicate node id " + n.id);
        if (!(n.recovery >= 0.0 && n.recovery <= 1.0))
            throw std::invalid_argument("Flowsheet: recovery must be in [0,1] at " + n.id);
        if (!(n.capacity_per_period >= 0.0))
            throw std::invalid_argument("Flowsheet: negative capacity at " + n.id);
        if (!(n.target_lower >= 0.0))
            throw std::invalid_argument("Flowsheet: negative lower target at " + n.id);
        if (n.capacity_per_period > 0.0 && n.target_lower > n.capacity_per_period)
            throw std::invalid_argument("Flowsheet: lower target above capacity at " + n.id);
        if (!(n.processing_cost >= 0.0))
            throw std::invalid_argument("Flowsheet: negative processing cost at " + n.id);
        if (!(n.price_factor >= 0.0))
            throw std::invalid_argument("Flowsheet: negative price factor at " + n.id);
        if (n.kind == NodeKind::mine) {
            if (mine_ >= 0) throw std::invalid_argument("Flowsheet: more than one mine node");
            mine_ = i;
        }
    }
    if (mine_ < 0) throw std::invalid_argument("Flowsheet: no mine node");

    out_arcs_.assign(static_cast<size_t>(n_nodes()), {});
    std::vector<int> in_degree(static_cast<size_t>(n_nodes()), 0);
    std::set<std::pair<int, int>> seen;
    for (const auto& [from, to] : arcs_) {
        if (from < 0 || from >= n_nodes() || to < 0 || to >= n_nodes())
            throw std::invalid_argument("Flowsheet: arc endpoint out of range");
        if (from == to) throw std::invalid_argument("Flowsheet: self-loop arc");
        if (!seen.insert({from, to}).second)
            throw std::invalid_argument("Flowsheet: duplicate arc");
        if (nodes_[static_cast<size_t>(from)].kind == NodeKind::market_sink)
            throw std::invalid_argument("Flowsheet: arc out of a market sink");
        if (to == mine_) throw std::invalid_argument("Flowsheet: arc into the mine");
        out_arcs_[static_cast<size_t>(from)].push_back(to);
        ++in_degree[static_cast<size_t>(to)];
    }

    bool any_sink = false;
    for (int i = 0; i < n_nodes(); ++i) {
        const auto kind = nodes_[static_cast<size_t>(i)].kind;
        if (kind == NodeKind::market_sink) any_sink = true;
        if (kind != NodeKind::market_sink && out_arcs_[static_cast<size_t>(i)].empty())
            throw std::invalid_argument("Flowsheet: node " + nodes_[static_cast<size_t>(i)].id +
                                        " has no outgoing arc");
    }
    if (!any_sink) throw std::invalid_argument("Flowsheet: no market sink");

    destinations_ = out_arcs_[static_cast<size_t>(mine_)];

    // Kahn topological order
    std::vector<int> queue;
    for (int i = 0; i < n_nodes(); ++i)
        if (in_degree[static_cast<size_t>(i)] == 0) queue.push_back(i);
    for (size_t head = 0; head < queue.size(); ++head) {
        const int n = queue[head];
        topo_.push_back(n);
        for (int to : out_arcs_[static_cast<size_t>(n)])
            if (--in_degree[static_cast<size_t>(to)] == 0) queue.push_back(to);
    }
    if (static_cast<int>(topo_.size()) != n_nodes())
        throw std::invalid_argument("Flowsheet: arcs contain a cycle");

    splitter_of_.assign(static_cast<size_t>(n_nodes()), -1);
    int base = 0;
    for (int i = 0; i < n_nodes(); ++i) {
        if (i == mine_) continue;  // mine routing is the destination policy's job
        const int n_out = static_cast<int>(out_arcs_[static_cast<size_t>(i)].size());
        const int slots = n_out + (nodes_[static_cast<size_t>(i)].kind == NodeKind::stockpile ? 1 : 0);
        if (slots < 2) continue;
        splitter_of_[static_cast<size_t>(i)] = static_cast<int>(splitters_.size());
        splitters_.push_back(Splitter{i, slots, base});
        base += slots * n_periods_;
    }
    stream_var_count_ = base;
}

std::vector<double> Flowsheet::uniform_stream_vars() const {
    std::vector<double> out(static_cast<size_t>(stream_var_count_));
    for (const auto& sp : splitters_) {
        const double share = 1.0 / sp.n_slots;
        for (int t = 0; t < n_periods_; ++t)
            for (int k = 0; k < sp.n_slots; ++k)
                out[static_cast<size_t>(sp.base + t * sp.n_slots + k)] = share;
    }
    return out;
}

uint64_t solution_hash(const Solution& sol) {
    Hasher h;
    h.range<int16_t>(sol.extract_period);
    h.range<int32_t>(sol.destination);
    h.range<double>(sol.stream_vars);
    return h.digest();
}

void validate_solution(const BlockModel& model, const Flowsheet& fs, const Solution& sol) {
    const int T = fs.n_periods();
    if (static_cast<int>(sol.extract_period.size()) != model.n_blocks())
        throw std::invalid_argument("solution: extract_period size mismatch");
    if (static_cast<int>(sol.destination.size()) != fs.n_bins() * T)
        throw std::invalid_argument("solution: destination table size mismatch");
    if (static_cast<int>(sol.stream_vars.size()) != fs.stream_var_count())
        throw std::invalid_argument("solution: stream_vars size mismatch");

    const int n_dest = static_cast<int>(fs.destinations().size());
    for (int32_t d : sol.destination)
        if (d < 0 || d >= n_dest)
            throw std::invalid_argument("solution: destination slot out of range");

    for (const auto& sp : fs.splitters()) {
        for (int t = 0; t < T; ++t) {
            double sum = 0.0;
            for (int k = 0; k < sp.n_slots; ++k) {
                const double v = sol.stream_vars[static_cast<size_t>(sp.base + t * sp.n_slots + k)];
                if (!(v >= 0.0)) throw std::invalid_argument("solution: negative stream variable");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("solution: stream variables do not sum to 1");
        }
    }

    for (int32_t b = 0; b < model.n_blocks(); ++b) {
        const int16_t p = sol.extract_period[static_cast<size_t>(b)];
        if (p != kNotMined && (p < 0 || p >= T))
            throw std::invalid_argument("solution: extraction period out of range");
        if (p == kNotMined) continue;
        for (int32_t pred : model.predecessors(b)) {
            const int16_t pp = sol.extract_period[static_cast<size_t>(pred)];
            if (pp == kNotMined || pp > p)
                throw std::invalid_argument("solution: precedence violation at block " +
                                            std::to_string(b));
        }
    }
}

ScenarioSet all_scenarios(const BlockModel& model, const PricePathSet& prices) {
    ScenarioSet s;
    s.supply.resize(static_cast<size_t>(model.n_scenarios()));
    for (int i = 0; i < model.n_scenarios(); ++i) s.supply[static_cast<size_t>(i)] = i;
    s.price.resize(static_cast<size_t>(prices.n_paths));
    for (int i = 0; i < prices.n_paths; ++i) s.price[static_cast<size_t>(i)] = i;
    return s;
}

std::vector<double> npv_quantiles(const ObjectiveBreakdown& b, std::span<const double> probs) {
    if (b.npv.empty()) throw std::invalid_argument("npv_quantiles: no per-scenario NPVs");
    return quantiles(b.npv, probs);
}

// ---------------------------------------------------------------------------
// Evaluator

Evaluator::Evaluator(const BlockModel& model, const Flowsheet& fs, const EconomicTerms& econ,
                     const ScenarioSet& scen)
    : model_(model), fs_(fs), econ_(econ), scen_(scen) {
    T_ = fs_.n_periods();
    n_supply_ = static_cast<int>(scen_.supply.size());
    if (n_supply_ < 1 || scen_.price.empty())
        throw std::invalid_argument("Evaluator: empty scenario set");
    for (int s : scen_.supply)
        if (s < 0 || s >= model_.n_scenarios())
            throw std::invalid_argument("Evaluator: supply scenario index out of range");
    for (int p : scen_.price)
        if (p < 0 || p >= econ_.price_paths.n_paths)
            throw std::invalid_argument("Evaluator: price path index out of range");
    if (econ_.price_paths.n_periods != T_)
        throw std::invalid_argument("Evaluator: price paths do not cover the schedule horizon");
    if (!(econ_.discount_rate >= 0.0))
        throw std::invalid_argument("Evaluator: negative discount rate");
    if (!(econ_.penalty_up >= 0.0 && econ_.penalty_down >= 0.0))
        throw std::invalid_argument("Evaluator: negative penalties");
    if (!(econ_.mining_cost >= 0.0)) throw std::invalid_argument("Evaluator: negative mining cost");
    if (!(econ_.unit_conversion > 0.0))
        throw std::invalid_argument("Evaluator: unit conversion must be positive");

    disc_.resize(static_cast<size_t>(T_));
    for (int t = 0; t < T_; ++t) disc_[static_cast<size_t>(t)] = std::pow(1.0 + econ_.discount_rate, -t);

    mean_price_.assign(static_cast<size_t>(T_), 0.0);
    for (int pj : scen_.price)
        for (int t = 0; t < T_; ++t) mean_price_[static_cast<size_t>(t)] += econ_.price_paths.at(pj, t);
    for (auto& v : mean_price_) v /= static_cast<double>(scen_.price.size());

    // per-(block, supply position) bin and metal content
    const int nb = model_.n_blocks();
    bins_.resize(static_cast<size_t>(nb) * static_cast<size_t>(n_supply_));
    metal_.resize(bins_.size());
    const double max_grade = model_.max_grade();
    const double bin_width = max_grade > 0.0 ? max_grade / fs_.n_bins() : 0.0;
    for (int32_t b = 0; b < nb; ++b) {
        const auto& attrs = model_.attrs(b);
        for (int si = 0; si < n_supply_; ++si) {
            const double g = attrs.grade[static_cast<size_t>(scen_.supply[static_cast<size_t>(si)])];
            int bin = bin_width > 0.0 ? static_cast<int>(g / bin_width) : 0;
            bin = std::min(bin, fs_.n_bins() - 1);
            const size_t idx = static_cast<size_t>(b) * static_cast<size_t>(n_supply_) +
                               static_cast<size_t>(si);
            bins_[idx] = static_cast<uint8_t>(bin);
            metal_[idx] = attrs.tonnage * g;
        }
    }

    const size_t agg_size = static_cast<size_t>(fs_.n_bins()) * static_cast<size_t>(T_) *
                            static_cast<size_t>(n_supply_);
    bin_mass_.assign(agg_size, 0.0);
    bin_metal_.assign(agg_size, 0.0);
    mined_.assign(static_cast<size_t>(T_), 0.0);
    cand_bin_mass_ = bin_mass_;
    cand_bin_metal_ = bin_metal_;
    cand_mined_ = mined_;

    const auto n = static_cast<size_t>(fs_.n_nodes());
    scratch_in_mass_.assign(n, 0.0);
    scratch_in_metal_.assign(n, 0.0);
    scratch_inv_mass_.assign(n, 0.0);
    scratch_inv_metal_.assign(n, 0.0);
    scratch_rev_units_.assign(static_cast<size_t>(T_) * static_cast<size_t>(n_supply_), 0.0);
    scratch_cost_disc_.assign(static_cast<size_t>(n_supply_), 0.0);
    scratch_penalty_.assign(static_cast<size_t>(n_supply_), 0.0);
}

void Evaluator::rebuild_aggregates(const Solution& sol, std::vector<double>& bin_mass,
                                   std::vector<double>& bin_metal,
                                   std::vector<double>& mined) const {
    std::fill(bin_mass.begin(), bin_mass.end(), 0.0);
    std::fill(bin_metal.begin(), bin_metal.end(), 0.0);
    std::fill(mined.begin(), mined.end(), 0.0);
    for (int32_t b = 0; b < model_.n_blocks(); ++b) {
        const int16_t t = sol.extract_period[static_cast<size_t>(b)];
        if (t == kNotMined) continue;
        mined[static_cast<size_t>(t)] += model_.attrs(b).tonnage;
        const size_t row = static_cast<size_t>(b) * static_cast<size_t>(n_supply_);
        for (int si = 0; si < n_supply_; ++si) {
            const size_t a = agg_index(bins_[row + static_cast<size_t>(si)], t, si);
            bin_mass[a] += model_.attrs(b).tonnage;
            bin_metal[a] += metal_[row + static_cast<size_t>(si)];
        }
    }
}

Evaluator::Totals Evaluator::propagate(const std::vector<double>& bin_mass,
                                       const std::vector<double>& bin_metal,
                                       const std::vector<double>& mined, const Solution& sol,
                                       ObjectiveBreakdown* detail) {
    const int n_nodes = fs_.n_nodes();
    const int n_bins = fs_.n_bins();
    const int mine = fs_.mine();
    const auto& dests = fs_.destinations();
    const int n_price = static_cast<int>(scen_.price.size());

    if (detail != nullptr) {
        detail->detailed = true;
        detail->n_nodes = n_nodes;
        detail->n_periods = T_;
        detail->n_supply = n_supply_;
        detail->n_price = n_price;
        const size_t cells = static_cast<size_t>(n_nodes) * static_cast<size_t>(T_) *
                             static_cast<size_t>(n_supply_);
        detail->npv.assign(static_cast<size_t>(n_supply_) * static_cast<size_t>(n_price), 0.0);
        detail->dev_up.assign(cells, 0.0);
        detail->dev_down.assign(cells, 0.0);
        detail->in_mass.assign(cells, 0.0);
        detail->in_metal.assign(cells, 0.0);
        detail->out_mass.assign(cells, 0.0);
        detail->out_metal.assign(cells, 0.0);
        detail->inv_mass.assign(cells, 0.0);
        detail->inv_metal.assign(cells, 0.0);
    }

    auto& in_mass = scratch_in_mass_;
    auto& in_metal = scratch_in_metal_;
    auto& inv_mass = scratch_inv_mass_;
    auto& inv_metal = scratch_inv_metal_;
    auto& rev_units = scratch_rev_units_;
    auto& cost_disc = scratch_cost_disc_;
    auto& penalty = scratch_penalty_;
    std::fill(rev_units.begin(), rev_units.end(), 0.0);
    std::fill(cost_disc.begin(), cost_disc.end(), 0.0);
    std::fill(penalty.begin(), penalty.end(), 0.0);

    for (int si = 0; si < n_supply_; ++si) {
        std::fill(inv_mass.begin(), inv_mass.end(), 0.0);
        std::fill(inv_metal.begin(), inv_metal.end(), 0.0);
        for (int t = 0; t < T_; ++t) {
            std::fill(in_mass.begin(), in_mass.end(), 0.0);
            std::fill(in_metal.begin(), in_metal.end(), 0.0);

            // mine routing per destination policy
            for (int k = 0; k < n_bins; ++k) {
                const size_t a = agg_index(k, t, si);
                const auto d = static_cast<size_t>(dests[static_cast<size_t>(sol.dest_at(k, t, T_))]);
                in_mass[d] += bin_mass[a];
                in_metal[d] += bin_metal[a];
            }
            in_mass[static_cast<size_t>(mine)] = mined[static_cast<size_t>(t)];
            for (int k = 0; k < n_bins; ++k)
                in_metal[static_cast<size_t>(mine)] += bin_metal[agg_index(k, t, si)];

            double period_cost = econ_.mining_cost * mined[static_cast<size_t>(t)];
            double period_penalty = 0.0;

            for (int n : fs_.topo_order()) {
                const auto ni = static_cast<size_t>(n);
                const FlowNode& fn = fs_.node(n);
                double out_m = 0.0, out_M = 0.0;
                switch (fn.kind) {
                    case NodeKind::mine:
                        out_m = in_mass[ni];
                        out_M = in_metal[ni];
                        break;
                    case NodeKind::stockpile: {
                        period_cost += fn.processing_cost * in_mass[ni];
                        const double avail_m = inv_mass[ni] + in_mass[ni];
                        const double avail_M = inv_metal[ni] + in_metal[ni];
                        const int spi = fs_.splitter_of(n);
                        const int off = fs_.stream_offset(spi, t);
                        const auto& outs = fs_.out_arcs(n);
                        for (size_t j = 0; j < outs.size(); ++j) {
                            const double f =
                                sol.stream_vars[static_cast<size_t>(off) + 1 + j];
                            const auto tgt = static_cast<size_t>(outs[j]);
                            in_mass[tgt] += avail_m * f;
                            in_metal[tgt] += avail_M * f;
                            out_m += avail_m * f;
                            out_M += avail_M * f;
                        }
                        const double hold = sol.stream_vars[static_cast<size_t>(off)];
                        inv_mass[ni] = avail_m * hold;
                        inv_metal[ni] = avail_M * hold;
                        break;
                    }
                    case NodeKind::processor: {
                        period_cost += fn.processing_cost * in_mass[ni];
                        const double metal_out = in_metal[ni] * fn.recovery;
                        const int spi = fs_.splitter_of(n);
                        const auto& outs = fs_.out_arcs(n);
                        if (spi >= 0) {
                            const int off = fs_.stream_offset(spi, t);
                            for (size_t j = 0; j < outs.size(); ++j) {
                                const double f = sol.stream_vars[static_cast<size_t>(off) + j];
                                const auto tgt = static_cast<size_t>(outs[j]);
                                in_mass[tgt] += in_mass[ni] * f;
                                in_metal[tgt] += metal_out * f;
                                out_m += in_mass[ni] * f;
                                out_M += metal_out * f;
                            }
                        } else {
                            const auto tgt = static_cast<size_t>(outs[0]);
                            in_mass[tgt] += in_mass[ni];
                            in_metal[tgt] += metal_out;
                            out_m = in_mass[ni];
                            out_M = metal_out;
                        }
                        break;
                    }
                    case NodeKind::market_sink:
                        rev_units[static_cast<size_t>(t) * static_cast<size_t>(n_supply_) +
                                  static_cast<size_t>(si)] +=
                            in_metal[ni] * econ_.unit_conversion * fn.price_factor;
                        break;
                }

                double dev_up = 0.0, dev_down = 0.0;
                if (fn.capacity_enforced) {
                    if (fn.capacity_per_period > 0.0)
                        dev_up = std::max(0.0, in_mass[ni] - fn.capacity_per_period);
                    if (fn.target_lower > 0.0)
                        dev_down = std::max(0.0, fn.target_lower - in_mass[ni]);
                    period_penalty += econ_.penalty_up * dev_up + econ_.penalty_down * dev_down;
                }

                if (detail != nullptr) {
                    const size_t c = detail->at(n, t, si);
                    detail->dev_up[c] = dev_up;
                    detail->dev_down[c] = dev_down;
                    detail->in_mass[c] = in_mass[ni];
                    detail->in_metal[c] = in_metal[ni];
                    detail->out_mass[c] = out_m;
                    detail->out_metal[c] = out_M;
                    detail->inv_mass[c] = inv_mass[ni];
                    detail->inv_metal[c] = inv_metal[ni];
                }
            }

            cost_disc[static_cast<size_t>(si)] += disc_[static_cast<size_t>(t)] * period_cost;
            penalty[static_cast<size_t>(si)] += period_penalty;
        }
    }

    Totals tot;
    for (int si = 0; si < n_supply_; ++si) {
        double rev = 0.0;
        for (int t = 0; t < T_; ++t)
            rev += disc_[static_cast<size_t>(t)] *
                   rev_units[static_cast<size_t>(t) * static_cast<size_t>(n_supply_) +
                             static_cast<size_t>(si)] *
                   mean_price_[static_cast<size_t>(t)];
        tot.revenue += rev - cost_disc[static_cast<size_t>(si)];
        tot.penalty += penalty[static_cast<size_t>(si)];
    }
    tot.revenue /= n_supply_;
    tot.penalty /= n_supply_;

    if (detail != nullptr) {
        for (int si = 0; si < n_supply_; ++si) {
            for (int pj = 0; pj < n_price; ++pj) {
                double npv = -cost_disc[static_cast<size_t>(si)];
                const int path = scen_.price[static_cast<size_t>(pj)];
                for (int t = 0; t < T_; ++t)
                    npv += disc_[static_cast<size_t>(t)] *
                           rev_units[static_cast<size_t>(t) * static_cast<size_t>(n_supply_) +
                                     static_cast<size_t>(si)] *
                           econ_.price_paths.at(path, t);
                detail->npv[static_cast<size_t>(si) * static_cast<size_t>(n_price) +
                            static_cast<size_t>(pj)] = npv;
            }
        }
    }

    if (!std::isfinite(tot.revenue) || !std::isfinite(tot.penalty))
        throw std::runtime_error("evaluate: non-finite objective (NaN propagation)");
    return tot;
}

ObjectiveBreakdown Evaluator::evaluate(const Solution& sol, bool detailed) {
    validate_solution(model_, fs_, sol);
    rebuild_aggregates(sol, bin_mass_, bin_metal_, mined_);
    committed_version_ = sol.version;
    has_committed_ = true;
    cand_valid_ = false;

    ObjectiveBreakdown b;
    const Totals tot = propagate(bin_mass_, bin_metal_, mined_, sol, detailed ? &b : nullptr);
    b.revenue_term = tot.revenue;
    b.penalty_term = tot.penalty;
    b.total = tot.revenue - tot.penalty;
    return b;
}

ObjectiveBreakdown Evaluator::evaluate_delta(const Solution& sol, const Perturbation& p,
                                             bool detailed) {
    if (!has_committed_) throw std::logic_error("evaluate_delta: no committed evaluation");
    if (p.base_version != committed_version_)
        throw std::runtime_error("evaluate_delta: stale perturbation (version mismatch)");
    if (sol.version != p.base_version + 1)
        throw std::runtime_error("evaluate_delta: perturbation not applied to the solution");

    const std::vector<double>* bm = &bin_mass_;
    const std::vector<double>* bM = &bin_metal_;
    const std::vector<double>* mn = &mined_;
    cand_touched_aggregates_ = false;

    if (p.kind == PerturbKind::extraction_shift && !p.moves.empty()) {
        std::copy(bin_mass_.begin(), bin_mass_.end(), cand_bin_mass_.begin());
        std::copy(bin_metal_.begin(), bin_metal_.end(), cand_bin_metal_.begin());
        std::copy(mined_.begin(), mined_.end(), cand_mined_.begin());
        for (const auto& m : p.moves) {
            const double ton = model_.attrs(m.block).tonnage;
            const size_t row = static_cast<size_t>(m.block) * static_cast<size_t>(n_supply_);
            if (m.from_period != kNotMined) {
                cand_mined_[static_cast<size_t>(m.from_period)] -= ton;
                for (int si = 0; si < n_supply_; ++si) {
                    const size_t a =
                        agg_index(bins_[row + static_cast<size_t>(si)], m.from_period, si);
                    cand_bin_mass_[a] -= ton;
                    cand_bin_metal_[a] -= metal_[row + static_cast<size_t>(si)];
                }
            }
            if (m.to_period != kNotMined) {
                cand_mined_[static_cast<size_t>(m.to_period)] += ton;
                for (int si = 0; si < n_supply_; ++si) {
                    const size_t a =
                        agg_index(bins_[row + static_cast<size_t>(si)], m.to_period, si);
                    cand_bin_mass_[a] += ton;
                    cand_bin_metal_[a] += metal_[row + static_cast<size_t>(si)];
                }
            }
        }
        bm = &cand_bin_mass_;
        bM = &cand_bin_metal_;
        mn = &cand_mined_;
        cand_touched_aggregates_ = true;
    }

    ObjectiveBreakdown b;
    const Totals tot = propagate(*bm, *bM, *mn, sol, detailed ? &b : nullptr);
    b.revenue_term = tot.revenue;
    b.penalty_term = tot.penalty;
    b.total = tot.revenue - tot.penalty;
    cand_valid_ = true;
    cand_version_ = sol.version;
    return b;
}

void Evaluator::commit_candidate() {
    if (!cand_valid_) throw std::logic_error("commit_candidate: no candidate evaluation");
    if (cand_touched_aggregates_) {
        std::swap(bin_mass_, cand_bin_mass_);
        std::swap(bin_metal_, cand_bin_metal_);
        std::swap(mined_, cand_mined_);
    }
    committed_version_ = cand_version_;
    cand_valid_ = false;
}

ObjectiveBreakdown evaluate(const BlockModel& model, const Flowsheet& fs,
                            const EconomicTerms& econ, const Solution& sol,
                            const ScenarioSet& scen) {
    Evaluator ev(model, fs, econ, scen);
    return ev.evaluate(sol, true);
}

std::string breakdown_json(const ObjectiveBreakdown& b) {
    json j;
    j["total"] = b.total;
    j["revenue_term"] = b.revenue_term;
    j["penalty_term"] = b.penalty_term;
    j["n_supply"] = b.n_supply;
    j["n_price"] = b.n_price;
    j["npv"] = b.npv;
    return j.dump();
}

std::string breakdown_csv(const ObjectiveBreakdown& b, const Flowsheet& fs,
                          const EconomicTerms& econ) {
    if (!b.detailed) throw std::invalid_argument("breakdown_csv: breakdown lacks detail");
    std::ostringstream out;
    out << "scenario,period,node,mass,metal,revenue,penalty\n";
    out.precision(17);
    for (int si = 0; si < b.n_supply; ++si)
        for (int t = 0; t < b.n_periods; ++t)
            for (int n = 0; n < b.n_nodes; ++n) {
                const size_t c = b.at(n, t, si);
                const FlowNode& fn = fs.node(n);
                double revenue = 0.0;
                if (fn.kind == NodeKind::market_sink) {
                    double mean_price = 0.0;
                    for (int pj = 0; pj < econ.price_paths.n_paths; ++pj)
                        mean_price += econ.price_paths.at(pj, t);
                    mean_price /= econ.price_paths.n_paths;
                    revenue = b.in_metal[c] * econ.unit_conversion * fn.price_factor *
                              mean_price * std::pow(1.0 + econ.discount_rate, -t);
                }
                const double penalty =
                    econ.penalty_up * b.dev_up[c] + econ.penalty_down * b.dev_down[c];
                out << si << ',' << t << ',' << fn.id << ',' << b.in_mass[c] << ','
                    << b.in_metal[c] << ',' << revenue << ',' << penalty << '\n';
            }
    return out.str();
}

std::string save_solution_json(const Solution& sol) {
    json j;
    j["format"] = "minesched.solution";
    j["version"] = 1;
    j["extract_period"] = sol.extract_period;
    j["destination"] = sol.destination;
    j["stream_vars"] = sol.stream_vars;
    return j.dump();
}

Solution load_solution_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.at("format") != "minesched.solution")
        throw std::runtime_error("load_solution_json: wrong format tag");
    if (j.at("version").get<int>() != 1)
        throw std::runtime_error("load_solution_json: unsupported version");
    Solution sol;
    sol.extract_period = j.at("extract_period").get<std::vector<int16_t>>();
    sol.destination = j.at("destination").get<std::vector<int32_t>>();
    sol.stream_vars = j.at("stream_vars").get<std::vector<double>>();
    return sol;
}

}  // namespace minesched
