#include "minesched/anneal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace minesched {

double accept_probability(double delta_f, double temp) {
    if (!(temp > 0.0)) throw std::invalid_argument("accept_probability: temp must be > 0");
    if (delta_f > 0.0) return 1.0;
    return std::exp(delta_f / temp);
}

TraceLog::TraceLog(int n_heuristics, int64_t keep_every)
    : keep_every_(std::max<int64_t>(1, keep_every)),
      stats_(static_cast<size_t>(std::max(1, n_heuristics))) {}

void TraceLog::append(const TraceRecord& r) {
    if (r.heuristic >= 0 && r.heuristic < static_cast<int>(stats_.size())) {
        auto& s = stats_[static_cast<size_t>(r.heuristic)];
        ++s.uses;
        if (r.accepted) ++s.accepted;
        s.delta_sum += r.delta_f;
    }
    const bool improved = !has_best_ || r.best_so_far > last_best_;
    if (improved || r.iter % keep_every_ == 0) records_.push_back(r);
    has_best_ = true;
    last_best_ = r.best_so_far;
    ++n_appended_;
}

std::string TraceLog::to_csv() const {
    std::ostringstream out;
    out << "iter,heuristic,delta_f,elapsed_s,accepted,best_so_far,temp\n";
    out.precision(17);
    for (const auto& r : records_)
        out << r.iter << ',' << r.heuristic << ',' << r.delta_f << ',' << r.elapsed_s << ','
            << (r.accepted ? 1 : 0) << ',' << r.best_so_far << ',' << r.temp << '\n';
    return out.str();
}

RunResult run(Evaluator& ev, const Solution& initial, HeuristicSelector& selector,
              BlockSampler& sampler, const AnnealSchedule& schedule, uint64_t seed) {
    if (!(schedule.temp0 > 0.0)) throw std::invalid_argument("run: temp0 must be > 0");
    if (!(schedule.cooling > 0.0 && schedule.cooling <= 1.0))
        throw std::invalid_argument("run: cooling must be in (0,1]");
    if (schedule.epoch_len < 1) throw std::invalid_argument("run: epoch_len must be >= 1");
    if (selector.n_heuristics() != 3)
        throw std::invalid_argument("run: selector must cover the three-heuristic pool");

    const BlockModel& model = ev.model();
    const Flowsheet& fs = ev.flowsheet();

    Solution sol = initial;
    const ObjectiveBreakdown first = ev.evaluate(sol, false);
    double f = first.total;

    RunResult res;
    res.best = sol;
    res.best_objective = f;
    res.trace = TraceLog(3, schedule.trace_keep_every);

    auto rng = make_rng(seed, 0x414e4e45414cull);  // engine stream
    double temp = schedule.temp0;
    const auto t_start = std::chrono::steady_clock::now();
    auto seconds_since = [](std::chrono::steady_clock::time_point a,
                            std::chrono::steady_clock::time_point b) {
        return std::chrono::duration<double>(b - a).count();
    };

    int64_t iter = 0;
    while (true) {
        if (schedule.max_iters >= 0 && iter >= schedule.max_iters) break;
        const auto t_iter0 = std::chrono::steady_clock::now();
        if (schedule.max_wall_seconds >= 0.0 &&
            seconds_since(t_start, t_iter0) >= schedule.max_wall_seconds)
            break;

        const int h = selector.select(rng);
        Perturbation p;
        switch (h) {
            case 0:
                p = perturb_extraction(model, fs, sol, sampler.distribution(sol), rng);
                break;
            case 1:
                p = perturb_destination(fs, sol, rng);
                break;
            case 2:
                p = perturb_stream(fs, sol, rng, schedule.stream_step_sigma);
                break;
            default:
                throw std::logic_error("run: selector returned an unknown heuristic");
        }

        apply(sol, p);
        const ObjectiveBreakdown bd = ev.evaluate_delta(sol, p, false);
        const double delta = bd.total - f;
        const bool accepted = uniform01(rng) < accept_probability(delta, temp);
        if (accepted) {
            ev.commit_candidate();
            f = bd.total;
            if (f > res.best_objective) {
                res.best_objective = f;
                res.best = sol;
            }
        } else {
            undo(sol, p);
        }

        const auto t_iter1 = std::chrono::steady_clock::now();
        res.trace.append(TraceRecord{iter, h, delta, seconds_since(t_start, t_iter1), accepted,
                                     res.best_objective, temp});

        const double scale = std::max(1.0, std::abs(res.best_objective));
        IterationFeedback fb;
        fb.iter = iter;
        fb.heuristic = h;
        fb.delta_f = delta;
        fb.delta_norm = delta / scale;
        fb.work_units = p.work_units();
        fb.accepted = accepted;
        selector.observe(fb);
        if (h == 0 && !p.moves.empty())
            sampler.observe(SamplerFeedback{p.moves.front().block, fb.delta_norm, fb.work_units});

        ++iter;
        if (iter % schedule.epoch_len == 0) {
            temp *= schedule.cooling;
            selector.end_epoch();
            sampler.end_epoch();
        }
    }

    res.iters = iter;
    res.wall_seconds = seconds_since(t_start, std::chrono::steady_clock::now());
    validate_solution(model, fs, res.best);
    return res;
}

namespace {

// Crude per-tonne value of routing material at grade g to a destination in
// period t; only used to rank destinations for the initial policy.
double destination_score(const Flowsheet& fs, const EconomicTerms& econ,
                         const std::vector<double>& mean_price, int dest_node, double g, int t) {
    const FlowNode& n = fs.node(dest_node);
    const double gross = g * econ.unit_conversion * mean_price[static_cast<size_t>(t)];
    switch (n.kind) {
        case NodeKind::market_sink:
            return gross * n.price_factor;
        case NodeKind::processor:
            return gross * n.recovery - n.processing_cost;
        case NodeKind::stockpile: {
            // deferred processing at a discount
            double best_downstream = 0.0;
            for (int to : fs.out_arcs(dest_node)) {
                const FlowNode& d = fs.node(to);
                const double s = d.kind == NodeKind::processor
                                     ? gross * d.recovery - d.processing_cost
                                     : gross * d.price_factor;
                best_downstream = std::max(best_downstream, s);
            }
            return 0.5 * best_downstream - n.processing_cost;
        }
        case NodeKind::mine:
            return -1e300;  // not a destination in a valid flowsheet
    }
    return 0.0;
}

}  // namespace

Solution initial_solution(const BlockModel& model, const Flowsheet& fs,
                          const EconomicTerms& econ) {
    const int T = fs.n_periods();
    const int nb = model.n_blocks();
    const auto mean_price = mean_path(econ.price_paths);
    double price_level = 0.0;
    for (double v : mean_price) price_level += v;
    price_level /= static_cast<double>(mean_price.size());

    double best_recovery = 0.0, min_proc_cost = 1e300;
    for (const auto& n : fs.nodes()) {
        if (n.kind == NodeKind::processor) {
            best_recovery = std::max(best_recovery, n.recovery);
            min_proc_cost = std::min(min_proc_cost, n.processing_cost);
        }
    }
    if (min_proc_cost > 1e299) min_proc_cost = 0.0;

    // crude block value: scenario-mean grade routed through the best processor
    auto block_value = [&](int32_t b) {
        const auto& a = model.attrs(b);
        double g = 0.0;
        for (double v : a.grade) g += v;
        g /= static_cast<double>(a.grade.size());
        const double gross = g * a.tonnage * econ.unit_conversion * price_level * best_recovery;
        return gross - a.tonnage * (econ.mining_cost + min_proc_cost);
    };

    // pick a depth per column where cumulative value peaks above zero
    std::vector<char> selected(static_cast<size_t>(nb), 0);
    for (int y = 0; y < model.ny(); ++y) {
        for (int x = 0; x < model.nx(); ++x) {
            double acc = 0.0, best_acc = 0.0;
            int best_depth = -1;
            for (int z = 0; z < model.nz(); ++z) {
                acc += block_value(model.id_from_coords(x, y, z).index);
                if (acc > best_acc) {
                    best_acc = acc;
                    best_depth = z;
                }
            }
            for (int z = 0; z <= best_depth; ++z)
                selected[static_cast<size_t>(model.id_from_coords(x, y, z).index)] = 1;
        }
    }
    // close the selection under precedence (top-down pass: a selected block
    // pulls in its predecessors, which live strictly one level above)
    for (int32_t b = 0; b < nb; ++b)
        if (selected[static_cast<size_t>(b)])
            for (int32_t pr : model.predecessors(b)) selected[static_cast<size_t>(pr)] = 1;

    Solution sol;
    sol.extract_period.assign(static_cast<size_t>(nb), kNotMined);

    // schedule earliest-feasible under the mine capacity, in z-major order so
    // predecessors are placed before their successors
    const double cap = fs.node(fs.mine()).capacity_per_period;
    std::vector<double> used(static_cast<size_t>(T), 0.0);
    for (int z = 0; z < model.nz(); ++z) {
        for (int y = 0; y < model.ny(); ++y) {
            for (int x = 0; x < model.nx(); ++x) {
                const int32_t b = model.id_from_coords(x, y, z).index;
                if (!selected[static_cast<size_t>(b)]) continue;
                int earliest = 0;
                bool blocked = false;
                for (int32_t pr : model.predecessors(b)) {
                    const int16_t pp = sol.extract_period[static_cast<size_t>(pr)];
                    if (pp == kNotMined) {
                        blocked = true;
                        break;
                    }
                    earliest = std::max(earliest, static_cast<int>(pp));
                }
                if (blocked) continue;  // a predecessor fell off the horizon
                const double ton = model.attrs(b).tonnage;
                int t = earliest;
                while (t < T && cap > 0.0 && used[static_cast<size_t>(t)] + ton > cap) ++t;
                if (t >= T) continue;  // does not fit in the horizon
                sol.extract_period[static_cast<size_t>(b)] = static_cast<int16_t>(t);
                used[static_cast<size_t>(t)] += ton;
            }
        }
    }

    // destination policy by bin-midpoint value
    const int n_dest = static_cast<int>(fs.destinations().size());
    sol.destination.assign(static_cast<size_t>(fs.n_bins()) * static_cast<size_t>(T), 0);
    const double max_grade = model.max_grade();
    for (int k = 0; k < fs.n_bins(); ++k) {
        const double mid = max_grade > 0.0 ? (k + 0.5) * max_grade / fs.n_bins() : 0.0;
        for (int t = 0; t < T; ++t) {
            int best_d = 0;
            double best_s = -1e300;
            for (int d = 0; d < n_dest; ++d) {
                const double s =
                    destination_score(fs, econ, mean_price, fs.destinations()[static_cast<size_t>(d)], mid, t);
                if (s > best_s) {
                    best_s = s;
                    best_d = d;
                }
            }
            sol.destination[static_cast<size_t>(k) * static_cast<size_t>(T) +
                            static_cast<size_t>(t)] = best_d;
        }
    }

    sol.stream_vars = fs.uniform_stream_vars();
    sol.version = 0;
    validate_solution(model, fs, sol);
    return sol;
}

double calibrate_temp0(Evaluator& ev, const Solution& initial, uint64_t seed, int n_warmup,
                       double stream_step_sigma) {
    Solution sol = initial;
    const ObjectiveBreakdown first = ev.evaluate(sol, false);
    double f = first.total;
    auto rng = make_rng(seed, 0x54454d50ull);  // warmup stream
    auto sampler = uniform_distribution(ev.model().n_blocks());

    std::vector<double> drops;
    for (int i = 0; i < n_warmup; ++i) {
        const int h = std::uniform_int_distribution<int>(0, 2)(rng);
        Perturbation p;
        switch (h) {
            case 0:
                p = perturb_extraction(ev.model(), ev.flowsheet(), sol, sampler, rng);
                break;
            case 1:
                p = perturb_destination(ev.flowsheet(), sol, rng);
                break;
            default:
                p = perturb_stream(ev.flowsheet(), sol, rng, stream_step_sigma);
                break;
        }
        apply(sol, p);
        const ObjectiveBreakdown bd = ev.evaluate_delta(sol, p, false);
        const double delta = bd.total - f;
        if (delta < 0.0) drops.push_back(-delta);
        ev.commit_candidate();  // random walk: accept everything
        f = bd.total;
    }
    // leave the evaluator committed to the walk's end; callers re-evaluate
    // their own solution before running.
    if (drops.empty()) return 1.0;
    std::sort(drops.begin(), drops.end());
    const double median = drops[drops.size() / 2];
    return median > 0.0 ? median / std::log(2.0) : 1.0;
}

}  // namespace minesched
