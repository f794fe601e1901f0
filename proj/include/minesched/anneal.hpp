#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minesched/common.hpp"
#include "minesched/flowsheet.hpp"
#include "minesched/perturb.hpp"

namespace minesched {

/// Metropolis acceptance for a maximized objective: 1 for improvements,
/// exp(delta_f / temp) otherwise. Requires temp > 0.
double accept_probability(double delta_f, double temp);

struct AnnealSchedule {
    double temp0 = 1.0;             // initial temperature, objective units
    double cooling = 0.95;          // multiplicative, applied per epoch
    int epoch_len = 100;            // iterations per temperature step
    int64_t max_iters = -1;         // -1 = unbounded
    double max_wall_seconds = -1.0; // -1 = unbounded
    double stream_step_sigma = 0.1;
    int64_t trace_keep_every = 1;   // stride of retained trace records
};

struct TraceRecord {
    int64_t iter = 0;
    int heuristic = -1;
    double delta_f = 0.0;
    double elapsed_s = 0.0;  // cumulative wall time since run start (informational only)
    bool accepted = false;
    double best_so_far = 0.0;
    double temp = 0.0;
};

/// Iteration log with bounded retention: every record updates the aggregate
/// counters, and a record is kept verbatim when it improves best_so_far or
/// falls on the keep_every stride (so suboptimality curves stay exact).
class TraceLog {
public:
    explicit TraceLog(int n_heuristics = 3, int64_t keep_every = 1);

    void append(const TraceRecord& r);
    const std::vector<TraceRecord>& records() const { return records_; }
    int64_t n_appended() const { return n_appended_; }

    struct HeuristicStats {
        int64_t uses = 0;
        int64_t accepted = 0;
        double delta_sum = 0.0;
    };
    const std::vector<HeuristicStats>& stats() const { return stats_; }

    /// Columns: iter,heuristic,delta_f,elapsed_s,accepted,best_so_far,temp
    std::string to_csv() const;

private:
    int64_t keep_every_ = 1;
    int64_t n_appended_ = 0;
    bool has_best_ = false;
    double last_best_ = 0.0;
    std::vector<TraceRecord> records_;
    std::vector<HeuristicStats> stats_;
};

/// What the engine reports back to the policies after each iteration.
/// delta_norm is delta_f divided by a running |best objective| estimate;
/// work_units is the deterministic effort proxy standing in for T(h_i).
struct IterationFeedback {
    int64_t iter = 0;
    int heuristic = -1;
    double delta_f = 0.0;
    double delta_norm = 0.0;
    double work_units = 1.0;
    bool accepted = false;
};

/// Scores/picks among the registered heuristics. Implementations draw any
/// randomness they need from the engine-supplied rng so runs stay
/// reproducible under one seed.
class HeuristicSelector {
public:
    virtual ~HeuristicSelector() = default;
    virtual int n_heuristics() const = 0;
    virtual int select(Rng& rng) = 0;
    virtual void observe(const IterationFeedback&) {}
    virtual void end_epoch() {}
};

/// Uniform choice over the pool; the baseline selection function.
class UniformSelector final : public HeuristicSelector {
public:
    explicit UniformSelector(int n = 3) : n_(n) {}
    int n_heuristics() const override { return n_; }
    int select(Rng& rng) override {
        return std::uniform_int_distribution<int>(0, n_ - 1)(rng);
    }

private:
    int n_;
};

struct SamplerFeedback {
    int32_t block = -1;
    double delta_norm = 0.0;
    double work_units = 1.0;
};

/// Emits the block-sampling distribution consumed by extraction perturbations.
class BlockSampler {
public:
    virtual ~BlockSampler() = default;
    virtual const SamplingDistribution& distribution(const Solution& sol) = 0;
    virtual void observe(const SamplerFeedback&) {}
    virtual void end_epoch() {}
};

class UniformSampler final : public BlockSampler {
public:
    explicit UniformSampler(int n_blocks) : dist_(uniform_distribution(n_blocks)) {}
    const SamplingDistribution& distribution(const Solution&) override { return dist_; }

private:
    SamplingDistribution dist_;
};

struct RunResult {
    Solution best;
    double best_objective = 0.0;
    int64_t iters = 0;
    double wall_seconds = 0.0;
    TraceLog trace;
};

/// The hyper-heuristic loop: select a heuristic, perturb, evaluate the delta,
/// accept per accept_probability or undo, log, feed the policies. Heuristic
/// ids: 0 = extraction shift, 1 = destination change, 2 = stream change.
RunResult run(Evaluator& ev, const Solution& initial, HeuristicSelector& selector,
              BlockSampler& sampler, const AnnealSchedule& schedule, uint64_t seed);

/// Greedy feasible construction: per-column depths with positive cumulative
/// value, closed under precedence, scheduled earliest-first under the mining
/// capacity; destinations by per-bin value ranking; uniform stream variables.
Solution initial_solution(const BlockModel& model, const Flowsheet& fs,
                          const EconomicTerms& econ);

/// Warmup-based initial temperature: random walk of n_warmup uniform moves,
/// temp0 = median |deteriorating delta| / ln 2 (acceptance of the median
/// deterioration starts near one half). Falls back to 1.0 if the walk never
/// deteriorates.
double calibrate_temp0(Evaluator& ev, const Solution& initial, uint64_t seed,
                       int n_warmup = 200, double stream_step_sigma = 0.1);

}  // namespace minesched
