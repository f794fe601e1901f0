#include "minesched/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace minesched {

void SamplingDistribution::finalize() {
    cdf.resize(probabilities.size());
    double acc = 0.0;
    for (size_t i = 0; i < probabilities.size(); ++i) {
        if (!(probabilities[i] >= 0.0))
            throw std::invalid_argument("SamplingDistribution: negative probability");
        acc += probabilities[i];
        cdf[i] = acc;
    }
    if (!probabilities.empty() && std::abs(acc - 1.0) > 1e-9)
        throw std::invalid_argument("SamplingDistribution: probabilities do not sum to 1");
}

SamplingDistribution uniform_distribution(int n_blocks) {
    if (n_blocks < 1) throw std::invalid_argument("uniform_distribution: n_blocks < 1");
    SamplingDistribution d;
    d.probabilities.assign(static_cast<size_t>(n_blocks), 1.0 / n_blocks);
    d.finalize();
    return d;
}

int sample_block(const SamplingDistribution& dist, Rng& rng) {
    if (dist.cdf.size() != dist.probabilities.size() || dist.cdf.empty())
        throw std::logic_error("sample_block: distribution not finalized");
    const double u = uniform01(rng) * dist.cdf.back();
    const auto it = std::upper_bound(dist.cdf.begin(), dist.cdf.end(), u);
    const auto idx = static_cast<size_t>(it - dist.cdf.begin());
    return static_cast<int>(std::min(idx, dist.cdf.size() - 1));
}

namespace {

// NOT_MINED behaves as a virtual period T for ordering purposes.
inline int effective_period(int16_t p, int T) { return p == kNotMined ? T : p; }

}  // namespace

Perturbation perturb_extraction(const BlockModel& model, const Flowsheet& fs, const Solution& sol,
                                const SamplingDistribution& dist, Rng& rng) {
    if (dist.n() != model.n_blocks())
        throw std::invalid_argument("perturb_extraction: distribution size mismatch");
    const int T = fs.n_periods();

    Perturbation p;
    p.base_version = sol.version;

    const auto b = static_cast<int32_t>(sample_block(dist, rng));
    const int16_t cur = sol.extract_period[static_cast<size_t>(b)];
    const int curv = effective_period(cur, T);
    int dir = uniform01(rng) < 0.5 ? -1 : 1;
    if (curv + dir < 0 || curv + dir > T) dir = -dir;
    const int tgt = curv + dir;
    if (tgt < 0 || tgt > T) return p;  // no legal move (T = 0 never happens)
    const int16_t to = tgt == T ? kNotMined : static_cast<int16_t>(tgt);

    p.kind = PerturbKind::extraction_shift;
    p.moves.push_back(BlockMove{b, cur, to});

    // Cascading repair: dragging the block earlier can violate its
    // predecessors, later its successors; each violator moves to the same
    // target period, recursively.
    std::vector<char> visited(static_cast<size_t>(model.n_blocks()), 0);
    visited[static_cast<size_t>(b)] = 1;
    std::vector<int32_t> queue{b};
    for (size_t head = 0; head < queue.size(); ++head) {
        const int32_t cur_b = queue[head];
        const auto& next =
            dir < 0 ? model.predecessors(cur_b) : model.successors(cur_b);
        for (int32_t nb : next) {
            if (visited[static_cast<size_t>(nb)]) continue;
            const int16_t np = sol.extract_period[static_cast<size_t>(nb)];
            const int npv = effective_period(np, T);
            const bool violates = dir < 0 ? npv > tgt : npv < tgt;
            if (!violates) continue;
            visited[static_cast<size_t>(nb)] = 1;
            p.moves.push_back(BlockMove{nb, np, to});
            queue.push_back(nb);
        }
    }
    return p;
}

Perturbation perturb_destination(const Flowsheet& fs, const Solution& sol, Rng& rng) {
    Perturbation p;
    p.base_version = sol.version;
    const int n_dest = static_cast<int>(fs.destinations().size());
    if (n_dest < 2) return p;  // no-op: a single destination cannot change

    const int T = fs.n_periods();
    p.bin = std::uniform_int_distribution<int>(0, fs.n_bins() - 1)(rng);
    p.period = std::uniform_int_distribution<int>(0, T - 1)(rng);
    p.dest_flat = p.bin * T + p.period;
    p.old_dest = sol.destination[static_cast<size_t>(p.dest_flat)];
    const int step = std::uniform_int_distribution<int>(1, n_dest - 1)(rng);
    p.new_dest = static_cast<int32_t>((p.old_dest + step) % n_dest);
    p.kind = PerturbKind::destination_change;
    return p;
}

std::vector<double> renormalized_stream(const std::vector<double>& slice, int slot,
                                        double noise) {
    if (slot < 0 || slot >= static_cast<int>(slice.size()))
        throw std::invalid_argument("renormalized_stream: slot out of range");
    const double old_v = slice[static_cast<size_t>(slot)];
    const double new_v = std::clamp(old_v + noise, 0.0, 1.0);
    if (new_v == old_v) return slice;  // zero noise, or clamped back onto itself

    std::vector<double> out = slice;
    out[static_cast<size_t>(slot)] = new_v;
    const double remainder = 1.0 - new_v;
    double sibling_sum = 0.0;
    for (size_t k = 0; k < slice.size(); ++k)
        if (static_cast<int>(k) != slot) sibling_sum += slice[k];
    for (size_t k = 0; k < slice.size(); ++k) {
        if (static_cast<int>(k) == slot) continue;
        out[k] = sibling_sum > 0.0 ? slice[k] * remainder / sibling_sum
                                   : remainder / (static_cast<double>(slice.size()) - 1.0);
    }
    return out;
}

Perturbation perturb_stream(const Flowsheet& fs, const Solution& sol, Rng& rng,
                            double step_sigma) {
    if (!(step_sigma >= 0.0)) throw std::invalid_argument("perturb_stream: negative step_sigma");
    Perturbation p;
    p.base_version = sol.version;
    if (fs.splitters().empty()) return p;  // no-op: nothing to vary

    p.splitter = std::uniform_int_distribution<int>(
        0, static_cast<int>(fs.splitters().size()) - 1)(rng);
    p.sp_period = std::uniform_int_distribution<int>(0, fs.n_periods() - 1)(rng);
    const auto& sp = fs.splitters()[static_cast<size_t>(p.splitter)];
    p.stream_base = fs.stream_offset(p.splitter, p.sp_period);
    const int slot = std::uniform_int_distribution<int>(0, sp.n_slots - 1)(rng);

    p.old_stream.assign(sol.stream_vars.begin() + p.stream_base,
                        sol.stream_vars.begin() + p.stream_base + sp.n_slots);
    const double noise =
        step_sigma > 0.0 ? std::normal_distribution<double>(0.0, step_sigma)(rng) : 0.0;
    p.kind = PerturbKind::stream_change;
    p.new_stream = renormalized_stream(p.old_stream, slot, noise);
    return p;
}

void apply(Solution& sol, const Perturbation& p) {
    if (p.base_version != sol.version)
        throw std::logic_error("apply: perturbation was generated against a different version");
    switch (p.kind) {
        case PerturbKind::none:
            break;
        case PerturbKind::extraction_shift:
            for (const auto& m : p.moves)
                sol.extract_period[static_cast<size_t>(m.block)] = m.to_period;
            break;
        case PerturbKind::destination_change:
            sol.destination[static_cast<size_t>(p.dest_flat)] = p.new_dest;
            break;
        case PerturbKind::stream_change:
            std::copy(p.new_stream.begin(), p.new_stream.end(),
                      sol.stream_vars.begin() + p.stream_base);
            break;
    }
    sol.version = p.base_version + 1;
}

void undo(Solution& sol, const Perturbation& p) {
    if (sol.version != p.base_version + 1)
        throw std::logic_error("undo: perturbation is not the most recent applied edit");
    switch (p.kind) {
        case PerturbKind::none:
            break;
        case PerturbKind::extraction_shift:
            for (auto it = p.moves.rbegin(); it != p.moves.rend(); ++it)
                sol.extract_period[static_cast<size_t>(it->block)] = it->from_period;
            break;
        case PerturbKind::destination_change:
            sol.destination[static_cast<size_t>(p.dest_flat)] = p.old_dest;
            break;
        case PerturbKind::stream_change:
            std::copy(p.old_stream.begin(), p.old_stream.end(),
                      sol.stream_vars.begin() + p.stream_base);
            break;
    }
    sol.version = p.base_version;
}

}  // namespace minesched
