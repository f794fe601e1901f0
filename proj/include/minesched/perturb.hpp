#pragma once

#include <cstdint>
#include <vector>

#include "minesched/common.hpp"
#include "minesched/flowsheet.hpp"

namespace minesched {

enum class PerturbKind : uint8_t {
    none = 0,  // no legal move existed; apply/undo are version-only
    extraction_shift = 1,
    destination_change = 2,
    stream_change = 3,
};

struct BlockMove {
    int32_t block = -1;
    int16_t from_period = kNotMined;
    int16_t to_period = kNotMined;
};

/// A reversible edit to a Solution. The payload stores both old and new
/// values so undo restores the prior state bit-exactly.
struct Perturbation {
    PerturbKind kind = PerturbKind::none;
    uint64_t base_version = 0;  // solution version this was generated against

    // extraction_shift: sampled block first, then cascading repair moves
    std::vector<BlockMove> moves;

    // destination_change
    int bin = -1;
    int period = -1;
    int dest_flat = -1;  // index into Solution::destination
    int32_t old_dest = -1;
    int32_t new_dest = -1;

    // stream_change: full (splitter, period) slice before and after
    int splitter = -1;
    int sp_period = -1;
    int stream_base = -1;  // offset of the slice in Solution::stream_vars
    std::vector<double> old_stream, new_stream;

    bool is_noop() const { return kind == PerturbKind::none; }
    /// Deterministic effort proxy: blocks touched for extraction shifts, 1
    /// for the table edits. Stands in for wall time in reward computations so
    /// runs stay reproducible.
    int work_units() const {
        return kind == PerturbKind::extraction_shift ? static_cast<int>(moves.size()) : 1;
    }
};

/// Per-block selection weights. finalize() builds the cumulative table that
/// sample_block() needs; producers call it once per emitted distribution.
struct SamplingDistribution {
    std::vector<double> probabilities;
    std::vector<double> cdf;  // inclusive partial sums, built by finalize()

    void finalize();
    int n() const { return static_cast<int>(probabilities.size()); }
};

SamplingDistribution uniform_distribution(int n_blocks);
/// Draws a block index; requires a finalized distribution.
int sample_block(const SamplingDistribution& dist, Rng& rng);

/// Shift one sampled block's extraction period by +-1 (period T-1 shifts off
/// the schedule to NOT_MINED and vice versa), dragging predecessors earlier /
/// successors later as needed so the result stays precedence-feasible. If the
/// drawn direction has no legal move the opposite one is used.
Perturbation perturb_extraction(const BlockModel& model, const Flowsheet& fs, const Solution& sol,
                                const SamplingDistribution& dist, Rng& rng);

/// Reroute one random (grade bin, period) cell to a different destination;
/// no-op when the flowsheet has a single destination.
Perturbation perturb_destination(const Flowsheet& fs, const Solution& sol, Rng& rng);

/// Add Gaussian noise (std step_sigma) to one random stream variable, clamp
/// to [0,1], and rescale its sibling slots so the slice sums to 1 again; the
/// perturbed slot keeps its clamped value. No-op when there are no splitters.
Perturbation perturb_stream(const Flowsheet& fs, const Solution& sol, Rng& rng,
                            double step_sigma = 0.1);

/// The stream edit rule by itself: slice[slot] moves by noise (clamped to
/// [0,1]) and keeps that value; siblings are scaled to fill the remainder
/// (shared equally if they were all zero). Zero effective movement returns
/// the slice unchanged.
std::vector<double> renormalized_stream(const std::vector<double>& slice, int slot, double noise);

/// apply advances sol.version by one; undo requires the perturbation to be
/// the most recent applied edit and restores the prior state (version
/// included) bit-exactly. Version mismatches throw std::logic_error.
void apply(Solution& sol, const Perturbation& p);
void undo(Solution& sol, const Perturbation& p);

}  // namespace minesched
