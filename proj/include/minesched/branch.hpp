#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "minesched/anneal.hpp"
#include "minesched/blockmodel.hpp"
#include "minesched/common.hpp"
#include "minesched/flowsheet.hpp"
#include "minesched/neuro.hpp"
#include "minesched/perturb.hpp"

namespace minesched::branch {

enum class PolicyKind : uint8_t { baseline = 0, nn_nb = 1, cnn_nb = 2, gnn_nb = 3 };

/// Accepts the CLI spellings: baseline | nn-nb | cnn-nb | gnn-nb.
PolicyKind policy_kind_from_string(const std::string& s);
std::string to_string(PolicyKind k);

/// Per-block feature rows. Width = 7 + n_destinations:
///   0 tonnage / max tonnage
///   1 grade mean across supply scenarios / max grade
///   2 grade std across supply scenarios / max grade
///   3..5 grid coordinates normalized to [0,1] (0 where the axis has 1 block)
///   6 extraction period / (T-1), or -1 when the block is not mined
///   7.. one-hot of the destination the block's mean-grade bin routes to in
///       its extraction period (all zero when not mined)
/// Normalization statistics are frozen at construction.
class FeatureBuilder {
public:
    FeatureBuilder(const BlockModel& model, const Flowsheet& fs);

    int width() const { return 7 + n_dest_; }
    int n_blocks() const { return model_->n_blocks(); }

    /// [n_blocks, width] rows, one per block.
    neuro::Tensor build(const Solution& sol) const;
    /// [width, nx, ny, nz] channel grid for convolutional policies.
    neuro::Tensor build_grid(const Solution& sol) const;

    /// Grade bin of the block's scenario-mean grade, matching the evaluator's
    /// binning rule.
    int bin_of_mean(int32_t block) const;

private:
    std::vector<double> feature_row(const Solution& sol, int32_t block) const;

    const BlockModel* model_;
    const Flowsheet* fs_;
    int n_dest_ = 0;
    int n_bins_ = 0;
    int n_periods_ = 0;
    double max_tonnage_ = 1.0;
    double max_grade_ = 1.0;
    std::vector<double> grade_mean_, grade_std_;  // per block, frozen
};

struct BranchConfig {
    double lr = 1e-3;
    double clip_eps = 0.2;        // PPO clipping half-width
    double entropy_bonus = 0.01;  // constant weight on the distribution entropy
                                  // in the training objective (0 disables);
                                  // keeps mass from collapsing onto a few
                                  // blocks once their perturbations exhaust
    int refresh_interval = 64;    // extraction iterations between recomputes
    double kernel_std = 2.0;      // cnn_nb Gaussian spread, block units
    double kernel_radius = 6.0;   // cnn_nb truncation distance, block units
    int conv_channels = 8;
    int gnn_width = 32;
    int gnn_rounds = 3;
    std::vector<int> nn_hidden = {64, 64};
};

/// One recorded perturbation outcome: which block the distribution proposed,
/// its probability at proposal time, and the realized reward.
struct BranchTriple {
    int32_t block = -1;
    double old_prob = 0.0;
    double reward = 0.0;
};

/// Learned block-sampling policy behind the BlockSampler interface. The
/// distribution is cached and recomputed every refresh_interval extraction
/// iterations (and after every training update); training runs a single
/// clipped-surrogate step per epoch on the triples gathered since the last
/// update, with advantage = reward - running reward baseline plus a constant
/// entropy bonus.
class NeuralSampler final : public BlockSampler {
public:
    NeuralSampler(PolicyKind kind, const BlockModel& model, const Flowsheet& fs,
                  BranchConfig cfg, uint64_t seed);

    const SamplingDistribution& distribution(const Solution& sol) override;
    void observe(const SamplerFeedback& fb) override;
    void end_epoch() override;

    /// A fresh forward pass (no cache interaction); always valid and
    /// finalized. Falls back to uniform on degenerate outputs.
    SamplingDistribution compute_distribution(const Solution& sol);

    /// One PPO step over the buffered triples; returns the clipped-surrogate
    /// objective, or nullopt when skipped (no triples, all advantages zero,
    /// or a degenerate distribution).
    std::optional<double> train_episode();

    PolicyKind kind() const { return kind_; }
    const FeatureBuilder& features() const { return features_; }
    const BranchConfig& config() const { return cfg_; }
    double baseline() const { return baseline_mean_; }
    int64_t updates() const { return updates_; }
    int64_t triples_buffered() const { return static_cast<int64_t>(triples_.size()); }
    /// cnn_nb: continuous grid coordinates of the last emitted kernel center.
    std::array<double, 3> last_center() const { return last_center_; }

    neuro::Network& network() { return net_; }
    std::string save_checkpoint() const { return net_.save_checkpoint(); }
    void load_weights(const std::string& text);

private:
    void refresh(const Solution& sol);
    SamplingDistribution forward_distribution(const Solution& sol, bool* degenerate);

    PolicyKind kind_;
    const BlockModel* model_;
    const Flowsheet* fs_;
    BranchConfig cfg_;
    FeatureBuilder features_;
    neuro::Network net_;
    neuro::Adam opt_;
    std::shared_ptr<const BlockGraph> graph_;  // gnn_nb only

    SamplingDistribution cache_;
    bool cache_valid_ = false;
    int cache_age_ = 0;
    bool last_forward_degenerate_ = false;
    neuro::Tensor last_input_;               // input that produced cache_
    std::array<double, 3> last_center_{0.0, 0.0, 0.0};

    std::vector<BranchTriple> triples_;
    double baseline_mean_ = 0.0;
    int64_t baseline_count_ = 0;
    int64_t updates_ = 0;
};

/// baseline -> UniformSampler, anything else -> NeuralSampler.
std::unique_ptr<BlockSampler> make_sampler(PolicyKind kind, const BlockModel& model,
                                           const Flowsheet& fs, const BranchConfig& cfg,
                                           uint64_t seed);

}  // namespace minesched::branch
