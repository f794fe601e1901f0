#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "minesched/anneal.hpp"
#include "minesched/common.hpp"
#include "minesched/neuro.hpp"

namespace minesched::guide {

/// Metrics recorded per window row: normalized objective delta, work units,
/// accepted flag.
inline constexpr int kMetrics = 3;

struct GuideConfig {
    int n_heuristics = 3;
    int window = 8;                   // K iterations of history in the state
    std::vector<int> hidden = {64, 64};
    double lr = 1e-3;
    double discount = 0.99;           // continuing task, no terminal in live runs
    int target_sync_every = 100;      // C: train steps between target syncs
    int replay_capacity = 4096;
    int batch_size = 32;
    double priority_eps = 1e-3;
    double sigma_start = 0.2;         // exploration noise, decayed linearly
    double sigma_end = 0.02;
    int64_t sigma_horizon = 200000;   // iterations to reach sigma_end
    int train_every = 4;              // selector: iterations between train steps
};

/// Sliding window of the last K iterations. Each row is n_heuristics x
/// kMetrics wide with only the executed heuristic's slots populated; rows
/// newer than the history are zero. Flattens newest-first.
class GuideState {
public:
    explicit GuideState(int n_heuristics = 3, int window = 8);

    void push(int heuristic, double delta_norm, double work_units, bool accepted);
    neuro::Tensor features() const;  // shape [window * n_heuristics * kMetrics]
    int width() const { return k_ * n_ * kMetrics; }
    int n_heuristics() const { return n_; }
    int window() const { return k_; }
    int64_t n_pushed() const { return n_pushed_; }

private:
    int n_, k_;
    int64_t n_pushed_ = 0;
    std::deque<std::vector<double>> rows_;  // front = newest
};

struct GuideAction {
    std::vector<double> raw;    // network forward clamped to [0,1]
    std::vector<double> probs;  // after noise, clamp at 0, L1 normalization
    int heuristic = -1;         // sampled from probs
};

struct Transition {
    std::vector<double> state;
    int action = -1;
    double reward = 0.0;
    std::vector<double> next_state;
    bool terminal = false;
};

/// Fixed-capacity ring of transitions with positive priorities; sampling is
/// proportional to priority.
class ReplayBuffer {
public:
    explicit ReplayBuffer(int capacity);

    void push(Transition t, double priority);
    int size() const { return static_cast<int>(items_.size()); }
    int capacity() const { return capacity_; }
    const Transition& at(int i) const { return items_[static_cast<size_t>(i)]; }
    double priority(int i) const { return priorities_[static_cast<size_t>(i)]; }
    void set_priority(int i, double p);
    double max_priority() const;

    /// batch independent draws, each proportional to priority (with
    /// replacement).
    std::vector<int> sample(int batch, Rng& rng) const;

private:
    int capacity_;
    size_t next_ = 0;  // ring write position once full
    std::vector<Transition> items_;
    std::vector<double> priorities_;
};

/// Exactly the two-branch form: delta_f / elapsed when delta_f >= 0, else
/// delta_f * elapsed. Requires elapsed > 0.
double reward(double delta_f, double elapsed);

/// Value-based heuristic scorer: an online Q network (one output per
/// heuristic), a target copy for double-Q bootstrapping, prioritized replay.
class GuideAgent {
public:
    GuideAgent(GuideConfig cfg, uint64_t seed);

    const GuideConfig& config() const { return cfg_; }
    int state_width() const { return cfg_.window * cfg_.n_heuristics * kMetrics; }

    /// Unclamped per-heuristic value estimates for a state.
    std::vector<double> q_values(const GuideState& s);
    /// argmax of q_values; ties break toward the lower id.
    int greedy(const GuideState& s);

    /// raw = forward clamped to [0,1]; probs = raw + N(0, sigma) clamped at 0
    /// then L1-normalized (uniform fallback when the norm vanishes); the
    /// returned heuristic is sampled from probs.
    GuideAction score_heuristics(const GuideState& s, double sigma_explore, Rng& rng);

    void remember(const GuideState& s, int action, double r, const GuideState& next,
                  bool terminal = false);
    /// Same, on already-flattened feature vectors.
    void remember_raw(std::vector<double> state, int action, double r,
                      std::vector<double> next_state, bool terminal = false);

    /// One prioritized double-Q training step; nullopt while the buffer holds
    /// fewer than batch_size transitions. Returns the batch TD loss.
    std::optional<double> train_step(Rng& rng);

    const ReplayBuffer& buffer() const { return buffer_; }
    int64_t train_steps() const { return train_steps_; }
    neuro::Network& network() { return online_; }
    const neuro::Network& target_network() const { return target_; }

    std::string save_checkpoint() const;
    /// Restores online weights from a checkpoint and syncs the target copy.
    void load_weights(const std::string& text);

private:
    void sync_target();
    std::vector<double> forward_vec(neuro::Network& net, const std::vector<double>& state);

    GuideConfig cfg_;
    neuro::Network online_, target_;
    neuro::Adam opt_;
    ReplayBuffer buffer_;
    int64_t train_steps_ = 0;
};

/// HeuristicSelector adapter: builds the window state, scores heuristics with
/// linearly decaying exploration noise, rewards each executed heuristic with
/// reward(delta_norm, work_units), and trains from replay every train_every
/// iterations.
class GuideSelector final : public HeuristicSelector {
public:
    GuideSelector(GuideConfig cfg, uint64_t seed);

    int n_heuristics() const override { return cfg_.n_heuristics; }
    int select(Rng& rng) override;
    void observe(const IterationFeedback& fb) override;

    double sigma_now() const;
    GuideAgent& agent() { return agent_; }
    const GuideState& state() const { return window_; }

private:
    GuideConfig cfg_;
    GuideAgent agent_;
    GuideState window_;
    Rng train_rng_;
    int64_t seen_ = 0;
    std::vector<double> pending_state_;
    int pending_action_ = -1;
    bool has_pending_ = false;
};

}  // namespace minesched::guide
