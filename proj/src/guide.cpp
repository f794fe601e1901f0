#include "minesched/guide.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace minesched::guide {

// ---------------------------------------------------------------------------
// GuideState

GuideState::GuideState(int n_heuristics, int window) : n_(n_heuristics), k_(window) {
    if (n_ < 1 || k_ < 1) throw std::invalid_argument("GuideState: bad dimensions");
}

void GuideState::push(int heuristic, double delta_norm, double work_units, bool accepted) {
    if (heuristic < 0 || heuristic >= n_)
        throw std::invalid_argument("GuideState: heuristic id out of range");
    std::vector<double> row(static_cast<size_t>(n_) * kMetrics, 0.0);
    const size_t base = static_cast<size_t>(heuristic) * kMetrics;
    row[base + 0] = delta_norm;
    row[base + 1] = work_units;
    row[base + 2] = accepted ? 1.0 : 0.0;
    rows_.push_front(std::move(row));
    if (static_cast<int>(rows_.size()) > k_) rows_.pop_back();
    ++n_pushed_;
}

neuro::Tensor GuideState::features() const {
    neuro::Tensor out({width()});
    size_t o = 0;
    for (const auto& row : rows_) {
        std::copy(row.begin(), row.end(), out.data.begin() + static_cast<ptrdiff_t>(o));
        o += row.size();
    }
    return out;  // rows beyond the history stay zero
}

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t, double priority) {
    if (!(priority > 0.0)) throw std::invalid_argument("ReplayBuffer: priority must be positive");
    if (static_cast<int>(items_.size()) < capacity_) {
        items_.push_back(std::move(t));
        priorities_.push_back(priority);
    } else {
        items_[next_] = std::move(t);
        priorities_[next_] = priority;
        next_ = (next_ + 1) % static_cast<size_t>(capacity_);
    }
}

void ReplayBuffer::set_priority(int i, double p) {
    if (!(p > 0.0)) throw std::invalid_argument("ReplayBuffer: priority must be positive");
    priorities_[static_cast<size_t>(i)] = p;
}

double ReplayBuffer::max_priority() const {
    double m = 0.0;
    for (double p : priorities_) m = std::max(m, p);
    return m;
}

std::vector<int> ReplayBuffer::sample(int batch, Rng& rng) const {
    if (batch < 1 || items_.empty())
        throw std::invalid_argument("ReplayBuffer: bad sample request");
    std::vector<double> cum(priorities_.size());
    std::partial_sum(priorities_.begin(), priorities_.end(), cum.begin());
    const double total = cum.back();
    std::vector<int> out(static_cast<size_t>(batch));
    for (auto& idx : out) {
        const double u = uniform01(rng) * total;
        idx = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        if (idx >= static_cast<int>(items_.size())) idx = static_cast<int>(items_.size()) - 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// reward

double reward(double delta_f, double elapsed) {
    if (!(elapsed > 0.0)) throw std::invalid_argument("reward: elapsed must be positive");
    return delta_f >= 0.0 ? delta_f / elapsed : delta_f * elapsed;
}

// ---------------------------------------------------------------------------
// GuideAgent

namespace {

neuro::Network make_q_net(const GuideConfig& cfg) {
    neuro::Network net;
    int width = cfg.window * cfg.n_heuristics * kMetrics;
    for (int h : cfg.hidden) {
        net.add(std::make_unique<neuro::DenseLayer>(width, h));
        net.add(std::make_unique<neuro::ReluLayer>());
        width = h;
    }
    net.add(std::make_unique<neuro::DenseLayer>(width, cfg.n_heuristics));
    return net;
}

int argmax_low(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
    return best;
}

}  // namespace

GuideAgent::GuideAgent(GuideConfig cfg, uint64_t seed)
    : cfg_(std::move(cfg)),
      online_(make_q_net(cfg_)),
      target_(make_q_net(cfg_)),
      opt_(cfg_.lr),
      buffer_(cfg_.replay_capacity) {
    if (cfg_.n_heuristics < 1) throw std::invalid_argument("GuideAgent: need >= 1 heuristic");
    if (cfg_.batch_size < 1 || cfg_.target_sync_every < 1 || cfg_.train_every < 1)
        throw std::invalid_argument("GuideAgent: bad training cadence");
    if (!(cfg_.discount >= 0.0 && cfg_.discount < 1.0))
        throw std::invalid_argument("GuideAgent: discount must lie in [0,1)");
    online_.init_params(seed);
    sync_target();
}

void GuideAgent::sync_target() {
    const auto src = online_.params();
    const auto dst = target_.params();
    for (size_t i = 0; i < src.size(); ++i) dst[i]->data = src[i]->data;
}

std::vector<double> GuideAgent::forward_vec(neuro::Network& net,
                                            const std::vector<double>& state) {
    if (static_cast<int>(state.size()) != state_width())
        throw std::invalid_argument("GuideAgent: state width mismatch");
    neuro::Tensor in({state_width()});
    in.data = state;
    return net.forward(in).data;
}

std::vector<double> GuideAgent::q_values(const GuideState& s) {
    return forward_vec(online_, s.features().data);
}

int GuideAgent::greedy(const GuideState& s) { return argmax_low(q_values(s)); }

GuideAction GuideAgent::score_heuristics(const GuideState& s, double sigma_explore, Rng& rng) {
    if (sigma_explore < 0.0)
        throw std::invalid_argument("score_heuristics: sigma_explore must be >= 0");
    GuideAction act;
    act.raw = q_values(s);
    for (auto& v : act.raw) v = std::clamp(v, 0.0, 1.0);

    act.probs = act.raw;
    if (sigma_explore > 0.0) {
        std::normal_distribution<double> noise(0.0, sigma_explore);
        for (auto& v : act.probs) v = std::max(0.0, v + noise(rng));
    }
    const double norm = std::accumulate(act.probs.begin(), act.probs.end(), 0.0);
    if (norm > 0.0) {
        for (auto& v : act.probs) v /= norm;
    } else {
        std::fill(act.probs.begin(), act.probs.end(), 1.0 / cfg_.n_heuristics);
    }

    const double u = uniform01(rng);
    double cum = 0.0;
    act.heuristic = cfg_.n_heuristics - 1;
    for (int i = 0; i < cfg_.n_heuristics; ++i) {
        cum += act.probs[static_cast<size_t>(i)];
        if (u < cum) {
            act.heuristic = i;
            break;
        }
    }
    return act;
}

void GuideAgent::remember(const GuideState& s, int action, double r, const GuideState& next,
                          bool terminal) {
    remember_raw(s.features().data, action, r, next.features().data, terminal);
}

void GuideAgent::remember_raw(std::vector<double> state, int action, double r,
                              std::vector<double> next_state, bool terminal) {
    if (action < 0 || action >= cfg_.n_heuristics)
        throw std::invalid_argument("remember: action out of range");
    if (static_cast<int>(state.size()) != state_width() ||
        static_cast<int>(next_state.size()) != state_width())
        throw std::invalid_argument("remember: state width mismatch");
    Transition t;
    t.state = std::move(state);
    t.action = action;
    t.reward = r;
    t.next_state = std::move(next_state);
    t.terminal = terminal;
    const double p = buffer_.size() == 0 ? 1.0 : buffer_.max_priority();
    buffer_.push(std::move(t), p);
}

std::optional<double> GuideAgent::train_step(Rng& rng) {
    if (buffer_.size() < cfg_.batch_size) return std::nullopt;
    const auto batch = buffer_.sample(cfg_.batch_size, rng);
    online_.zero_grad();
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (int i : batch) {
        const Transition& tr = buffer_.at(i);
        double y = tr.reward;
        if (!tr.terminal) {
            // double-Q: the online net picks the next action, the target net
            // evaluates it
            const auto q_next_online = forward_vec(online_, tr.next_state);
            const int a_star = argmax_low(q_next_online);
            const auto q_next_target = forward_vec(target_, tr.next_state);
            y += cfg_.discount * q_next_target[static_cast<size_t>(a_star)];
        }
        const auto q = forward_vec(online_, tr.state);
        const double td = y - q[static_cast<size_t>(tr.action)];
        loss += td * td * inv_b;

        neuro::Tensor up({cfg_.n_heuristics});
        up.data[static_cast<size_t>(tr.action)] = -2.0 * td * inv_b;
        online_.backward(up);
        buffer_.set_priority(i, std::abs(td) + cfg_.priority_eps);
    }
    opt_.step(online_.params(), online_.grads());
    ++train_steps_;
    if (train_steps_ % cfg_.target_sync_every == 0) sync_target();
    return loss;
}

std::string GuideAgent::save_checkpoint() const { return online_.save_checkpoint(); }

void GuideAgent::load_weights(const std::string& text) {
    neuro::Network net = neuro::load_checkpoint(text);
    if (net.n_params() != online_.n_params())
        throw std::runtime_error("load_weights: checkpoint does not match the architecture");
    online_ = std::move(net);
    sync_target();
    opt_ = neuro::Adam(cfg_.lr);  // moments refer to the replaced weights
}

// ---------------------------------------------------------------------------
// GuideSelector

GuideSelector::GuideSelector(GuideConfig cfg, uint64_t seed)
    : cfg_(cfg),
      agent_(cfg, seed),
      window_(cfg.n_heuristics, cfg.window),
      train_rng_(make_rng(seed, 0x47554944ull)) {}

double GuideSelector::sigma_now() const {
    const double t = cfg_.sigma_horizon <= 0
                         ? 1.0
                         : std::min(1.0, static_cast<double>(seen_) /
                                             static_cast<double>(cfg_.sigma_horizon));
    return cfg_.sigma_start + (cfg_.sigma_end - cfg_.sigma_start) * t;
}

int GuideSelector::select(Rng& rng) {
    const GuideAction act = agent_.score_heuristics(window_, sigma_now(), rng);
    pending_state_ = window_.features().data;
    pending_action_ = act.heuristic;
    has_pending_ = true;
    return act.heuristic;
}

void GuideSelector::observe(const IterationFeedback& fb) {
    const double work = std::max(fb.work_units, 1e-9);
    const double r = reward(fb.delta_norm, work);

    window_.push(fb.heuristic, fb.delta_norm, fb.work_units, fb.accepted);
    if (has_pending_) {
        // trust the engine's record of what actually ran
        agent_.remember_raw(std::move(pending_state_), fb.heuristic, r,
                            window_.features().data);
        has_pending_ = false;
    }
    ++seen_;
    if (seen_ % cfg_.train_every == 0) agent_.train_step(train_rng_);
}

}  // namespace minesched::guide
