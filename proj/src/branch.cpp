#include "minesched/branch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "minesched/guide.hpp"  // reward()

namespace minesched::branch {

PolicyKind policy_kind_from_string(const std::string& s) {
    if (s == "baseline") return PolicyKind::baseline;
    if (s == "nn-nb" || s == "nn_nb") return PolicyKind::nn_nb;
    if (s == "cnn-nb" || s == "cnn_nb") return PolicyKind::cnn_nb;
    if (s == "gnn-nb" || s == "gnn_nb") return PolicyKind::gnn_nb;
    throw std::invalid_argument("unknown policy kind: " + s);
}

std::string to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::baseline: return "baseline";
        case PolicyKind::nn_nb: return "nn-nb";
        case PolicyKind::cnn_nb: return "cnn-nb";
        case PolicyKind::gnn_nb: return "gnn-nb";
    }
    throw std::invalid_argument("unknown policy kind");
}

// ---------------------------------------------------------------------------
// FeatureBuilder

FeatureBuilder::FeatureBuilder(const BlockModel& model, const Flowsheet& fs)
    : model_(&model), fs_(&fs) {
    n_dest_ = static_cast<int>(fs.destinations().size());
    n_bins_ = fs.n_bins();
    n_periods_ = fs.n_periods();
    max_grade_ = std::max(model.max_grade(), 1e-12);

    const int n = model.n_blocks();
    grade_mean_.resize(static_cast<size_t>(n));
    grade_std_.resize(static_cast<size_t>(n));
    max_tonnage_ = 1e-12;
    for (int32_t v = 0; v < n; ++v) {
        const auto& a = model.attrs(v);
        max_tonnage_ = std::max(max_tonnage_, a.tonnage);
        const auto& g = a.grade;
        const double mean =
            std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
        double var = 0.0;
        for (double x : g) var += (x - mean) * (x - mean);
        var /= static_cast<double>(g.size());
        grade_mean_[static_cast<size_t>(v)] = mean;
        grade_std_[static_cast<size_t>(v)] = std::sqrt(var);
    }
}

int FeatureBuilder::bin_of_mean(int32_t block) const {
    const double g = grade_mean_[static_cast<size_t>(block)];
    if (model_->max_grade() <= 0.0) return 0;
    const double bin_width = model_->max_grade() / static_cast<double>(n_bins_);
    return std::min(n_bins_ - 1, static_cast<int>(g / bin_width));
}

std::vector<double> FeatureBuilder::feature_row(const Solution& sol, int32_t block) const {
    std::vector<double> row(static_cast<size_t>(width()), 0.0);
    const auto id = model_->id_from_index(block);
    const auto& a = model_->attrs(block);
    row[0] = a.tonnage / max_tonnage_;
    row[1] = grade_mean_[static_cast<size_t>(block)] / max_grade_;
    row[2] = grade_std_[static_cast<size_t>(block)] / max_grade_;
    row[3] = model_->nx() > 1 ? static_cast<double>(id.x) / (model_->nx() - 1) : 0.0;
    row[4] = model_->ny() > 1 ? static_cast<double>(id.y) / (model_->ny() - 1) : 0.0;
    row[5] = model_->nz() > 1 ? static_cast<double>(id.z) / (model_->nz() - 1) : 0.0;
    const int16_t t = sol.extract_period[static_cast<size_t>(block)];
    if (t == kNotMined) {
        row[6] = -1.0;
    } else {
        row[6] = n_periods_ > 1 ? static_cast<double>(t) / (n_periods_ - 1) : 0.0;
        const int32_t slot = sol.dest_at(bin_of_mean(block), static_cast<int>(t), n_periods_);
        if (slot >= 0 && slot < n_dest_) row[static_cast<size_t>(7 + slot)] = 1.0;
    }
    return row;
}

neuro::Tensor FeatureBuilder::build(const Solution& sol) const {
    const int n = model_->n_blocks();
    neuro::Tensor out({n, width()});
    for (int32_t v = 0; v < n; ++v) {
        const auto row = feature_row(sol, v);
        std::copy(row.begin(), row.end(),
                  out.data.begin() + static_cast<ptrdiff_t>(v) * width());
    }
    return out;
}

neuro::Tensor FeatureBuilder::build_grid(const Solution& sol) const {
    const int nx = model_->nx(), ny = model_->ny(), nz = model_->nz();
    neuro::Tensor out({width(), nx, ny, nz});
    const auto n = static_cast<size_t>(model_->n_blocks());
    for (size_t v = 0; v < n; ++v) {
        const auto id = model_->id_from_index(static_cast<int32_t>(v));
        const auto row = feature_row(sol, static_cast<int32_t>(v));
        for (int c = 0; c < width(); ++c)
            out.data[static_cast<size_t>(((c * nx + id.x) * ny + id.y) * nz + id.z)] =
                row[static_cast<size_t>(c)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// NeuralSampler

namespace {

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

neuro::Network make_policy_net(PolicyKind kind, const FeatureBuilder& fb,
                               const BlockModel& model, const BranchConfig& cfg) {
    using namespace neuro;
    Network net;
    switch (kind) {
        case PolicyKind::nn_nb: {
            int w = fb.width();
            for (int h : cfg.nn_hidden) {
                net.add(std::make_unique<DenseLayer>(w, h));
                net.add(std::make_unique<ReluLayer>());
                w = h;
            }
            net.add(std::make_unique<DenseLayer>(w, 1));
            break;
        }
        case PolicyKind::cnn_nb: {
            net.add(std::make_unique<Conv3dLayer>(fb.width(), cfg.conv_channels, 3));
            net.add(std::make_unique<ReluLayer>());
            net.add(std::make_unique<DenseLayer>(cfg.conv_channels * model.n_blocks(), 3));
            break;
        }
        case PolicyKind::gnn_nb: {
            int w = fb.width();
            for (int round = 0; round + 1 < cfg.gnn_rounds; ++round) {
                net.add(std::make_unique<GraphConvLayer>(w, cfg.gnn_width));
                net.add(std::make_unique<ReluLayer>());
                w = cfg.gnn_width;
            }
            net.add(std::make_unique<GraphConvLayer>(w, 1));
            net.add(std::make_unique<SoftmaxHeadLayer>());
            break;
        }
        case PolicyKind::baseline:
            throw std::invalid_argument("NeuralSampler: baseline has no network");
    }
    return net;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

NeuralSampler::NeuralSampler(PolicyKind kind, const BlockModel& model, const Flowsheet& fs,
                             BranchConfig cfg, uint64_t seed)
    : kind_(kind),
      model_(&model),
      fs_(&fs),
      cfg_(std::move(cfg)),
      features_(model, fs),
      net_(make_policy_net(kind, features_, model, cfg_)),
      opt_(cfg_.lr) {
    if (cfg_.refresh_interval < 1)
        throw std::invalid_argument("NeuralSampler: refresh_interval must be positive");
    if (!(cfg_.clip_eps > 0.0)) throw std::invalid_argument("NeuralSampler: clip_eps must be > 0");
    if (cfg_.entropy_bonus < 0.0)
        throw std::invalid_argument("NeuralSampler: entropy_bonus must be >= 0");
    if (kind_ == PolicyKind::gnn_nb) {
        graph_ = std::make_shared<const BlockGraph>(block_graph(model));
        net_.bind_graph(graph_);
    }
    net_.init_params(seed);
}

SamplingDistribution NeuralSampler::forward_distribution(const Solution& sol, bool* degenerate) {
    const int n = model_->n_blocks();
    SamplingDistribution dist;
    dist.probabilities.assign(static_cast<size_t>(n), 0.0);
    *degenerate = false;

    switch (kind_) {
        case PolicyKind::nn_nb: {
            last_input_ = features_.build(sol);
            const neuro::Tensor y = net_.forward(last_input_);
            double total = 0.0;
            for (int v = 0; v < n; ++v) {
                const double s = sigmoid(y.data[static_cast<size_t>(v)]);
                dist.probabilities[static_cast<size_t>(v)] = s;
                total += s;
            }
            if (!(total > 0.0) || !all_finite(dist.probabilities)) {
                *degenerate = true;
                break;
            }
            for (auto& p : dist.probabilities) p /= total;
            break;
        }
        case PolicyKind::cnn_nb: {
            last_input_ = features_.build_grid(sol);
            const neuro::Tensor raw = net_.forward(last_input_);
            if (!all_finite(raw.data)) {
                *degenerate = true;
                break;
            }
            const double dims[3] = {static_cast<double>(model_->nx() - 1),
                                    static_cast<double>(model_->ny() - 1),
                                    static_cast<double>(model_->nz() - 1)};
            for (int k = 0; k < 3; ++k)
                last_center_[static_cast<size_t>(k)] = dims[k] * sigmoid(raw.data[static_cast<size_t>(k)]);
            const double inv_two_var = 1.0 / (2.0 * cfg_.kernel_std * cfg_.kernel_std);
            const double r2 = cfg_.kernel_radius * cfg_.kernel_radius;
            double total = 0.0;
            for (int32_t v = 0; v < n; ++v) {
                const auto id = model_->id_from_index(v);
                const double dx = id.x - last_center_[0];
                const double dy = id.y - last_center_[1];
                const double dz = id.z - last_center_[2];
                const double d2 = dx * dx + dy * dy + dz * dz;
                const double w = d2 <= r2 ? std::exp(-d2 * inv_two_var) : 0.0;
                dist.probabilities[static_cast<size_t>(v)] = w;
                total += w;
            }
            if (!(total > 0.0)) {
                *degenerate = true;
                break;
            }
            for (auto& p : dist.probabilities) p /= total;
            break;
        }
        case PolicyKind::gnn_nb: {
            last_input_ = features_.build(sol);
            const neuro::Tensor y = net_.forward(last_input_);
            if (!all_finite(y.data)) {
                *degenerate = true;
                break;
            }
            dist.probabilities = y.data;  // softmax head output
            break;
        }
        case PolicyKind::baseline:
            throw std::logic_error("NeuralSampler: baseline has no distribution");
    }

    if (*degenerate) {
        const double u = 1.0 / static_cast<double>(n);
        std::fill(dist.probabilities.begin(), dist.probabilities.end(), u);
    }
    dist.finalize();
    return dist;
}

void NeuralSampler::refresh(const Solution& sol) {
    cache_ = forward_distribution(sol, &last_forward_degenerate_);
    cache_valid_ = true;
    cache_age_ = 0;
}

const SamplingDistribution& NeuralSampler::distribution(const Solution& sol) {
    if (!cache_valid_ || cache_age_ >= cfg_.refresh_interval) refresh(sol);
    return cache_;
}

SamplingDistribution NeuralSampler::compute_distribution(const Solution& sol) {
    bool degenerate = false;
    return forward_distribution(sol, &degenerate);
}

void NeuralSampler::observe(const SamplerFeedback& fb) {
    if (!cache_valid_ || fb.block < 0 || fb.block >= model_->n_blocks()) return;
    ++cache_age_;
    BranchTriple t;
    t.block = fb.block;
    t.old_prob = cache_.probabilities[static_cast<size_t>(fb.block)];
    // a proposal probability this small carries no trainable signal, and the
    // importance ratio's adv/old_prob gradient would overflow
    if (t.old_prob < 1e-12) return;
    t.reward = guide::reward(fb.delta_norm, std::max(fb.work_units, 1e-9));
    triples_.push_back(t);
}

void NeuralSampler::end_epoch() { train_episode(); }

std::optional<double> NeuralSampler::train_episode() {
    if (triples_.empty() || !cache_valid_) return std::nullopt;

    // advantages against the running baseline (rewards fold in afterwards so a
    // first-ever batch is judged against zero)
    std::vector<double> adv(triples_.size());
    bool any_nonzero = false;
    for (size_t i = 0; i < triples_.size(); ++i) {
        adv[i] = triples_[i].reward - baseline_mean_;
        if (adv[i] != 0.0) any_nonzero = true;
    }
    auto fold_and_clear = [&] {
        for (const auto& t : triples_) {
            ++baseline_count_;
            baseline_mean_ += (t.reward - baseline_mean_) / static_cast<double>(baseline_count_);
        }
        triples_.clear();
    };
    if (!any_nonzero) {
        fold_and_clear();
        return std::nullopt;
    }

    // recompute the distribution with current weights on the snapshot input
    const int n = model_->n_blocks();
    const double inv_n_triples = 1.0 / static_cast<double>(triples_.size());
    std::vector<double> probs(static_cast<size_t>(n), 0.0);

    // per-kind forward on last_input_, keeping intermediates for the backward
    neuro::Tensor y;  // raw net output
    double nn_total = 0.0;
    bool degenerate = false;
    double center[3] = {0, 0, 0};
    double dims[3] = {static_cast<double>(model_->nx() - 1),
                      static_cast<double>(model_->ny() - 1),
                      static_cast<double>(model_->nz() - 1)};
    switch (kind_) {
        case PolicyKind::nn_nb: {
            y = net_.forward(last_input_);
            for (int v = 0; v < n; ++v) {
                const double s = sigmoid(y.data[static_cast<size_t>(v)]);
                probs[static_cast<size_t>(v)] = s;
                nn_total += s;
            }
            if (!(nn_total > 0.0) || !all_finite(probs)) degenerate = true;
            else
                for (auto& p : probs) p /= nn_total;
            break;
        }
        case PolicyKind::cnn_nb: {
            y = net_.forward(last_input_);
            if (!all_finite(y.data)) {
                degenerate = true;
                break;
            }
            const double inv_two_var = 1.0 / (2.0 * cfg_.kernel_std * cfg_.kernel_std);
            const double r2 = cfg_.kernel_radius * cfg_.kernel_radius;
            double total = 0.0;
            for (int k = 0; k < 3; ++k) center[k] = dims[k] * sigmoid(y.data[static_cast<size_t>(k)]);
            for (int32_t v = 0; v < n; ++v) {
                const auto id = model_->id_from_index(v);
                const double dx = id.x - center[0], dy = id.y - center[1], dz = id.z - center[2];
                const double d2 = dx * dx + dy * dy + dz * dz;
                probs[static_cast<size_t>(v)] = d2 <= r2 ? std::exp(-d2 * inv_two_var) : 0.0;
                total += probs[static_cast<size_t>(v)];
            }
            if (!(total > 0.0)) degenerate = true;
            else
                for (auto& p : probs) p /= total;
            break;
        }
        case PolicyKind::gnn_nb: {
            y = net_.forward(last_input_);
            if (!all_finite(y.data)) degenerate = true;
            else probs = y.data;
            break;
        }
        case PolicyKind::baseline:
            throw std::logic_error("NeuralSampler: baseline does not train");
    }
    if (degenerate) {
        fold_and_clear();
        return std::nullopt;
    }

    // clipped surrogate and its gradient with respect to probs
    double objective = 0.0;
    std::vector<double> dJ_dp(static_cast<size_t>(n), 0.0);
    const double lo = 1.0 - cfg_.clip_eps, hi = 1.0 + cfg_.clip_eps;
    for (size_t i = 0; i < triples_.size(); ++i) {
        const auto& t = triples_[i];
        const double ratio = probs[static_cast<size_t>(t.block)] / t.old_prob;
        const double unclipped = ratio * adv[i];
        const double clipped = std::clamp(ratio, lo, hi) * adv[i];
        objective += std::min(unclipped, clipped) * inv_n_triples;
        if (unclipped <= clipped)  // the unclipped branch is the active minimum
            dJ_dp[static_cast<size_t>(t.block)] += adv[i] / t.old_prob * inv_n_triples;
    }

    // constant entropy bonus: blocks with zero probability (outside the cnn
    // kernel, underflowed heads) contribute nothing and get no gradient
    if (cfg_.entropy_bonus > 0.0) {
        double entropy = 0.0;
        for (int v = 0; v < n; ++v) {
            const double p = probs[static_cast<size_t>(v)];
            if (p > 0.0) {
                entropy -= p * std::log(p);
                dJ_dp[static_cast<size_t>(v)] -= cfg_.entropy_bonus * (std::log(p) + 1.0);
            }
        }
        objective += cfg_.entropy_bonus * entropy;
    }

    // chain d(-J)/d(probs) back through the kind-specific normalization
    net_.zero_grad();
    neuro::Tensor up(y.shape);
    switch (kind_) {
        case PolicyKind::nn_nb: {
            double dot = 0.0;
            for (int v = 0; v < n; ++v) dot += dJ_dp[static_cast<size_t>(v)] * probs[static_cast<size_t>(v)];
            for (int v = 0; v < n; ++v) {
                const double s = sigmoid(y.data[static_cast<size_t>(v)]);
                up.data[static_cast<size_t>(v)] =
                    -(dJ_dp[static_cast<size_t>(v)] - dot) / nn_total * s * (1.0 - s);
            }
            break;
        }
        case PolicyKind::cnn_nb: {
            // dJ/dc_k = (1/sigma^2) [ sum_b g_b p_b (x_bk - c_k) - (sum_b g_b p_b) m_k ],
            // m_k = sum_v p_v (x_vk - c_k)
            const double inv_var = 1.0 / (cfg_.kernel_std * cfg_.kernel_std);
            double m[3] = {0, 0, 0};
            for (int32_t v = 0; v < n; ++v) {
                const auto id = model_->id_from_index(v);
                const double pv = probs[static_cast<size_t>(v)];
                m[0] += pv * (id.x - center[0]);
                m[1] += pv * (id.y - center[1]);
                m[2] += pv * (id.z - center[2]);
            }
            double gp_sum = 0.0, first[3] = {0, 0, 0};
            for (int32_t v = 0; v < n; ++v) {
                const double g = dJ_dp[static_cast<size_t>(v)];
                if (g == 0.0) continue;
                const auto id = model_->id_from_index(v);
                const double gp = g * probs[static_cast<size_t>(v)];
                gp_sum += gp;
                first[0] += gp * (id.x - center[0]);
                first[1] += gp * (id.y - center[1]);
                first[2] += gp * (id.z - center[2]);
            }
            for (int k = 0; k < 3; ++k) {
                const double dJ_dc = inv_var * (first[k] - gp_sum * m[k]);
                const double s = sigmoid(y.data[static_cast<size_t>(k)]);
                up.data[static_cast<size_t>(k)] = -dJ_dc * dims[k] * s * (1.0 - s);
            }
            break;
        }
        case PolicyKind::gnn_nb: {
            for (int v = 0; v < n; ++v) up.data[static_cast<size_t>(v)] = -dJ_dp[static_cast<size_t>(v)];
            break;
        }
        case PolicyKind::baseline:
            break;
    }
    net_.backward(up);
    opt_.step(net_.params(), net_.grads());
    ++updates_;
    fold_and_clear();
    cache_valid_ = false;  // the policy changed; next distribution() refreshes
    return objective;
}

void NeuralSampler::load_weights(const std::string& text) {
    neuro::Network net = neuro::load_checkpoint(text);
    if (net.n_params() != net_.n_params())
        throw std::runtime_error("load_weights: checkpoint does not match the architecture");
    net_ = std::move(net);
    if (kind_ == PolicyKind::gnn_nb) net_.bind_graph(graph_);
    opt_ = neuro::Adam(cfg_.lr);
    cache_valid_ = false;
}

std::unique_ptr<BlockSampler> make_sampler(PolicyKind kind, const BlockModel& model,
                                           const Flowsheet& fs, const BranchConfig& cfg,
                                           uint64_t seed) {
    if (kind == PolicyKind::baseline)
        return std::make_unique<UniformSampler>(model.n_blocks());
    return std::make_unique<NeuralSampler>(kind, model, fs, cfg, seed);
}

}  // namespace minesched::branch
