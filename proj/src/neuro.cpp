#include "minesched/neuro.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace minesched::neuro {

using json = nlohmann::ordered_json;

namespace {

int64_t shape_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 1) throw std::invalid_argument("Tensor: nonpositive dimension");
        n *= d;
    }
    return shape.empty() ? 0 : n;
}

void check_finite(const Tensor& t, const char* what) {
    for (double v : t.data)
        if (!std::isfinite(v)) throw std::runtime_error(std::string(what) + ": non-finite value");
}

}  // namespace

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_size(shape)), 0.0);
}

double stable_sum(std::span<const double> values) {
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
}

// ---------------------------------------------------------------------------
// Dense

DenseLayer::DenseLayer(int fan_in, int fan_out) : fan_in_(fan_in), fan_out_(fan_out) {
    if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("dense: bad fan sizes");
    W = Tensor({fan_out, fan_in});
    b = Tensor({fan_out});
    gW = Tensor({fan_out, fan_in});
    gb = Tensor({fan_out});
}

Tensor DenseLayer::forward(const Tensor& in) {
    int64_t rows;
    std::vector<int> out_shape;
    if (!in.shape.empty() && in.shape.back() == fan_in_) {
        rows = in.size() / fan_in_;
        out_shape = in.shape;
        out_shape.back() = fan_out_;
    } else if (in.size() == fan_in_) {
        rows = 1;
        out_shape = {fan_out_};
    } else {
        throw std::invalid_argument("dense: input size incompatible with fan_in");
    }
    cache_in_ = in;
    has_cache_ = true;

    Tensor out(out_shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = in.data.data() + r * fan_in_;
        double* y = out.data.data() + r * fan_out_;
        for (int j = 0; j < fan_out_; ++j) {
            double acc = b[static_cast<size_t>(j)];
            const double* wrow = W.data.data() + static_cast<size_t>(j) * fan_in_;
            for (int i = 0; i < fan_in_; ++i) acc += wrow[i] * x[i];
            y[j] = acc;
        }
    }
    return out;
}

Tensor DenseLayer::backward(const Tensor& upstream) {
    if (!has_cache_) throw std::logic_error("dense: backward before forward");
    const int64_t rows = cache_in_.size() / fan_in_;
    if (upstream.size() != rows * fan_out_)
        throw std::invalid_argument("dense: upstream gradient size mismatch");

    Tensor gin(cache_in_.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = cache_in_.data.data() + r * fan_in_;
        const double* u = upstream.data.data() + r * fan_out_;
        double* gx = gin.data.data() + r * fan_in_;
        for (int j = 0; j < fan_out_; ++j) {
            const double uj = u[j];
            double* gwrow = gW.data.data() + static_cast<size_t>(j) * fan_in_;
            const double* wrow = W.data.data() + static_cast<size_t>(j) * fan_in_;
            gb[static_cast<size_t>(j)] += uj;
            for (int i = 0; i < fan_in_; ++i) {
                gwrow[i] += uj * x[i];
                gx[i] += uj * wrow[i];
            }
        }
    }
    return gin;
}

// ---------------------------------------------------------------------------
// Relu

Tensor ReluLayer::forward(const Tensor& in) {
    cache_in_ = in;
    has_cache_ = true;
    Tensor out = in;
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor ReluLayer::backward(const Tensor& upstream) {
    if (!has_cache_) throw std::logic_error("relu: backward before forward");
    if (upstream.size() != cache_in_.size())
        throw std::invalid_argument("relu: upstream gradient size mismatch");
    Tensor gin(cache_in_.shape);
    for (size_t i = 0; i < gin.data.size(); ++i)
        gin.data[i] = cache_in_.data[i] > 0.0 ? upstream.data[i] : 0.0;
    return gin;
}

// ---------------------------------------------------------------------------
// Conv3d

Conv3dLayer::Conv3dLayer(int in_channels, int out_channels, int kernel)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel) {
    if (in_channels < 1 || out_channels < 1) throw std::invalid_argument("conv3d: bad channels");
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("conv3d: kernel must be odd and positive");
    W = Tensor({out_channels, in_channels, kernel, kernel, kernel});
    b = Tensor({out_channels});
    gW = Tensor({out_channels, in_channels, kernel, kernel, kernel});
    gb = Tensor({out_channels});
}

Tensor Conv3dLayer::forward(const Tensor& in) {
    if (in.shape.size() != 4 || in.shape[0] != in_channels_)
        throw std::invalid_argument("conv3d: input must be [in_channels, X, Y, Z]");
    const int X = in.shape[1], Y = in.shape[2], Z = in.shape[3];
    cache_in_ = in;
    has_cache_ = true;

    const int R = kernel_ / 2;
    const auto in_at = [&](int c, int x, int y, int z) {
        return in.data[static_cast<size_t>(((c * X + x) * Y + y) * Z + z)];
    };
    Tensor out({out_channels_, X, Y, Z});
    size_t oi = 0;
    for (int o = 0; o < out_channels_; ++o) {
        for (int x = 0; x < X; ++x)
            for (int y = 0; y < Y; ++y)
                for (int z = 0; z < Z; ++z, ++oi) {
                    double acc = b[static_cast<size_t>(o)];
                    for (int c = 0; c < in_channels_; ++c)
                        for (int dx = -R; dx <= R; ++dx) {
                            const int xx = x + dx;
                            if (xx < 0 || xx >= X) continue;
                            for (int dy = -R; dy <= R; ++dy) {
                                const int yy = y + dy;
                                if (yy < 0 || yy >= Y) continue;
                                for (int dz = -R; dz <= R; ++dz) {
                                    const int zz = z + dz;
                                    if (zz < 0 || zz >= Z) continue;
                                    const size_t wi = static_cast<size_t>(
                                        (((o * in_channels_ + c) * kernel_ + dx + R) * kernel_ +
                                         dy + R) *
                                            kernel_ +
                                        dz + R);
                                    acc += W.data[wi] * in_at(c, xx, yy, zz);
                                }
                            }
                        }
                    out.data[oi] = acc;
                }
    }
    return out;
}

Tensor Conv3dLayer::backward(const Tensor& upstream) {
    if (!has_cache_) throw std::logic_error("conv3d: backward before forward");
    const int X = cache_in_.shape[1], Y = cache_in_.shape[2], Z = cache_in_.shape[3];
    if (upstream.size() != static_cast<int64_t>(out_channels_) * X * Y * Z)
        throw std::invalid_argument("conv3d: upstream gradient size mismatch");

    const int R = kernel_ / 2;
    Tensor gin(cache_in_.shape);
    const auto in_idx = [&](int c, int x, int y, int z) {
        return static_cast<size_t>(((c * X + x) * Y + y) * Z + z);
    };
    size_t oi = 0;
    for (int o = 0; o < out_channels_; ++o) {
        for (int x = 0; x < X; ++x)
            for (int y = 0; y < Y; ++y)
                for (int z = 0; z < Z; ++z, ++oi) {
                    const double u = upstream.data[oi];
                    if (u == 0.0) continue;
                    gb[static_cast<size_t>(o)] += u;
                    for (int c = 0; c < in_channels_; ++c)
                        for (int dx = -R; dx <= R; ++dx) {
                            const int xx = x + dx;
                            if (xx < 0 || xx >= X) continue;
                            for (int dy = -R; dy <= R; ++dy) {
                                const int yy = y + dy;
                                if (yy < 0 || yy >= Y) continue;
                                for (int dz = -R; dz <= R; ++dz) {
                                    const int zz = z + dz;
                                    if (zz < 0 || zz >= Z) continue;
                                    const size_t wi = static_cast<size_t>(
                                        (((o * in_channels_ + c) * kernel_ + dx + R) * kernel_ +
                                         dy + R) *
                                            kernel_ +
                                        dz + R);
                                    gW.data[wi] += u * cache_in_.data[in_idx(c, xx, yy, zz)];
                                    gin.data[in_idx(c, xx, yy, zz)] += u * W.data[wi];
                                }
                            }
                        }
                }
    }
    return gin;
}

// ---------------------------------------------------------------------------
// GraphConv

GraphConvLayer::GraphConvLayer(int fan_in, int fan_out) : fan_in_(fan_in), fan_out_(fan_out) {
    if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("graphconv: bad fan sizes");
    W_self = Tensor({fan_out, fan_in});
    W_nbr = Tensor({fan_out, fan_in});
    b = Tensor({fan_out});
    gW_self = Tensor({fan_out, fan_in});
    gW_nbr = Tensor({fan_out, fan_in});
    gb = Tensor({fan_out});
}

Tensor GraphConvLayer::forward(const Tensor& in) {
    if (!graph_) throw std::logic_error("graphconv: no graph bound");
    if (in.shape.size() != 2 || in.shape[0] != graph_->n_nodes || in.shape[1] != fan_in_)
        throw std::invalid_argument("graphconv: input must be [n_nodes, fan_in]");
    const int n = graph_->n_nodes;
    cache_in_ = in;

    // neighbor means, accumulated in ascending value order per component so a
    // node relabeling cannot change the result in the last bit; grid graphs
    // have small degrees, so the sort runs on a stack buffer (the ascending
    // sum matches std::sort bit for bit - order among equal values is
    // irrelevant to a sum)
    cache_mean_ = Tensor({n, fan_in_});
    constexpr int kStackDeg = 16;
    std::vector<double> spill;
    std::vector<const double*> spill_rows;
    for (int v = 0; v < n; ++v) {
        const int32_t lo = graph_->row_begin[static_cast<size_t>(v)];
        const int32_t hi = graph_->row_begin[static_cast<size_t>(v) + 1];
        if (lo == hi) continue;
        const int deg = hi - lo;
        double* mean_row =
            cache_mean_.data.data() + static_cast<size_t>(v) * static_cast<size_t>(fan_in_);
        if (deg <= kStackDeg) {
            const double* rows[kStackDeg];
            for (int32_t e = lo; e < hi; ++e)
                rows[e - lo] = in.data.data() +
                               static_cast<size_t>(graph_->neighbors[static_cast<size_t>(e)]) *
                                   static_cast<size_t>(fan_in_);
            for (int i = 0; i < fan_in_; ++i) {
                double vals[kStackDeg];
                for (int k = 0; k < deg; ++k) vals[k] = rows[static_cast<size_t>(k)][i];
                for (int k = 1; k < deg; ++k) {  // insertion sort, ascending
                    const double x = vals[k];
                    int j = k - 1;
                    while (j >= 0 && vals[j] > x) {
                        vals[j + 1] = vals[j];
                        --j;
                    }
                    vals[j + 1] = x;
                }
                double acc = 0.0;
                for (int k = 0; k < deg; ++k) acc += vals[k];
                mean_row[i] = acc / static_cast<double>(deg);
            }
        } else {
            spill_rows.clear();
            for (int32_t e = lo; e < hi; ++e)
                spill_rows.push_back(
                    in.data.data() +
                    static_cast<size_t>(graph_->neighbors[static_cast<size_t>(e)]) *
                        static_cast<size_t>(fan_in_));
            for (int i = 0; i < fan_in_; ++i) {
                spill.clear();
                for (const double* row : spill_rows) spill.push_back(row[i]);
                mean_row[i] = stable_sum(spill) / static_cast<double>(deg);
            }
        }
    }
    has_cache_ = true;

    Tensor out({n, fan_out_});
    for (int v = 0; v < n; ++v) {
        const double* xs = in.data.data() + static_cast<size_t>(v) * fan_in_;
        const double* xm = cache_mean_.data.data() + static_cast<size_t>(v) * fan_in_;
        double* y = out.data.data() + static_cast<size_t>(v) * fan_out_;
        for (int j = 0; j < fan_out_; ++j) {
            double acc = b[static_cast<size_t>(j)];
            const double* ws = W_self.data.data() + static_cast<size_t>(j) * fan_in_;
            const double* wn = W_nbr.data.data() + static_cast<size_t>(j) * fan_in_;
            for (int i = 0; i < fan_in_; ++i) acc += ws[i] * xs[i] + wn[i] * xm[i];
            y[j] = acc;
        }
    }
    return out;
}

Tensor GraphConvLayer::backward(const Tensor& upstream) {
    if (!has_cache_) throw std::logic_error("graphconv: backward before forward");
    const int n = graph_->n_nodes;
    if (upstream.size() != static_cast<int64_t>(n) * fan_out_)
        throw std::invalid_argument("graphconv: upstream gradient size mismatch");

    Tensor gin({n, fan_in_});
    // t[u,i] = sum_j up[u,j] * W_nbr[j,i], the message each node u sends back
    Tensor t({n, fan_in_});
    for (int u = 0; u < n; ++u) {
        const double* up = upstream.data.data() + static_cast<size_t>(u) * fan_out_;
        const double* xs = cache_in_.data.data() + static_cast<size_t>(u) * fan_in_;
        const double* xm = cache_mean_.data.data() + static_cast<size_t>(u) * fan_in_;
        double* gx = gin.data.data() + static_cast<size_t>(u) * fan_in_;
        double* tu = t.data.data() + static_cast<size_t>(u) * fan_in_;
        for (int j = 0; j < fan_out_; ++j) {
            const double uj = up[j];
            gb[static_cast<size_t>(j)] += uj;
            double* gws = gW_self.data.data() + static_cast<size_t>(j) * fan_in_;
            double* gwn = gW_nbr.data.data() + static_cast<size_t>(j) * fan_in_;
            const double* ws = W_self.data.data() + static_cast<size_t>(j) * fan_in_;
            const double* wn = W_nbr.data.data() + static_cast<size_t>(j) * fan_in_;
            for (int i = 0; i < fan_in_; ++i) {
                gws[i] += uj * xs[i];
                gwn[i] += uj * xm[i];
                gx[i] += uj * ws[i];
                tu[i] += uj * wn[i];
            }
        }
    }
    // scatter the neighbor-mean gradient: x[v] appears in mean(u) for u in N(v)
    for (int u = 0; u < n; ++u) {
        const int32_t lo = graph_->row_begin[static_cast<size_t>(u)];
        const int32_t hi = graph_->row_begin[static_cast<size_t>(u) + 1];
        if (lo == hi) continue;
        const double inv_deg = 1.0 / static_cast<double>(hi - lo);
        const double* tu = t.data.data() + static_cast<size_t>(u) * fan_in_;
        for (int32_t e = lo; e < hi; ++e) {
            double* gx = gin.data.data() +
                         static_cast<size_t>(graph_->neighbors[static_cast<size_t>(e)]) * fan_in_;
            for (int i = 0; i < fan_in_; ++i) gx[i] += inv_deg * tu[i];
        }
    }
    return gin;
}

// ---------------------------------------------------------------------------
// SoftmaxHead

Tensor SoftmaxHeadLayer::forward(const Tensor& in) {
    if (in.size() < 1) throw std::invalid_argument("softmax_head: empty input");
    double m = in.data[0];
    for (double v : in.data) m = std::max(m, v);
    Tensor out = in;
    for (auto& v : out.data) v = std::exp(v - m);
    const double z = stable_sum(out.data);
    for (auto& v : out.data) v /= z;
    cache_out_ = out;
    has_cache_ = true;
    return out;
}

Tensor SoftmaxHeadLayer::backward(const Tensor& upstream) {
    if (!has_cache_) throw std::logic_error("softmax_head: backward before forward");
    if (upstream.size() != cache_out_.size())
        throw std::invalid_argument("softmax_head: upstream gradient size mismatch");
    std::vector<double> prods(cache_out_.data.size());
    for (size_t i = 0; i < prods.size(); ++i) prods[i] = cache_out_.data[i] * upstream.data[i];
    const double dot = stable_sum(prods);
    Tensor gin(cache_out_.shape);
    for (size_t i = 0; i < gin.data.size(); ++i)
        gin.data[i] = cache_out_.data[i] * (upstream.data[i] - dot);
    return gin;
}

// ---------------------------------------------------------------------------
// Network

Network& Network::add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    return *this;
}

Tensor Network::forward(const Tensor& in) {
    Tensor x = in;
    for (auto& l : layers_) x = l->forward(x);
    forward_done_ = true;
    return x;
}

Tensor Network::backward(const Tensor& upstream) {
    if (!forward_done_) throw std::logic_error("network: backward before forward");
    Tensor g = upstream;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

void Network::zero_grad() {
    for (auto& l : layers_)
        for (Tensor* g : l->grads()) g->fill(0.0);
}

std::vector<Tensor*> Network::params() {
    std::vector<Tensor*> out;
    for (auto& l : layers_)
        for (Tensor* p : l->params()) out.push_back(p);
    return out;
}

std::vector<Tensor*> Network::grads() {
    std::vector<Tensor*> out;
    for (auto& l : layers_)
        for (Tensor* g : l->grads()) out.push_back(g);
    return out;
}

int64_t Network::n_params() {
    int64_t n = 0;
    for (Tensor* p : params()) n += p->size();
    return n;
}

void Network::init_params(uint64_t seed) {
    auto rng = make_rng(seed, 0x4e4555524full);
    for (auto& l : layers_) {
        const int fan = l->init_fan_in();
        if (fan == 0) continue;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Tensor* p : l->params())
            for (auto& v : p->data) v = u(rng);
    }
}

void Network::bind_graph(std::shared_ptr<const BlockGraph> g) {
    for (auto& l : layers_)
        if (auto* gc = dynamic_cast<GraphConvLayer*>(l.get())) gc->set_graph(g);
}

std::string Network::save_checkpoint() const {
    json spec = json::array();
    json weights = json::array();
    for (const auto& l : layers_) {
        json e;
        e["kind"] = l->kind();
        if (const auto* d = dynamic_cast<const DenseLayer*>(l.get())) {
            e["fan_in"] = d->W.shape[1];
            e["fan_out"] = d->W.shape[0];
        } else if (const auto* c = dynamic_cast<const Conv3dLayer*>(l.get())) {
            e["in_channels"] = c->in_channels();
            e["out_channels"] = c->out_channels();
            e["kernel"] = c->kernel();
        } else if (const auto* g = dynamic_cast<const GraphConvLayer*>(l.get())) {
            e["fan_in"] = g->W_self.shape[1];
            e["fan_out"] = g->W_self.shape[0];
        }
        spec.push_back(e);
        for (const Tensor* p : const_cast<Layer&>(*l).params())
            weights.push_back(encode_doubles(p->data));
    }
    json j;
    j["format"] = "minesched.network";
    j["version"] = 1;
    j["layers"] = spec;
    j["weights"] = weights;
    return j.dump();
}

Network load_checkpoint(const std::string& text) {
    const json j = json::parse(text);
    if (j.at("format") != "minesched.network")
        throw std::runtime_error("load_checkpoint: wrong format tag");
    if (j.at("version").get<int>() != 1)
        throw std::runtime_error("load_checkpoint: unsupported version");

    Network net;
    for (const auto& e : j.at("layers")) {
        const std::string kind = e.at("kind").get<std::string>();
        if (kind == "dense") {
            net.add(std::make_unique<DenseLayer>(e.at("fan_in").get<int>(),
                                                 e.at("fan_out").get<int>()));
        } else if (kind == "conv3d") {
            net.add(std::make_unique<Conv3dLayer>(e.at("in_channels").get<int>(),
                                                  e.at("out_channels").get<int>(),
                                                  e.at("kernel").get<int>()));
        } else if (kind == "graphconv") {
            net.add(std::make_unique<GraphConvLayer>(e.at("fan_in").get<int>(),
                                                     e.at("fan_out").get<int>()));
        } else if (kind == "relu") {
            net.add(std::make_unique<ReluLayer>());
        } else if (kind == "softmax_head") {
            net.add(std::make_unique<SoftmaxHeadLayer>());
        } else {
            throw std::runtime_error("load_checkpoint: unknown layer kind " + kind);
        }
    }

    const auto& weights = j.at("weights");
    const auto params = net.params();
    if (weights.size() != params.size())
        throw std::runtime_error("load_checkpoint: weight blob count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto vals = decode_doubles(weights[i].get<std::string>());
        if (static_cast<int64_t>(vals.size()) != params[i]->size())
            throw std::runtime_error("load_checkpoint: weight blob size mismatch");
        params[i]->data = vals;
    }
    return net;
}

// ---------------------------------------------------------------------------
// Optimizers

namespace {

void check_step_args(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("optimizer: parameter/gradient list size mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i]->size() != grads[i]->size())
            throw std::invalid_argument("optimizer: parameter/gradient shape mismatch");
        check_finite(*grads[i], "optimizer gradient");
    }
}

}  // namespace

void SgdMomentum::step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads) {
    check_step_args(params, grads);
    if (velocity_.empty()) {
        velocity_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i)
            velocity_[i].assign(params[i]->data.size(), 0.0);
    }
    if (velocity_.size() != params.size())
        throw std::invalid_argument("optimizer: parameter list changed between steps");
    for (size_t i = 0; i < params.size(); ++i) {
        auto& v = velocity_[i];
        auto& p = params[i]->data;
        const auto& g = grads[i]->data;
        for (size_t k = 0; k < p.size(); ++k) {
            v[k] = momentum_ * v[k] - lr_ * g[k];
            p[k] += v[k];
        }
    }
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads) {
    check_step_args(params, grads);
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->data.size(), 0.0);
            v_[i].assign(params[i]->data.size(), 0.0);
        }
    }
    if (m_.size() != params.size())
        throw std::invalid_argument("optimizer: parameter list changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& m = m_[i];
        auto& v = v_[i];
        auto& p = params[i]->data;
        const auto& g = grads[i]->data;
        for (size_t k = 0; k < p.size(); ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            p[k] -= lr_ * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps_);
        }
    }
}

}  // namespace minesched::neuro
