#pragma once

// Central finite-difference gradient checking for neuro networks, shared by
// the unit tests, the CLI selfcheck verb, and the acceptance gate. The loss is a fixed random linear
// functional of the network output, so its gradient w.r.t. the output is a
// known constant vector and everything downstream of backward() is exercised.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "minesched/blockmodel.hpp"
#include "minesched/common.hpp"
#include "minesched/neuro.hpp"

namespace minesched::fdcheck {

struct FdResult {
    double max_rel_err = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::string worst_where;
};

inline double linear_loss(neuro::Network& net, const neuro::Tensor& in,
                          const std::vector<double>& c) {
    const neuro::Tensor out = net.forward(in);
    double loss = 0.0;
    for (size_t i = 0; i < c.size(); ++i) loss += c[i] * out.data[i];
    return loss;
}

// Checks every parameter entry and every input entry of `net` at `in`.
// Relative error is |a - n| / max(|a| + |n|, 1e-6): the absolute-floor guard
// keeps near-zero gradients from registering spurious blowups while still
// catching any real disagreement far above the h^2 truncation error.
inline FdResult fd_check(neuro::Network& net, neuro::Tensor in, uint64_t seed,
                         double h = 1e-5) {
    auto rng = make_rng(seed, 0xfd5eedull);
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    neuro::Tensor out0 = net.forward(in);
    std::vector<double> c(out0.data.size());
    for (auto& v : c) v = u(rng);

    net.zero_grad();
    neuro::Tensor up(out0.shape);
    up.data = c;
    const neuro::Tensor gin = net.backward(up);

    FdResult res;
    auto consider = [&](double analytic, double numeric, const std::string& where) {
        const double rel =
            std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.worst_analytic = analytic;
            res.worst_numeric = numeric;
            res.worst_where = where;
        }
    };

    const auto params = net.params();
    const auto grads = net.grads();
    for (size_t pi = 0; pi < params.size(); ++pi) {
        for (size_t k = 0; k < params[pi]->data.size(); ++k) {
            double& w = params[pi]->data[k];
            const double orig = w;
            w = orig + h;
            const double lp = linear_loss(net, in, c);
            w = orig - h;
            const double lm = linear_loss(net, in, c);
            w = orig;
            consider(grads[pi]->data[k], (lp - lm) / (2.0 * h),
                     "param " + std::to_string(pi) + "[" + std::to_string(k) + "]");
        }
    }
    for (size_t k = 0; k < in.data.size(); ++k) {
        const double orig = in.data[k];
        in.data[k] = orig + h;
        const double lp = linear_loss(net, in, c);
        in.data[k] = orig - h;
        const double lm = linear_loss(net, in, c);
        in.data[k] = orig;
        consider(gin.data[k], (lp - lm) / (2.0 * h), "input[" + std::to_string(k) + "]");
    }
    return res;
}

struct FdCase {
    neuro::Network net;
    neuro::Tensor input;
};

inline std::shared_ptr<const BlockGraph> random_graph(int n, double p, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<int32_t>> adj(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a)
        for (int bb = a + 1; bb < n; ++bb)
            if (u(rng) < p) {
                adj[static_cast<size_t>(a)].push_back(bb);
                adj[static_cast<size_t>(bb)].push_back(a);
            }
    auto g = std::make_shared<BlockGraph>();
    g->n_nodes = n;
    g->row_begin.assign(static_cast<size_t>(n) + 1, 0);
    for (int v = 0; v < n; ++v) {
        std::sort(adj[static_cast<size_t>(v)].begin(), adj[static_cast<size_t>(v)].end());
        g->row_begin[static_cast<size_t>(v) + 1] =
            g->row_begin[static_cast<size_t>(v)] +
            static_cast<int32_t>(adj[static_cast<size_t>(v)].size());
        for (int32_t w : adj[static_cast<size_t>(v)]) g->neighbors.push_back(w);
    }
    return g;
}

// A small randomized net whose architecture is centered on one layer kind.
// Deterministic in (kind, seed).
inline FdCase make_fd_case(const std::string& kind, uint64_t seed) {
    using namespace neuro;
    auto rng = make_rng(seed, 0xfdca5eull);
    auto pick = [&](int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    };
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    FdCase fc;
    if (kind == "dense") {
        const int fi = pick(2, 6), fo = pick(1, 5), rows = pick(1, 3);
        fc.net.add(std::make_unique<DenseLayer>(fi, fo));
        fc.input = rows == 1 ? Tensor({fi}) : Tensor({rows, fi});
    } else if (kind == "relu") {
        const int fi = pick(2, 5), fm = pick(2, 6), fo = pick(1, 4);
        fc.net.add(std::make_unique<DenseLayer>(fi, fm));
        fc.net.add(std::make_unique<ReluLayer>());
        fc.net.add(std::make_unique<DenseLayer>(fm, fo));
        fc.input = Tensor({fi});
    } else if (kind == "conv3d") {
        const int C = pick(1, 2), O = pick(1, 3);
        const int X = pick(2, 4), Y = pick(2, 4), Z = pick(2, 4);
        fc.net.add(std::make_unique<Conv3dLayer>(C, O, 3));
        fc.input = Tensor({C, X, Y, Z});
    } else if (kind == "graphconv") {
        const int n = pick(4, 9), fi = pick(2, 4), fm = pick(2, 4), fo = pick(1, 3);
        fc.net.add(std::make_unique<GraphConvLayer>(fi, fm));
        fc.net.add(std::make_unique<ReluLayer>());
        fc.net.add(std::make_unique<GraphConvLayer>(fm, fo));
        fc.net.bind_graph(random_graph(n, 0.4, rng));
        fc.input = Tensor({n, fi});
    } else if (kind == "softmax_head") {
        const int fi = pick(2, 5), fo = pick(2, 6);
        fc.net.add(std::make_unique<DenseLayer>(fi, fo));
        fc.net.add(std::make_unique<SoftmaxHeadLayer>());
        fc.input = Tensor({fi});
    } else {
        throw std::invalid_argument("make_fd_case: unknown kind " + kind);
    }
    fc.net.init_params(seed ^ 0x9e3779b97f4a7c15ull);
    for (auto& v : fc.input.data) v = u(rng);
    return fc;
}

}  // namespace minesched::fdcheck
