#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "minesched/blockmodel.hpp"
#include "minesched/common.hpp"

namespace minesched::neuro {

/// Dense row-major value buffer with an explicit shape.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }
};

/// Sum in ascending value order: the result depends only on the multiset of
/// addends, which keeps permutation-equivariance checks exact to the bit.
double stable_sum(std::span<const double> values);

/// One differentiable layer. forward caches what backward needs; backward
/// accumulates parameter gradients (callers zero them between steps) and
/// returns the gradient with respect to the layer input.
class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string kind() const = 0;
    virtual Tensor forward(const Tensor& in) = 0;
    virtual Tensor backward(const Tensor& upstream) = 0;
    virtual std::vector<Tensor*> params() { return {}; }
    virtual std::vector<Tensor*> grads() { return {}; }
    /// Bound used for seeded 1/sqrt(fan_in) initialization; 0 = no parameters.
    virtual int init_fan_in() const { return 0; }
};

/// y = W x + b per row; accepts [n, fan_in] (row batch), a bare [fan_in]
/// vector, or any shape whose total size is fan_in (flattened single row).
class DenseLayer final : public Layer {
public:
    DenseLayer(int fan_in, int fan_out);
    std::string kind() const override { return "dense"; }
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<Tensor*> params() override { return {&W, &b}; }
    std::vector<Tensor*> grads() override { return {&gW, &gb}; }
    int init_fan_in() const override { return fan_in_; }

    Tensor W, b, gW, gb;  // W: [fan_out, fan_in]

private:
    int fan_in_, fan_out_;
    Tensor cache_in_;
    bool has_cache_ = false;
};

class ReluLayer final : public Layer {
public:
    std::string kind() const override { return "relu"; }
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& upstream) override;

private:
    Tensor cache_in_;
    bool has_cache_ = false;
};

/// 3x3x3 stride-1 zero-padded ("same") convolution over a [C, X, Y, Z] grid.
class Conv3dLayer final : public Layer {
public:
    Conv3dLayer(int in_channels, int out_channels, int kernel = 3);
    std::string kind() const override { return "conv3d"; }
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<Tensor*> params() override { return {&W, &b}; }
    std::vector<Tensor*> grads() override { return {&gW, &gb}; }
    int init_fan_in() const override { return in_channels_ * kernel_ * kernel_ * kernel_; }
    int in_channels() const { return in_channels_; }
    int out_channels() const { return out_channels_; }
    int kernel() const { return kernel_; }

    Tensor W, b, gW, gb;  // W: [O, C, k, k, k]

private:
    int in_channels_, out_channels_, kernel_;
    Tensor cache_in_;
    bool has_cache_ = false;
};

/// state'(v) = W_self x(v) + W_nbr mean_{u in N(v)} x(u) + b over an
/// undirected block graph; an isolated node's neighbor term is zero. The
/// neighbor mean is accumulated in value order, so relabeling nodes permutes
/// outputs bit-exactly.
class GraphConvLayer final : public Layer {
public:
    GraphConvLayer(int fan_in, int fan_out);
    std::string kind() const override { return "graphconv"; }
    void set_graph(std::shared_ptr<const BlockGraph> g) { graph_ = std::move(g); }
    const BlockGraph* graph() const { return graph_.get(); }
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& upstream) override;
    std::vector<Tensor*> params() override { return {&W_self, &W_nbr, &b}; }
    std::vector<Tensor*> grads() override { return {&gW_self, &gW_nbr, &gb}; }
    int init_fan_in() const override { return fan_in_; }

    Tensor W_self, W_nbr, b, gW_self, gW_nbr, gb;  // W: [fan_out, fan_in]

private:
    int fan_in_, fan_out_;
    std::shared_ptr<const BlockGraph> graph_;
    Tensor cache_in_, cache_mean_;
    bool has_cache_ = false;
};

/// Softmax over the flattened input: one probability distribution across all
/// entries (nonnegative, sums to 1). Reductions use stable_sum.
class SoftmaxHeadLayer final : public Layer {
public:
    std::string kind() const override { return "softmax_head"; }
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& upstream) override;

private:
    Tensor cache_out_;
    bool has_cache_ = false;
};

/// A layer pipeline. Layers are owned; forward/backward thread activations
/// through in order. Parameter initialization is seeded and architecture-
/// deterministic.
class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    Network& add(std::unique_ptr<Layer> layer);
    int n_layers() const { return static_cast<int>(layers_.size()); }
    Layer& layer(int i) { return *layers_[static_cast<size_t>(i)]; }
    const Layer& layer(int i) const { return *layers_[static_cast<size_t>(i)]; }

    Tensor forward(const Tensor& in);
    /// Gradient of the scalar loss with respect to the network input;
    /// parameter gradients accumulate into each layer's grad tensors.
    Tensor backward(const Tensor& upstream);
    void zero_grad();

    std::vector<Tensor*> params();
    std::vector<Tensor*> grads();
    int64_t n_params();

    /// Uniform[-1/sqrt(fan_in), 1/sqrt(fan_in)] for every parameter tensor,
    /// drawn from a single seeded stream in layer order.
    void init_params(uint64_t seed);

    /// Attach the graph to every graphconv layer (graphs are instance data,
    /// not parameters, and are not serialized).
    void bind_graph(std::shared_ptr<const BlockGraph> g);

    std::string save_checkpoint() const;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    bool forward_done_ = false;
};

/// Rebuilds a network (architecture + weights) from save_checkpoint output.
/// graphconv layers come back unbound; call bind_graph before forward.
Network load_checkpoint(const std::string& text);

// ---------------------------------------------------------------------------
// Optimizers. step() updates parameters in place from the matching gradient
// list; any non-finite gradient entry is a fault. State buffers are keyed by
// position, so the parameter list must stay stable across calls.

class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads) = 0;
};

class SgdMomentum final : public Optimizer {
public:
    explicit SgdMomentum(double lr = 0.01, double momentum = 0.9)
        : lr_(lr), momentum_(momentum) {}
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads) override;

private:
    double lr_, momentum_;
    std::vector<std::vector<double>> velocity_;
};

class Adam final : public Optimizer {
public:
    explicit Adam(double lr = 0.001, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads) override;

private:
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace minesched::neuro
