#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "redry/nn/autograd.hpp"
#include "redry/rng.hpp"

namespace redry::nn {

// Ordered registry of named trainable parameters. Canonical names
// ("blocks.0.attn.wq.weight", ...) are the checkpoint contract.
class ParamStore {
public:
    Var create(const std::string& name, Tensor init);
    Var get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<std::string>& names() const { return order_; }
    std::vector<Var> all() const;
    int64_t parameter_count() const;

    std::map<std::string, Tensor> state_dict() const;
    void load_state_dict(const std::map<std::string, Tensor>& state);
    void zero_grad();

private:
    std::vector<std::string> order_;
    std::map<std::string, Var> index_;
};

// Initializers.
Tensor normal_init(std::vector<int64_t> shape, double mean, double stddev, Rng& rng);
Tensor zeros_init(std::vector<int64_t> shape);
Tensor ones_init(std::vector<int64_t> shape);

// Thin layer wrappers holding their parameters by name in a ParamStore.

struct LinearLayer {
    Var weight, bias;
    LinearLayer() = default;
    LinearLayer(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out, Rng& rng,
                double init_std = 0.02);
    Var forward(const Var& x) const { return linear(x, weight, bias); }
};

struct Conv1dLayer {
    Var weight, bias;
    int stride = 1, dilation = 1, pad_left = 0, pad_right = 0, groups = 1;
    PadMode pad_mode = PadMode::Zero;
    Conv1dLayer() = default;
    Conv1dLayer(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout, int kernel,
                Rng& rng, int stride = 1, int dilation = 1, PadMode mode = PadMode::Zero,
                int groups = 1, double init_std = 0.01);
    Var forward(const Var& x) const {
        return conv1d(x, weight, bias, stride, dilation, pad_left, pad_right, pad_mode, groups);
    }
};

struct ConvTranspose1dLayer {
    Var weight, bias;
    int stride = 1, pad = 0;
    ConvTranspose1dLayer() = default;
    ConvTranspose1dLayer(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout,
                         int kernel, int stride, Rng& rng, double init_std = 0.01);
    Var forward(const Var& x) const { return conv_transpose1d(x, weight, bias, stride, pad); }
};

struct Conv2dHLayer {
    Var weight, bias;
    int stride_h = 1, pad_h = 0;
    Conv2dHLayer() = default;
    Conv2dHLayer(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout, int kernel_h,
                 int stride_h, Rng& rng, double init_std = 0.01);
    Var forward(const Var& x) const { return conv2d_h(x, weight, bias, stride_h, pad_h); }
};

struct LayerNormLayer {
    Var gamma, beta;
    LayerNormLayer() = default;
    LayerNormLayer(ParamStore& ps, const std::string& prefix, int64_t dim);
    Var forward(const Var& x) const { return layer_norm(x, gamma, beta); }
};

}  // namespace redry::nn
