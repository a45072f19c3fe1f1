#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "redry/nn/tensor.hpp"
#include "redry/rng.hpp"

namespace redry::nn {

// Reverse-mode autograd over a dynamically built graph. Nodes own their value
// and (lazily allocated) gradient; backward closures read the node's gradient
// and accumulate into parents.
class Node;
using Var = std::shared_ptr<Node>;

class Node {
public:
    Tensor value;
    Tensor grad;  // empty means zero
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;
    uint64_t order = 0;  // creation index, used for topological replay

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor(value.shape);
        return grad;
    }
    void clear_grad() { grad = Tensor(); }
};

// Gradient recording switch (thread-local). Ops created while disabled carry
// no parents and no backward closure.
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

// Leaf constructors.
Var make_leaf(Tensor value, bool requires_grad);
inline Var make_constant(Tensor value) { return make_leaf(std::move(value), false); }

// Core graph op constructor: value plus parents plus backward closure.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

// Runs reverse accumulation from a scalar (or any) root; seeds with ones.
void backward(const Var& root);

// Detached view sharing the value (cuts the graph).
Var detach(const Var& x);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& x, double scale, double shift);  // scale*x + shift
Var square(const Var& x);
Var abs_op(const Var& x);
Var tanh_op(const Var& x);
Var gelu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var dropout(const Var& x, double p, Rng& rng, bool training);

// ---- shape ----
Var reshape(const Var& x, std::vector<int64_t> shape);
Var permute(const Var& x, const std::vector<int>& perm);
// Narrow along a dimension: keeps [start, start+len).
Var narrow(const Var& x, int dim, int64_t start, int64_t len);

// ---- linear algebra ----
// a: [N, M, K], b: [N, K, P] (or [N, P, K] when transpose_b) -> [N, M, P]
Var bmm(const Var& a, const Var& b, bool transpose_b = false);
// x: [..., Cin] @ W^T + b, W: [Cout, Cin], b: [Cout] or null.
Var linear(const Var& x, const Var& weight, const Var& bias);

// ---- normalization / attention pieces ----
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var softmax_lastdim(const Var& x);

// ---- reductions ----
Var mean_all(const Var& x);
Var sum_all(const Var& x);

// ---- convolution family (declared here, defined in layers.cpp) ----
enum class PadMode { Zero, Reflect };

// x: [B, Cin, L], w: [Cout, Cin/groups, K] -> [B, Cout, Lout]
Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int dilation,
           int pad_left, int pad_right, PadMode mode, int groups = 1);
// x: [B, Cin, L], w: [Cin, Cout, K] -> [B, Cout, (L-1)*stride - 2*pad + K]
Var conv_transpose1d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x: [B, Cin, H, W], w: [Cout, Cin, KH, 1]; convolution along H only.
Var conv2d_h(const Var& x, const Var& w, const Var& b, int stride_h, int pad_h);
// Zero-padded mean pooling (pad samples count toward the mean).
Var avg_pool1d(const Var& x, int kernel, int stride, int pad);
// Right-reflect padding of [B, C, L] to length L + extra.
Var reflect_pad_right(const Var& x, int64_t extra);

// ---- spectral ops (defined in layers.cpp) ----
// x: [B, L] -> windowed frames [B, F, n_fft] with center reflect padding,
// F = L/hop + 1; matches the analysis frontend sample-for-sample.
Var frame_window(const Var& x, const std::vector<double>& window, int hop, int n_fft);
// frames: [B, F, N] -> packed half spectrum [B, F, 2*(N/2+1)] (re block, im block)
Var rfft_packed(const Var& frames);
// packed: [..., 2*nb] -> magnitudes [..., nb]
Var complex_magnitude(const Var& packed);
// y = log(max(x, floor)), zero gradient on the floor.
Var log_clamp(const Var& x, double floor);

}  // namespace redry::nn
