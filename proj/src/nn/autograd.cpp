#include "redry/nn/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include <Eigen/Dense>

namespace redry::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<uint64_t> g_node_counter{0};
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Var make_leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->order = g_node_counter.fetch_add(1);
    return n;
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->order = g_node_counter.fetch_add(1);
    bool need = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) need = need || (p && p->requires_grad);
    }
    if (need) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward);
    }
    return n;
}

void backward(const Var& root) {
    if (!root || !root->requires_grad) return;
    // Collect the reachable subgraph, then replay in reverse creation order.
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (const auto& p : n->parents) {
            if (p && p->requires_grad && !seen.count(p.get())) {
                seen.insert(p.get());
                stack.push_back(p.get());
            }
        }
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const Node* a, const Node* b) { return a->order > b->order; });

    Tensor& g = root->ensure_grad();
    std::fill(g.data.begin(), g.data.end(), 1.0);
    for (Node* n : nodes) {
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // Interior gradients are scratch; drop them so repeated backward passes on
    // fresh graphs never see stale accumulation. Leaves keep theirs.
    for (Node* n : nodes) {
        if (n->backward_fn) n->clear_grad();
    }
}

Var detach(const Var& x) { return make_leaf(x->value, false); }

// ---------------- elementwise ----------------

namespace {

void accumulate(Node& parent, const Tensor& delta) {
    Tensor& g = parent.ensure_grad();
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += delta.data[i];
}

}  // namespace

Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ValidationError("add: shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int j = 0; j < 2; ++j) {
            if (n.parents[j]->requires_grad) accumulate(*n.parents[j], n.grad);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ValidationError("sub: shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b->value.data[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] -= n.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ValidationError("mul: shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i] * bv.data[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i] * av.data[i];
        }
    });
}

Var affine(const Var& x, double scale, double shift) {
    Tensor out = x->value;
    for (double& v : out.data) v = scale * v + shift;
    return make_op(std::move(out), {x}, [scale](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += scale * n.grad.data[i];
    });
}

Var square(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = v * v;
    return make_op(std::move(out), {x}, [](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += 2.0 * xv.data[i] * n.grad.data[i];
    });
}

Var abs_op(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = std::abs(v);
    return make_op(std::move(out), {x}, [](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) {
            g.data[i] += (xv.data[i] > 0 ? 1.0 : xv.data[i] < 0 ? -1.0 : 0.0) * n.grad.data[i];
        }
    });
}

Var tanh_op(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = std::tanh(v);
    return make_op(std::move(out), {x}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) {
            const double y = n.value.data[i];
            g.data[i] += (1.0 - y * y) * n.grad.data[i];
        }
    });
}

Var gelu(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    return make_op(std::move(out), {x}, [](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599344;
        for (size_t i = 0; i < g.data.size(); ++i) {
            const double v = xv.data[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            g.data[i] += (cdf + v * pdf) * n.grad.data[i];
        }
    });
}

Var leaky_relu(const Var& x, double slope) {
    Tensor out = x->value;
    for (double& v : out.data) v = v >= 0 ? v : slope * v;
    return make_op(std::move(out), {x}, [slope](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) {
            g.data[i] += (xv.data[i] >= 0 ? 1.0 : slope) * n.grad.data[i];
        }
    });
}

Var dropout(const Var& x, double p, Rng& rng, bool training) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw ValidationError("dropout: p must be < 1");
    const double keep = 1.0 - p;
    auto mask = std::make_shared<std::vector<double>>(x->value.data.size());
    Tensor out = x->value;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        (*mask)[i] = m;
        out.data[i] *= m;
    }
    return make_op(std::move(out), {x}, [mask](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += (*mask)[i] * n.grad.data[i];
    });
}

// ---------------- shape ----------------

Var reshape(const Var& x, std::vector<int64_t> shape) {
    if (Tensor::numel_of(shape) != x->value.numel()) throw ValidationError("reshape: numel mismatch");
    Tensor out(std::move(shape), x->value.data);
    return make_op(std::move(out), {x}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i];
    });
}

namespace {

std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
    std::vector<int64_t> s(shape.size(), 1);
    for (int i = int(shape.size()) - 2; i >= 0; --i) s[size_t(i)] = s[size_t(i) + 1] * shape[size_t(i) + 1];
    return s;
}

// Copies src into dst so that dst index = permutation of src index.
void permute_copy(const Tensor& src, Tensor& dst, const std::vector<int>& perm) {
    const auto src_strides = strides_of(src.shape);
    const auto dst_strides = strides_of(dst.shape);
    const size_t rank = src.shape.size();
    std::vector<int64_t> idx(rank, 0);
    const int64_t n = src.numel();
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t dst_off = 0;
        for (size_t d = 0; d < rank; ++d) dst_off += idx[size_t(perm[d])] * dst_strides[d];
        dst.data[size_t(dst_off)] = src.data[size_t(flat)];
        for (int d = int(rank) - 1; d >= 0; --d) {
            if (++idx[size_t(d)] < src.shape[size_t(d)]) break;
            idx[size_t(d)] = 0;
        }
    }
}

}  // namespace

Var permute(const Var& x, const std::vector<int>& perm) {
    const auto& shape = x->value.shape;
    if (perm.size() != shape.size()) throw ValidationError("permute: rank mismatch");
    std::vector<int64_t> out_shape(shape.size());
    for (size_t d = 0; d < shape.size(); ++d) out_shape[d] = shape[size_t(perm[d])];
    Tensor out(out_shape);
    permute_copy(x->value, out, perm);
    return make_op(std::move(out), {x}, [perm](Node& n) {
        // dst[perm(i)] = src[i]  =>  grad_src[i] += grad_dst[perm(i)]
        Tensor scratch(n.parents[0]->value.shape);
        std::vector<int> inverse(perm.size());
        for (size_t d = 0; d < perm.size(); ++d) inverse[size_t(perm[d])] = int(d);
        permute_copy(n.grad, scratch, inverse);
        accumulate(*n.parents[0], scratch);
    });
}

Var narrow(const Var& x, int dim, int64_t start, int64_t len) {
    const auto& shape = x->value.shape;
    if (dim < 0 || size_t(dim) >= shape.size()) throw ValidationError("narrow: bad dim");
    if (start < 0 || start + len > shape[size_t(dim)]) throw ValidationError("narrow: out of range");
    std::vector<int64_t> out_shape = shape;
    out_shape[size_t(dim)] = len;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < dim; ++d) outer *= shape[size_t(d)];
    for (size_t d = size_t(dim) + 1; d < shape.size(); ++d) inner *= shape[d];
    const int64_t src_dim = shape[size_t(dim)];

    Tensor out(out_shape);
    for (int64_t o = 0; o < outer; ++o) {
        const double* src = x->value.ptr() + (o * src_dim + start) * inner;
        double* dst = out.ptr() + o * len * inner;
        std::copy(src, src + len * inner, dst);
    }
    return make_op(std::move(out), {x}, [dim, start, len, outer, inner, src_dim](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = n.grad.ptr() + o * len * inner;
            double* dst = g.ptr() + (o * src_dim + start) * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

// ---------------- linear algebra ----------------

Var bmm(const Var& a, const Var& b, bool transpose_b) {
    const auto& as = a->value.shape;
    const auto& bs = b->value.shape;
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0]) throw ValidationError("bmm: bad shapes");
    const int64_t N = as[0], M = as[1], K = as[2];
    const int64_t P = transpose_b ? bs[1] : bs[2];
    const int64_t bk = transpose_b ? bs[2] : bs[1];
    if (bk != K) throw ValidationError("bmm: inner dim mismatch");

    Tensor out({N, M, P});
    for (int64_t i = 0; i < N; ++i) {
        ConstMatMap A(a->value.ptr() + i * M * K, M, K);
        MatMap C(out.ptr() + i * M * P, M, P);
        if (transpose_b) {
            ConstMatMap B(b->value.ptr() + i * P * K, P, K);
            C.noalias() = A * B.transpose();
        } else {
            ConstMatMap B(b->value.ptr() + i * K * P, K, P);
            C.noalias() = A * B;
        }
    }
    return make_op(std::move(out), {a, b}, [N, M, K, P, transpose_b](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& ga = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < N; ++i) {
                ConstMatMap G(n.grad.ptr() + i * M * P, M, P);
                MatMap GA(ga.ptr() + i * M * K, M, K);
                if (transpose_b) {
                    ConstMatMap B(bv.ptr() + i * P * K, P, K);
                    GA.noalias() += G * B;
                } else {
                    ConstMatMap B(bv.ptr() + i * K * P, K, P);
                    GA.noalias() += G * B.transpose();
                }
            }
        }
        if (n.parents[1]->requires_grad) {
            Tensor& gb = n.parents[1]->ensure_grad();
            for (int64_t i = 0; i < N; ++i) {
                ConstMatMap G(n.grad.ptr() + i * M * P, M, P);
                ConstMatMap A(av.ptr() + i * M * K, M, K);
                if (transpose_b) {
                    MatMap GB(gb.ptr() + i * P * K, P, K);
                    GB.noalias() += G.transpose() * A;
                } else {
                    MatMap GB(gb.ptr() + i * K * P, K, P);
                    GB.noalias() += A.transpose() * G;
                }
            }
        }
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    const auto& xs = x->value.shape;
    const auto& ws = weight->value.shape;
    if (xs.empty() || ws.size() != 2) throw ValidationError("linear: bad shapes");
    const int64_t cin = xs.back();
    if (cin != ws[1]) throw ValidationError("linear: feature dim mismatch");
    const int64_t cout = ws[0];
    const int64_t rows = x->value.numel() / cin;
    if (bias && bias->value.numel() != cout) throw ValidationError("linear: bad bias");

    std::vector<int64_t> out_shape = xs;
    out_shape.back() = cout;
    Tensor out(out_shape);
    {
        ConstMatMap X(x->value.ptr(), rows, cin);
        ConstMatMap W(weight->value.ptr(), cout, cin);
        MatMap Y(out.ptr(), rows, cout);
        Y.noalias() = X * W.transpose();
        if (bias) {
            for (int64_t r = 0; r < rows; ++r) {
                for (int64_t c = 0; c < cout; ++c) out.data[size_t(r * cout + c)] += bias->value.data[size_t(c)];
            }
        }
    }
    std::vector<Var> parents{x, weight};
    if (bias) parents.push_back(bias);
    return make_op(std::move(out), std::move(parents), [rows, cin, cout](Node& n) {
        ConstMatMap G(n.grad.ptr(), rows, cout);
        if (n.parents[0]->requires_grad) {
            Tensor& gx = n.parents[0]->ensure_grad();
            ConstMatMap W(n.parents[1]->value.ptr(), cout, cin);
            MatMap GX(gx.ptr(), rows, cin);
            GX.noalias() += G * W;
        }
        if (n.parents[1]->requires_grad) {
            Tensor& gw = n.parents[1]->ensure_grad();
            ConstMatMap X(n.parents[0]->value.ptr(), rows, cin);
            MatMap GW(gw.ptr(), cout, cin);
            GW.noalias() += G.transpose() * X;
        }
        if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
            Tensor& gb = n.parents[2]->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                for (int64_t c = 0; c < cout; ++c) gb.data[size_t(c)] += n.grad.data[size_t(r * cout + c)];
            }
        }
    });
}

// ---------------- normalization / attention ----------------

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const auto& xs = x->value.shape;
    const int64_t C = xs.back();
    if (gamma->value.numel() != C || beta->value.numel() != C) throw ValidationError("layer_norm: bad affine shape");
    const int64_t rows = x->value.numel() / C;

    Tensor out(xs);
    auto stats = std::make_shared<std::vector<double>>(size_t(rows) * 2);  // mean, inv_std per row
    for (int64_t r = 0; r < rows; ++r) {
        const double* xv = x->value.ptr() + r * C;
        double mean = 0;
        for (int64_t c = 0; c < C; ++c) mean += xv[c];
        mean /= double(C);
        double var = 0;
        for (int64_t c = 0; c < C; ++c) var += (xv[c] - mean) * (xv[c] - mean);
        var /= double(C);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        (*stats)[size_t(r) * 2] = mean;
        (*stats)[size_t(r) * 2 + 1] = inv_std;
        double* ov = out.ptr() + r * C;
        for (int64_t c = 0; c < C; ++c) {
            ov[c] = (xv[c] - mean) * inv_std * gamma->value.data[size_t(c)] + beta->value.data[size_t(c)];
        }
    }
    return make_op(std::move(out), {x, gamma, beta}, [rows, C, stats](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const Tensor& gv = n.parents[1]->value;
        Tensor* gx = n.parents[0]->requires_grad ? &n.parents[0]->ensure_grad() : nullptr;
        Tensor* gg = n.parents[1]->requires_grad ? &n.parents[1]->ensure_grad() : nullptr;
        Tensor* gb = n.parents[2]->requires_grad ? &n.parents[2]->ensure_grad() : nullptr;
        for (int64_t r = 0; r < rows; ++r) {
            const double mean = (*stats)[size_t(r) * 2];
            const double inv_std = (*stats)[size_t(r) * 2 + 1];
            const double* xr = xv.ptr() + r * C;
            const double* gr = n.grad.ptr() + r * C;
            double sum_gh = 0, sum_ghx = 0;  // sums of gamma-scaled grads
            for (int64_t c = 0; c < C; ++c) {
                const double xhat = (xr[c] - mean) * inv_std;
                const double gh = gr[c] * gv.data[size_t(c)];
                sum_gh += gh;
                sum_ghx += gh * xhat;
                if (gg) gg->data[size_t(c)] += gr[c] * xhat;
                if (gb) gb->data[size_t(c)] += gr[c];
            }
            if (gx) {
                double* gxr = gx->ptr() + r * C;
                for (int64_t c = 0; c < C; ++c) {
                    const double xhat = (xr[c] - mean) * inv_std;
                    const double gh = gr[c] * gv.data[size_t(c)];
                    gxr[c] += inv_std * (gh - (sum_gh + xhat * sum_ghx) / double(C));
                }
            }
        }
    });
}

Var softmax_lastdim(const Var& x) {
    const int64_t C = x->value.shape.back();
    const int64_t rows = x->value.numel() / C;
    Tensor out(x->value.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x->value.ptr() + r * C;
        double* or_ = out.ptr() + r * C;
        double mx = xr[0];
        for (int64_t c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
        double sum = 0;
        for (int64_t c = 0; c < C; ++c) {
            or_[c] = std::exp(xr[c] - mx);
            sum += or_[c];
        }
        for (int64_t c = 0; c < C; ++c) or_[c] /= sum;
    }
    return make_op(std::move(out), {x}, [rows, C](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const double* s = n.value.ptr() + r * C;
            const double* gr = n.grad.ptr() + r * C;
            double dot = 0;
            for (int64_t c = 0; c < C; ++c) dot += s[c] * gr[c];
            double* gx = g.ptr() + r * C;
            for (int64_t c = 0; c < C; ++c) gx[c] += s[c] * (gr[c] - dot);
        }
    });
}

// ---------------- reductions ----------------

Var mean_all(const Var& x) {
    const int64_t n = x->value.numel();
    double acc = 0;
    for (double v : x->value.data) acc += v;
    Tensor out({1});
    out.data[0] = acc / double(n);
    return make_op(std::move(out), {x}, [n](Node& node) {
        const double g = node.grad.data[0] / double(n);
        Tensor& gx = node.parents[0]->ensure_grad();
        for (double& v : gx.data) v += g;
    });
}

Var sum_all(const Var& x) {
    double acc = 0;
    for (double v : x->value.data) acc += v;
    Tensor out({1});
    out.data[0] = acc;
    return make_op(std::move(out), {x}, [](Node& node) {
        const double g = node.grad.data[0];
        Tensor& gx = node.parents[0]->ensure_grad();
        for (double& v : gx.data) v += g;
    });
}

}  // namespace redry::nn
