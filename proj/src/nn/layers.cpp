#include "redry/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <Eigen/Dense>

#include "redry/fft.hpp"
#include "redry/stft.hpp"

namespace redry::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// ---------------- conv1d ----------------

namespace {

struct Conv1dDims {
    int64_t B, Cin, L, Cout, K, Lout, Cing, Coutg;
    int stride, dilation, pad_left, groups;
    PadMode mode;
};

Conv1dDims conv1d_dims(const Tensor& x, const Tensor& w, int stride, int dilation, int pad_left,
                       int pad_right, PadMode mode, int groups) {
    if (x.rank() != 3 || w.rank() != 3) throw ValidationError("conv1d: expect [B,C,L] and [Cout,Cin/g,K]");
    Conv1dDims d;
    d.B = x.dim(0);
    d.Cin = x.dim(1);
    d.L = x.dim(2);
    d.Cout = w.dim(0);
    d.K = w.dim(2);
    d.stride = stride;
    d.dilation = dilation;
    d.pad_left = pad_left;
    d.groups = groups;
    d.mode = mode;
    if (d.Cin % groups != 0 || d.Cout % groups != 0) throw ValidationError("conv1d: bad groups");
    d.Cing = d.Cin / groups;
    d.Coutg = d.Cout / groups;
    if (w.dim(1) != d.Cing) throw ValidationError("conv1d: weight channel mismatch");
    const int64_t span = int64_t(dilation) * (d.K - 1) + 1;
    const int64_t padded = d.L + pad_left + pad_right;
    if (padded < span) throw ValidationError("conv1d: input shorter than kernel span");
    d.Lout = (padded - span) / stride + 1;
    return d;
}

// Source index for padded position j, or -1 when the position reads zero.
inline int64_t pad_source(int64_t j, int64_t pad_left, int64_t L, PadMode mode) {
    const int64_t src = j - pad_left;
    if (src >= 0 && src < L) return src;
    if (mode == PadMode::Reflect) return redry::reflect_index(src, L);
    return -1;
}

void im2col(const double* x, const Conv1dDims& d, int64_t b, int64_t g, std::vector<double>& cols) {
    cols.assign(size_t(d.Cing * d.K * d.Lout), 0.0);
    for (int64_t ci = 0; ci < d.Cing; ++ci) {
        const double* xc = x + ((b * d.Cin) + g * d.Cing + ci) * d.L;
        for (int64_t k = 0; k < d.K; ++k) {
            double* row = cols.data() + (ci * d.K + k) * d.Lout;
            for (int64_t t = 0; t < d.Lout; ++t) {
                const int64_t src = pad_source(t * d.stride + k * d.dilation, d.pad_left, d.L, d.mode);
                row[t] = (src >= 0) ? xc[src] : 0.0;
            }
        }
    }
}

}  // namespace

Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int dilation, int pad_left,
           int pad_right, PadMode mode, int groups) {
    const Conv1dDims d = conv1d_dims(x->value, w->value, stride, dilation, pad_left, pad_right, mode, groups);
    if (b && b->value.numel() != d.Cout) throw ValidationError("conv1d: bad bias");

    Tensor out({d.B, d.Cout, d.Lout});
    std::vector<double> cols;
    for (int64_t bi = 0; bi < d.B; ++bi) {
        for (int64_t g = 0; g < d.groups; ++g) {
            im2col(x->value.ptr(), d, bi, g, cols);
            ConstMatMap W(w->value.ptr() + g * d.Coutg * d.Cing * d.K, d.Coutg, d.Cing * d.K);
            ConstMatMap C(cols.data(), d.Cing * d.K, d.Lout);
            MatMap Y(out.ptr() + (bi * d.Cout + g * d.Coutg) * d.Lout, d.Coutg, d.Lout);
            Y.noalias() = W * C;
        }
    }
    if (b) {
        for (int64_t bi = 0; bi < d.B; ++bi) {
            for (int64_t co = 0; co < d.Cout; ++co) {
                double* row = out.ptr() + (bi * d.Cout + co) * d.Lout;
                const double bias = b->value.data[size_t(co)];
                for (int64_t t = 0; t < d.Lout; ++t) row[t] += bias;
            }
        }
    }

    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_op(std::move(out), std::move(parents), [d](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const Tensor& wv = n.parents[1]->value;
        Tensor* gx = n.parents[0]->requires_grad ? &n.parents[0]->ensure_grad() : nullptr;
        Tensor* gw = n.parents[1]->requires_grad ? &n.parents[1]->ensure_grad() : nullptr;
        Tensor* gb = (n.parents.size() > 2 && n.parents[2]->requires_grad)
                         ? &n.parents[2]->ensure_grad()
                         : nullptr;
        std::vector<double> cols, colgrad;
        for (int64_t bi = 0; bi < d.B; ++bi) {
            for (int64_t g = 0; g < d.groups; ++g) {
                ConstMatMap G(n.grad.ptr() + (bi * d.Cout + g * d.Coutg) * d.Lout, d.Coutg, d.Lout);
                if (gw) {
                    im2col(xv.ptr(), d, bi, g, cols);
                    ConstMatMap C(cols.data(), d.Cing * d.K, d.Lout);
                    MatMap GW(gw->ptr() + g * d.Coutg * d.Cing * d.K, d.Coutg, d.Cing * d.K);
                    GW.noalias() += G * C.transpose();
                }
                if (gx) {
                    colgrad.assign(size_t(d.Cing * d.K * d.Lout), 0.0);
                    ConstMatMap W(wv.ptr() + g * d.Coutg * d.Cing * d.K, d.Coutg, d.Cing * d.K);
                    MatMap CG(colgrad.data(), d.Cing * d.K, d.Lout);
                    CG.noalias() = W.transpose() * G;
                    for (int64_t ci = 0; ci < d.Cing; ++ci) {
                        double* gxc = gx->ptr() + ((bi * d.Cin) + g * d.Cing + ci) * d.L;
                        for (int64_t k = 0; k < d.K; ++k) {
                            const double* row = colgrad.data() + (ci * d.K + k) * d.Lout;
                            for (int64_t t = 0; t < d.Lout; ++t) {
                                const int64_t src =
                                    pad_source(t * d.stride + k * d.dilation, d.pad_left, d.L, d.mode);
                                if (src >= 0) gxc[src] += row[t];
                            }
                        }
                    }
                }
            }
            if (gb) {
                for (int64_t co = 0; co < d.Cout; ++co) {
                    const double* row = n.grad.ptr() + (bi * d.Cout + co) * d.Lout;
                    double acc = 0;
                    for (int64_t t = 0; t < d.Lout; ++t) acc += row[t];
                    gb->data[size_t(co)] += acc;
                }
            }
        }
    });
}

// ---------------- conv_transpose1d ----------------

Var conv_transpose1d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    if (xv.rank() != 3 || wv.rank() != 3) throw ValidationError("conv_transpose1d: bad shapes");
    const int64_t B = xv.dim(0), Cin = xv.dim(1), L = xv.dim(2);
    const int64_t Cout = wv.dim(1), K = wv.dim(2);
    if (wv.dim(0) != Cin) throw ValidationError("conv_transpose1d: weight channel mismatch");
    const int64_t Lout = (L - 1) * stride - 2 * int64_t(pad) + K;
    if (Lout <= 0) throw ValidationError("conv_transpose1d: empty output");
    if (b && b->value.numel() != Cout) throw ValidationError("conv_transpose1d: bad bias");

    // M = W^T(as [Cout*K, Cin]) x X[b], then scatter columns onto the output.
    Tensor out({B, Cout, Lout});
    std::vector<double> m(size_t(Cout * K * L));
    RowMat WT(Cout * K, Cin);  // WT[(co*K + k), ci] = w[ci, co, k]
    for (int64_t ci = 0; ci < Cin; ++ci) {
        for (int64_t co = 0; co < Cout; ++co) {
            for (int64_t k = 0; k < K; ++k) {
                WT(co * K + k, ci) = wv.data[size_t((ci * Cout + co) * K + k)];
            }
        }
    }
    for (int64_t bi = 0; bi < B; ++bi) {
        ConstMatMap X(xv.ptr() + bi * Cin * L, Cin, L);
        MatMap M(m.data(), Cout * K, L);
        M.noalias() = WT * X;
        for (int64_t co = 0; co < Cout; ++co) {
            double* yc = out.ptr() + (bi * Cout + co) * Lout;
            const double bias = b ? b->value.data[size_t(co)] : 0.0;
            for (int64_t t = 0; t < Lout; ++t) yc[t] = bias;
            for (int64_t k = 0; k < K; ++k) {
                const double* row = m.data() + (co * K + k) * L;
                for (int64_t s = 0; s < L; ++s) {
                    const int64_t t = s * stride + k - pad;
                    if (t >= 0 && t < Lout) yc[t] += row[s];
                }
            }
        }
    }

    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_op(std::move(out), std::move(parents), [B, Cin, L, Cout, K, Lout, stride, pad](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const Tensor& wv = n.parents[1]->value;
        Tensor* gx = n.parents[0]->requires_grad ? &n.parents[0]->ensure_grad() : nullptr;
        Tensor* gw = n.parents[1]->requires_grad ? &n.parents[1]->ensure_grad() : nullptr;
        Tensor* gb = (n.parents.size() > 2 && n.parents[2]->requires_grad)
                         ? &n.parents[2]->ensure_grad()
                         : nullptr;
        // cols[(co*K + k), s] = gy[co, s*stride + k - pad]
        std::vector<double> cols(size_t(Cout * K * L));
        for (int64_t bi = 0; bi < B; ++bi) {
            const double* gy = n.grad.ptr() + bi * Cout * Lout;
            for (int64_t co = 0; co < Cout; ++co) {
                for (int64_t k = 0; k < K; ++k) {
                    double* row = cols.data() + (co * K + k) * L;
                    for (int64_t s = 0; s < L; ++s) {
                        const int64_t t = s * stride + k - pad;
                        row[s] = (t >= 0 && t < Lout) ? gy[co * Lout + t] : 0.0;
                    }
                }
            }
            ConstMatMap C(cols.data(), Cout * K, L);
            if (gx) {
                // dx[ci, s] = sum_{co,k} w[ci, co, k] * cols[(co*K+k), s]
                ConstMatMap W(wv.ptr(), Cin, Cout * K);
                MatMap GX(gx->ptr() + bi * Cin * L, Cin, L);
                GX.noalias() += W * C;
            }
            if (gw) {
                ConstMatMap X(xv.ptr() + bi * Cin * L, Cin, L);
                MatMap GW(gw->ptr(), Cin, Cout * K);
                GW.noalias() += X * C.transpose();
            }
            if (gb) {
                for (int64_t co = 0; co < Cout; ++co) {
                    const double* row = gy + co * Lout;
                    double acc = 0;
                    for (int64_t t = 0; t < Lout; ++t) acc += row[t];
                    gb->data[size_t(co)] += acc;
                }
            }
        }
    });
}

// ---------------- conv2d along H ----------------

Var conv2d_h(const Var& x, const Var& w, const Var& b, int stride_h, int pad_h) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    if (xv.rank() != 4 || wv.rank() != 4 || wv.dim(3) != 1) {
        throw ValidationError("conv2d_h: expect x[B,C,H,W], w[Cout,Cin,KH,1]");
    }
    const int64_t B = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t Cout = wv.dim(0), KH = wv.dim(2);
    if (wv.dim(1) != Cin) throw ValidationError("conv2d_h: channel mismatch");
    const int64_t Hout = (H + 2 * int64_t(pad_h) - KH) / stride_h + 1;
    if (Hout <= 0) throw ValidationError("conv2d_h: empty output");
    if (b && b->value.numel() != Cout) throw ValidationError("conv2d_h: bad bias");

    Tensor out({B, Cout, Hout, W});
    std::vector<double> cols(size_t(Cin * KH * Hout * W));
    auto fill_cols = [&](const double* xb) {
        for (int64_t ci = 0; ci < Cin; ++ci) {
            const double* xc = xb + ci * H * W;
            for (int64_t k = 0; k < KH; ++k) {
                double* row = cols.data() + (ci * KH + k) * (Hout * W);
                for (int64_t ho = 0; ho < Hout; ++ho) {
                    const int64_t hs = ho * stride_h + k - pad_h;
                    if (hs < 0 || hs >= H) {
                        std::fill(row + ho * W, row + (ho + 1) * W, 0.0);
                    } else {
                        std::copy(xc + hs * W, xc + (hs + 1) * W, row + ho * W);
                    }
                }
            }
        }
    };

    for (int64_t bi = 0; bi < B; ++bi) {
        fill_cols(xv.ptr() + bi * Cin * H * W);
        ConstMatMap Wm(wv.ptr(), Cout, Cin * KH);
        ConstMatMap C(cols.data(), Cin * KH, Hout * W);
        MatMap Y(out.ptr() + bi * Cout * Hout * W, Cout, Hout * W);
        Y.noalias() = Wm * C;
        if (b) {
            for (int64_t co = 0; co < Cout; ++co) {
                double* row = out.ptr() + (bi * Cout + co) * Hout * W;
                const double bias = b->value.data[size_t(co)];
                for (int64_t i = 0; i < Hout * W; ++i) row[i] += bias;
            }
        }
    }

    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_op(std::move(out), std::move(parents),
                   [B, Cin, H, W, Cout, KH, Hout, stride_h, pad_h](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const Tensor& wv = n.parents[1]->value;
        Tensor* gx = n.parents[0]->requires_grad ? &n.parents[0]->ensure_grad() : nullptr;
        Tensor* gw = n.parents[1]->requires_grad ? &n.parents[1]->ensure_grad() : nullptr;
        Tensor* gb = (n.parents.size() > 2 && n.parents[2]->requires_grad)
                         ? &n.parents[2]->ensure_grad()
                         : nullptr;
        std::vector<double> cols(size_t(Cin * KH * Hout * W));
        std::vector<double> colgrad;
        for (int64_t bi = 0; bi < B; ++bi) {
            ConstMatMap G(n.grad.ptr() + bi * Cout * Hout * W, Cout, Hout * W);
            if (gw) {
                const double* xb = xv.ptr() + bi * Cin * H * W;
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    const double* xc = xb + ci * H * W;
                    for (int64_t k = 0; k < KH; ++k) {
                        double* row = cols.data() + (ci * KH + k) * (Hout * W);
                        for (int64_t ho = 0; ho < Hout; ++ho) {
                            const int64_t hs = ho * stride_h + k - pad_h;
                            if (hs < 0 || hs >= H) {
                                std::fill(row + ho * W, row + (ho + 1) * W, 0.0);
                            } else {
                                std::copy(xc + hs * W, xc + (hs + 1) * W, row + ho * W);
                            }
                        }
                    }
                }
                ConstMatMap C(cols.data(), Cin * KH, Hout * W);
                MatMap GW(gw->ptr(), Cout, Cin * KH);
                GW.noalias() += G * C.transpose();
            }
            if (gx) {
                colgrad.assign(size_t(Cin * KH * Hout * W), 0.0);
                ConstMatMap Wm(wv.ptr(), Cout, Cin * KH);
                MatMap CG(colgrad.data(), Cin * KH, Hout * W);
                CG.noalias() = Wm.transpose() * G;
                double* gxb = gx->ptr() + bi * Cin * H * W;
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    double* gxc = gxb + ci * H * W;
                    for (int64_t k = 0; k < KH; ++k) {
                        const double* row = colgrad.data() + (ci * KH + k) * (Hout * W);
                        for (int64_t ho = 0; ho < Hout; ++ho) {
                            const int64_t hs = ho * stride_h + k - pad_h;
                            if (hs < 0 || hs >= H) continue;
                            double* dst = gxc + hs * W;
                            const double* src = row + ho * W;
                            for (int64_t wcol = 0; wcol < W; ++wcol) dst[wcol] += src[wcol];
                        }
                    }
                }
            }
            if (gb) {
                for (int64_t co = 0; co < Cout; ++co) {
                    const double* row = n.grad.ptr() + (bi * Cout + co) * Hout * W;
                    double acc = 0;
                    for (int64_t i = 0; i < Hout * W; ++i) acc += row[i];
                    gb->data[size_t(co)] += acc;
                }
            }
        }
    });
}

// ---------------- pooling and padding ----------------

Var avg_pool1d(const Var& x, int kernel, int stride, int pad) {
    const Tensor& xv = x->value;
    if (xv.rank() != 3) throw ValidationError("avg_pool1d: expect [B,C,L]");
    const int64_t B = xv.dim(0), C = xv.dim(1), L = xv.dim(2);
    const int64_t Lout = (L + 2 * int64_t(pad) - kernel) / stride + 1;
    if (Lout <= 0) throw ValidationError("avg_pool1d: empty output");

    Tensor out({B, C, Lout});
    const double inv_k = 1.0 / double(kernel);
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = xv.ptr() + bc * L;
        double* dst = out.ptr() + bc * Lout;
        for (int64_t t = 0; t < Lout; ++t) {
            double acc = 0;
            for (int k = 0; k < kernel; ++k) {
                const int64_t s = t * stride + k - pad;
                if (s >= 0 && s < L) acc += src[s];
            }
            dst[t] = acc * inv_k;
        }
    }
    return make_op(std::move(out), {x}, [B, C, L, Lout, kernel, stride, pad, inv_k](Node& n) {
        Tensor& gx = n.parents[0]->ensure_grad();
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double* g = n.grad.ptr() + bc * Lout;
            double* dst = gx.ptr() + bc * L;
            for (int64_t t = 0; t < Lout; ++t) {
                const double gv = g[t] * inv_k;
                for (int k = 0; k < kernel; ++k) {
                    const int64_t s = t * stride + k - pad;
                    if (s >= 0 && s < L) dst[s] += gv;
                }
            }
        }
    });
}

Var reflect_pad_right(const Var& x, int64_t extra) {
    const Tensor& xv = x->value;
    if (xv.rank() != 3) throw ValidationError("reflect_pad_right: expect [B,C,L]");
    if (extra == 0) return x;
    const int64_t B = xv.dim(0), C = xv.dim(1), L = xv.dim(2);
    Tensor out({B, C, L + extra});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = xv.ptr() + bc * L;
        double* dst = out.ptr() + bc * (L + extra);
        std::copy(src, src + L, dst);
        for (int64_t j = 0; j < extra; ++j) dst[L + j] = src[redry::reflect_index(L + j, L)];
    }
    return make_op(std::move(out), {x}, [B, C, L, extra](Node& n) {
        Tensor& gx = n.parents[0]->ensure_grad();
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double* g = n.grad.ptr() + bc * (L + extra);
            double* dst = gx.ptr() + bc * L;
            for (int64_t i = 0; i < L; ++i) dst[i] += g[i];
            for (int64_t j = 0; j < extra; ++j) dst[redry::reflect_index(L + j, L)] += g[L + j];
        }
    });
}

// ---------------- spectral ops ----------------

Var frame_window(const Var& x, const std::vector<double>& window, int hop, int n_fft) {
    const Tensor& xv = x->value;
    if (xv.rank() != 2) throw ValidationError("frame_window: expect [B, L]");
    const int64_t B = xv.dim(0), L = xv.dim(1);
    const int W = int(window.size());
    const int pad = (n_fft - W) / 2;
    const int64_t F = redry::frame_count(L, hop);

    Tensor out({B, F, n_fft});
    for (int64_t b = 0; b < B; ++b) {
        const double* src = xv.ptr() + b * L;
        for (int64_t t = 0; t < F; ++t) {
            double* dst = out.ptr() + (b * F + t) * n_fft;
            const int64_t center = t * hop;
            for (int i = 0; i < W; ++i) {
                const int64_t s = redry::reflect_index(center - W / 2 + i, L);
                dst[pad + i] = src[s] * window[size_t(i)];
            }
        }
    }
    auto win = std::make_shared<std::vector<double>>(window);
    return make_op(std::move(out), {x}, [B, L, F, hop, n_fft, pad, W = W, win](Node& n) {
        Tensor& gx = n.parents[0]->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
            double* dst = gx.ptr() + b * L;
            for (int64_t t = 0; t < F; ++t) {
                const double* g = n.grad.ptr() + (b * F + t) * n_fft;
                const int64_t center = t * hop;
                for (int i = 0; i < W; ++i) {
                    const int64_t s = redry::reflect_index(center - W / 2 + i, L);
                    dst[s] += g[pad + i] * (*win)[size_t(i)];
                }
            }
        }
    });
}

Var rfft_packed(const Var& frames) {
    const Tensor& fv = frames->value;
    const int64_t N = fv.shape.back();
    if (N == 0 || (N & (N - 1)) != 0) throw ValidationError("rfft_packed: length must be a power of two");
    const int64_t NB = N / 2 + 1;
    const int64_t rows = fv.numel() / N;

    std::vector<int64_t> out_shape = fv.shape;
    out_shape.back() = 2 * NB;
    Tensor out(out_shape);
    std::vector<std::complex<double>> buf(size_t(N));
    for (int64_t r = 0; r < rows; ++r) {
        const double* src = fv.ptr() + r * N;
        for (int64_t i = 0; i < N; ++i) buf[size_t(i)] = {src[i], 0.0};
        redry::fft_inplace(buf, false);
        double* dst = out.ptr() + r * 2 * NB;
        for (int64_t k = 0; k < NB; ++k) {
            dst[k] = buf[size_t(k)].real();
            dst[NB + k] = buf[size_t(k)].imag();
        }
    }
    return make_op(std::move(out), {frames}, [N, NB, rows](Node& n) {
        Tensor& gx = n.parents[0]->ensure_grad();
        std::vector<std::complex<double>> h(size_t(N));
        for (int64_t r = 0; r < rows; ++r) {
            const double* gr = n.grad.ptr() + r * 2 * NB;       // d/dRe
            const double* gi = n.grad.ptr() + r * 2 * NB + NB;  // d/dIm
            h[0] = {gr[0], 0.0};
            h[size_t(N / 2)] = {gr[N / 2], 0.0};
            for (int64_t k = 1; k < N / 2; ++k) {
                h[size_t(k)] = {0.5 * gr[k], -0.5 * gi[k]};
                h[size_t(N - k)] = {0.5 * gr[k], 0.5 * gi[k]};
            }
            redry::fft_inplace(h, false);
            double* dst = gx.ptr() + r * N;
            for (int64_t i = 0; i < N; ++i) dst[i] += h[size_t(i)].real();
        }
    });
}

Var complex_magnitude(const Var& packed) {
    const Tensor& pv = packed->value;
    const int64_t twoNB = pv.shape.back();
    const int64_t NB = twoNB / 2;
    const int64_t rows = pv.numel() / twoNB;

    std::vector<int64_t> out_shape = pv.shape;
    out_shape.back() = NB;
    Tensor out(out_shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* src = pv.ptr() + r * twoNB;
        double* dst = out.ptr() + r * NB;
        for (int64_t k = 0; k < NB; ++k) {
            dst[k] = std::sqrt(src[k] * src[k] + src[NB + k] * src[NB + k]);
        }
    }
    return make_op(std::move(out), {packed}, [NB, twoNB, rows](Node& n) {
        const Tensor& pv = n.parents[0]->value;
        Tensor& gx = n.parents[0]->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const double* src = pv.ptr() + r * twoNB;
            const double* m = n.value.ptr() + r * NB;
            const double* g = n.grad.ptr() + r * NB;
            double* dst = gx.ptr() + r * twoNB;
            for (int64_t k = 0; k < NB; ++k) {
                const double denom = std::max(m[k], 1e-300);
                dst[k] += g[k] * src[k] / denom;
                dst[NB + k] += g[k] * src[NB + k] / denom;
            }
        }
    });
}

Var log_clamp(const Var& x, double floor) {
    Tensor out = x->value;
    for (double& v : out.data) v = std::log(std::max(v, floor));
    return make_op(std::move(out), {x}, [floor](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        Tensor& gx = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < gx.data.size(); ++i) {
            if (xv.data[i] > floor) gx.data[i] += n.grad.data[i] / xv.data[i];
        }
    });
}

// ---------------- ParamStore / layers ----------------

Var ParamStore::create(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    Var v = make_leaf(std::move(init), true);
    order_.push_back(name);
    index_[name] = v;
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second;
}

std::vector<Var> ParamStore::all() const {
    std::vector<Var> out;
    out.reserve(order_.size());
    for (const auto& n : order_) out.push_back(index_.at(n));
    return out;
}

int64_t ParamStore::parameter_count() const {
    int64_t total = 0;
    for (const auto& [_, v] : index_) total += v->value.numel();
    return total;
}

std::map<std::string, Tensor> ParamStore::state_dict() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : index_) out[name] = v->value;
    return out;
}

void ParamStore::load_state_dict(const std::map<std::string, Tensor>& state) {
    for (const auto& name : order_) {
        auto it = state.find(name);
        if (it == state.end()) throw ValidationError("checkpoint missing parameter: " + name);
        Var v = index_.at(name);
        if (it->second.shape != v->value.shape) {
            throw ValidationError("checkpoint shape mismatch for " + name + ": " +
                                  it->second.shape_str() + " vs " + v->value.shape_str());
        }
        v->value = it->second;
    }
}

void ParamStore::zero_grad() {
    for (const auto& [_, v] : index_) v->clear_grad();
}

Tensor normal_init(std::vector<int64_t> shape, double mean, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.normal(mean, stddev);
    return t;
}

Tensor zeros_init(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

Tensor ones_init(std::vector<int64_t> shape) { return Tensor(std::move(shape), 1.0); }

LinearLayer::LinearLayer(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
                         Rng& rng, double init_std) {
    weight = ps.create(prefix + ".weight", normal_init({out, in}, 0.0, init_std, rng));
    bias = ps.create(prefix + ".bias", zeros_init({out}));
}

Conv1dLayer::Conv1dLayer(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout,
                         int kernel, Rng& rng, int stride_, int dilation_, PadMode mode,
                         int groups_, double init_std) {
    stride = stride_;
    dilation = dilation_;
    pad_mode = mode;
    groups = groups_;
    const int total = dilation_ * (kernel - 1);
    pad_left = total / 2;
    pad_right = total - pad_left;
    weight = ps.create(prefix + ".weight", normal_init({cout, cin / groups_, kernel}, 0.0, init_std, rng));
    bias = ps.create(prefix + ".bias", zeros_init({cout}));
}

ConvTranspose1dLayer::ConvTranspose1dLayer(ParamStore& ps, const std::string& prefix, int64_t cin,
                                           int64_t cout, int kernel, int stride_, Rng& rng,
                                           double init_std) {
    stride = stride_;
    pad = (kernel - stride_) / 2;
    weight = ps.create(prefix + ".weight", normal_init({cin, cout, kernel}, 0.0, init_std, rng));
    bias = ps.create(prefix + ".bias", zeros_init({cout}));
}

Conv2dHLayer::Conv2dHLayer(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout,
                           int kernel_h, int stride_h_, Rng& rng, double init_std) {
    stride_h = stride_h_;
    pad_h = (kernel_h - 1) / 2;
    weight = ps.create(prefix + ".weight", normal_init({cout, cin, kernel_h, 1}, 0.0, init_std, rng));
    bias = ps.create(prefix + ".bias", zeros_init({cout}));
}

LayerNormLayer::LayerNormLayer(ParamStore& ps, const std::string& prefix, int64_t dim) {
    gamma = ps.create(prefix + ".scale", ones_init({dim}));
    beta = ps.create(prefix + ".shift", zeros_init({dim}));
}

}  // namespace redry::nn
