#include "cvloc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "cvloc/errors.hpp"
#include "cvloc/threading.hpp"

namespace cvloc {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

// oh range such that 0 <= oh*stride + k - pad < limit.
inline void valid_range(int k, int pad, int stride, int limit, int out_limit,
                        int& lo, int& hi) {
    int num = pad - k;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    hi = std::min(out_limit - 1, (limit - 1 + pad - k) / stride);
}

}  // namespace

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& weight,
              const Tensor& bias, int stride, int pad) {
    require(input.rank() == 4, "conv2d: input must be rank 4, got " + input.shape_str());
    require(weight.rank() == 4, "conv2d: weight must be rank 4, got " + weight.shape_str());
    require(bias.rank() == 1, "conv2d: bias must be rank 1, got " + bias.shape_str());
    require(stride >= 1, "conv2d: stride must be positive");
    require(pad >= 0, "conv2d: pad must be non-negative");

    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int K = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
    require(weight.dim(1) == C,
            "conv2d: input channels " + input.shape_str() + " vs weight " + weight.shape_str());
    require(bias.dim(0) == K, "conv2d: bias " + bias.shape_str() + " vs weight " + weight.shape_str());
    require((H + 2 * pad - KH) % stride == 0 && (W + 2 * pad - KW) % stride == 0,
            "conv2d: output size is not an integer for input " + input.shape_str() +
                ", kernel " + weight.shape_str() + ", stride " + std::to_string(stride) +
                ", pad " + std::to_string(pad));
    const int OH = (H + 2 * pad - KH) / stride + 1;
    const int OW = (W + 2 * pad - KW) / stride + 1;
    require(OH > 0 && OW > 0, "conv2d: non-positive output size");

    Tensor out({N, K, OH, OW}, any_requires_grad({&input, &weight, &bias}));

    const float* in = input.data().data();
    const float* w = weight.data().data();
    const float* b = bias.data().data();
    float* o = out.data().data();

    parallel_for(static_cast<int64_t>(N) * K, [&](int64_t nk) {
        const int n = static_cast<int>(nk / K);
        const int k = static_cast<int>(nk % K);
        float* op = o + (static_cast<int64_t>(n) * K + k) * OH * OW;
        std::fill(op, op + OH * OW, b[k]);
        for (int c = 0; c < C; ++c) {
            const float* ip = in + (static_cast<int64_t>(n) * C + c) * H * W;
            const float* wp = w + ((static_cast<int64_t>(k) * C + c) * KH) * KW;
            for (int kh = 0; kh < KH; ++kh) {
                int oh_lo, oh_hi;
                valid_range(kh, pad, stride, H, OH, oh_lo, oh_hi);
                for (int kw = 0; kw < KW; ++kw) {
                    const float wv = wp[kh * KW + kw];
                    int ow_lo, ow_hi;
                    valid_range(kw, pad, stride, W, OW, ow_lo, ow_hi);
                    for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                        const int ih = oh * stride + kh - pad;
                        const float* irow = ip + ih * W + (ow_lo * stride + kw - pad);
                        float* orow = op + oh * OW + ow_lo;
                        const int len = ow_hi - ow_lo + 1;
                        if (stride == 1) {
                            for (int i = 0; i < len; ++i) orow[i] += wv * irow[i];
                        } else {
                            for (int i = 0; i < len; ++i) orow[i] += wv * irow[i * stride];
                        }
                    }
                }
            }
        }
    });

    if (out.requires_grad()) {
        Tensor in_t = input, w_t = weight, b_t = bias, out_t = out;
        g.record([in_t, w_t, b_t, out_t, stride, pad, N, C, H, W, K, KH, KW, OH, OW]() mutable {
            const float* dout = out_t.grad().data();
            const float* w = w_t.data().data();
            const float* in = in_t.data().data();

            if (in_t.requires_grad()) {
                float* din = in_t.grad().data();
                parallel_for(N, [&](int64_t n) {
                    for (int k = 0; k < K; ++k) {
                        const float* dop = dout + (n * K + k) * OH * OW;
                        for (int c = 0; c < C; ++c) {
                            float* dip = din + (n * C + c) * H * W;
                            const float* wp = w + ((static_cast<int64_t>(k) * C + c) * KH) * KW;
                            for (int kh = 0; kh < KH; ++kh) {
                                int oh_lo, oh_hi;
                                valid_range(kh, pad, stride, H, OH, oh_lo, oh_hi);
                                for (int kw = 0; kw < KW; ++kw) {
                                    const float wv = wp[kh * KW + kw];
                                    int ow_lo, ow_hi;
                                    valid_range(kw, pad, stride, W, OW, ow_lo, ow_hi);
                                    for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                                        const int ih = oh * stride + kh - pad;
                                        float* drow = dip + ih * W + (ow_lo * stride + kw - pad);
                                        const float* dorow = dop + oh * OW + ow_lo;
                                        const int len = ow_hi - ow_lo + 1;
                                        if (stride == 1) {
                                            for (int i = 0; i < len; ++i) drow[i] += wv * dorow[i];
                                        } else {
                                            for (int i = 0; i < len; ++i)
                                                drow[i * stride] += wv * dorow[i];
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
            }

            if (w_t.requires_grad()) {
                // Parallel over output channels: each k is accumulated by a
                // single thread in sample order, so the result does not
                // depend on the thread count.
                float* dw = w_t.grad().data();
                parallel_for(K, [&](int64_t k) {
                    for (int64_t n = 0; n < N; ++n) {
                        const float* dop = dout + (n * K + k) * OH * OW;
                        for (int c = 0; c < C; ++c) {
                            const float* ip = in + (n * C + c) * H * W;
                            float* dwp = dw + ((k * C + c) * KH) * KW;
                            for (int kh = 0; kh < KH; ++kh) {
                                int oh_lo, oh_hi;
                                valid_range(kh, pad, stride, H, OH, oh_lo, oh_hi);
                                for (int kw = 0; kw < KW; ++kw) {
                                    int ow_lo, ow_hi;
                                    valid_range(kw, pad, stride, W, OW, ow_lo, ow_hi);
                                    float acc = 0.0f;
                                    for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                                        const int ih = oh * stride + kh - pad;
                                        const float* irow =
                                            ip + ih * W + (ow_lo * stride + kw - pad);
                                        const float* dorow = dop + oh * OW + ow_lo;
                                        const int len = ow_hi - ow_lo + 1;
                                        if (stride == 1) {
                                            for (int i = 0; i < len; ++i)
                                                acc += irow[i] * dorow[i];
                                        } else {
                                            for (int i = 0; i < len; ++i)
                                                acc += irow[i * stride] * dorow[i];
                                        }
                                    }
                                    dwp[kh * KW + kw] += acc;
                                }
                            }
                        }
                    }
                });
            }

            if (b_t.requires_grad()) {
                float* db = b_t.grad().data();
                for (int k = 0; k < K; ++k) {
                    float acc = 0.0f;
                    for (int64_t n = 0; n < N; ++n) {
                        const float* dop = dout + (n * K + k) * OH * OW;
                        for (int i = 0; i < OH * OW; ++i) acc += dop[i];
                    }
                    db[k] += acc;
                }
            }
        });
    }
    return out;
}

Tensor relu(Graph& g, const Tensor& input) {
    Tensor out(input.shape(), input.requires_grad());
    const float* in = input.data().data();
    float* o = out.data().data();
    const int64_t n = input.size();
    for (int64_t i = 0; i < n; ++i) o[i] = in[i] > 0.0f ? in[i] : 0.0f;

    g.note_relu_input(input);
    if (out.requires_grad()) {
        Tensor in_t = input, out_t = out;
        g.record([in_t, out_t]() mutable {
            if (!in_t.requires_grad()) return;
            const float* x = in_t.data().data();
            const float* dout = out_t.grad().data();
            float* din = in_t.grad().data();
            const int64_t n = in_t.size();
            for (int64_t i = 0; i < n; ++i)
                if (x[i] > 0.0f) din[i] += dout[i];
        });
    }
    return out;
}

Tensor maxpool2d(Graph& g, const Tensor& input) {
    require(input.rank() == 4, "maxpool2d: input must be rank 4, got " + input.shape_str());
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    require(H % 2 == 0 && W % 2 == 0,
            "maxpool2d: spatial dims must be even, got " + input.shape_str());
    const int OH = H / 2, OW = W / 2;

    Tensor out({N, C, OH, OW}, input.requires_grad());
    auto argmax = std::make_shared<std::vector<int32_t>>(out.size());

    const float* in = input.data().data();
    float* o = out.data().data();
    int32_t* am = argmax->data();

    parallel_for(static_cast<int64_t>(N) * C, [&](int64_t nc) {
        const float* ip = in + nc * H * W;
        float* op = o + nc * OH * OW;
        int32_t* ap = am + nc * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
            for (int ow = 0; ow < OW; ++ow) {
                int base = (2 * oh) * W + 2 * ow;
                // First max in row-major scan order wins ties.
                int best = base;
                float bv = ip[base];
                const int cand[3] = {base + 1, base + W, base + W + 1};
                for (int idx : cand) {
                    if (ip[idx] > bv) {
                        bv = ip[idx];
                        best = idx;
                    }
                }
                op[oh * OW + ow] = bv;
                ap[oh * OW + ow] = best;
            }
        }
    });

    if (out.requires_grad()) {
        Tensor in_t = input, out_t = out;
        g.record([in_t, out_t, argmax, N, C, H, W, OH, OW]() mutable {
            if (!in_t.requires_grad()) return;
            const float* dout = out_t.grad().data();
            float* din = in_t.grad().data();
            const int32_t* am = argmax->data();
            for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
                const float* dop = dout + nc * OH * OW;
                const int32_t* ap = am + nc * OH * OW;
                float* dip = din + nc * H * W;
                for (int i = 0; i < OH * OW; ++i) dip[ap[i]] += dop[i];
            }
        });
    }
    return out;
}

Tensor fully_connected(Graph& g, const Tensor& input, const Tensor& weight,
                       const Tensor& bias) {
    require(input.rank() == 2, "fully_connected: input must be rank 2, got " + input.shape_str());
    require(weight.rank() == 2, "fully_connected: weight must be rank 2, got " + weight.shape_str());
    require(bias.rank() == 1, "fully_connected: bias must be rank 1, got " + bias.shape_str());
    const int N = input.dim(0), D = input.dim(1);
    const int M = weight.dim(1);
    require(weight.dim(0) == D,
            "fully_connected: input " + input.shape_str() + " vs weight " + weight.shape_str());
    require(bias.dim(0) == M,
            "fully_connected: bias " + bias.shape_str() + " vs weight " + weight.shape_str());

    Tensor out({N, M}, any_requires_grad({&input, &weight, &bias}));
    const float* in = input.data().data();
    const float* w = weight.data().data();
    const float* b = bias.data().data();
    float* o = out.data().data();

    parallel_for(N, [&](int64_t n) {
        float* orow = o + n * M;
        std::copy(b, b + M, orow);
        const float* irow = in + n * D;
        for (int d = 0; d < D; ++d) {
            const float x = irow[d];
            const float* wrow = w + static_cast<int64_t>(d) * M;
            for (int m = 0; m < M; ++m) orow[m] += x * wrow[m];
        }
    });

    if (out.requires_grad()) {
        Tensor in_t = input, w_t = weight, b_t = bias, out_t = out;
        g.record([in_t, w_t, b_t, out_t, N, D, M]() mutable {
            const float* dout = out_t.grad().data();
            const float* in = in_t.data().data();
            const float* w = w_t.data().data();

            if (in_t.requires_grad()) {
                float* din = in_t.grad().data();
                parallel_for(N, [&](int64_t n) {
                    const float* dorow = dout + n * M;
                    float* dirow = din + n * D;
                    for (int d = 0; d < D; ++d) {
                        const float* wrow = w + static_cast<int64_t>(d) * M;
                        float acc = 0.0f;
                        for (int m = 0; m < M; ++m) acc += dorow[m] * wrow[m];
                        dirow[d] += acc;
                    }
                });
            }
            if (w_t.requires_grad()) {
                float* dw = w_t.grad().data();
                parallel_for(D, [&](int64_t d) {
                    float* dwrow = dw + d * M;
                    for (int64_t n = 0; n < N; ++n) {
                        const float x = in[n * D + d];
                        const float* dorow = dout + n * M;
                        for (int m = 0; m < M; ++m) dwrow[m] += x * dorow[m];
                    }
                });
            }
            if (b_t.requires_grad()) {
                float* db = b_t.grad().data();
                for (int64_t n = 0; n < N; ++n) {
                    const float* dorow = dout + n * M;
                    for (int m = 0; m < M; ++m) db[m] += dorow[m];
                }
            }
        });
    }
    return out;
}

Tensor flatten(Graph& g, const Tensor& input) {
    require(input.rank() >= 2, "flatten: input must be rank >= 2, got " + input.shape_str());
    const int N = input.dim(0);
    const int D = static_cast<int>(input.size() / std::max(N, 1));
    Tensor out({N, D}, input.requires_grad());
    std::copy(input.data().begin(), input.data().end(), out.data().begin());

    if (out.requires_grad()) {
        Tensor in_t = input, out_t = out;
        g.record([in_t, out_t]() mutable {
            if (!in_t.requires_grad()) return;
            auto dout = out_t.grad();
            auto din = in_t.grad();
            for (size_t i = 0; i < din.size(); ++i) din[i] += dout[i];
        });
    }
    return out;
}

Tensor slice_cols(Graph& g, const Tensor& input, int begin, int end) {
    require(input.rank() == 2, "slice_cols: input must be rank 2, got " + input.shape_str());
    const int N = input.dim(0), M = input.dim(1);
    require(0 <= begin && begin < end && end <= M,
            "slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                ") out of bounds for " + input.shape_str());
    const int D = end - begin;
    Tensor out({N, D}, input.requires_grad());
    const float* in = input.data().data();
    float* o = out.data().data();
    for (int n = 0; n < N; ++n)
        std::copy(in + n * M + begin, in + n * M + end, o + n * D);

    if (out.requires_grad()) {
        Tensor in_t = input, out_t = out;
        g.record([in_t, out_t, begin, N, M, D]() mutable {
            if (!in_t.requires_grad()) return;
            const float* dout = out_t.grad().data();
            float* din = in_t.grad().data();
            for (int n = 0; n < N; ++n)
                for (int d = 0; d < D; ++d) din[n * M + begin + d] += dout[n * D + d];
        });
    }
    return out;
}

Tensor concat_cols(Graph& g, const std::vector<Tensor>& inputs) {
    require(!inputs.empty(), "concat_cols: no inputs");
    const int N = inputs[0].dim(0);
    int total = 0;
    bool needs_grad = false;
    for (const auto& t : inputs) {
        require(t.rank() == 2, "concat_cols: inputs must be rank 2, got " + t.shape_str());
        require(t.dim(0) == N, "concat_cols: batch mismatch " + t.shape_str() +
                                   " vs " + inputs[0].shape_str());
        total += t.dim(1);
        needs_grad = needs_grad || t.requires_grad();
    }
    Tensor out({N, total}, needs_grad);
    float* o = out.data().data();
    int off = 0;
    for (const auto& t : inputs) {
        const int D = t.dim(1);
        const float* in = t.data().data();
        for (int n = 0; n < N; ++n)
            std::copy(in + n * D, in + (n + 1) * D, o + n * total + off);
        off += D;
    }

    if (needs_grad) {
        std::vector<Tensor> ins = inputs;
        Tensor out_t = out;
        g.record([ins, out_t, N, total]() mutable {
            const float* dout = out_t.grad().data();
            int off = 0;
            for (auto& t : ins) {
                const int D = t.dim(1);
                if (t.requires_grad()) {
                    float* din = t.grad().data();
                    for (int n = 0; n < N; ++n)
                        for (int d = 0; d < D; ++d) din[n * D + d] += dout[n * total + off + d];
                }
                off += D;
            }
        });
    }
    return out;
}

Tensor softmax_cross_entropy(Graph& g, const Tensor& logits,
                             std::span<const int> labels) {
    require(logits.rank() == 2, "softmax_cross_entropy: logits must be rank 2, got " +
                                    logits.shape_str());
    const int N = logits.dim(0), M = logits.dim(1);
    require(static_cast<int>(labels.size()) == N,
            "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                std::to_string(N));
    for (int n = 0; n < N; ++n)
        if (labels[n] < 0 || labels[n] >= M)
            throw ShapeError("softmax_cross_entropy: label " + std::to_string(labels[n]) +
                             " out of range [0," + std::to_string(M) + ")");

    // softmax probabilities, stabilized by per-row max subtraction
    auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(N) * M);
    const float* z = logits.data().data();
    double loss_acc = 0.0;
    for (int n = 0; n < N; ++n) {
        const float* row = z + n * M;
        float mx = row[0];
        for (int m = 1; m < M; ++m) mx = std::max(mx, row[m]);
        double sum = 0.0;
        for (int m = 0; m < M; ++m) sum += std::exp(static_cast<double>(row[m] - mx));
        float* p = probs->data() + static_cast<size_t>(n) * M;
        for (int m = 0; m < M; ++m)
            p[m] = static_cast<float>(std::exp(static_cast<double>(row[m] - mx)) / sum);
        loss_acc += -(static_cast<double>(row[labels[n]] - mx) - std::log(sum));
    }
    Tensor out = Tensor::scalar(static_cast<float>(loss_acc / N));
    out.set_requires_grad(logits.requires_grad());

    if (logits.requires_grad()) {
        std::vector<int> lab(labels.begin(), labels.end());
        Tensor z_t = logits, out_t = out;
        g.record([z_t, out_t, probs, lab, N, M]() mutable {
            const float scale = out_t.grad()[0] / static_cast<float>(N);
            float* dz = z_t.grad().data();
            const float* p = probs->data();
            for (int n = 0; n < N; ++n) {
                for (int m = 0; m < M; ++m)
                    dz[n * M + m] += scale * (p[n * M + m] - (m == lab[n] ? 1.0f : 0.0f));
            }
        });
    }
    return out;
}

Tensor euclidean_loss(Graph& g, const Tensor& pred, const Tensor& target) {
    require(pred.rank() == 2 && target.rank() == 2,
            "euclidean_loss: rank-2 inputs required, got " + pred.shape_str() + " and " +
                target.shape_str());
    require(pred.shape() == target.shape(),
            "euclidean_loss: shape mismatch " + pred.shape_str() + " vs " + target.shape_str());
    const int N = pred.dim(0);
    const float* p = pred.data().data();
    const float* t = target.data().data();
    double acc = 0.0;
    for (int64_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / (2.0 * std::max(N, 1))));
    out.set_requires_grad(pred.requires_grad());

    if (pred.requires_grad()) {
        Tensor p_t = pred, t_t = target, out_t = out;
        g.record([p_t, t_t, out_t, N]() mutable {
            const float scale = out_t.grad()[0] / static_cast<float>(std::max(N, 1));
            float* dp = p_t.grad().data();
            const float* p = p_t.data().data();
            const float* t = t_t.data().data();
            for (int64_t i = 0; i < p_t.size(); ++i) dp[i] += scale * (p[i] - t[i]);
        });
    }
    return out;
}

double mean_feature_distance(const Tensor& pred, const Tensor& target) {
    require(pred.shape() == target.shape() && pred.rank() == 2,
            "mean_feature_distance: shape mismatch " + pred.shape_str() + " vs " +
                target.shape_str());
    const int N = pred.dim(0), D = pred.dim(1);
    if (N == 0) return 0.0;
    const float* p = pred.data().data();
    const float* t = target.data().data();
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        double acc = 0.0;
        for (int d = 0; d < D; ++d) {
            const double diff = static_cast<double>(p[n * D + d]) - t[n * D + d];
            acc += diff * diff;
        }
        total += std::sqrt(acc);
    }
    return total / N;
}

}  // namespace cvloc
