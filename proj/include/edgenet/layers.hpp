#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <variant>
#include <vector>

#include "edgenet/rng.hpp"
#include "edgenet/tensor.hpp"

namespace edgenet {

// 3x3 valid convolution, stride 1. Kernels are [3,3,Cin,Cout], activations
// NHWC, so a kernel tensor doubles as the [9*Cin, Cout] matrix of the
// im2col fast path without any copy.
template <typename T>
struct Conv2D {
    std::string name;
    TensorT<T> kernels; // [3,3,Cin,Cout]
    TensorT<T> bias;    // [Cout]

    int64_t in_channels() const { return kernels.dim(2); }
    int64_t out_channels() const { return kernels.dim(3); }
    int64_t param_count() const { return kernels.numel() + bias.numel(); }
};

template <typename T>
struct Dense {
    std::string name;
    TensorT<T> weights; // [In, Out]
    TensorT<T> bias;    // [Out]

    int64_t in_features() const { return weights.dim(0); }
    int64_t out_features() const { return weights.dim(1); }
    int64_t param_count() const { return weights.numel() + bias.numel(); }
};

struct ReLULayer {};

// 2x2 max pooling over disjoint windows; an odd trailing row/column is
// dropped (floor semantics, 125 -> 62).
struct MaxPool2 {};

// Inverted dropout: kept units are scaled by 1/(1-rate) at train time so the
// inference-mode forward is exactly the identity.
struct DropoutLayer {
    float rate = 0.0f;
};

struct Flatten {};

struct SoftmaxLayer {};

template <typename T>
using Layer = std::variant<Conv2D<T>, ReLULayer, MaxPool2, DropoutLayer, Flatten, Dense<T>, SoftmaxLayer>;

// State captured by a training-mode forward pass, consumed by backward.
template <typename T>
struct LayerCache {
    TensorT<T> input;            // conv, dense, relu
    TensorT<T> output;           // softmax
    Shape input_shape;           // maxpool, flatten
    std::vector<int64_t> argmax; // maxpool: flat input index of each window winner
    std::vector<uint8_t> mask;   // dropout keep mask
};

// Parameter gradients (same order as the layer's parameter tensors) plus the
// gradient with respect to the layer input.
template <typename T>
struct LayerGrads {
    std::vector<TensorT<T>> param_grads;
    TensorT<T> input_grad;
};

namespace detail {

// Expand one image [H,W,C] into the [(H-2)*(W-2), 9*C] patch matrix.
// Row (i,j) holds x[i+di, j+dj, c] ordered (di, dj, c), matching the
// row-major layout of a [3,3,C,Cout] kernel tensor.
template <typename T>
void im2col3x3(const T* img, int64_t h, int64_t w, int64_t c, T* col) {
    const int64_t wo = w - 2;
    const int64_t row_elems = 9 * c;
    const int64_t run = 3 * c; // one di row of the patch is contiguous in the image
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < h - 2; ++i) {
        for (int64_t j = 0; j < wo; ++j) {
            T* dst = col + (i * wo + j) * row_elems;
            for (int64_t di = 0; di < 3; ++di) {
                const T* src = img + ((i + di) * w + j) * c;
                std::memcpy(dst + di * run, src, sizeof(T) * static_cast<size_t>(run));
            }
        }
    }
}

// Scatter-add the patch-matrix gradient back onto the image gradient.
template <typename T>
void col2im3x3_add(const T* col, int64_t h, int64_t w, int64_t c, T* img) {
    const int64_t wo = w - 2;
    const int64_t row_elems = 9 * c;
    const int64_t run = 3 * c;
    for (int64_t i = 0; i < h - 2; ++i) {
        for (int64_t j = 0; j < wo; ++j) {
            const T* src = col + (i * wo + j) * row_elems;
            for (int64_t di = 0; di < 3; ++di) {
                T* dst = img + ((i + di) * w + j) * c;
                const T* s = src + di * run;
                for (int64_t q = 0; q < run; ++q) dst[q] += s[q];
            }
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n] without zero-filling, for cross-image
// gradient accumulation.
template <typename T>
void matmul_tn_acc_raw(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < k; ++i) {
        T* crow = c + i * n;
        for (int64_t r = 0; r < m; ++r) {
            const T ari = a[r * k + i];
            const T* brow = b + r * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += ari * brow[j];
        }
    }
}

} // namespace detail

template <typename T>
void check_conv_input(const Conv2D<T>& layer, const Shape& s) {
    if (s.rank() != 4) throw ShapeError(layer.name + ": conv input must be NHWC, got " + s.str());
    if (s[1] < 3 || s[2] < 3)
        throw ShapeError(layer.name + ": spatial extent must be >= 3, got " + s.str());
    if (s[3] != layer.in_channels())
        throw ShapeError(layer.name + ": expected " + std::to_string(layer.in_channels()) +
                         " input channels, got " + s.str());
}

// y[n,i,j,o] = bias[o] + sum_{di,dj,c} x[n,i+di,j+dj,c] * k[di,dj,c,o]
template <typename T>
TensorT<T> conv2d_forward(const Conv2D<T>& layer, const TensorT<T>& x) {
    check_conv_input(layer, x.shape());
    const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int64_t ho = h - 2, wo = w - 2, co = layer.out_channels();
    const int64_t rows = ho * wo, cols = 9 * c;

    TensorT<T> y(Shape{n, ho, wo, co});
    std::vector<T> col(static_cast<size_t>(rows * cols));
    for (int64_t img = 0; img < n; ++img) {
        detail::im2col3x3(x.data() + img * h * w * c, h, w, c, col.data());
        T* yimg = y.data() + img * rows * co;
        matmul_raw(col.data(), layer.kernels.data(), yimg, rows, cols, co);
        const T* b = layer.bias.data();
        for (int64_t r = 0; r < rows; ++r) {
            T* yr = yimg + r * co;
            for (int64_t o = 0; o < co; ++o) yr[o] += b[o];
        }
    }
    return y;
}

// Gradients of conv2d_forward. dx computation is skipped when need_dx is
// false (the first layer of a network has no upstream consumer).
template <typename T>
LayerGrads<T> conv2d_backward(const Conv2D<T>& layer, const TensorT<T>& x, const TensorT<T>& dy,
                              bool need_dx = true) {
    check_conv_input(layer, x.shape());
    const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int64_t ho = h - 2, wo = w - 2, co = layer.out_channels();
    if (!(dy.shape() == Shape{n, ho, wo, co}))
        throw ShapeError(layer.name + ": upstream gradient shape " + dy.shape().str() +
                         " does not match forward output");
    const int64_t rows = ho * wo, cols = 9 * c;

    LayerGrads<T> g;
    TensorT<T> dk(layer.kernels.shape());
    TensorT<T> db(layer.bias.shape());
    TensorT<T> dx;
    if (need_dx) dx = TensorT<T>(x.shape());

    const TensorT<T> kt = transpose2d(layer.kernels.reshaped(Shape{cols, co})); // [co, cols]
    std::vector<T> col(static_cast<size_t>(rows * cols));
    std::vector<T> dcol(need_dx ? static_cast<size_t>(rows * cols) : 0);

    for (int64_t img = 0; img < n; ++img) {
        const T* ximg = x.data() + img * h * w * c;
        const T* dyimg = dy.data() + img * rows * co;

        detail::im2col3x3(ximg, h, w, c, col.data());
        detail::matmul_tn_acc_raw(col.data(), dyimg, dk.data(), rows, cols, co);

        T* dbp = db.data();
        for (int64_t r = 0; r < rows; ++r) {
            const T* dyr = dyimg + r * co;
            for (int64_t o = 0; o < co; ++o) dbp[o] += dyr[o];
        }

        if (need_dx) {
            matmul_raw(dyimg, kt.data(), dcol.data(), rows, co, cols);
            detail::col2im3x3_add(dcol.data(), h, w, c, dx.data() + img * h * w * c);
        }
    }

    g.param_grads.push_back(std::move(dk));
    g.param_grads.push_back(std::move(db));
    g.input_grad = std::move(dx);
    return g;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    return x.map([](T v) { return v > T(0) ? v : T(0); });
}

// Gates by the sign of the cached forward input.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& dy) {
    if (!x.same_shape(dy)) throw ShapeError("relu_backward: cache/gradient shape mismatch");
    TensorT<T> dx(x.shape());
    const T* xp = x.data();
    const T* dp = dy.data();
    T* o = dx.data();
    const int64_t m = x.numel();
    for (int64_t i = 0; i < m; ++i) o[i] = xp[i] > T(0) ? dp[i] : T(0);
    return dx;
}

template <typename T>
struct PoolResult {
    TensorT<T> output;
    std::vector<int64_t> argmax; // flat index into the input, per output element
};

template <typename T>
PoolResult<T> maxpool2_forward(const TensorT<T>& x) {
    const Shape& s = x.shape();
    if (s.rank() != 4) throw ShapeError("maxpool input must be NHWC, got " + s.str());
    if (s[1] < 2 || s[2] < 2) throw ShapeError("maxpool spatial extent must be >= 2, got " + s.str());
    const int64_t n = s[0], h = s[1], w = s[2], c = s[3];
    const int64_t ho = h / 2, wo = w / 2;

    PoolResult<T> res;
    res.output = TensorT<T>(Shape{n, ho, wo, c});
    res.argmax.resize(static_cast<size_t>(res.output.numel()));
    const T* xp = x.data();
    T* yp = res.output.data();

    for (int64_t img = 0; img < n; ++img) {
        for (int64_t i = 0; i < ho; ++i) {
            for (int64_t j = 0; j < wo; ++j) {
                for (int64_t ch = 0; ch < c; ++ch) {
                    int64_t best = ((img * h + 2 * i) * w + 2 * j) * c + ch;
                    T bv = xp[best];
                    for (int64_t di = 0; di < 2; ++di) {
                        for (int64_t dj = 0; dj < 2; ++dj) {
                            const int64_t idx = ((img * h + 2 * i + di) * w + 2 * j + dj) * c + ch;
                            if (xp[idx] > bv) { // ties keep the first position
                                bv = xp[idx];
                                best = idx;
                            }
                        }
                    }
                    const int64_t out = ((img * ho + i) * wo + j) * c + ch;
                    yp[out] = bv;
                    res.argmax[static_cast<size_t>(out)] = best;
                }
            }
        }
    }
    return res;
}

// Routes each output gradient to the argmax position of its window.
template <typename T>
TensorT<T> maxpool2_backward(const Shape& input_shape, const std::vector<int64_t>& argmax,
                             const TensorT<T>& dy) {
    if (static_cast<size_t>(dy.numel()) != argmax.size())
        throw ShapeError("maxpool_backward: gradient does not match cached index map");
    TensorT<T> dx(input_shape);
    T* o = dx.data();
    const T* dp = dy.data();
    for (size_t i = 0; i < argmax.size(); ++i) o[static_cast<size_t>(argmax[i])] += dp[i];
    return dx;
}

enum class Mode { Train, Infer };

template <typename T>
struct DropoutResult {
    TensorT<T> output;
    std::vector<uint8_t> mask; // empty in inference mode
};

template <typename T>
DropoutResult<T> dropout_forward(const DropoutLayer& layer, const TensorT<T>& x, Mode mode, Rng& rng) {
    if (!(layer.rate >= 0.0f && layer.rate < 1.0f))
        throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(layer.rate));
    DropoutResult<T> res;
    if (mode == Mode::Infer) {
        res.output = x;
        return res;
    }
    const T scale = T(1) / (T(1) - static_cast<T>(layer.rate));
    res.output = TensorT<T>(x.shape());
    res.mask.resize(static_cast<size_t>(x.numel()));
    const T* xp = x.data();
    T* yp = res.output.data();
    for (int64_t i = 0; i < x.numel(); ++i) {
        const bool keep = rng.uniform() >= layer.rate;
        res.mask[static_cast<size_t>(i)] = keep ? 1 : 0;
        yp[i] = keep ? xp[i] * scale : T(0);
    }
    return res;
}

template <typename T>
TensorT<T> dropout_backward(const DropoutLayer& layer, const std::vector<uint8_t>& mask,
                            const TensorT<T>& dy) {
    if (mask.empty()) return dy; // inference-mode cache: identity
    if (mask.size() != static_cast<size_t>(dy.numel()))
        throw ShapeError("dropout_backward: mask/gradient size mismatch");
    const T scale = T(1) / (T(1) - static_cast<T>(layer.rate));
    TensorT<T> dx(dy.shape());
    const T* dp = dy.data();
    T* o = dx.data();
    for (int64_t i = 0; i < dy.numel(); ++i)
        o[i] = mask[static_cast<size_t>(i)] ? dp[i] * scale : T(0);
    return dx;
}

// y = x * W + b, row-wise over the batch.
template <typename T>
TensorT<T> dense_forward(const Dense<T>& layer, const TensorT<T>& x) {
    if (x.shape().rank() != 2 || x.dim(1) != layer.in_features())
        throw ShapeError(layer.name + ": dense input " + x.shape().str() + " does not match weights " +
                         layer.weights.shape().str());
    TensorT<T> y = matmul(x, layer.weights);
    const T* b = layer.bias.data();
    const int64_t n = y.dim(0), out = y.dim(1);
    for (int64_t r = 0; r < n; ++r) {
        T* yr = y.data() + r * out;
        for (int64_t j = 0; j < out; ++j) yr[j] += b[j];
    }
    return y;
}

template <typename T>
LayerGrads<T> dense_backward(const Dense<T>& layer, const TensorT<T>& x, const TensorT<T>& dy,
                             bool need_dx = true) {
    if (!(dy.shape() == Shape{x.dim(0), layer.out_features()}))
        throw ShapeError(layer.name + ": upstream gradient shape " + dy.shape().str() +
                         " does not match forward output");
    LayerGrads<T> g;
    TensorT<T> dw(layer.weights.shape());
    matmul_tn_raw(x.data(), dy.data(), dw.data(), x.dim(0), x.dim(1), dy.dim(1));

    TensorT<T> db(layer.bias.shape());
    const int64_t n = dy.dim(0), out = dy.dim(1);
    T* dbp = db.data();
    for (int64_t r = 0; r < n; ++r) {
        const T* dyr = dy.data() + r * out;
        for (int64_t j = 0; j < out; ++j) dbp[j] += dyr[j];
    }

    if (need_dx) g.input_grad = matmul(dy, transpose2d(layer.weights));
    g.param_grads.push_back(std::move(dw));
    g.param_grads.push_back(std::move(db));
    return g;
}

// Numerically stable softmax of one score vector (max subtraction; Eq.-2
// style naive exponentials overflow for large scores).
template <typename T>
std::vector<T> softmax(std::span<const T> scores) {
    if (scores.empty()) throw ShapeError("softmax of empty score vector");
    T mx = scores[0];
    for (T s : scores) {
        if (!std::isfinite(static_cast<double>(s))) throw NumericError("softmax: non-finite score");
        mx = std::max(mx, s);
    }
    std::vector<T> out(scores.size());
    T sum = T(0);
    for (size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    for (T& v : out) v /= sum;
    return out;
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& scores) {
    return softmax(std::span<const T>(scores));
}

// Row-wise softmax of a [N,C] score matrix.
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& z) {
    if (z.shape().rank() != 2) throw ShapeError("softmax_rows expects [N,C], got " + z.shape().str());
    TensorT<T> p(z.shape());
    const int64_t n = z.dim(0), c = z.dim(1);
    for (int64_t r = 0; r < n; ++r) {
        const std::span<const T> row(z.data() + r * c, static_cast<size_t>(c));
        std::vector<T> sm = softmax(row);
        std::copy(sm.begin(), sm.end(), p.data() + r * c);
    }
    return p;
}

// Full softmax Jacobian product: dx_i = p_i * (dy_i - sum_j dy_j * p_j).
template <typename T>
TensorT<T> softmax_backward(const TensorT<T>& probs, const TensorT<T>& dy) {
    if (!probs.same_shape(dy)) throw ShapeError("softmax_backward: shape mismatch");
    TensorT<T> dx(probs.shape());
    const int64_t n = probs.dim(0), c = probs.dim(1);
    for (int64_t r = 0; r < n; ++r) {
        const T* p = probs.data() + r * c;
        const T* d = dy.data() + r * c;
        T dot = T(0);
        for (int64_t j = 0; j < c; ++j) dot += d[j] * p[j];
        T* o = dx.data() + r * c;
        for (int64_t j = 0; j < c; ++j) o[j] = p[j] * (d[j] - dot);
    }
    return dx;
}

} // namespace edgenet
