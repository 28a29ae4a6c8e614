// Test-side reference implementations, kept independent of the library's
// fast paths on purpose: the direct six-loop convolution checks im2col, and
// central finite differences check every analytic gradient.
#pragma once

#include <cmath>
#include <functional>

#include "edgenet/layers.hpp"
#include "edgenet/tensor.hpp"

namespace oracles {

// Direct valid 3x3 convolution: six nested loops, same summation order as
// the definition y[n,i,j,o] = b[o] + sum_{di,dj,c} x[n,i+di,j+dj,c]*k[di,dj,c,o].
template <typename T>
edgenet::TensorT<T> conv2d_direct(const edgenet::Conv2D<T>& layer, const edgenet::TensorT<T>& x) {
    const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int64_t co = layer.out_channels();
    edgenet::TensorT<T> y(edgenet::Shape{n, h - 2, w - 2, co});
    for (int64_t img = 0; img < n; ++img)
        for (int64_t i = 0; i < h - 2; ++i)
            for (int64_t j = 0; j < w - 2; ++j)
                for (int64_t o = 0; o < co; ++o) {
                    T acc = layer.bias[o];
                    for (int64_t di = 0; di < 3; ++di)
                        for (int64_t dj = 0; dj < 3; ++dj)
                            for (int64_t ch = 0; ch < c; ++ch)
                                acc += x.at({img, i + di, j + dj, ch}) *
                                       layer.kernels.at({di, dj, ch, o});
                    y.at({img, i, j, o}) = acc;
                }
    return y;
}

// Central finite difference d loss / d theta_i for every element of `theta`.
template <typename T>
edgenet::TensorT<T> finite_diff_grad(edgenet::TensorT<T>& theta,
                                     const std::function<double()>& loss, double eps) {
    edgenet::TensorT<T> grad(theta.shape());
    for (int64_t i = 0; i < theta.numel(); ++i) {
        const T saved = theta[i];
        theta[i] = saved + static_cast<T>(eps);
        const double up = loss();
        theta[i] = saved - static_cast<T>(eps);
        const double down = loss();
        theta[i] = saved;
        grad[i] = static_cast<T>((up - down) / (2.0 * eps));
    }
    return grad;
}

// Relative error with a floor so that matching near-zero pairs compare equal.
inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

template <typename T>
double max_rel_err(const edgenet::TensorT<T>& a, const edgenet::TensorT<T>& b) {
    double worst = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, rel_err(static_cast<double>(a[i]), static_cast<double>(b[i])));
    return worst;
}

// Largest absolute deviation, relative to the magnitude of the reference
// tensor (element-wise relative error is meaningless where cancellation
// leaves near-zero entries).
template <typename T>
double norm_rel_err(const edgenet::TensorT<T>& a, const edgenet::TensorT<T>& ref) {
    double diff = 0.0, scale = 1.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        diff = std::max(diff, std::abs(static_cast<double>(a[i]) - static_cast<double>(ref[i])));
        scale = std::max(scale, std::abs(static_cast<double>(ref[i])));
    }
    return diff / scale;
}

template <typename T>
edgenet::TensorT<T> random_tensor(edgenet::Shape shape, edgenet::Rng& rng, double lo = -1.0,
                                  double hi = 1.0) {
    edgenet::TensorT<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

} // namespace oracles
