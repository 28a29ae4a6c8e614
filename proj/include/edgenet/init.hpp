#pragma once

#include <cmath>

#include "edgenet/rng.hpp"
#include "edgenet/tensor.hpp"

namespace edgenet {

// He initialization: Normal(0, sqrt(2/fan_in)). Suited to the ReLU stack;
// biases are initialized to zero separately.
template <typename T>
TensorT<T> he_init(Shape shape, int64_t fan_in, Rng& rng) {
    if (fan_in < 1) throw ConfigError("he_init: fan_in must be >= 1");
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    TensorT<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal() * stddev);
    return t;
}

} // namespace edgenet
