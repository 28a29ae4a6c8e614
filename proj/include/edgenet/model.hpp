#pragma once

#include <cstring>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "edgenet/float16.hpp"
#include "edgenet/init.hpp"
#include "edgenet/layers.hpp"

namespace edgenet {

// Serializable architecture descriptor. Channel widths are data, not
// constants, so pruned variants round-trip through the same format.
struct LayerSpec {
    enum class Kind : uint8_t {
        Conv = 0,
        ReLU = 1,
        MaxPool = 2,
        Dropout = 3,
        Flatten = 4,
        Dense = 5,
        Softmax = 6,
    };
    Kind kind = Kind::ReLU;
    int64_t in = 0;     // conv: input channels, dense: input features
    int64_t out = 0;    // conv: output channels, dense: output features
    float rate = 0.0f;  // dropout only

    bool operator==(const LayerSpec&) const = default;
};

struct ModelConfig {
    int64_t input_size = 0;
    int64_t num_classes = 0;
    std::vector<LayerSpec> layers;

    bool operator==(const ModelConfig&) const = default;
};

// The fixed reference stack, parametric over input size and class count:
// Conv(3->32) ReLU Pool Dropout / Conv(32->64) ReLU Pool Dropout /
// Flatten Dropout / Dense(128) ReLU / Dense(classes) Softmax.
template <typename T>
struct ModelGraphT {
    int64_t input_size = 0;
    int64_t num_classes = 0;
    std::vector<Layer<T>> layers;
};

using ModelGraph = ModelGraphT<float>;

struct DropoutRates {
    float after_pool1 = 0.25f;
    float after_pool2 = 0.25f;
    float after_flatten = 0.5f;
};

// Spatial extent after the conv/pool column for a given input size.
inline int64_t final_spatial_extent(int64_t input_size) {
    int64_t s = input_size;
    s -= 2; // conv1, 3x3 valid
    s /= 2; // pool
    s -= 2; // conv2
    s /= 2; // pool
    return s;
}

template <typename T>
ModelGraphT<T> build_model(int64_t input_size, int64_t num_classes, Rng& rng,
                           const DropoutRates& rates = {}) {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (input_size < 12)
        throw ConfigError("input_size " + std::to_string(input_size) +
                          " too small to survive two conv+pool stages (minimum 12)");

    const int64_t flat = final_spatial_extent(input_size) * final_spatial_extent(input_size) * 64;

    ModelGraphT<T> g;
    g.input_size = input_size;
    g.num_classes = num_classes;

    Conv2D<T> conv1{"conv1", he_init<T>(Shape{3, 3, 3, 32}, 3 * 3 * 3, rng), TensorT<T>(Shape{32})};
    Conv2D<T> conv2{"conv2", he_init<T>(Shape{3, 3, 32, 64}, 3 * 3 * 32, rng), TensorT<T>(Shape{64})};
    Dense<T> dense1{"dense1", he_init<T>(Shape{flat, 128}, flat, rng), TensorT<T>(Shape{128})};
    Dense<T> dense2{"dense2", he_init<T>(Shape{128, num_classes}, 128, rng),
                    TensorT<T>(Shape{num_classes})};

    g.layers.push_back(std::move(conv1));
    g.layers.push_back(ReLULayer{});
    g.layers.push_back(MaxPool2{});
    g.layers.push_back(DropoutLayer{rates.after_pool1});
    g.layers.push_back(std::move(conv2));
    g.layers.push_back(ReLULayer{});
    g.layers.push_back(MaxPool2{});
    g.layers.push_back(DropoutLayer{rates.after_pool2});
    g.layers.push_back(Flatten{});
    g.layers.push_back(DropoutLayer{rates.after_flatten});
    g.layers.push_back(std::move(dense1));
    g.layers.push_back(ReLULayer{});
    g.layers.push_back(std::move(dense2));
    g.layers.push_back(SoftmaxLayer{});
    return g;
}

template <typename T>
int64_t param_count(const Layer<T>& layer) {
    if (const auto* c = std::get_if<Conv2D<T>>(&layer)) return c->param_count();
    if (const auto* d = std::get_if<Dense<T>>(&layer)) return d->param_count();
    return 0;
}

// Sum of weight and bias element counts; pooling, dropout, flatten and
// activations contribute 0.
template <typename T>
int64_t param_count(const ModelGraphT<T>& g) {
    int64_t n = 0;
    for (const auto& l : g.layers) n += param_count(l);
    return n;
}

template <typename T>
Shape layer_output_shape(const Layer<T>& layer, const Shape& in) {
    return std::visit(
        [&](const auto& l) -> Shape {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2D<T>>) {
                check_conv_input(l, in);
                return Shape{in[0], in[1] - 2, in[2] - 2, l.out_channels()};
            } else if constexpr (std::is_same_v<L, MaxPool2>) {
                if (in.rank() != 4 || in[1] < 2 || in[2] < 2)
                    throw ShapeError("maxpool input must be NHWC with extents >= 2, got " + in.str());
                return Shape{in[0], in[1] / 2, in[2] / 2, in[3]};
            } else if constexpr (std::is_same_v<L, Flatten>) {
                int64_t flat = 1;
                for (size_t i = 1; i < in.rank(); ++i) flat *= in[i];
                return Shape{in[0], flat};
            } else if constexpr (std::is_same_v<L, Dense<T>>) {
                if (in.rank() != 2 || in[1] != l.in_features())
                    throw ShapeError(l.name + ": dense input " + in.str() + " does not match weights");
                return Shape{in[0], l.out_features()};
            } else {
                return in; // relu, dropout, softmax preserve shape
            }
        },
        layer);
}

// Per-layer output shapes for a batch of n images.
template <typename T>
std::vector<Shape> output_shapes(const ModelGraphT<T>& g, int64_t n = 1) {
    std::vector<Shape> shapes;
    Shape cur{n, g.input_size, g.input_size, 3};
    for (const auto& l : g.layers) {
        cur = layer_output_shape(l, cur);
        shapes.push_back(cur);
    }
    return shapes;
}

// Visit every parameter tensor in graph order as (name, tensor).
// Names follow the conv1/conv2/dense1/dense2 convention.
template <typename T, typename F>
void for_each_param(ModelGraphT<T>& g, F&& f) {
    for (auto& l : g.layers) {
        if (auto* c = std::get_if<Conv2D<T>>(&l)) {
            f(c->name + ".kernel", c->kernels);
            f(c->name + ".bias", c->bias);
        } else if (auto* d = std::get_if<Dense<T>>(&l)) {
            f(d->name + ".weight", d->weights);
            f(d->name + ".bias", d->bias);
        }
    }
}

template <typename T, typename F>
void for_each_param(const ModelGraphT<T>& g, F&& f) {
    for_each_param(const_cast<ModelGraphT<T>&>(g),
                   [&](const std::string& name, TensorT<T>& t) { f(name, std::as_const(t)); });
}

template <typename T>
Layer<T> layer_from_spec(const LayerSpec& spec, const std::string& name) {
    switch (spec.kind) {
        case LayerSpec::Kind::Conv:
            return Conv2D<T>{name, TensorT<T>(Shape{3, 3, spec.in, spec.out}),
                             TensorT<T>(Shape{spec.out})};
        case LayerSpec::Kind::ReLU: return ReLULayer{};
        case LayerSpec::Kind::MaxPool: return MaxPool2{};
        case LayerSpec::Kind::Dropout: return DropoutLayer{spec.rate};
        case LayerSpec::Kind::Flatten: return Flatten{};
        case LayerSpec::Kind::Dense:
            return Dense<T>{name, TensorT<T>(Shape{spec.in, spec.out}), TensorT<T>(Shape{spec.out})};
        case LayerSpec::Kind::Softmax: return SoftmaxLayer{};
    }
    throw FormatError("unknown layer kind");
}

template <typename T>
ModelConfig graph_config(const ModelGraphT<T>& g) {
    ModelConfig cfg;
    cfg.input_size = g.input_size;
    cfg.num_classes = g.num_classes;
    for (const auto& l : g.layers) {
        LayerSpec spec;
        std::visit(
            [&](const auto& layer) {
                using L = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<L, Conv2D<T>>) {
                    spec.kind = LayerSpec::Kind::Conv;
                    spec.in = layer.in_channels();
                    spec.out = layer.out_channels();
                } else if constexpr (std::is_same_v<L, ReLULayer>) {
                    spec.kind = LayerSpec::Kind::ReLU;
                } else if constexpr (std::is_same_v<L, MaxPool2>) {
                    spec.kind = LayerSpec::Kind::MaxPool;
                } else if constexpr (std::is_same_v<L, DropoutLayer>) {
                    spec.kind = LayerSpec::Kind::Dropout;
                    spec.rate = layer.rate;
                } else if constexpr (std::is_same_v<L, Flatten>) {
                    spec.kind = LayerSpec::Kind::Flatten;
                } else if constexpr (std::is_same_v<L, Dense<T>>) {
                    spec.kind = LayerSpec::Kind::Dense;
                    spec.in = layer.in_features();
                    spec.out = layer.out_features();
                } else {
                    spec.kind = LayerSpec::Kind::Softmax;
                }
            },
            l);
        cfg.layers.push_back(spec);
    }
    return cfg;
}

// Rebuild a zero-weight graph from a config; tensors are filled in by the
// loader. Conv/dense layers are named by order of appearance.
template <typename T>
ModelGraphT<T> graph_from_config(const ModelConfig& cfg) {
    ModelGraphT<T> g;
    g.input_size = cfg.input_size;
    g.num_classes = cfg.num_classes;
    int conv_idx = 0, dense_idx = 0;
    for (const auto& spec : cfg.layers) {
        std::string name;
        if (spec.kind == LayerSpec::Kind::Conv) name = "conv" + std::to_string(++conv_idx);
        if (spec.kind == LayerSpec::Kind::Dense) name = "dense" + std::to_string(++dense_idx);
        g.layers.push_back(layer_from_spec<T>(spec, name));
    }
    return g;
}

// One forward step through a single layer.
template <typename T>
TensorT<T> forward_layer(const Layer<T>& layer, const TensorT<T>& x, Mode mode, Rng* rng,
                         std::type_identity_t<LayerCache<T>>* cache) {
    return std::visit(
        [&](const auto& l) -> TensorT<T> {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2D<T>>) {
                if (cache) cache->input = x;
                return conv2d_forward(l, x);
            } else if constexpr (std::is_same_v<L, ReLULayer>) {
                if (cache) cache->input = x;
                return relu(x);
            } else if constexpr (std::is_same_v<L, MaxPool2>) {
                auto res = maxpool2_forward(x);
                if (cache) {
                    cache->input_shape = x.shape();
                    cache->argmax = std::move(res.argmax);
                }
                return std::move(res.output);
            } else if constexpr (std::is_same_v<L, DropoutLayer>) {
                if (mode == Mode::Infer) return x;
                if (!rng) throw ConfigError("dropout in train mode requires an rng");
                auto res = dropout_forward(l, x, mode, *rng);
                if (cache) cache->mask = std::move(res.mask);
                return std::move(res.output);
            } else if constexpr (std::is_same_v<L, Flatten>) {
                if (cache) cache->input_shape = x.shape();
                int64_t flat = 1;
                for (size_t i = 1; i < x.shape().rank(); ++i) flat *= x.dim(i);
                return x.reshaped(Shape{x.dim(0), flat});
            } else if constexpr (std::is_same_v<L, Dense<T>>) {
                if (cache) cache->input = x;
                return dense_forward(l, x);
            } else { // softmax
                TensorT<T> p = softmax_rows(x);
                if (cache) cache->output = p;
                return p;
            }
        },
        layer);
}

// Spec-facing single-layer backward: parameter gradients plus input gradient
// from the cached forward state.
template <typename T>
LayerGrads<T> backward_layer(const Layer<T>& layer, const LayerCache<T>& cache, const TensorT<T>& dy,
                             bool need_dx = true) {
    return std::visit(
        [&](const auto& l) -> LayerGrads<T> {
            using L = std::decay_t<decltype(l)>;
            LayerGrads<T> g;
            if constexpr (std::is_same_v<L, Conv2D<T>>) {
                return conv2d_backward(l, cache.input, dy, need_dx);
            } else if constexpr (std::is_same_v<L, ReLULayer>) {
                g.input_grad = relu_backward(cache.input, dy);
            } else if constexpr (std::is_same_v<L, MaxPool2>) {
                g.input_grad = maxpool2_backward(cache.input_shape, cache.argmax, dy);
            } else if constexpr (std::is_same_v<L, DropoutLayer>) {
                g.input_grad = dropout_backward(l, cache.mask, dy);
            } else if constexpr (std::is_same_v<L, Flatten>) {
                g.input_grad = dy.reshaped(cache.input_shape);
            } else if constexpr (std::is_same_v<L, Dense<T>>) {
                return dense_backward(l, cache.input, dy, need_dx);
            } else { // softmax
                g.input_grad = softmax_backward(cache.output, dy);
            }
            return g;
        },
        layer);
}

// Eval-mode forward over a batch [N,H,W,3]; returns class probabilities [N,C].
template <typename T>
TensorT<T> forward_eval(const ModelGraphT<T>& g, const TensorT<T>& batch) {
    TensorT<T> cur = batch;
    for (const auto& l : g.layers) cur = forward_layer(l, cur, Mode::Infer, nullptr, nullptr);
    return cur;
}

// Train-mode forward keeping one cache per layer for the backward pass.
template <typename T>
TensorT<T> forward_train(const ModelGraphT<T>& g, const TensorT<T>& batch, Rng& rng,
                         std::vector<LayerCache<T>>& caches) {
    caches.assign(g.layers.size(), LayerCache<T>{});
    TensorT<T> cur = batch;
    for (size_t i = 0; i < g.layers.size(); ++i)
        cur = forward_layer(g.layers[i], cur, Mode::Train, &rng, &caches[i]);
    return cur;
}

// Backward from the gradient at the final-dense logits (the softmax+CE pair
// is differentiated jointly by the caller). Returns parameter gradients in
// for_each_param order. The softmax layer, if last, is skipped.
template <typename T>
std::vector<TensorT<T>> backward_from_logits(const ModelGraphT<T>& g,
                                             const std::vector<LayerCache<T>>& caches,
                                             const TensorT<T>& dlogits) {
    size_t last = g.layers.size();
    if (last > 0 && std::holds_alternative<SoftmaxLayer>(g.layers[last - 1])) --last;

    TensorT<T> dcur = dlogits;
    std::vector<std::vector<TensorT<T>>> per_layer(last);
    for (size_t i = last; i-- > 0;) {
        const bool need_dx = i > 0;
        LayerGrads<T> lg = backward_layer(g.layers[i], caches[i], dcur, need_dx);
        per_layer[i] = std::move(lg.param_grads);
        if (need_dx) dcur = std::move(lg.input_grad);
    }

    std::vector<TensorT<T>> grads;
    for (auto& pg : per_layer)
        for (auto& t : pg) grads.push_back(std::move(t));
    return grads;
}

// Probability vector for one image [H,W,3] with pixel values already in [0,1].
template <typename T>
std::vector<T> infer(const ModelGraphT<T>& g, const TensorT<T>& image) {
    const Shape& s = image.shape();
    if (s.rank() != 3 || s[0] != g.input_size || s[1] != g.input_size || s[2] != 3)
        throw ShapeError("infer: expected image [" + std::to_string(g.input_size) + "," +
                         std::to_string(g.input_size) + ",3], got " + s.str());
    TensorT<T> batch = image.reshaped(Shape{1, s[0], s[1], s[2]});
    TensorT<T> probs = forward_eval(g, batch);
    return std::vector<T>(probs.data(), probs.data() + probs.numel());
}

// Training artifact: master f32 weights plus Adam moment tensors, i.e. the
// "non-optimized" model whose on-disk payload is 3x the deployed f32 size.
struct Checkpoint {
    ModelGraph graph;
    std::vector<Tensor> m; // first moments, for_each_param order
    std::vector<Tensor> v; // second moments
    int64_t step = 0;      // Adam updates applied
    int32_t epoch = 0;     // completed epochs
    int32_t best_epoch = -1;
    float best_val_loss = std::numeric_limits<float>::infinity();
};

inline Checkpoint make_checkpoint(ModelGraph graph) {
    Checkpoint ckpt;
    ckpt.graph = std::move(graph);
    for_each_param(ckpt.graph, [&](const std::string&, const Tensor& t) {
        ckpt.m.emplace_back(t.shape());
        ckpt.v.emplace_back(t.shape());
    });
    return ckpt;
}

// One serialized tensor at storage precision. f16 and i8 payloads are
// widened/dequantized back to f32 before any arithmetic.
struct StoredTensor {
    std::string name;
    Shape shape;
    DType dtype = DType::F32;
    std::vector<uint8_t> raw;
    std::optional<QuantParams> quant; // present exactly when dtype == I8

    int64_t numel() const { return shape.numel(); }

    static StoredTensor from_f32(std::string name, const Tensor& t, DType target);

    Tensor to_f32() const;
};

// Inference artifact: weights only, at one precision, no optimizer state.
struct DeployedModel {
    ModelConfig config;
    DType precision = DType::F32;
    std::vector<StoredTensor> params; // for_each_param order

    // Materialize an f32 graph for inference (dropout is identity there).
    ModelGraph to_graph() const;
};

// Convenience single-image inference; callers running many images should
// materialize the graph once.
inline std::vector<float> infer(const DeployedModel& model, const Tensor& image) {
    return infer(model.to_graph(), image);
}

} // namespace edgenet
