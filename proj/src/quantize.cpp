#include "edgenet/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>

#include "edgenet/train.hpp"

namespace edgenet {

namespace {

const char* layer_kind_tag(const Layer<float>& l) {
    if (std::holds_alternative<Conv2D<float>>(l)) return "conv";
    if (std::holds_alternative<ReLULayer>(l)) return "relu";
    if (std::holds_alternative<MaxPool2>(l)) return "maxpool";
    if (std::holds_alternative<DropoutLayer>(l)) return "dropout";
    if (std::holds_alternative<Flatten>(l)) return "flatten";
    if (std::holds_alternative<Dense<float>>(l)) return "dense";
    return "softmax";
}

std::string activation_site(size_t layer_index, const Layer<float>& l) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "act%02zu:%s", layer_index, layer_kind_tag(l));
    return buf;
}

void merge_minmax(CalibrationStats& stats, const std::string& name, const Tensor& t) {
    auto [it, fresh] = stats.tensors.try_emplace(name, TensorMinMax{t[0], t[0]});
    TensorMinMax& mm = it->second;
    for (int64_t i = 0; i < t.numel(); ++i) {
        mm.min = std::min(mm.min, t[i]);
        mm.max = std::max(mm.max, t[i]);
    }
    (void)fresh;
}

Tensor dataset_batch(const LabeledDataset& ds, size_t first, size_t last) {
    const ImageU8& proto = ds.items[first].image;
    Tensor batch(Shape{static_cast<int64_t>(last - first), proto.height, proto.width, proto.channels});
    const int64_t stride = proto.height * proto.width * proto.channels;
    for (size_t i = first; i < last; ++i) {
        const Tensor img = normalize(ds.items[i].image);
        std::memcpy(batch.data() + static_cast<int64_t>(i - first) * stride, img.data(),
                    sizeof(float) * static_cast<size_t>(stride));
    }
    return batch;
}

void check_calib(const ModelGraph& graph, const LabeledDataset& ds) {
    if (ds.items.empty()) throw ConfigError("representative dataset is empty");
    const ImageU8& proto = ds.items.front().image;
    if (proto.height != graph.input_size || proto.width != graph.input_size)
        throw ConfigError("representative dataset extents " + std::to_string(proto.height) + "x" +
                          std::to_string(proto.width) + " do not match model input size " +
                          std::to_string(graph.input_size));
}

} // namespace

CalibrationStats calibrate(const ModelGraph& graph, const LabeledDataset& representative) {
    check_calib(graph, representative);

    CalibrationStats stats;
    stats.sample_count = static_cast<int64_t>(representative.items.size());

    for_each_param(graph, [&](const std::string& name, const Tensor& t) {
        merge_minmax(stats, name, t);
    });

    constexpr size_t kBatch = 32;
    for (size_t start = 0; start < representative.items.size(); start += kBatch) {
        const size_t end = std::min(representative.items.size(), start + kBatch);
        Tensor cur = dataset_batch(representative, start, end);
        merge_minmax(stats, "input", cur);
        for (size_t i = 0; i < graph.layers.size(); ++i) {
            cur = forward_layer(graph.layers[i], cur, Mode::Infer, nullptr, nullptr);
            merge_minmax(stats, activation_site(i, graph.layers[i]), cur);
        }
    }
    return stats;
}

QuantParams make_qparams(float min, float max) {
    if (!std::isfinite(min) || !std::isfinite(max))
        throw NumericError("make_qparams: non-finite range");
    if (min > max) throw InputError("make_qparams: min > max");

    // Widen so real zero is inside the range, then nudge the zero point to
    // an integer code.
    const double lo = std::min<double>(min, 0.0);
    const double hi = std::max<double>(max, 0.0);
    if (hi == lo) return QuantParams{1.0f, 0};

    // The 255 steps of the f32 scale must span the whole range, otherwise
    // values at the far end round-trip worse than scale/2.
    float scale = static_cast<float>((hi - lo) / 255.0);
    if (static_cast<double>(scale) * 255.0 < hi - lo)
        scale = std::nextafter(scale, std::numeric_limits<float>::infinity());

    const double zp_real = -lo / static_cast<double>(scale) - 128.0;
    const int32_t zp = static_cast<int32_t>(
        std::clamp(std::nearbyint(zp_real), -128.0, 127.0));
    return QuantParams{scale, zp};
}

StoredTensor quantize_tensor(const Tensor& t, const QuantParams& qp, std::string name) {
    if (!(qp.scale > 0)) throw InputError("quantize_tensor: scale must be > 0");
    StoredTensor st;
    st.name = std::move(name);
    st.shape = t.shape();
    st.dtype = DType::I8;
    st.quant = qp;
    st.raw.resize(static_cast<size_t>(t.numel()));
    int8_t* out = reinterpret_cast<int8_t*>(st.raw.data());
    for (int64_t i = 0; i < t.numel(); ++i) {
        // nearbyint under the default FE_TONEAREST mode rounds half to even
        const double q = std::nearbyint(static_cast<double>(t[i]) / qp.scale) + qp.zero_point;
        out[i] = static_cast<int8_t>(std::clamp(q, -128.0, 127.0));
    }
    return st;
}

Tensor dequantize_tensor(const StoredTensor& t) {
    if (t.dtype != DType::I8) throw FormatError("dequantize_tensor: tensor is not i8");
    if (!t.quant) throw FormatError("dequantize_tensor: missing QuantParams");
    return t.to_f32();
}

DeployedModel export_deployed(const Checkpoint& ckpt, DType precision,
                              const LabeledDataset* calib) {
    if (precision == DType::F16 || precision == DType::I8)
        return quantize_model(ckpt, precision, calib);
    if (precision != DType::F32) throw ConfigError("deployed precision must be f32, f16 or i8");

    DeployedModel model;
    model.config = graph_config(ckpt.graph);
    model.precision = DType::F32;
    for_each_param(ckpt.graph, [&](const std::string& name, const Tensor& t) {
        model.params.push_back(StoredTensor::from_f32(name, t, DType::F32));
    });
    return model;
}

DeployedModel quantize_model(const Checkpoint& ckpt, DType mode, const LabeledDataset* calib) {
    if (mode != DType::F16 && mode != DType::I8)
        throw ConfigError("quantize mode must be f16 or i8");
    if (mode == DType::I8) {
        if (!calib || calib->items.empty())
            throw ConfigError("i8 quantization requires a representative calibration set (--calib)");
        // Validates the set against the model and observes activation
        // ranges; weight ranges come from the weights themselves.
        calibrate(ckpt.graph, *calib);
    }

    DeployedModel model;
    model.config = graph_config(ckpt.graph);
    model.precision = mode;
    for_each_param(ckpt.graph, [&](const std::string& name, const Tensor& t) {
        if (mode == DType::F16) {
            model.params.push_back(StoredTensor::from_f32(name, t, DType::F16));
            return;
        }
        // i8: biases are a negligible share of the payload and stay f32.
        if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0) {
            model.params.push_back(StoredTensor::from_f32(name, t, DType::F32));
            return;
        }
        const auto [mn, mx] = std::minmax_element(t.data(), t.data() + t.numel());
        model.params.push_back(quantize_tensor(t, make_qparams(*mn, *mx), name));
    });
    return model;
}

namespace {

// Drop the given positions along one axis; `removed` must be sorted.
Tensor remove_axis_indices(const Tensor& t, size_t axis, const std::vector<int64_t>& removed) {
    const Shape& s = t.shape();
    const int64_t mid = s[axis];
    std::vector<uint8_t> drop(static_cast<size_t>(mid), 0);
    for (int64_t r : removed) drop[static_cast<size_t>(r)] = 1;

    int64_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= s[i];
    for (size_t i = axis + 1; i < s.rank(); ++i) inner *= s[i];

    std::vector<int64_t> dims = s.dims;
    dims[axis] = mid - static_cast<int64_t>(removed.size());
    Tensor out((Shape(std::move(dims))));

    const float* src = t.data();
    float* dst = out.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t m = 0; m < mid; ++m) {
            if (drop[static_cast<size_t>(m)]) continue;
            std::memcpy(dst, src + (o * mid + m) * inner, sizeof(float) * static_cast<size_t>(inner));
            dst += inner;
        }
    }
    return out;
}

struct ParamIndex {
    // for_each_param position of each named tensor
    std::map<std::string, size_t> by_name;
};

ParamIndex index_params(const ModelGraph& g) {
    ParamIndex idx;
    size_t i = 0;
    for_each_param(g, [&](const std::string& name, const Tensor&) { idx.by_name[name] = i++; });
    return idx;
}

void validate_removal(const std::string& name, const std::vector<int64_t>& removed, int64_t cout) {
    int64_t prev = -1;
    for (int64_t r : removed) {
        if (r <= prev) throw ConfigError("prune: channel indices for " + name +
                                         " must be sorted and distinct");
        if (r < 0 || r >= cout)
            throw ConfigError("prune: channel index " + std::to_string(r) + " out of range for " +
                              name);
        prev = r;
    }
    if (static_cast<int64_t>(removed.size()) >= cout)
        throw ConfigError("prune: refusing to remove every channel of " + name);
}

// Mean absolute post-ReLU activation per output channel of each targeted
// conv layer, over the representative dataset.
std::map<std::string, std::vector<double>> activation_channel_l1(
    const ModelGraph& g, const std::vector<std::string>& targets, const LabeledDataset& calib) {
    check_calib(g, calib);

    struct Site {
        size_t layer_index; // activation to sample (relu after the conv)
        int64_t channels;
        std::vector<double> sum_abs;
        int64_t count = 0;
    };
    std::map<std::string, Site> sites;
    for (const std::string& name : targets) {
        for (size_t i = 0; i < g.layers.size(); ++i) {
            const auto* conv = std::get_if<Conv2D<float>>(&g.layers[i]);
            if (!conv || conv->name != name) continue;
            size_t site = i;
            if (i + 1 < g.layers.size() && std::holds_alternative<ReLULayer>(g.layers[i + 1]))
                site = i + 1;
            sites.emplace(name, Site{site, conv->out_channels(), {}, 0});
            sites[name].sum_abs.assign(static_cast<size_t>(conv->out_channels()), 0.0);
        }
    }

    constexpr size_t kBatch = 32;
    for (size_t start = 0; start < calib.items.size(); start += kBatch) {
        const size_t end = std::min(calib.items.size(), start + kBatch);
        Tensor cur = dataset_batch(calib, start, end);
        for (size_t i = 0; i < g.layers.size(); ++i) {
            cur = forward_layer(g.layers[i], cur, Mode::Infer, nullptr, nullptr);
            for (auto& [name, site] : sites) {
                if (site.layer_index != i) continue;
                const int64_t c = cur.dim(3);
                const int64_t cells = cur.numel() / c;
                for (int64_t p = 0; p < cells; ++p) {
                    const float* px = cur.data() + p * c;
                    for (int64_t ch = 0; ch < c; ++ch)
                        site.sum_abs[static_cast<size_t>(ch)] += std::abs(px[ch]);
                }
                site.count += cells;
            }
        }
    }

    std::map<std::string, std::vector<double>> scores;
    for (auto& [name, site] : sites) {
        std::vector<double>& s = scores[name];
        s.resize(site.sum_abs.size());
        for (size_t i = 0; i < s.size(); ++i)
            s[i] = site.sum_abs[i] / static_cast<double>(std::max<int64_t>(site.count, 1));
    }
    return scores;
}

} // namespace

PruneSpec rank_prune_channels(const Checkpoint& ckpt, const std::map<std::string, double>& fractions,
                              PruneRanking ranking, const LabeledDataset* calib) {
    PruneSpec spec;
    spec.ranking = ranking;

    std::vector<std::string> targets;
    for (const auto& [name, frac] : fractions) {
        if (!(frac >= 0.0 && frac < 1.0))
            throw ConfigError("prune fraction for " + name + " must be in [0,1)");
        targets.push_back(name);
    }

    std::map<std::string, std::vector<double>> act_scores;
    if (ranking == PruneRanking::ActivationL1) {
        if (!calib || calib->items.empty())
            throw ConfigError("activation-l1 pruning requires a representative dataset (--calib)");
        act_scores = activation_channel_l1(ckpt.graph, targets, *calib);
    }

    for (const auto& [name, frac] : fractions) {
        const Conv2D<float>* conv = nullptr;
        for (const auto& l : ckpt.graph.layers) {
            if (const auto* c = std::get_if<Conv2D<float>>(&l); c && c->name == name) conv = c;
        }
        if (!conv) throw ConfigError("prune: no conv layer named '" + name + "'");

        const int64_t cout = conv->out_channels();
        const int64_t n_remove = static_cast<int64_t>(std::floor(frac * static_cast<double>(cout)));
        if (n_remove == 0) {
            spec.channels[name] = {};
            continue;
        }

        std::vector<double> score(static_cast<size_t>(cout), 0.0);
        if (ranking == PruneRanking::WeightL1) {
            // kernel layout [3,3,Cin,Cout]: channel o strides the last axis
            const int64_t per = conv->kernels.numel() / cout;
            for (int64_t i = 0; i < per; ++i) {
                const float* row = conv->kernels.data() + i * cout;
                for (int64_t o = 0; o < cout; ++o) score[static_cast<size_t>(o)] += std::abs(row[o]);
            }
        } else {
            score = act_scores.at(name);
        }

        std::vector<int64_t> idx(static_cast<size_t>(cout));
        std::iota(idx.begin(), idx.end(), int64_t{0});
        std::sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
            const double sa = score[static_cast<size_t>(a)], sb = score[static_cast<size_t>(b)];
            return sa != sb ? sa < sb : a < b;
        });
        std::vector<int64_t> removed(idx.begin(), idx.begin() + n_remove);
        std::sort(removed.begin(), removed.end());
        spec.channels[name] = std::move(removed);
    }
    return spec;
}

Checkpoint apply_prune(const Checkpoint& ckpt, const PruneSpec& spec) {
    Checkpoint out = ckpt;
    ModelGraph& g = out.graph;
    const ParamIndex pidx = index_params(g);

    // Spatial extents feeding the flatten are fixed by the architecture and
    // independent of channel counts.
    const std::vector<Shape> shapes = output_shapes(ckpt.graph, 1);

    auto slice_param = [&](const std::string& name, size_t axis, const std::vector<int64_t>& removed,
                           Tensor& target) {
        const size_t k = pidx.by_name.at(name);
        target = remove_axis_indices(target, axis, removed);
        out.m[k] = remove_axis_indices(out.m[k], axis, removed);
        out.v[k] = remove_axis_indices(out.v[k], axis, removed);
    };

    for (size_t li = 0; li < g.layers.size(); ++li) {
        auto* conv = std::get_if<Conv2D<float>>(&g.layers[li]);
        if (!conv) continue;
        const auto it = spec.channels.find(conv->name);
        if (it == spec.channels.end() || it->second.empty()) continue;
        const std::vector<int64_t>& removed = it->second;

        // Cout before slicing: dense row indices below refer to this layout.
        const int64_t cout_before = conv->out_channels();
        validate_removal(conv->name, removed, cout_before);

        slice_param(conv->name + ".kernel", 3, removed, conv->kernels);
        slice_param(conv->name + ".bias", 0, removed, conv->bias);

        // Re-wire the first downstream parametric consumer.
        bool rewired = false;
        for (size_t lj = li + 1; lj < g.layers.size() && !rewired; ++lj) {
            if (auto* next_conv = std::get_if<Conv2D<float>>(&g.layers[lj])) {
                slice_param(next_conv->name + ".kernel", 2, removed, next_conv->kernels);
                rewired = true;
            } else if (auto* dense = std::get_if<Dense<float>>(&g.layers[lj])) {
                // Flatten layout is (i*W + j)*C + c; drop the rows of every
                // removed channel.
                const Shape& fed = shapes[lj - 1]; // dense input is [N, flat]
                const int64_t flat = fed[1];
                const int64_t positions = flat / cout_before;
                std::vector<int64_t> rows;
                rows.reserve(static_cast<size_t>(positions) * removed.size());
                for (int64_t p = 0; p < positions; ++p)
                    for (int64_t c : removed) rows.push_back(p * cout_before + c);
                std::sort(rows.begin(), rows.end());
                slice_param(dense->name + ".weight", 0, rows, dense->weights);
                rewired = true;
            }
        }
        if (!rewired)
            throw ConfigError("prune: " + conv->name + " has no downstream parametric consumer");
    }
    return out;
}

Checkpoint prune_channels(const Checkpoint& ckpt, const std::map<std::string, double>& fractions,
                          PruneRanking ranking, const LabeledDataset* calib) {
    return apply_prune(ckpt, rank_prune_channels(ckpt, fractions, ranking, calib));
}

} // namespace edgenet
