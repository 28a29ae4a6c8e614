#include "edgenet/train.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "edgenet/log.hpp"

namespace edgenet {

void TrainConfig::validate(int64_t num_classes) const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
        throw ConfigError("adam betas must be in [0,1)");
    if (!(epsilon > 0)) throw ConfigError("adam epsilon must be > 0");
    if (!(split_fraction > 0 && split_fraction < 1))
        throw ConfigError("split_fraction must be in (0,1)");
    if (!(hflip_prob >= 0 && hflip_prob <= 1)) throw ConfigError("hflip_prob must be in [0,1]");
    if (!class_weights.empty()) {
        if (static_cast<int64_t>(class_weights.size()) != num_classes)
            throw ConfigError("class_weights length must equal the class count");
        for (float w : class_weights) {
            if (!(w > 0)) throw ConfigError("class_weights must all be > 0");
        }
    }
}

Tensor normalize(const ImageU8& img) {
    Tensor t(Shape{img.height, img.width, img.channels});
    float* out = t.data();
    for (size_t i = 0; i < img.pixels.size(); ++i)
        out[i] = static_cast<float>(img.pixels[i]) / 255.0f;
    return t;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds, double fraction,
                                                        uint64_t seed) {
    ds.validate();
    if (!(fraction > 0 && fraction < 1)) throw ConfigError("split fraction must be in (0,1)");

    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(ds.num_classes()));
    for (size_t i = 0; i < ds.items.size(); ++i)
        by_class[static_cast<size_t>(ds.items[i].label)].push_back(i);

    Rng rng(seed);
    LabeledDataset train, val;
    train.class_names = ds.class_names;
    val.class_names = ds.class_names;

    std::vector<size_t> train_idx, val_idx;
    for (size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 2)
            throw ConfigError("class '" + ds.class_names[c] + "' has fewer than 2 examples");
        rng.shuffle(idx);
        const int64_t n = static_cast<int64_t>(idx.size());
        const int64_t n_train = std::clamp<int64_t>(
            std::llround(fraction * static_cast<double>(n)), 1, n - 1);
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
        val_idx.insert(val_idx.end(), idx.begin() + n_train, idx.end());
    }
    rng.shuffle(train_idx);
    rng.shuffle(val_idx);

    for (size_t i : train_idx) train.items.push_back(ds.items[i]);
    for (size_t i : val_idx) val.items.push_back(ds.items[i]);
    return {std::move(train), std::move(val)};
}

void augment_batch(Tensor& batch, double hflip_prob, Rng& rng) {
    const Shape& s = batch.shape();
    if (s.rank() != 4) throw ShapeError("augment_batch expects NHWC, got " + s.str());
    const int64_t n = s[0], h = s[1], w = s[2], c = s[3];
    for (int64_t img = 0; img < n; ++img) {
        if (!rng.bernoulli(hflip_prob)) continue;
        float* base = batch.data() + img * h * w * c;
        for (int64_t y = 0; y < h; ++y) {
            float* row = base + y * w * c;
            for (int64_t x = 0; x < w / 2; ++x) {
                float* a = row + x * c;
                float* b = row + (w - 1 - x) * c;
                for (int64_t ch = 0; ch < c; ++ch) std::swap(a[ch], b[ch]);
            }
        }
    }
}

namespace {

// Pack dataset items [first, last) into a normalized NHWC batch.
Tensor assemble_batch(const LabeledDataset& ds, const std::vector<size_t>& order, size_t first,
                      size_t last, std::vector<int32_t>& labels) {
    const ImageU8& proto = ds.items[order[first]].image;
    const int64_t n = static_cast<int64_t>(last - first);
    Tensor batch(Shape{n, proto.height, proto.width, proto.channels});
    labels.resize(static_cast<size_t>(n));
    const int64_t stride = proto.height * proto.width * proto.channels;
    for (size_t i = first; i < last; ++i) {
        const LabeledImage& item = ds.items[order[i]];
        labels[i - first] = item.label;
        float* dst = batch.data() + static_cast<int64_t>(i - first) * stride;
        for (size_t p = 0; p < item.image.pixels.size(); ++p)
            dst[p] = static_cast<float>(item.image.pixels[p]) / 255.0f;
    }
    return batch;
}

struct LossAcc {
    double loss = 0.0;
    double acc = 0.0;
};

// Unweighted mean CE and argmax accuracy in eval mode.
LossAcc eval_loss_acc(const ModelGraph& g, const LabeledDataset& ds, int batch_size) {
    std::vector<size_t> order(ds.items.size());
    std::iota(order.begin(), order.end(), size_t{0});
    double loss_sum = 0.0;
    int64_t correct = 0;
    std::vector<int32_t> labels;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
        Tensor batch = assemble_batch(ds, order, start, end, labels);
        Tensor probs = forward_eval(g, batch);
        loss_sum += class_weighted_batch_loss(probs, labels, {}) * static_cast<double>(end - start);
        const int64_t c = probs.dim(1);
        for (int64_t r = 0; r < probs.dim(0); ++r) {
            const float* row = probs.data() + r * c;
            const int64_t arg = std::max_element(row, row + c) - row;
            if (arg == labels[static_cast<size_t>(r)]) ++correct;
        }
    }
    const double n = static_cast<double>(ds.items.size());
    return {loss_sum / n, static_cast<double>(correct) / n};
}

} // namespace

std::pair<Checkpoint, TrainHistory> fit(ModelGraph graph, const LabeledDataset& dataset,
                                        const TrainConfig& config, std::ostream* metrics) {
    config.validate(graph.num_classes);
    dataset.validate();
    if (dataset.num_classes() != graph.num_classes)
        throw ConfigError("dataset class count does not match the model");
    const ImageU8& proto = dataset.items.front().image;
    if (proto.height != graph.input_size || proto.width != graph.input_size || proto.channels != 3)
        throw ShapeError("dataset images are " + std::to_string(proto.height) + "x" +
                         std::to_string(proto.width) + ", model expects " +
                         std::to_string(graph.input_size));

    auto [train_set, val_set] = split_dataset(dataset, config.split_fraction, config.seed);

    Rng master(config.seed);
    Rng shuffle_rng = master.split(1);
    Rng dropout_rng = master.split(2);
    Rng augment_rng = master.split(3);

    Checkpoint ckpt = make_checkpoint(std::move(graph));
    ModelGraph& g = ckpt.graph;

    std::vector<Tensor*> params;
    for_each_param(g, [&](const std::string&, Tensor& t) { params.push_back(&t); });

    const AdamConfig adam{config.learning_rate, config.beta1, config.beta2, config.epsilon};
    const std::span<const float> weights(config.class_weights);
    EarlyStopper stopper(config.patience);
    TrainHistory hist;

    std::vector<Tensor> best_params, best_m, best_v;
    int64_t best_step = 0;
    bool have_best = false;

    if (metrics) *metrics << "epoch,train_loss,train_acc,val_loss,val_acc\n";

    std::vector<size_t> order(train_set.items.size());
    std::vector<int32_t> labels;
    std::vector<LayerCache<float>> caches;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), size_t{0});
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        int64_t batches = 0, correct = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            Tensor batch = assemble_batch(train_set, order, start, end, labels);
            augment_batch(batch, config.hflip_prob, augment_rng);

            Tensor probs = forward_train(g, batch, dropout_rng, caches);
            loss_sum += class_weighted_batch_loss(probs, labels, weights);
            ++batches;
            const int64_t c = probs.dim(1);
            for (int64_t r = 0; r < probs.dim(0); ++r) {
                const float* row = probs.data() + r * c;
                if (std::max_element(row, row + c) - row == labels[static_cast<size_t>(r)]) ++correct;
            }

            Tensor dz = weighted_ce_logit_grad(probs, labels, weights);
            std::vector<Tensor> grads = backward_from_logits(g, caches, dz);

            ++ckpt.step;
            for (size_t k = 0; k < params.size(); ++k)
                adam_step(*params[k], grads[k], ckpt.m[k], ckpt.v[k], ckpt.step, adam);
        }

        const double train_loss = loss_sum / static_cast<double>(batches);
        const double train_acc =
            static_cast<double>(correct) / static_cast<double>(train_set.items.size());
        const LossAcc val = eval_loss_acc(g, val_set, config.batch_size);

        hist.train_loss.push_back(train_loss);
        hist.train_acc.push_back(train_acc);
        hist.val_loss.push_back(val.loss);
        hist.val_acc.push_back(val.acc);
        if (metrics)
            *metrics << epoch << ',' << train_loss << ',' << train_acc << ',' << val.loss << ','
                     << val.acc << '\n';
        log_info("epoch " + std::to_string(epoch) + ": train_loss=" + std::to_string(train_loss) +
                 " train_acc=" + std::to_string(train_acc) + " val_loss=" + std::to_string(val.loss) +
                 " val_acc=" + std::to_string(val.acc));

        const bool improved = val.loss < stopper.best_loss();
        const bool stop = stopper.update(epoch, val.loss);
        ckpt.epoch = epoch + 1;
        if (improved) {
            best_params.clear();
            for (Tensor* p : params) best_params.push_back(*p);
            best_m = ckpt.m;
            best_v = ckpt.v;
            best_step = ckpt.step;
            have_best = true;
        }
        if (stop) break;
    }

    hist.best_epoch = stopper.best_epoch();
    ckpt.best_epoch = stopper.best_epoch();
    ckpt.best_val_loss = static_cast<float>(stopper.best_loss());
    if (have_best) {
        for (size_t k = 0; k < params.size(); ++k) *params[k] = std::move(best_params[k]);
        ckpt.m = std::move(best_m);
        ckpt.v = std::move(best_v);
        ckpt.step = best_step;
    }
    return {std::move(ckpt), std::move(hist)};
}

} // namespace edgenet
