#pragma once

#include <cmath>
#include <iosfwd>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "edgenet/data.hpp"
#include "edgenet/model.hpp"

namespace edgenet {

struct TrainConfig {
    int batch_size = 32;
    int max_epochs = 25;
    int patience = 3; // consecutive val-loss increases tolerated
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<float> class_weights; // empty = all ones
    double hflip_prob = 0.5;
    double split_fraction = 0.85;
    uint64_t seed = 0;

    void validate(int64_t num_classes) const;
};

struct TrainHistory {
    std::vector<double> train_loss, train_acc, val_loss, val_acc;
    int best_epoch = -1; // argmin val loss, 0-based

    size_t epochs() const { return val_loss.size(); }
};

// Stop when validation loss has risen for `patience` consecutive epochs,
// each relative to its immediately preceding epoch.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {
        if (patience < 1) throw ConfigError("patience must be >= 1");
    }

    // Feed the val loss of epoch `epoch` (0-based, in order). Returns true
    // when training should stop.
    bool update(int epoch, double val_loss) {
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch;
        }
        streak_ = (epoch > 0 && val_loss > prev_) ? streak_ + 1 : 0;
        prev_ = val_loss;
        return streak_ >= patience_;
    }

    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int streak_ = 0;
    int best_epoch_ = -1;
    double prev_ = std::numeric_limits<double>::infinity();
    double best_loss_ = std::numeric_limits<double>::infinity();
};

// Map 0..255 pixels to [0,1] f32, keeping the H,W,C layout.
Tensor normalize(const ImageU8& img);

// Weighted categorical cross-entropy of one prediction against a one-hot
// target: weight * -log(p_true), with the log clamped at 1e-12.
template <typename T>
double cross_entropy(std::span<const T> probs, std::span<const T> target, double weight) {
    if (probs.size() != target.size() || probs.empty())
        throw InputError("cross_entropy: probs/target length mismatch");
    int ones = 0;
    size_t true_idx = 0;
    for (size_t i = 0; i < target.size(); ++i) {
        if (target[i] == T(1)) {
            ++ones;
            true_idx = i;
        } else if (target[i] != T(0)) {
            throw InputError("cross_entropy: target is not one-hot");
        }
    }
    if (ones != 1) throw InputError("cross_entropy: target must have exactly one 1");
    const double p = std::max(static_cast<double>(probs[true_idx]), 1e-12);
    return weight * -std::log(p);
}

inline double cross_entropy(const std::vector<float>& probs, const std::vector<float>& target,
                            double weight) {
    return cross_entropy(std::span<const float>(probs), std::span<const float>(target), weight);
}

// Mean over the batch of per-example CE weighted by the true class's weight.
template <typename T>
double class_weighted_batch_loss(const TensorT<T>& probs, const std::vector<int32_t>& labels,
                                 std::span<const float> class_weights) {
    if (probs.shape().rank() != 2 || static_cast<size_t>(probs.dim(0)) != labels.size())
        throw InputError("batch loss: probs/labels shape mismatch");
    const int64_t n = probs.dim(0), c = probs.dim(1);
    double total = 0.0;
    for (int64_t r = 0; r < n; ++r) {
        const int32_t y = labels[static_cast<size_t>(r)];
        if (y < 0 || y >= c) throw InputError("batch loss: label out of range");
        const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<size_t>(y)];
        const double p = std::max(static_cast<double>(probs[r * c + y]), 1e-12);
        total += w * -std::log(p);
    }
    return total / static_cast<double>(n);
}

// Gradient of class_weighted_batch_loss with respect to the logits feeding
// softmax: dz[r,j] = w_y * (p[r,j] - 1{j==y}) / N.
template <typename T>
TensorT<T> weighted_ce_logit_grad(const TensorT<T>& probs, const std::vector<int32_t>& labels,
                                  std::span<const float> class_weights) {
    const int64_t n = probs.dim(0), c = probs.dim(1);
    TensorT<T> dz(probs.shape());
    for (int64_t r = 0; r < n; ++r) {
        const int32_t y = labels[static_cast<size_t>(r)];
        const T w = class_weights.empty() ? T(1) : static_cast<T>(class_weights[static_cast<size_t>(y)]);
        const T invn = T(1) / static_cast<T>(n);
        for (int64_t j = 0; j < c; ++j) {
            const T ind = (j == y) ? T(1) : T(0);
            dz[r * c + j] = w * (probs[r * c + j] - ind) * invn;
        }
    }
    return dz;
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One Adam update with bias correction. t is the 1-based step index.
template <typename T>
void adam_step(TensorT<T>& params, const TensorT<T>& grads, TensorT<T>& m, TensorT<T>& v, int64_t t,
               const AdamConfig& cfg) {
    if (!params.same_shape(grads) || !params.same_shape(m) || !params.same_shape(v))
        throw ShapeError("adam_step: tensor shapes disagree");
    if (t < 1) throw ConfigError("adam_step: step index must be >= 1");
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T corr1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(t)));
    const T corr2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(t)));
    const T lr = static_cast<T>(cfg.learning_rate);
    const T eps = static_cast<T>(cfg.epsilon);
    const int64_t nelem = params.numel();
    T* p = params.data();
    const T* g = grads.data();
    T* mp = m.data();
    T* vp = v.data();
    for (int64_t i = 0; i < nelem; ++i) {
        if (!std::isfinite(static_cast<double>(g[i])))
            throw NumericError("adam_step: non-finite gradient");
        mp[i] = b1 * mp[i] + (T(1) - b1) * g[i];
        vp[i] = b2 * vp[i] + (T(1) - b2) * g[i] * g[i];
        const T mhat = mp[i] / corr1;
        const T vhat = vp[i] / corr2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// Deterministic stratified split: each class is shuffled by seed and cut at
// round(fraction * n), clamped so both sides stay non-empty.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds, double fraction,
                                                        uint64_t seed);

// Mirror each image left-right with probability hflip_prob. Labels are
// untouched; batch is NHWC.
void augment_batch(Tensor& batch, double hflip_prob, Rng& rng);

// The full training protocol: shuffled minibatches, horizontal-flip
// augmentation, per-iteration normalization, class-weighted CE, Adam,
// early stopping on validation loss with best-weight restore.
// Emits one CSV line per epoch to `metrics` when given
// (epoch,train_loss,train_acc,val_loss,val_acc).
std::pair<Checkpoint, TrainHistory> fit(ModelGraph graph, const LabeledDataset& dataset,
                                        const TrainConfig& config, std::ostream* metrics = nullptr);

} // namespace edgenet
