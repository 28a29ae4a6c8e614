#include <doctest.h>

#include <cmath>
#include <sstream>

#include "edgenet/train.hpp"
#include "oracles.hpp"

using namespace edgenet;

TEST_SUITE_BEGIN("train");

TEST_CASE("cross entropy basics") {
    // perfect prediction
    CHECK(cross_entropy({1.0f, 0.0f, 0.0f}, {1.0f, 0.0f, 0.0f}, 1.0) == doctest::Approx(0.0));
    // uniform over 5 classes
    CHECK(cross_entropy({0.2f, 0.2f, 0.2f, 0.2f, 0.2f}, {0.0f, 1.0f, 0.0f, 0.0f, 0.0f}, 1.0) ==
          doctest::Approx(std::log(5.0)).epsilon(1e-6));
    // softmax([1,2,3]) against class index 1
    const std::vector<float> probs = softmax(std::vector<float>{1, 2, 3});
    CHECK(cross_entropy(probs, {0.0f, 1.0f, 0.0f}, 1.0) == doctest::Approx(1.40761).epsilon(1e-4));
    // weight scales linearly
    CHECK(cross_entropy(probs, {0.0f, 1.0f, 0.0f}, 2.0) ==
          doctest::Approx(2 * 1.40761).epsilon(1e-4));
}

TEST_CASE("cross entropy rejects malformed one-hot targets") {
    CHECK_THROWS_AS(cross_entropy({0.5f, 0.5f}, {1.0f, 1.0f}, 1.0), InputError);
    CHECK_THROWS_AS(cross_entropy({0.5f, 0.5f}, {0.0f, 0.0f}, 1.0), InputError);
    CHECK_THROWS_AS(cross_entropy({0.5f, 0.5f}, {0.5f, 0.5f}, 1.0), InputError);
    CHECK_THROWS_AS(cross_entropy({0.5f, 0.5f}, {1.0f, 0.0f, 0.0f}, 1.0), InputError);
}

TEST_CASE("log clamp keeps the loss finite at p = 0") {
    CHECK(cross_entropy({0.0f, 1.0f}, {1.0f, 0.0f}, 1.0) ==
          doctest::Approx(-std::log(1e-12)).epsilon(1e-6));
}

TEST_CASE("class-weighted batch loss") {
    Tensor probs(Shape{2, 2}, {0.8f, 0.2f, 0.3f, 0.7f});
    const std::vector<int32_t> labels{0, 1};
    const double l1 = -std::log(static_cast<double>(0.8f));
    const double l2 = -std::log(static_cast<double>(0.7f));

    // neutral weights equal the unweighted mean
    const std::vector<float> ones{1.0f, 1.0f};
    CHECK(class_weighted_batch_loss(probs, labels, std::span<const float>(ones)) ==
          doctest::Approx((l1 + l2) / 2).epsilon(1e-9));
    CHECK(class_weighted_batch_loss(probs, labels, {}) ==
          doctest::Approx((l1 + l2) / 2).epsilon(1e-9));

    // weights 1,2: (L1 + 2 L2) / 2
    const std::vector<float> w{1.0f, 2.0f};
    CHECK(class_weighted_batch_loss(probs, labels, std::span<const float>(w)) ==
          doctest::Approx((l1 + 2 * l2) / 2).epsilon(1e-9));

    CHECK_THROWS_AS(class_weighted_batch_loss(probs, {0}, {}), InputError);
}

TEST_CASE("adam fixed point at zero gradient") {
    // fresh optimizer state: zero gradient moves nothing
    Tensor p(Shape{3}, {1.0f, -2.0f, 0.5f});
    Tensor g(Shape{3}, 0.0f);
    Tensor m(Shape{3}), v(Shape{3});
    const Tensor p0 = p;
    for (int64_t t = 1; t <= 5; ++t) adam_step(p, g, m, v, t, AdamConfig{});
    for (int64_t i = 0; i < 3; ++i) {
        CHECK(p[i] == p0[i]);
        CHECK(m[i] == 0.0f);
        CHECK(v[i] == 0.0f);
    }

    // residual moments decay geometrically toward zero
    Tensor m2(Shape{1}, 0.5f), v2(Shape{1}, 0.5f), p2(Shape{1}, 1.0f);
    const Tensor g2(Shape{1}, 0.0f);
    float prev_m = m2[0], prev_v = v2[0];
    for (int64_t t = 1; t <= 20; ++t) {
        adam_step(p2, g2, m2, v2, t, AdamConfig{});
        CHECK(std::abs(m2[0]) < prev_m);
        CHECK(v2[0] < prev_v);
        prev_m = std::abs(m2[0]);
        prev_v = v2[0];
    }
}

TEST_CASE("adam first step is approximately lr * sign(g)") {
    Tensor p(Shape{1}, 1.0f);
    Tensor g(Shape{1}, 1.0f);
    Tensor m(Shape{1}), v(Shape{1});
    adam_step(p, g, m, v, 1, AdamConfig{.learning_rate = 0.1});
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-4));
}

TEST_CASE("adam minimizes p^2 from 5") {
    TensorF64 p(Shape{1}, 5.0);
    TensorF64 m(Shape{1}), v(Shape{1});
    const AdamConfig cfg{.learning_rate = 0.1};
    for (int64_t t = 1; t <= 500; ++t) {
        TensorF64 g(Shape{1}, 2.0 * p[0]); // d/dp p^2
        adam_step(p, g, m, v, t, cfg);
    }
    CHECK(std::abs(p[0]) < 0.01);
}

TEST_CASE("adam rejects non-finite gradients") {
    Tensor p(Shape{1}, 1.0f);
    Tensor g(Shape{1}, std::numeric_limits<float>::quiet_NaN());
    Tensor m(Shape{1}), v(Shape{1});
    CHECK_THROWS_AS(adam_step(p, g, m, v, 1, AdamConfig{}), NumericError);
}

TEST_CASE("he_init sample stddev matches sqrt(2/fan_in)") {
    Rng rng(17);
    Tensor t = he_init<float>(Shape{100000}, 2, rng); // stddev 1.0
    double sum = 0, sq = 0;
    for (int64_t i = 0; i < t.numel(); ++i) {
        sum += t[i];
        sq += static_cast<double>(t[i]) * t[i];
    }
    const double n = static_cast<double>(t.numel());
    const double stddev = std::sqrt(sq / n - (sum / n) * (sum / n));
    CHECK(std::abs(stddev - 1.0) < 0.02);

    Rng r1(5), r2(5);
    Tensor a = he_init<float>(Shape{64}, 9, r1);
    Tensor b = he_init<float>(Shape{64}, 9, r2);
    for (int64_t i = 0; i < 64; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("split_dataset is stratified, disjoint and deterministic") {
    LabeledDataset ds = synthesize(20, 3, SynthOptions{.size = 8});
    REQUIRE(ds.items.size() == 100);

    auto [train1, val1] = split_dataset(ds, 0.85, 7);
    CHECK(train1.items.size() == 85);
    CHECK(val1.items.size() == 15);

    std::vector<int64_t> train_counts(5, 0), val_counts(5, 0);
    for (const auto& it : train1.items) ++train_counts[static_cast<size_t>(it.label)];
    for (const auto& it : val1.items) ++val_counts[static_cast<size_t>(it.label)];
    for (int64_t c = 0; c < 5; ++c) {
        CHECK(train_counts[static_cast<size_t>(c)] == 17);
        CHECK(val_counts[static_cast<size_t>(c)] == 3);
    }

    auto [train2, val2] = split_dataset(ds, 0.85, 7);
    REQUIRE(train2.items.size() == train1.items.size());
    for (size_t i = 0; i < train1.items.size(); ++i)
        CHECK(train1.items[i].image == train2.items[i].image);
}

TEST_CASE("split_dataset rejects undersized classes") {
    LabeledDataset ds = synthesize(2, 3, SynthOptions{.size = 8});
    ds.items.erase(ds.items.begin()); // class "one" now has a single example
    CHECK_THROWS_AS(split_dataset(ds, 0.85, 0), ConfigError);
}

TEST_CASE("augment_batch flips columns with the stated probability") {
    Rng rng(19);
    Tensor batch(Shape{1, 1, 4, 1}, {1, 2, 3, 4});

    Tensor keep = batch;
    augment_batch(keep, 0.0, rng);
    for (int64_t i = 0; i < 4; ++i) CHECK(keep[i] == batch[i]);

    Tensor flip = batch;
    augment_batch(flip, 1.0, rng);
    CHECK(flip[0] == 4.0f);
    CHECK(flip[1] == 3.0f);
    CHECK(flip[2] == 2.0f);
    CHECK(flip[3] == 1.0f);

    augment_batch(flip, 1.0, rng); // involution
    for (int64_t i = 0; i < 4; ++i) CHECK(flip[i] == batch[i]);
}

TEST_CASE("normalize maps 0..255 onto [0,1]") {
    ImageU8 img{1, 2, 3, {0, 51, 255, 128, 128, 128}};
    Tensor t = normalize(img);
    CHECK(t[0] == 0.0f);
    CHECK(t[1] == doctest::Approx(0.2f).epsilon(1e-6));
    CHECK(t[2] == 1.0f);
    CHECK(t[3] == doctest::Approx(0.50196).epsilon(1e-4));
}

TEST_CASE("early stopping reproduces the worked sequence") {
    const std::vector<double> losses{1.0, 0.8, 0.7, 0.72, 0.75, 0.78};
    EarlyStopper stopper(3);
    int stopped_at = -1;
    for (int e = 0; e < static_cast<int>(losses.size()); ++e) {
        if (stopper.update(e, losses[static_cast<size_t>(e)])) {
            stopped_at = e;
            break;
        }
    }
    CHECK(stopped_at == 5); // stop after the 6th epoch
    CHECK(stopper.best_epoch() == 2);
    CHECK(stopper.best_loss() == doctest::Approx(0.7));
}

TEST_CASE("early stopping never triggers on monotone decrease") {
    EarlyStopper stopper(3);
    for (int e = 0; e < 25; ++e) CHECK_FALSE(stopper.update(e, 1.0 - 0.01 * e));
    CHECK(stopper.best_epoch() == 24);
}

TEST_CASE("a dip inside the rise window resets the streak") {
    EarlyStopper stopper(3);
    // rises twice, dips, rises twice: never 3 consecutive increases
    const std::vector<double> losses{1.0, 1.1, 1.2, 0.9, 1.0, 1.1};
    for (int e = 0; e < static_cast<int>(losses.size()); ++e)
        CHECK_FALSE(stopper.update(e, losses[static_cast<size_t>(e)]));
    CHECK(stopper.best_epoch() == 3);
}

TEST_CASE("fit is reproducible and honors the epoch budget") {
    LabeledDataset ds = synthesize(6, 11, SynthOptions{.size = 12, .classes = 2});
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 3;

    Rng r1(3), r2(3);
    auto [ckpt1, hist1] = fit(build_model<float>(12, 2, r1), ds, cfg);
    auto [ckpt2, hist2] = fit(build_model<float>(12, 2, r2), ds, cfg);

    CHECK(hist1.epochs() == 2);
    CHECK(hist1.val_loss == hist2.val_loss);
    CHECK(hist1.train_loss == hist2.train_loss);

    std::vector<const Tensor*> p1, p2;
    for_each_param(ckpt1.graph, [&](const std::string&, const Tensor& t) { p1.push_back(&t); });
    for_each_param(ckpt2.graph, [&](const std::string&, const Tensor& t) { p2.push_back(&t); });
    REQUIRE(p1.size() == p2.size());
    for (size_t k = 0; k < p1.size(); ++k)
        for (int64_t i = 0; i < p1[k]->numel(); ++i) CHECK((*p1[k])[i] == (*p2[k])[i]);

    CHECK(ckpt1.best_epoch == hist1.best_epoch);
    // best epoch is the argmin of the recorded val losses
    const auto arg = std::min_element(hist1.val_loss.begin(), hist1.val_loss.end());
    CHECK(hist1.best_epoch == static_cast<int>(arg - hist1.val_loss.begin()));
}

TEST_CASE("fit emits one metrics line per epoch") {
    LabeledDataset ds = synthesize(6, 13, SynthOptions{.size = 12, .classes = 2});
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch_size = 4;
    std::ostringstream metrics;
    Rng rng(1);
    auto [ckpt, hist] = fit(build_model<float>(12, 2, rng), ds, cfg, &metrics);
    std::istringstream lines(metrics.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "epoch,train_loss,train_acc,val_loss,val_acc");
    size_t data_lines = 0;
    while (std::getline(lines, line))
        if (!line.empty()) ++data_lines;
    CHECK(data_lines == hist.epochs());
}

TEST_CASE("uniform class-weight scaling leaves the first update direction unchanged") {
    LabeledDataset ds = synthesize(4, 15, SynthOptions{.size = 12, .classes = 2});
    Rng rng(5);
    ModelGraph g = build_model<float>(12, 2, rng, DropoutRates{0, 0, 0});

    Tensor batch(Shape{4, 12, 12, 3});
    std::vector<int32_t> labels;
    {
        // items are class-major: 4 of "one" then 4 of "two"
        const size_t picks[4] = {0, 4, 1, 5};
        int64_t off = 0;
        for (size_t idx : picks) {
            const Tensor img = normalize(ds.items[idx].image);
            std::copy(img.data(), img.data() + img.numel(), batch.data() + off);
            off += img.numel();
            labels.push_back(ds.items[idx].label);
        }
    }

    auto first_update = [&](float scale) {
        ModelGraph work = g;
        const std::vector<float> w{1.0f * scale, 2.0f * scale};
        Rng drop(1);
        std::vector<LayerCache<float>> caches;
        Tensor probs = forward_train(work, batch, drop, caches);
        const double loss = class_weighted_batch_loss(probs, labels, std::span<const float>(w));
        Tensor dz = weighted_ce_logit_grad(probs, labels, std::span<const float>(w));
        std::vector<Tensor> grads = backward_from_logits(work, caches, dz);

        std::vector<Tensor*> params;
        for_each_param(work, [&](const std::string&, Tensor& t) { params.push_back(&t); });
        std::vector<Tensor> m, v;
        for (Tensor* p : params) {
            m.emplace_back(p->shape());
            v.emplace_back(p->shape());
        }
        std::vector<float> delta;
        for (size_t k = 0; k < params.size(); ++k) {
            const Tensor before = *params[k];
            adam_step(*params[k], grads[k], m[k], v[k], 1, AdamConfig{});
            for (int64_t i = 0; i < before.numel(); ++i)
                delta.push_back((*params[k])[i] - before[i]);
        }
        return std::pair{loss, delta};
    };

    const auto [loss1, d1] = first_update(1.0f);
    const auto [loss3, d3] = first_update(3.0f);

    // loss scales exactly with the weight scale
    CHECK(loss3 == doctest::Approx(3.0 * loss1).epsilon(1e-6));

    // update direction is invariant up to epsilon effects
    double dot = 0, n1 = 0, n3 = 0;
    for (size_t i = 0; i < d1.size(); ++i) {
        dot += static_cast<double>(d1[i]) * d3[i];
        n1 += static_cast<double>(d1[i]) * d1[i];
        n3 += static_cast<double>(d3[i]) * d3[i];
    }
    CHECK(dot / std::sqrt(n1 * n3) > 0.999);
}

TEST_SUITE_END();
