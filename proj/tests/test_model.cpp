#include <doctest.h>

#include <map>

#include "edgenet/model.hpp"
#include "oracles.hpp"

using namespace edgenet;

TEST_SUITE_BEGIN("model");

namespace {

// Layer-count formula, summed independently of the library's walk.
int64_t expected_params(int64_t input_size, int64_t classes) {
    const int64_t s1 = input_size - 2;        // conv1
    const int64_t p1 = s1 / 2;                // pool
    const int64_t s2 = p1 - 2;                // conv2
    const int64_t p2 = s2 / 2;                // pool
    const int64_t flat = p2 * p2 * 64;
    return (3 * 3 * 3 * 32 + 32) + (3 * 3 * 32 * 64 + 64) + (flat * 128 + 128) +
           (128 * classes + classes);
}

ModelGraph build_seeded(int64_t input_size, int64_t classes = 5, uint64_t seed = 42) {
    Rng rng(seed);
    return build_model<float>(input_size, classes, rng);
}

} // namespace

TEST_CASE("per-layer parameter counts for the 256 network") {
    ModelGraph g = build_seeded(256);
    std::vector<int64_t> counts;
    for (const auto& l : g.layers) {
        const int64_t c = param_count(l);
        if (c > 0) counts.push_back(c);
    }
    REQUIRE(counts.size() == 4);
    CHECK(counts[0] == 896);
    CHECK(counts[1] == 18496);
    CHECK(counts[2] == 31490176);
    CHECK(counts[3] == 645);
    CHECK(param_count(g) == 31510213);
}

TEST_CASE("total parameter counts for every input size") {
    // 256 matches the reference total; the rest follow the same formula.
    CHECK(param_count(build_seeded(64)) == 1625797);
    CHECK(param_count(build_seeded(96)) == 3985093);
    CHECK(param_count(build_seeded(128)) == 7392965);
    for (int64_t s : {64, 96, 128, 256}) CHECK(param_count(build_seeded(s)) == expected_params(s, 5));
}

TEST_CASE("param_count is additive over layers") {
    ModelGraph g = build_seeded(96);
    int64_t dense_only = 0;
    std::erase_if(g.layers, [&](const Layer<float>& l) {
        return std::holds_alternative<Conv2D<float>>(l);
    });
    for (const auto& l : g.layers) dense_only += param_count(l);
    CHECK(param_count(g) == dense_only);
    CHECK(param_count(g) == (30976 * 128 + 128) + 645);
}

TEST_CASE("activation shape chain for all four input sizes") {
    const std::map<int64_t, std::vector<int64_t>> chains{
        {64, {62, 31, 29, 14}},
        {96, {94, 47, 45, 22}},
        {128, {126, 63, 61, 30}},
        {256, {254, 127, 125, 62}},
    };
    for (const auto& [size, chain] : chains) {
        ModelGraph g = build_seeded(size);
        const std::vector<Shape> shapes = output_shapes(g, 1);
        // conv1, pool1, conv2, pool2 spatial extents
        CHECK(shapes[0][1] == chain[0]);
        CHECK(shapes[2][1] == chain[1]);
        CHECK(shapes[4][1] == chain[2]);
        CHECK(shapes[6][1] == chain[3]);
    }
}

TEST_CASE("the 256 chain matches the reference output shapes") {
    ModelGraph g = build_seeded(256);
    const std::vector<Shape> shapes = output_shapes(g, 1);
    CHECK(shapes[0] == Shape{1, 254, 254, 32});  // conv1
    CHECK(shapes[2] == Shape{1, 127, 127, 32});  // pool1
    CHECK(shapes[4] == Shape{1, 125, 125, 64});  // conv2
    CHECK(shapes[6] == Shape{1, 62, 62, 64});    // pool2
    CHECK(shapes[8] == Shape{1, 246016});        // flatten
    CHECK(shapes[10] == Shape{1, 128});          // dense1
    CHECK(shapes[12] == Shape{1, 5});            // dense2
    CHECK(shapes[13] == Shape{1, 5});            // softmax
}

TEST_CASE("build rejects bad configurations") {
    Rng rng(1);
    CHECK_THROWS_AS(build_model<float>(8, 5, rng), ConfigError);
    CHECK_THROWS_AS(build_model<float>(96, 1, rng), ConfigError);
}

TEST_CASE("build initializes biases to zero") {
    ModelGraph g = build_seeded(64);
    for_each_param(g, [&](const std::string& name, const Tensor& t) {
        if (name.ends_with(".bias")) {
            for (int64_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0f);
        }
    });
}

TEST_CASE("infer returns a probability vector and validates extents") {
    ModelGraph g = build_seeded(16, 5);
    Rng rng(9);
    Tensor img = oracles::random_tensor<float>(Shape{16, 16, 3}, rng, 0.0, 1.0);
    const std::vector<float> probs = infer(g, img);
    REQUIRE(probs.size() == 5);
    double sum = 0;
    for (float p : probs) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

    CHECK_THROWS_AS(infer(g, Tensor(Shape{15, 16, 3})), ShapeError);
}

TEST_CASE("zero-weight model yields the uniform distribution") {
    ModelGraph g = build_seeded(16, 5);
    for_each_param(g, [](const std::string&, Tensor& t) { t.fill(0.0f); });
    Tensor img(Shape{16, 16, 3}, 0.0f);
    for (float p : infer(g, img)) CHECK(p == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("infer is deterministic") {
    ModelGraph g = build_seeded(16, 5);
    Rng rng(10);
    Tensor img = oracles::random_tensor<float>(Shape{16, 16, 3}, rng, 0.0, 1.0);
    const std::vector<float> a = infer(g, img);
    const std::vector<float> b = infer(g, img);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("config round trip reproduces the graph structure") {
    ModelGraph g = build_seeded(96);
    const ModelConfig cfg = graph_config(g);
    ModelGraph rebuilt = graph_from_config<float>(cfg);
    CHECK(graph_config(rebuilt) == cfg);
    CHECK(param_count(rebuilt) == param_count(g));
    CHECK(output_shapes(rebuilt, 1) == output_shapes(g, 1));
}

TEST_SUITE_END();
