#include <doctest.h>

#include "edgenet/tensor.hpp"
#include "oracles.hpp"

using namespace edgenet;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("create fills every element") {
    Tensor z(Shape{2, 2}, 0.0f);
    CHECK(z.numel() == 4);
    for (int64_t i = 0; i < 4; ++i) CHECK(z[i] == 0.0f);

    Tensor s(Shape{1}, 7.5f);
    CHECK(s.numel() == 1);
    CHECK(s[0] == 7.5f);
}

TEST_CASE("degenerate extents are rejected") {
    CHECK_THROWS_AS(Shape({3, 0}), ShapeError);
    CHECK_THROWS_AS(Shape({-1, 2}), ShapeError);
    CHECK_THROWS_AS(Shape(std::vector<int64_t>{}), ShapeError);
}

TEST_CASE("row-major coordinate/index round trip") {
    Tensor t(Shape{3, 4, 5});
    int64_t flat = 0;
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 4; ++j)
            for (int64_t k = 0; k < 5; ++k) CHECK(t.offset({i, j, k}) == flat++);
    CHECK(flat == t.numel());
}

TEST_CASE("matmul identity") {
    Rng rng(11);
    Tensor x = oracles::random_tensor<float>(Shape{3, 3}, rng);
    Tensor eye(Shape{3, 3});
    for (int64_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0f;
    Tensor y = matmul(eye, x);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("matmul hand expansion") {
    Tensor a(Shape{2, 2}, {1, 2, 3, 4});
    Tensor b(Shape{2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c[0] == doctest::Approx(3.0f));
    CHECK(c[1] == doctest::Approx(7.0f));
}

TEST_CASE("matmul dimension mismatch") {
    Tensor a(Shape{2, 3});
    Tensor b(Shape{2, 3});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul is associative within 1e-5") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t m = 1 + static_cast<int64_t>(rng.uniform_index(16));
        const int64_t k = 1 + static_cast<int64_t>(rng.uniform_index(16));
        const int64_t n = 1 + static_cast<int64_t>(rng.uniform_index(16));
        const int64_t p = 1 + static_cast<int64_t>(rng.uniform_index(16));
        Tensor a = oracles::random_tensor<float>(Shape{m, k}, rng);
        Tensor b = oracles::random_tensor<float>(Shape{k, n}, rng);
        Tensor c = oracles::random_tensor<float>(Shape{n, p}, rng);
        Tensor left = matmul(matmul(a, b), c);
        Tensor right = matmul(a, matmul(b, c));
        CHECK(oracles::norm_rel_err(left, right) < 1e-5);
    }
}

TEST_CASE("map transforms elementwise and keeps the element count") {
    Rng rng(3);
    Tensor x = oracles::random_tensor<float>(Shape{4, 5}, rng);

    Tensor same = x.map([](float v) { return v; });
    CHECK(same.numel() == x.numel());
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(same[i] == x[i]);

    Tensor a(Shape{2}, {-1.0f, 2.0f});
    Tensor abs = a.map([](float v) { return std::abs(v); });
    CHECK(abs[0] == 1.0f);
    CHECK(abs[1] == 2.0f);

    Tensor zeros(Shape{3, 3});
    Tensor ones = zeros.map([](float v) { return v + 1.0f; });
    CHECK(ones.numel() == zeros.numel());
    for (int64_t i = 0; i < ones.numel(); ++i) CHECK(ones[i] == 1.0f);
}

TEST_CASE("transpose2d round trip") {
    Rng rng(5);
    Tensor x = oracles::random_tensor<float>(Shape{3, 7}, rng);
    Tensor tt = transpose2d(transpose2d(x));
    CHECK(tt.shape() == x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(tt[i] == x[i]);
}

TEST_CASE("reshape rejects element-count changes") {
    Tensor x(Shape{2, 3});
    CHECK_THROWS_AS(x.reshaped(Shape{4, 2}), ShapeError);
    CHECK(x.reshaped(Shape{6}).shape() == Shape{6});
}

TEST_SUITE_END();
