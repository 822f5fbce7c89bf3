#include <doctest.h>

#include "hwau/ops.hpp"
#include "oracles.hpp"

using namespace hwau;

TEST_CASE("tensor invariants") {
    Tensor t = Tensor::zeros({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK(t.strides() == Shape{12, 4, 1});
    CHECK_THROWS_AS(Tensor::zeros({2, 0, 4}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.f, 2.f, 3.f}), ShapeError);
}

TEST_CASE("non-finite op outputs are rejected") {
    Tensor a = Tensor::from_data({2}, {3e38f, 3e38f});
    Tensor b = Tensor::from_data({2}, {3e38f, 3e38f});
    CHECK_THROWS_AS(add(a, b), NumericalError);  // overflows to inf
}

TEST_CASE("relu and algebraic examples") {
    Tensor x = Tensor::from_data({3}, {-1.f, 0.f, 2.f});
    Tensor y = relu(x);
    CHECK(y.at(0) == 0.f);
    CHECK(y.at(1) == 0.f);
    CHECK(y.at(2) == 2.f);

    // hand-computed 2x3 . 3x2 product
    Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c = matmul(a, b);
    CHECK(c.at(0) == doctest::Approx(58));   // 1*7+2*9+3*11
    CHECK(c.at(1) == doctest::Approx(64));   // 1*8+2*10+3*12
    CHECK(c.at(2) == doctest::Approx(139));  // 4*7+5*9+6*11
    CHECK(c.at(3) == doctest::Approx(154));
}

TEST_CASE("matmul batched forms against flattened loops") {
    Rng rng(11);
    Tensor64 a = oracle::random_tensor64({2, 3, 4}, rng);
    Tensor64 b = oracle::random_tensor64({4, 5}, rng);
    Tensor64 c = matmul(a, b);
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 5; ++j) {
                double acc = 0;
                for (int64_t k = 0; k < 4; ++k) acc += a.at((n * 3 + i) * 4 + k) * b.at(k * 5 + j);
                CHECK(c.at((n * 3 + i) * 5 + j) == doctest::Approx(acc).epsilon(1e-12));
            }

    Tensor64 b3 = oracle::random_tensor64({2, 4, 5}, rng);
    Tensor64 c3 = matmul(a, b3);
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 5; ++j) {
                double acc = 0;
                for (int64_t k = 0; k < 4; ++k) acc += a.at((n * 3 + i) * 4 + k) * b3.at((n * 4 + k) * 5 + j);
                CHECK(c3.at((n * 3 + i) * 5 + j) == doctest::Approx(acc).epsilon(1e-12));
            }

    CHECK_THROWS_AS(matmul(Tensor64::zeros({2, 3}), Tensor64::zeros({4, 2})), ShapeError);
}

TEST_CASE("softmax examples and properties") {
    // uniform row -> each 0.25
    Tensor u = Tensor::filled({4}, 1.7f);
    Tensor su = softmax(u, 0);
    for (int i = 0; i < 4; ++i) CHECK(su.at(i) == doctest::Approx(0.25).epsilon(1e-6));

    // {0, ln 3} -> {0.25, 0.75}
    Tensor x = Tensor::from_data({2}, {0.f, std::log(3.f)});
    Tensor sx = softmax(x, 0);
    CHECK(sx.at(0) == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(sx.at(1) == doctest::Approx(0.75).epsilon(1e-6));

    // shift invariance within 1e-6, row sums == 1 +- 1e-6
    Rng rng(5);
    for (int it = 0; it < 20; ++it) {
        const int64_t rows = 1 + int64_t(rng.below(4)), n = 2 + int64_t(rng.below(6));
        Tensor64 a = oracle::random_tensor64({rows, n}, rng, -3.0, 3.0);
        Tensor64 shifted = a.clone();
        for (int64_t i = 0; i < shifted.numel(); ++i) shifted.at(i) += 100.0;
        Tensor64 sa = softmax(a, 1), sb = softmax(shifted, 1);
        for (int64_t i = 0; i < sa.numel(); ++i) CHECK(std::abs(sa.at(i) - sb.at(i)) < 1e-6);
        for (int64_t r = 0; r < rows; ++r) {
            double sum = 0;
            for (int64_t j = 0; j < n; ++j) {
                sum += sa.at(r * n + j);
                CHECK(sa.at(r * n + j) > 0.0);
                CHECK(sa.at(r * n + j) < 1.0);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
    // in 32-bit, inputs on a grid that +100 keeps exact shift bitwise-identically
    Rng rng32(6);
    Tensor g = Tensor::zeros({3, 5});
    for (int64_t i = 0; i < g.numel(); ++i) g.at(i) = float(rng32.range(-3072, 3072)) / 1024.f;
    Tensor gs = g.clone();
    for (int64_t i = 0; i < gs.numel(); ++i) gs.at(i) += 100.f;
    Tensor s0 = softmax(g, 1), s1 = softmax(gs, 1);
    for (int64_t i = 0; i < s0.numel(); ++i) CHECK(s0.at(i) == s1.at(i));
}

TEST_CASE("softmax matches the naive oracle on random instances") {
    Rng rng(17);
    for (int it = 0; it < 100; ++it) {
        const int64_t rows = 1 + int64_t(rng.below(5)), n = 1 + int64_t(rng.below(8));
        Tensor64 a = oracle::random_tensor64({rows, n}, rng, -4.0, 4.0);
        Tensor64 s = softmax(a, 1);
        const auto ref = oracle::softmax_lastaxis_naive(
            std::vector<double>(a.data(), a.data() + a.numel()), rows, n);
        for (int64_t i = 0; i < s.numel(); ++i) CHECK(std::abs(s.at(i) - ref[size_t(i)]) < 1e-6);
    }
}

TEST_CASE("softmax over a middle axis") {
    Rng rng(23);
    Tensor64 a = oracle::random_tensor64({2, 3, 4}, rng);
    Tensor64 s = softmax(a, 1);
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t j = 0; j < 4; ++j) {
            double sum = 0;
            for (int64_t m = 0; m < 3; ++m) sum += s.at((n * 3 + m) * 4 + j);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
}

TEST_CASE("split then concat is the identity, axis-parameterized") {
    Rng rng(29);
    for (int axis = 0; axis < 3; ++axis) {
        for (int it = 0; it < 10; ++it) {
            Shape shape{2 + int64_t(rng.below(3)), 2 * (1 + int64_t(rng.below(3))), 3};
            Tensor x = oracle::random_tensor32(shape, rng);
            const int64_t extent = shape[size_t(axis)];
            // random partition of the axis
            std::vector<int64_t> sizes;
            int64_t left = extent;
            while (left > 0) {
                const int64_t z = 1 + int64_t(rng.below(uint64_t(left)));
                sizes.push_back(z);
                left -= z;
            }
            auto parts = split(x, axis, sizes);
            Tensor back = concat(parts, axis);
            REQUIRE(back.shape() == x.shape());
            for (int64_t i = 0; i < x.numel(); ++i) CHECK(back.at(i) == x.at(i));
        }
    }
    // concat∘split inverse on matching parts
    Rng rng2(31);
    Tensor a = oracle::random_tensor32({2, 3, 4}, rng2);
    Tensor b = oracle::random_tensor32({2, 2, 4}, rng2);
    auto parts = split(concat<float>({a, b}, 1), 1, {3, 2});
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(parts[0].at(i) == a.at(i));
    for (int64_t i = 0; i < b.numel(); ++i) CHECK(parts[1].at(i) == b.at(i));
    CHECK_THROWS_AS(concat<float>({a, Tensor::zeros({2, 2, 5})}, 1), ShapeError);
    CHECK_THROWS_AS(split(a, 3, {2}), ShapeError);
}

TEST_CASE("backward: linear and quadratic cases") {
    // root = sum(x) -> grad all ones
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor x = Tensor::from_data({4}, {1, 2, 3, 4});
        x.set_requires_grad();
        Tensor s = sum_all(x);
        tape.backward(s);
        for (int i = 0; i < 4; ++i) CHECK(x.grad()[i] == 1.f);
    }
    // root = sum(x .* x) -> grad 2x
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor x = Tensor::from_data({4}, {1, 2, 3, 4});
        x.set_requires_grad();
        Tensor s = sum_all(mul(x, x));
        tape.backward(s);
        for (int i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(2.f * float(i + 1)));
    }
    // non-scalar root rejected
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor x = Tensor::from_data({2}, {1, 2});
        x.set_requires_grad();
        Tensor y = mul(x, x);
        CHECK_THROWS_AS(tape.backward(y), ShapeError);
    }
    // unreached parameters keep zero grad; tape is consumed
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor x = Tensor::from_data({2}, {1, 2});
        Tensor unused = Tensor::from_data({2}, {5, 6});
        x.set_requires_grad();
        unused.set_requires_grad();
        Tensor s = sum_all(x);
        tape.backward(s);
        CHECK(unused.grad()[0] == 0.f);
        CHECK(unused.grad()[1] == 0.f);
        CHECK(tape.size() == 0);
    }
}

TEST_CASE("gradient checks for elementwise ops, matmul, softmax") {
    Rng rng(41);
    auto run = [&](const char* name, auto&& builder) {
        Tensor64 p = oracle::random_tensor64({3, 4}, rng, 0.2, 1.5);
        p.set_requires_grad();
        auto fwd = [&] { return builder(p); };
        auto res = oracle::check_gradients({{name, &p}}, fwd, rng, 24);
        INFO(name, ": ", res.worst);
        CHECK(res.max_rel < 1e-4);
    };
    run("relu_path", [](Tensor64& p) { return sum_all(mul(relu(p), p)); });
    run("sigmoid", [](Tensor64& p) { return sum_all(mul(sigmoid(p), p)); });
    run("softplus", [](Tensor64& p) { return sum_all(mul(softplus(p), p)); });
    run("softmax", [](Tensor64& p) { return sum_all(mul(softmax(p, 1), p)); });
    run("scale_const", [](Tensor64& p) { return scale_const(sum_all(mul(p, p)), 0.7); });

    {
        Tensor64 p3 = oracle::random_tensor64({2, 3, 4}, rng);
        p3.set_requires_grad();
        auto fwdt = [&] {
            Tensor64 t = transpose_12(p3);
            return sum_all(mul(t, t));
        };
        auto rt = oracle::check_gradients({{"transpose", &p3}}, fwdt, rng, 16);
        CHECK(rt.max_rel < 1e-4);
    }

    // matmul with bias, all three operands
    Tensor64 a = oracle::random_tensor64({2, 3, 4}, rng);
    Tensor64 b = oracle::random_tensor64({4, 5}, rng);
    Tensor64 bias = oracle::random_tensor64({5}, rng);
    a.set_requires_grad();
    b.set_requires_grad();
    bias.set_requires_grad();
    auto fwd = [&] {
        Tensor64 c = matmul(a, b, &bias);
        return sum_all(mul(c, c));
    };
    auto res = oracle::check_gradients({{"a", &a}, {"b", &b}, {"bias", &bias}}, fwd, rng, 20);
    INFO(res.worst);
    CHECK(res.max_rel < 1e-4);

    // scale by a learnable scalar
    Tensor64 w = Tensor64::from_data({1}, {0.8});
    Tensor64 x = oracle::random_tensor64({6}, rng);
    w.set_requires_grad();
    x.set_requires_grad();
    auto fwd2 = [&] {
        Tensor64 y = scale(x, w);
        return sum_all(mul(y, y));
    };
    auto res2 = oracle::check_gradients({{"w", &w}, {"x", &x}}, fwd2, rng, 10);
    CHECK(res2.max_rel < 1e-4);

    // concat/split/gather_channels/pad participate in gradients
    Tensor64 q = oracle::random_tensor64({1, 2, 2, 2, 2}, rng);
    q.set_requires_grad();
    auto fwd3 = [&] {
        auto parts = split_even(q, 1, 2);
        Tensor64 cat = concat<double>({parts[1], parts[0]}, 1);
        Tensor64 g = gather_channels(cat, {1, 0});
        Tensor64 padded = pad_spatial_right(g, 1, 0, 1);
        return sum_all(mul(padded, padded));
    };
    auto res3 = oracle::check_gradients({{"q", &q}}, fwd3, rng, 16);
    CHECK(res3.max_rel < 1e-4);
}

TEST_CASE("fixed seed evaluation is bitwise deterministic") {
    auto run_once = [] {
        Rng rng(1234);
        Tensor x = oracle::random_tensor32({2, 3, 4}, rng);
        Tensor w = oracle::random_tensor32({4, 4}, rng);
        Tensor y = matmul(softmax(x, 2), w);
        return std::vector<float>(y.data(), y.data() + y.numel());
    };
    const auto a = run_once();
    const auto b = run_once();
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}
