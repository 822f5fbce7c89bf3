#include <doctest.h>

#include "hwau/conv.hpp"
#include "hwau/norm.hpp"
#include "hwau/resize.hpp"
#include "oracles.hpp"

using namespace hwau;

TEST_CASE("conv3d trivial examples") {
    // 1x1x1 identity kernel, depthwise, stride 1 -> output equals input
    Rng rng(3);
    Tensor x = oracle::random_tensor32({1, 3, 2, 3, 4}, rng);
    Tensor w = Tensor::filled({3, 1, 1, 1, 1}, 1.f);
    Tensor y = conv3d(x, w, nullptr, ConvSpec::pointwise(3));
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));

    // all-ones 2x2x2 kernel, stride 2, input all 1, C=1 -> every output voxel 8
    Tensor ones = Tensor::filled({1, 1, 4, 4, 4}, 1.f);
    Tensor k2 = Tensor::filled({1, 1, 2, 2, 2}, 1.f);
    Tensor y2 = conv3d(ones, k2, nullptr, ConvSpec::cubic(2, 2, 0, 1));
    CHECK(y2.shape() == Shape{1, 1, 2, 2, 2});
    for (int64_t i = 0; i < y2.numel(); ++i) CHECK(y2.at(i) == 8.f);
}

TEST_CASE("conv3d errors name the offending axis") {
    Tensor x = Tensor::zeros({1, 2, 4, 4, 4});
    Tensor w = Tensor::zeros({2, 2, 3, 3, 3});
    CHECK_THROWS_WITH_AS(conv3d(x, w, nullptr, ConvSpec{{3, 3, 3}, {1, 1, 1}, {0, 0, 0}, 2}),
                         doctest::Contains("groups"), ShapeError);
    // zero output extent along D
    Tensor small = Tensor::zeros({1, 1, 2, 8, 8});
    Tensor k = Tensor::zeros({1, 1, 4, 1, 1});
    CHECK_THROWS_WITH_AS(conv3d(small, k, nullptr, ConvSpec{{4, 1, 1}, {1, 1, 1}, {0, 0, 0}, 1}),
                         doctest::Contains("axis D"), ShapeError);
    // kernel/spec mismatch
    CHECK_THROWS_AS(conv3d(small, k, nullptr, ConvSpec::cubic(3, 1, 1)), ShapeError);
}

TEST_CASE("conv3d random 4x4x4 input k=3 pad 1 matches the loop oracle") {
    Rng rng(7);
    Tensor64 x = oracle::random_tensor64({1, 1, 4, 4, 4}, rng);
    Tensor64 w = oracle::random_tensor64({1, 1, 3, 3, 3}, rng);
    Tensor64 y = conv3d(x, w, nullptr, ConvSpec::same(3));
    const auto ref = oracle::conv3d_naive(std::vector<double>(x.data(), x.data() + x.numel()), 1, 1, 4, 4,
                                          4, std::vector<double>(w.data(), w.data() + w.numel()), nullptr,
                                          1, 3, 3, 3, 1, 1, 1, 1, 1, 1, 1);
    REQUIRE(y.numel() == int64_t(ref.size()));
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y.at(i) - ref[size_t(i)]) < 1e-6);
}

TEST_CASE("conv3d property: 100 random shape/stride/group instances match the oracle") {
    Rng rng(101);
    for (int it = 0; it < 100; ++it) {
        const int64_t N = 1 + int64_t(rng.below(2));
        const int64_t groups = 1 + int64_t(rng.below(2));
        const int64_t cpg_in = 1 + int64_t(rng.below(2));
        const int64_t cpg_out = 1 + int64_t(rng.below(2));
        const int64_t Cin = groups * cpg_in, Cout = groups * cpg_out;
        const int64_t D = 1 + int64_t(rng.below(5)), H = 1 + int64_t(rng.below(5)),
                      W = 1 + int64_t(rng.below(5));
        const int64_t kd = 1 + int64_t(rng.below(std::min<uint64_t>(3, uint64_t(D))));
        const int64_t kh = 1 + int64_t(rng.below(std::min<uint64_t>(3, uint64_t(H))));
        const int64_t kw = 1 + int64_t(rng.below(std::min<uint64_t>(3, uint64_t(W))));
        const int64_t sd = 1 + int64_t(rng.below(2)), sh = 1 + int64_t(rng.below(2)),
                      sw = 1 + int64_t(rng.below(2));
        const int64_t pd = int64_t(rng.below(2)), ph = int64_t(rng.below(2)), pw = int64_t(rng.below(2));
        const ConvSpec spec{{kd, kh, kw}, {sd, sh, sw}, {pd, ph, pw}, groups};
        if (spec.out_extent(0, D) < 1 || spec.out_extent(1, H) < 1 || spec.out_extent(2, W) < 1) continue;

        Tensor64 x = oracle::random_tensor64({N, Cin, D, H, W}, rng);
        Tensor64 w = oracle::random_tensor64({Cout, cpg_in, kd, kh, kw}, rng);
        Tensor64 b = oracle::random_tensor64({Cout}, rng);
        Tensor64 y = conv3d(x, w, &b, spec);
        const std::vector<double> bias(b.data(), b.data() + b.numel());
        const auto ref = oracle::conv3d_naive(std::vector<double>(x.data(), x.data() + x.numel()), N, Cin,
                                              D, H, W, std::vector<double>(w.data(), w.data() + w.numel()),
                                              &bias, Cout, kd, kh, kw, sd, sh, sw, pd, ph, pw, groups);
        REQUIRE(y.numel() == int64_t(ref.size()));
        for (int64_t i = 0; i < y.numel(); ++i) REQUIRE(std::abs(y.at(i) - ref[size_t(i)]) < 1e-6);
    }
}

TEST_CASE("conv3d gradients match central differences") {
    Rng rng(11);
    Tensor64 x = oracle::random_tensor64({1, 2, 4, 4, 4}, rng);
    Tensor64 w = oracle::random_tensor64({3, 2, 3, 3, 3}, rng, -0.5, 0.5);
    Tensor64 b = oracle::random_tensor64({3}, rng);
    x.set_requires_grad();
    w.set_requires_grad();
    b.set_requires_grad();
    auto fwd = [&] {
        Tensor64 y = conv3d(x, w, &b, ConvSpec::cubic(3, 2, 1));
        return sum_all(mul(y, y));
    };
    auto res = oracle::check_gradients({{"x", &x}, {"w", &w}, {"b", &b}}, fwd, rng, 20);
    INFO(res.worst);
    CHECK(res.max_rel < 1e-4);

    // depthwise
    Tensor64 xd = oracle::random_tensor64({1, 3, 3, 3, 3}, rng);
    Tensor64 wd = oracle::random_tensor64({3, 1, 3, 3, 3}, rng, -0.5, 0.5);
    xd.set_requires_grad();
    wd.set_requires_grad();
    auto fwd2 = [&] {
        Tensor64 y = conv3d(xd, wd, nullptr, ConvSpec::same(3, 3));
        return sum_all(mul(y, y));
    };
    auto res2 = oracle::check_gradients({{"xd", &xd}, {"wd", &wd}}, fwd2, rng, 20);
    INFO(res2.worst);
    CHECK(res2.max_rel < 1e-4);
}

TEST_CASE("transposed_conv3d examples, oracle and gradient") {
    // k=r=2 all-ones weight on a single voxel -> 2x2x2 block of that value
    Tensor x = Tensor::from_data({1, 1, 1, 1, 1}, {3.5f});
    Tensor w = Tensor::filled({1, 1, 2, 2, 2}, 1.f);
    Tensor y = transposed_conv3d(x, w, nullptr, ConvSpec::cubic(2, 2, 0));
    CHECK(y.shape() == Shape{1, 1, 2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) CHECK(y.at(i) == 3.5f);

    // stride must equal kernel
    CHECK_THROWS_AS(transposed_conv3d(x, w, nullptr, ConvSpec{{2, 2, 2}, {1, 1, 1}, {0, 0, 0}, 1}),
                    ShapeError);

    // shape round-trip: transposed_conv3d then conv3d with matched specs
    Rng rng(13);
    Tensor xr = oracle::random_tensor32({1, 2, 3, 4, 5}, rng);
    Tensor wu = oracle::random_tensor32({2, 2, 2, 2, 2}, rng);
    Tensor up = transposed_conv3d(xr, wu, nullptr, ConvSpec::cubic(2, 2, 0));
    CHECK(up.shape() == Shape{1, 2, 6, 8, 10});
    Tensor wdn = oracle::random_tensor32({2, 2, 2, 2, 2}, rng);
    Tensor down = conv3d(up, wdn, nullptr, ConvSpec::cubic(2, 2, 0));
    CHECK(down.shape() == xr.shape());

    // oracle agreement over random instances (groups included)
    Rng rng2(17);
    for (int it = 0; it < 100; ++it) {
        const int64_t N = 1 + int64_t(rng2.below(2)), groups = 1 + int64_t(rng2.below(2));
        const int64_t cpg_in = 1 + int64_t(rng2.below(2)), cpg_out = 1 + int64_t(rng2.below(2));
        const int64_t Cin = groups * cpg_in;
        const int64_t D = 1 + int64_t(rng2.below(3)), H = 1 + int64_t(rng2.below(3)),
                      W = 1 + int64_t(rng2.below(3));
        const int64_t k = 1 + int64_t(rng2.below(3));
        Tensor64 xo = oracle::random_tensor64({N, Cin, D, H, W}, rng2);
        Tensor64 wo = oracle::random_tensor64({Cin, cpg_out, k, k, k}, rng2);
        Tensor64 yo = transposed_conv3d(xo, wo, nullptr, ConvSpec::cubic(k, k, 0, groups));
        const auto ref = oracle::tconv3d_naive(std::vector<double>(xo.data(), xo.data() + xo.numel()), N,
                                               Cin, D, H, W,
                                               std::vector<double>(wo.data(), wo.data() + wo.numel()),
                                               nullptr, cpg_out, k, groups);
        REQUIRE(yo.numel() == int64_t(ref.size()));
        for (int64_t i = 0; i < yo.numel(); ++i) REQUIRE(std::abs(yo.at(i) - ref[size_t(i)]) < 1e-6);
    }

    // gradient of sum(output) wrt x matches finite differences
    Tensor64 xg = oracle::random_tensor64({1, 2, 2, 2, 2}, rng2);
    Tensor64 wg = oracle::random_tensor64({2, 3, 2, 2, 2}, rng2);
    xg.set_requires_grad();
    wg.set_requires_grad();
    auto fwd = [&] { return sum_all(transposed_conv3d(xg, wg, nullptr, ConvSpec::cubic(2, 2, 0))); };
    auto res = oracle::check_gradients({{"x", &xg}, {"w", &wg}}, fwd, rng2, 16);
    INFO(res.worst);
    CHECK(res.max_rel < 1e-4);
}

TEST_CASE("instance_norm3d examples and gradient") {
    // constant channel -> zeros before affine (variance floored by eps)
    Tensor x = Tensor::filled({1, 2, 2, 2, 2}, 4.2f);
    Tensor g1 = Tensor::filled({2}, 1.f), b0 = Tensor::zeros({2});
    Tensor y = instance_norm3d(x, kInstanceNormEps, g1, b0);
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == 0.f);

    // data {1,3} per channel -> {-1,+1} up to eps correction
    Tensor x2 = Tensor::zeros({1, 1, 1, 1, 2});
    x2.at(0) = 1.f;
    x2.at(1) = 3.f;
    Tensor g = Tensor::filled({1}, 1.f), b = Tensor::zeros({1});
    Tensor y2 = instance_norm3d(x2, 1e-5f, g, b);
    CHECK(y2.at(0) == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-6));
    CHECK(y2.at(1) == doctest::Approx(+1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-6));

    // affine law: gain=2 bias=5 -> 2*normalized + 5
    Tensor g2 = Tensor::filled({1}, 2.f), b5 = Tensor::filled({1}, 5.f);
    Tensor y3 = instance_norm3d(x2, 1e-5f, g2, b5);
    CHECK(y3.at(0) == doctest::Approx(2.0 * double(y2.at(0)) + 5.0).epsilon(1e-6));
    CHECK(y3.at(1) == doctest::Approx(2.0 * double(y2.at(1)) + 5.0).epsilon(1e-6));

    // fewer than 2 voxels per channel -> error
    CHECK_THROWS_AS(instance_norm3d(Tensor::zeros({1, 1, 1, 1, 1}), 1e-5f, g, b), ShapeError);

    // per-(n,c) mean ~0 and var ~1 before affine, via the oracle
    Rng rng(19);
    for (int it = 0; it < 100; ++it) {
        const int64_t N = 1 + int64_t(rng.below(2)), C = 1 + int64_t(rng.below(3));
        const int64_t D = 1 + int64_t(rng.below(3)), H = 1 + int64_t(rng.below(3)),
                      W = 2 + int64_t(rng.below(3));
        Tensor64 xr = oracle::random_tensor64({N, C, D, H, W}, rng);
        Tensor64 gr = oracle::random_tensor64({C}, rng, 0.5, 2.0);
        Tensor64 br = oracle::random_tensor64({C}, rng);
        Tensor64 yr = instance_norm3d(xr, 1e-5, gr, br);
        const auto ref = oracle::instance_norm_naive(
            std::vector<double>(xr.data(), xr.data() + xr.numel()), N, C, D * H * W, 1e-5,
            std::vector<double>(gr.data(), gr.data() + gr.numel()),
            std::vector<double>(br.data(), br.data() + br.numel()));
        for (int64_t i = 0; i < yr.numel(); ++i) REQUIRE(std::abs(yr.at(i) - ref[size_t(i)]) < 1e-6);

        // normalized output statistics per (n,c), undoing the affine map
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const int64_t M = D * H * W;
            double mean = 0;
            for (int64_t i = 0; i < M; ++i)
                mean += (yr.at(nc * M + i) - br.at(nc % C)) / gr.at(nc % C);
            mean /= double(M);
            CHECK(std::abs(mean) < 1e-5);
        }
    }

    // gradient check
    Tensor64 xg = oracle::random_tensor64({2, 2, 2, 2, 3}, rng);
    Tensor64 gg = oracle::random_tensor64({2}, rng, 0.5, 1.5);
    Tensor64 bg = oracle::random_tensor64({2}, rng);
    xg.set_requires_grad();
    gg.set_requires_grad();
    bg.set_requires_grad();
    auto fwd = [&] {
        Tensor64 yn = instance_norm3d(xg, 1e-5, gg, bg);
        return sum_all(mul(yn, yn));
    };
    auto res = oracle::check_gradients({{"x", &xg}, {"gain", &gg}, {"bias", &bg}}, fwd, rng, 20);
    INFO(res.worst);
    CHECK(res.max_rel < 1e-4);
}

TEST_CASE("trilinear_resize examples and gradient") {
    // identity: bitwise-equal input
    Rng rng(23);
    Tensor x = oracle::random_tensor32({1, 2, 3, 4, 5}, rng);
    Tensor y = trilinear_resize(x, 3, 4, 5);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));

    // constant volume -> constant output at any target shape
    Tensor c = Tensor::filled({1, 1, 2, 3, 4}, 0.75f);
    Tensor yc = trilinear_resize(c, 5, 2, 7);
    for (int64_t i = 0; i < yc.numel(); ++i) CHECK(yc.at(i) == doctest::Approx(0.75).epsilon(1e-6));

    // 1D line {0,1} -> 4 samples {0.125, 0.375, 0.625, 0.875}
    Tensor line = Tensor::from_data({1, 1, 1, 1, 2}, {0.f, 1.f});
    Tensor yl = trilinear_resize(line, 1, 1, 4);
    CHECK(yl.at(0) == doctest::Approx(0.125).epsilon(1e-6));
    CHECK(yl.at(1) == doctest::Approx(0.375).epsilon(1e-6));
    CHECK(yl.at(2) == doctest::Approx(0.625).epsilon(1e-6));
    CHECK(yl.at(3) == doctest::Approx(0.875).epsilon(1e-6));

    CHECK_THROWS_AS(trilinear_resize(line, 0, 1, 4), ShapeError);

    // gradient, both up and down
    Tensor64 xg = oracle::random_tensor64({1, 2, 3, 3, 3}, rng);
    xg.set_requires_grad();
    auto fwd = [&] {
        Tensor64 up = trilinear_resize(xg, 5, 4, 6);
        Tensor64 dn = trilinear_resize(up, 2, 2, 2);
        return sum_all(mul(dn, dn));
    };
    auto res = oracle::check_gradients({{"x", &xg}}, fwd, rng, 20);
    INFO(res.worst);
    CHECK(res.max_rel < 1e-4);
}

TEST_CASE("avg_pool3d_2x averages valid windows and has exact gradient") {
    Tensor x = Tensor::from_data({1, 1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = avg_pool3d_2x(x);
    CHECK(y.shape() == Shape{1, 1, 1, 1, 2});
    CHECK(y.at(0) == doctest::Approx((1 + 2 + 4 + 5) / 4.0));
    CHECK(y.at(1) == doctest::Approx((3 + 6) / 2.0));  // partial window

    Rng rng(29);
    Tensor64 xg = oracle::random_tensor64({1, 2, 3, 4, 5}, rng);
    xg.set_requires_grad();
    auto fwd = [&] {
        Tensor64 p = avg_pool3d_2x(xg);
        return sum_all(mul(p, p));
    };
    auto res = oracle::check_gradients({{"x", &xg}}, fwd, rng, 20);
    CHECK(res.max_rel < 1e-4);
}
