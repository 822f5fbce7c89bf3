#include <doctest.h>

#include <algorithm>

#include "hwau/ssm.hpp"
#include "oracles.hpp"

using namespace hwau;

TEST_CASE("orientation index maps are the documented bijections") {
    // InterSlice on a 2x2x2 volume labeled 0..7 raster -> {0,4,1,5,2,6,3,7}
    const auto m = orientation_index_map(Orientation::InterSlice, 2, 2, 2);
    const std::vector<int64_t> expect{0, 4, 1, 5, 2, 6, 3, 7};
    CHECK(m == expect);

    // Reverse of Forward: element t maps to L-1-t
    const auto f = orientation_index_map(Orientation::Forward, 3, 4, 5);
    const auto r = orientation_index_map(Orientation::Reverse, 3, 4, 5);
    for (size_t t = 0; t < f.size(); ++t) CHECK(r[t] == int64_t(f.size()) - 1 - f[t]);

    // each orientation is a permutation: sorting yields 0..L-1
    for (Orientation o : {Orientation::Forward, Orientation::Reverse, Orientation::InterSlice}) {
        auto map = orientation_index_map(o, 3, 4, 5);
        std::sort(map.begin(), map.end());
        for (int64_t t = 0; t < int64_t(map.size()); ++t) CHECK(map[size_t(t)] == t);
    }
}

TEST_CASE("flatten/unflatten round-trips bitwise for all orientations") {
    Rng rng(31);
    Tensor x = oracle::random_tensor32({2, 3, 3, 4, 5}, rng);
    for (Orientation o : {Orientation::Forward, Orientation::Reverse, Orientation::InterSlice}) {
        Tensor seq = flatten_seq(x, o);
        CHECK(seq.shape() == Shape{2, 60, 3});
        Tensor back = unflatten_seq(seq, o, 3, 4, 5);
        REQUIRE(back.shape() == x.shape());
        for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(back.at(i) == x.at(i));
    }
}

TEST_CASE("selective_scan_core: null case and single-step closed form") {
    const int64_t N = 1, L = 1, C = 2, K = 3;
    Rng rng(37);
    Tensor64 a = Tensor64::zeros({C, K});
    for (int64_t i = 0; i < a.numel(); ++i) a.at(i) = -(1.0 + double(i % K));

    // all-zero input with zero projections -> all-zero output
    {
        Tensor64 u = Tensor64::zeros({1, 4, C});
        Tensor64 dt = Tensor64::filled({1, 4, C}, 0.5);
        Tensor64 bt = Tensor64::zeros({1, 4, K});
        Tensor64 ct = Tensor64::zeros({1, 4, K});
        Tensor64 dg = Tensor64::filled({C}, 1.0);
        Tensor64 y = selective_scan_core(u, dt, bt, ct, a, dg);
        for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == 0.0);
    }

    // L=1: y_1 = <C_1, dt_1*B_1*x_1> + Dg*x_1 exactly
    {
        Tensor64 u = oracle::random_tensor64({N, L, C}, rng);
        Tensor64 dt = oracle::random_tensor64({N, L, C}, rng, 0.1, 1.0);
        Tensor64 bt = oracle::random_tensor64({N, L, K}, rng);
        Tensor64 ct = oracle::random_tensor64({N, L, K}, rng);
        Tensor64 dg = oracle::random_tensor64({C}, rng);
        Tensor64 y = selective_scan_core(u, dt, bt, ct, a, dg);
        for (int64_t c = 0; c < C; ++c) {
            double expect = dg.at(c) * u.at(c);
            for (int64_t j = 0; j < K; ++j)
                expect += ct.at(j) * (dt.at(c) * bt.at(j) * u.at(c));
            CHECK(y.at(c) == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    // non-negative A entry -> configuration error
    {
        Tensor64 bad = a.clone();
        bad.at(1) = 0.0;
        Tensor64 u = Tensor64::zeros({1, 2, C});
        Tensor64 dt = Tensor64::filled({1, 2, C}, 0.5);
        Tensor64 bt = Tensor64::zeros({1, 2, K});
        Tensor64 ct = Tensor64::zeros({1, 2, K});
        Tensor64 dg = Tensor64::filled({C}, 1.0);
        CHECK_THROWS_AS(selective_scan_core(u, dt, bt, ct, bad, dg), ConfigError);
    }
}

TEST_CASE("selective scan matches the step-by-step recurrence oracle") {
    Rng rng(41);
    for (int it = 0; it < 100; ++it) {
        const int64_t N = 1 + int64_t(rng.below(2));
        const int64_t L = 1 + int64_t(rng.below(it < 50 ? 64 : 256));
        const int64_t C = 1 + int64_t(rng.below(8));
        const int64_t K = 1 + int64_t(rng.below(8));
        Tensor64 u = oracle::random_tensor64({N, L, C}, rng);
        Tensor64 dt = oracle::random_tensor64({N, L, C}, rng, 0.05, 1.5);
        Tensor64 bt = oracle::random_tensor64({N, L, K}, rng);
        Tensor64 ct = oracle::random_tensor64({N, L, K}, rng);
        Tensor64 dg = oracle::random_tensor64({C}, rng);
        Tensor64 a = Tensor64::zeros({C, K});
        for (int64_t i = 0; i < a.numel(); ++i) a.at(i) = rng.uniform(-3.0, -0.05);

        Tensor64 y = selective_scan_core(u, dt, bt, ct, a, dg);
        const auto ref = oracle::selective_scan_naive(
            std::vector<double>(u.data(), u.data() + u.numel()),
            std::vector<double>(dt.data(), dt.data() + dt.numel()),
            std::vector<double>(bt.data(), bt.data() + bt.numel()),
            std::vector<double>(ct.data(), ct.data() + ct.numel()),
            std::vector<double>(a.data(), a.data() + a.numel()),
            std::vector<double>(dg.data(), dg.data() + dg.numel()), N, L, C, K);
        for (int64_t i = 0; i < y.numel(); ++i) REQUIRE(std::abs(y.at(i) - ref[size_t(i)]) < 1e-6);

        // blocked variant agrees with the reference path
        Tensor64 yb = selective_scan_core_blocked(u, dt, bt, ct, a, dg, 3);
        for (int64_t i = 0; i < y.numel(); ++i) REQUIRE(std::abs(y.at(i) - yb.at(i)) < 1e-6);
    }
}

TEST_CASE("bounded state: ||h|| stays under the closed-form constant on L=4096") {
    Rng rng(43);
    const int64_t N = 1, L = 4096, C = 4, K = 4;
    SsmParamsT<double> p = SsmParamsT<double>::init(C, K, rng);
    Tensor64 seq = oracle::random_tensor64({N, L, C}, rng, -1.0, 1.0);  // ||x||_inf <= 1

    // recompute the projections the same way selective_scan does
    Tensor64 z = matmul(seq, p.w_dt, &p.b_dt);
    Tensor64 dt = softplus(z);
    Tensor64 bt = matmul(seq, p.w_b);
    Tensor64 ct = matmul(seq, p.w_c);
    std::vector<double> states;
    Tensor64 y = selective_scan_core(seq, dt, bt, ct, p.a, p.skip_gain, &states);

    double dt_max = 0, dt_min = 1e300, b_max = 0, a_max_neg = p.a.at(0);
    for (int64_t i = 0; i < dt.numel(); ++i) {
        dt_max = std::max(dt_max, dt.at(i));
        dt_min = std::min(dt_min, dt.at(i));
    }
    for (int64_t i = 0; i < bt.numel(); ++i) b_max = std::max(b_max, std::abs(bt.at(i)));
    for (int64_t i = 0; i < p.a.numel(); ++i) a_max_neg = std::max(a_max_neg, p.a.at(i));  // closest to 0
    CHECK(a_max_neg < 0.0);
    CHECK(dt_min > 0.0);  // softplus guarantee
    // |h_t| <= dt_max*B_max*|x|_max / (1 - exp(a_max*dt_min))
    const double decay = std::exp(a_max_neg * dt_min);
    REQUIRE(decay < 1.0);
    const double bound = dt_max * b_max * 1.0 / (1.0 - decay) + 1e-9;
    for (double h : states) REQUIRE(std::abs(h) <= bound);
}

TEST_CASE("ma: shape preservation, reverse index identity, gradient") {
    Rng rng(47);
    const int64_t C = 3;
    SsmParamsT<double> p = SsmParamsT<double>::init(C, 4, rng);
    Tensor64 x = oracle::random_tensor64({1, C, 2, 2, 2}, rng);

    Tensor64 y = ma(x, Orientation::Forward, p);
    CHECK(y.shape() == x.shape());

    // ma over the reversed orientation == reverse-order scan of the forward
    // sequence when parameters are shared: check as an index-map identity
    {
        Tensor64 seq_f = flatten_seq(x, Orientation::Forward);
        Tensor64 seq_r = flatten_seq(x, Orientation::Reverse);
        const int64_t L = seq_f.dim(1);
        for (int64_t t = 0; t < L; ++t)
            for (int64_t c = 0; c < C; ++c)
                CHECK(seq_r.at(t * C + c) == seq_f.at((L - 1 - t) * C + c));
        // scanning the reversed sequence then un-reversing equals ma(Reverse)
        Tensor64 y_r = ma(x, Orientation::Reverse, p);
        Tensor64 scan_r = selective_scan(seq_r, p);
        Tensor64 manual = unflatten_seq(scan_r, Orientation::Reverse, 2, 2, 2);
        for (int64_t i = 0; i < manual.numel(); ++i)
            CHECK(manual.at(i) == doctest::Approx(y_r.at(i)).epsilon(1e-12));
    }

    // gradient through ma on a 2x2x2 volume
    std::vector<std::pair<std::string, Tensor64*>> params;
    p.visit("ssm", [&](const std::string& name, Tensor64& t) {
        t.set_requires_grad();
        params.emplace_back(name, &t);
    });
    x.set_requires_grad();
    params.emplace_back("x", &x);
    auto fwd = [&] {
        Tensor64 out = ma(x, Orientation::InterSlice, p);
        return sum_all(mul(out, out));
    };
    auto res = oracle::check_gradients(params, fwd, rng, 6);
    INFO(res.worst);
    CHECK(res.max_rel < 1e-4);
}

TEST_CASE("selective_scan full pipeline gradient (projections + recurrence)") {
    Rng rng(53);
    const int64_t C = 2, K = 3, L = 5;
    SsmParamsT<double> p = SsmParamsT<double>::init(C, K, rng);
    Tensor64 seq = oracle::random_tensor64({1, L, C}, rng);
    std::vector<std::pair<std::string, Tensor64*>> params;
    p.visit("ssm", [&](const std::string& name, Tensor64& t) {
        t.set_requires_grad();
        params.emplace_back(name, &t);
    });
    seq.set_requires_grad();
    params.emplace_back("seq", &seq);
    auto fwd = [&] {
        Tensor64 y = selective_scan(seq, p);
        return sum_all(mul(y, y));
    };
    auto res = oracle::check_gradients(params, fwd, rng, 8);
    INFO(res.worst);
    CHECK(res.max_rel < 1e-4);
}
