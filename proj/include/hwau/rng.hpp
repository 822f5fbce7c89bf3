#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace hwau {

// Deterministic RNG. std::mt19937_64 output is pinned by the standard, but the
// std distributions are not, so we draw values ourselves to keep streams
// reproducible across standard libraries.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), unbiased via rejection.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    int64_t range(int64_t lo, int64_t hi_inclusive) {
        return lo + int64_t(below(uint64_t(hi_inclusive - lo + 1)));
    }

    bool coin(double p) { return uniform() < p; }

    // Box-Muller; uses both values.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <class It>
    void shuffle(It first, It last) {
        auto n = last - first;
        for (decltype(n) i = n - 1; i > 0; --i) {
            auto j = below(uint64_t(i + 1));
            std::swap(first[i], first[decltype(n)(j)]);
        }
    }

    std::vector<float> uniform_vec(size_t n, float lo, float hi) {
        std::vector<float> v(n);
        for (auto& x : v) x = float(uniform(double(lo), double(hi)));
        return v;
    }

  private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace hwau
