#pragma once

#include "hwau/ops.hpp"
#include "hwau/rng.hpp"

namespace hwau {

// Voxel visit orders for the three directional scans. Forward is raster
// order (d, then h, then w ascending), Reverse is its exact reversal, and
// InterSlice walks depth innermost (h, w, then d).
enum class Orientation { Forward, Reverse, InterSlice };

// Maps sequence position t to the flat spatial offset within one [D,H,W]
// volume. Each orientation is a bijection on 0..D*H*W-1.
inline std::vector<int64_t> orientation_index_map(Orientation o, int64_t D, int64_t H, int64_t W) {
    const int64_t L = D * H * W;
    auto map = std::vector<int64_t>(size_t(L));
    switch (o) {
        case Orientation::Forward:
            for (int64_t t = 0; t < L; ++t) map[size_t(t)] = t;
            break;
        case Orientation::Reverse:
            for (int64_t t = 0; t < L; ++t) map[size_t(t)] = L - 1 - t;
            break;
        case Orientation::InterSlice:
            for (int64_t t = 0; t < L; ++t) {
                const int64_t d = t % D;
                const int64_t rem = t / D;
                const int64_t w = rem % W;
                const int64_t h = rem / W;
                map[size_t(t)] = (d * H + h) * W + w;
            }
            break;
    }
    return map;
}

// [N,C,D,H,W] -> [N,L,C] sequence in the given visit order.
template <class S>
TensorT<S> flatten_seq(const TensorT<S>& x, Orientation o) {
    if (x.ndim() != 5) throw ShapeError("flatten_seq expects [N,C,D,H,W]");
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t L = D * H * W;
    auto map = std::make_shared<std::vector<int64_t>>(orientation_index_map(o, D, H, W));
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>({N, L, C}, "flatten_seq", rec);
    {
        const S* px = x.data();
        S* po = out.data();
        detail::parallel_for(N * L, [&](int64_t r) {
            const int64_t n = r / L, t = r % L;
            const int64_t voff = (*map)[size_t(t)];
            S* orow = po + (n * L + t) * C;
            for (int64_t c = 0; c < C; ++c) orow[c] = px[(n * C + c) * L + voff];
        });
    }
    if (rec) {
        auto st_x = x.storage();
        auto st_o = out.storage();
        TapeT<S>::current()->record([st_x, st_o, map, N, C, L] {
            if (st_o->grad.empty() || !st_x->requires_grad) return;
            st_x->ensure_grad();
            detail::parallel_for(N * L, [&](int64_t r) {
                const int64_t n = r / L, t = r % L;
                const int64_t voff = (*map)[size_t(t)];
                const S* g = st_o->grad.data() + (n * L + t) * C;
                for (int64_t c = 0; c < C; ++c) st_x->grad[size_t((n * C + c) * L + voff)] += g[c];
            });
        });
    }
    return out;
}

// [N,L,C] -> [N,C,D,H,W]; exact inverse of flatten_seq for the same order.
template <class S>
TensorT<S> unflatten_seq(const TensorT<S>& seq, Orientation o, int64_t D, int64_t H, int64_t W) {
    if (seq.ndim() != 3) throw ShapeError("unflatten_seq expects [N,L,C]");
    const int64_t N = seq.dim(0), L = seq.dim(1), C = seq.dim(2);
    if (L != D * H * W) throw ShapeError("unflatten_seq: L != D*H*W");
    auto map = std::make_shared<std::vector<int64_t>>(orientation_index_map(o, D, H, W));
    const bool rec = detail::taped<S>({&seq});
    TensorT<S> out = detail::make_output<S>({N, C, D, H, W}, "unflatten_seq", rec);
    {
        const S* ps = seq.data();
        S* po = out.data();
        detail::parallel_for(N * L, [&](int64_t r) {
            const int64_t n = r / L, t = r % L;
            const int64_t voff = (*map)[size_t(t)];
            const S* srow = ps + (n * L + t) * C;
            for (int64_t c = 0; c < C; ++c) po[(n * C + c) * L + voff] = srow[c];
        });
    }
    if (rec) {
        auto st_s = seq.storage();
        auto st_o = out.storage();
        TapeT<S>::current()->record([st_s, st_o, map, N, C, L] {
            if (st_o->grad.empty() || !st_s->requires_grad) return;
            st_s->ensure_grad();
            detail::parallel_for(N * L, [&](int64_t r) {
                const int64_t n = r / L, t = r % L;
                const int64_t voff = (*map)[size_t(t)];
                S* g = st_s->grad.data() + (n * L + t) * C;
                for (int64_t c = 0; c < C; ++c) g[c] += st_o->grad[size_t((n * C + c) * L + voff)];
            });
        });
    }
    return out;
}

// Diagonal selective state-space parameters for one scan direction.
// Per channel c with K states: transition diag A[c,:] (strictly negative),
// input-dependent step dt = softplus(x W_dt + b_dt), projections B_t = x W_b,
// C_t = x W_c shared across channels, and a per-channel skip gain.
template <class S>
struct SsmParamsT {
    int64_t state_size = 4;
    TensorT<S> a;          // [C,K], strictly negative
    TensorT<S> w_dt;       // [C,C]
    TensorT<S> b_dt;       // [C]
    TensorT<S> w_b;        // [C,K]
    TensorT<S> w_c;        // [C,K]
    TensorT<S> skip_gain;  // [C]

    static SsmParamsT init(int64_t channels, int64_t state_size, Rng& rng) {
        SsmParamsT p;
        p.state_size = state_size;
        p.a = TensorT<S>::zeros({channels, state_size});
        for (int64_t c = 0; c < channels; ++c)
            for (int64_t j = 0; j < state_size; ++j) p.a.at(c * state_size + j) = S(-(j + 1));
        const double r = 0.1 / std::sqrt(double(channels));
        auto small = [&](Shape sh) {
            TensorT<S> t = TensorT<S>::zeros(sh);
            for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = S(rng.uniform(-r, r));
            return t;
        };
        p.w_dt = small({channels, channels});
        p.b_dt = small({channels});
        p.w_b = small({channels, state_size});
        p.w_c = small({channels, state_size});
        p.skip_gain = TensorT<S>::filled({channels}, S(1));
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".a", a);
        f(prefix + ".w_dt", w_dt);
        f(prefix + ".b_dt", b_dt);
        f(prefix + ".w_b", w_b);
        f(prefix + ".w_c", w_c);
        f(prefix + ".skip_gain", skip_gain);
    }
};

// Core recurrence:
//   h_t = exp(dt_t * A) (.) h_{t-1} + dt_t * B_t * u_t,   h_0 = 0
//   y_t = <C_t, h_t> + Dg * u_t
// evaluated sequentially along L, independently per (batch, channel, state).
// If `states_out` is given it receives all h values, laid out [N][C][L][K].
template <class S>
TensorT<S> selective_scan_core(const TensorT<S>& u, const TensorT<S>& dt, const TensorT<S>& bt,
                               const TensorT<S>& ct, const TensorT<S>& a, const TensorT<S>& dg,
                               std::vector<S>* states_out = nullptr) {
    if (u.ndim() != 3) throw ShapeError("selective_scan_core: u must be [N,L,C]");
    const int64_t N = u.dim(0), L = u.dim(1), C = u.dim(2);
    detail::require_same_shape(u, dt, "selective_scan_core(dt)");
    if (a.ndim() != 2 || a.dim(0) != C) throw ShapeError("selective_scan_core: A must be [C,K]");
    const int64_t K = a.dim(1);
    if (bt.ndim() != 3 || bt.dim(0) != N || bt.dim(1) != L || bt.dim(2) != K)
        throw ShapeError("selective_scan_core: B_t must be [N,L,K]");
    if (ct.shape() != bt.shape()) throw ShapeError("selective_scan_core: C_t must be [N,L,K]");
    if (dg.numel() != C) throw ShapeError("selective_scan_core: skip gain must have C entries");
    if (K > 64) throw ConfigError("selective_scan_core: state size > 64 not supported");
    for (int64_t i = 0; i < a.numel(); ++i)
        if (!(a.at(i) < S(0)))
            throw ConfigError("selective_scan_core: A must be strictly negative, entry " + std::to_string(i) +
                              " is " + std::to_string(double(a.at(i))));

    const bool rec = detail::taped<S>({&u, &dt, &bt, &ct, &a, &dg});
    TensorT<S> out = detail::make_output<S>({N, L, C}, "selective_scan", rec);

    // h and the discretized transition are kept for the backward sweep.
    auto h_all = std::make_shared<std::vector<S>>(size_t(N * C * L * K));
    auto e_all = std::make_shared<std::vector<S>>(size_t(N * C * L * K));
    {
        const S* pu = u.data();
        const S* pdt = dt.data();
        const S* pb = bt.data();
        const S* pc = ct.data();
        const S* pa = a.data();
        const S* pdg = dg.data();
        S* po = out.data();
        detail::parallel_for(
            N * C,
            [&](int64_t r) {
                const int64_t n = r / C, c = r % C;
                S* h = h_all->data() + (n * C + c) * L * K;
                S* e = e_all->data() + (n * C + c) * L * K;
                const S* arow = pa + c * K;
                const S gain = pdg[c];
                S hprev[64];  // K is small by construction
                for (int64_t j = 0; j < K; ++j) hprev[j] = S(0);
                for (int64_t t = 0; t < L; ++t) {
                    const S uv = pu[(n * L + t) * C + c];
                    const S dv = pdt[(n * L + t) * C + c];
                    const S* brow = pb + (n * L + t) * K;
                    const S* crow = pc + (n * L + t) * K;
                    S y = gain * uv;
                    for (int64_t j = 0; j < K; ++j) {
                        const S ev = std::exp(dv * arow[j]);
                        const S hv = ev * hprev[j] + dv * brow[j] * uv;
                        e[t * K + j] = ev;
                        h[t * K + j] = hv;
                        hprev[j] = hv;
                        y += crow[j] * hv;
                    }
                    po[(n * L + t) * C + c] = y;
                }
            },
            1);
    }
    detail::check_finite(out, "selective_scan");
    if (states_out) *states_out = *h_all;

    if (rec) {
        auto st_u = u.storage(), st_dt = dt.storage(), st_b = bt.storage(), st_c = ct.storage();
        auto st_a = a.storage(), st_dg = dg.storage(), st_o = out.storage();
        TapeT<S>::current()->record([st_u, st_dt, st_b, st_c, st_a, st_dg, st_o, h_all, e_all, N, L, C, K] {
            if (st_o->grad.empty()) return;
            const S* g = st_o->grad.data();
            st_u->ensure_grad();
            st_dt->ensure_grad();
            st_b->ensure_grad();
            st_c->ensure_grad();
            // per-batch scratch for A / Dg so the merge order is fixed
            std::vector<S> ga_scratch(size_t(N * C * K), S(0));
            std::vector<S> gdg_scratch(size_t(N * C), S(0));
            detail::parallel_for(
                N,
                [&](int64_t n) {
                    std::vector<S> gh(size_t(C * K), S(0));  // grad wrt h_t carried backward
                    for (int64_t t = L - 1; t >= 0; --t) {
                        const S* brow = st_b->data.data() + (n * L + t) * K;
                        const S* crow = st_c->data.data() + (n * L + t) * K;
                        S* gbrow = st_b->grad.data() + (n * L + t) * K;
                        S* gcrow = st_c->grad.data() + (n * L + t) * K;
                        for (int64_t c = 0; c < C; ++c) {
                            const S gy = g[(n * L + t) * C + c];
                            const S uv = st_u->data[size_t((n * L + t) * C + c)];
                            const S dv = st_dt->data[size_t((n * L + t) * C + c)];
                            const S* h = h_all->data() + ((n * C + c) * L + t) * K;
                            const S* hp = t > 0 ? h - K : nullptr;
                            const S* e = e_all->data() + ((n * C + c) * L + t) * K;
                            const S* arow = st_a->data.data() + c * K;
                            S* ghc = gh.data() + c * K;
                            S gu_acc = gy * st_dg->data[size_t(c)];
                            S gdt_acc = 0;
                            gdg_scratch[size_t(n * C + c)] += gy * uv;
                            for (int64_t j = 0; j < K; ++j) {
                                const S G = ghc[j] + gy * crow[j];
                                gcrow[j] += gy * h[j];
                                const S hprev = hp ? hp[j] : S(0);
                                const S ga_local = G * hprev;  // grad wrt e
                                gdt_acc += G * brow[j] * uv + ga_local * arow[j] * e[j];
                                ga_scratch[size_t((n * C + c) * K + j)] += ga_local * dv * e[j];
                                gbrow[j] += G * dv * uv;
                                gu_acc += G * dv * brow[j];
                                ghc[j] = G * e[j];  // propagate to h_{t-1}
                            }
                            st_u->grad[size_t((n * L + t) * C + c)] += gu_acc;
                            st_dt->grad[size_t((n * L + t) * C + c)] += gdt_acc;
                        }
                    }
                },
                1);
            if (st_a->requires_grad) {
                st_a->ensure_grad();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t i = 0; i < C * K; ++i)
                        st_a->grad[size_t(i)] += ga_scratch[size_t(n * C * K + i)];
            }
            if (st_dg->requires_grad) {
                st_dg->ensure_grad();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < C; ++c) st_dg->grad[size_t(c)] += gdg_scratch[size_t(n * C + c)];
            }
        });
    }
    return out;
}

// Input-dependent projections followed by the core recurrence.
template <class S>
TensorT<S> selective_scan(const TensorT<S>& seq, SsmParamsT<S>& p, std::vector<S>* states_out = nullptr) {
    if (seq.ndim() != 3) throw ShapeError("selective_scan expects [N,L,C]");
    TensorT<S> z = matmul(seq, p.w_dt, &p.b_dt);
    TensorT<S> dt = softplus(z);
    TensorT<S> bt = matmul(seq, p.w_b);
    TensorT<S> ct = matmul(seq, p.w_c);
    return selective_scan_core(seq, dt, bt, ct, p.a, p.skip_gain, states_out);
}

// Blocked evaluation of the same recurrence: the (batch, channel) lanes are
// processed in SIMD-friendly tiles over the state axis. Must agree with
// selective_scan_core within 1e-6; forward only.
template <class S>
TensorT<S> selective_scan_core_blocked(const TensorT<S>& u, const TensorT<S>& dt, const TensorT<S>& bt,
                                       const TensorT<S>& ct, const TensorT<S>& a, const TensorT<S>& dg,
                                       int64_t block = 8) {
    const int64_t N = u.dim(0), L = u.dim(1), C = u.dim(2);
    const int64_t K = a.dim(1);
    for (int64_t i = 0; i < a.numel(); ++i)
        if (!(a.at(i) < S(0))) throw ConfigError("selective_scan_core_blocked: A must be strictly negative");
    TensorT<S> out = TensorT<S>::zeros({N, L, C});
    auto h = std::vector<S>(size_t(C * K));
    for (int64_t n = 0; n < N; ++n) {
        std::fill(h.begin(), h.end(), S(0));
        for (int64_t t = 0; t < L; ++t) {
            for (int64_t c0 = 0; c0 < C; c0 += block) {
                const int64_t c1 = std::min(c0 + block, C);
                for (int64_t c = c0; c < c1; ++c) {
                    const S uv = u.at((n * L + t) * C + c);
                    const S dv = dt.at((n * L + t) * C + c);
                    S y = dg.at(c) * uv;
                    for (int64_t j = 0; j < K; ++j) {
                        const S ev = std::exp(dv * a.at(c * K + j));
                        const S hv = ev * h[size_t(c * K + j)] + dv * bt.at((n * L + t) * K + j) * uv;
                        h[size_t(c * K + j)] = hv;
                        y += ct.at((n * L + t) * K + j) * hv;
                    }
                    out.at((n * L + t) * C + c) = y;
                }
            }
        }
    }
    detail::check_finite(out, "selective_scan_blocked");
    return out;
}

// Ma(.): flatten in the given orientation, scan, restore the spatial layout.
template <class S>
TensorT<S> ma(const TensorT<S>& x, Orientation o, SsmParamsT<S>& p) {
    const int64_t D = x.dim(2), H = x.dim(3), W = x.dim(4);
    TensorT<S> seq = flatten_seq(x, o);
    TensorT<S> y = selective_scan(seq, p);
    return unflatten_seq(y, o, D, H, W);
}

}  // namespace hwau
