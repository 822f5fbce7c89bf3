#pragma once

#include <cmath>
#include <cstring>

#include "hwau/runtime.hpp"
#include "hwau/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hwau {

namespace detail {

template <class F>
inline void parallel_for(int64_t n, F&& f, int64_t grain = 32768) {
#ifdef _OPENMP
    if (n >= grain && runtime::threads() > 1) {
#pragma omp parallel for num_threads(hwau::runtime::threads()) schedule(static)
        for (int64_t i = 0; i < n; ++i) f(i);
        return;
    }
#endif
    for (int64_t i = 0; i < n; ++i) f(i);
}

template <class S>
inline void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// outer = product of extents before axis, inner = product after.
inline void axis_spans(const Shape& s, int axis, int64_t& outer, int64_t& mid, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[size_t(i)];
    mid = s[size_t(axis)];
    for (size_t i = size_t(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "add");
    const bool rec = detail::taped<S>({&a, &b});
    TensorT<S> out = detail::make_output<S>(a.shape(), "add", rec);
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    detail::parallel_for(a.numel(), [&](int64_t i) { po[i] = pa[i] + pb[i]; });
    detail::check_finite(out, "add");
    if (rec) {
        auto sa = a.storage(), sb = b.storage(), so = out.storage();
        TapeT<S>::current()->record([sa, sb, so] {
            if (so->grad.empty()) return;
            const int64_t n = int64_t(so->data.size());
            if (sa->requires_grad) {
                sa->ensure_grad();
                for (int64_t i = 0; i < n; ++i) sa->grad[size_t(i)] += so->grad[size_t(i)];
            }
            if (sb->requires_grad) {
                sb->ensure_grad();
                for (int64_t i = 0; i < n; ++i) sb->grad[size_t(i)] += so->grad[size_t(i)];
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "mul");
    const bool rec = detail::taped<S>({&a, &b});
    TensorT<S> out = detail::make_output<S>(a.shape(), "mul", rec);
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    detail::parallel_for(a.numel(), [&](int64_t i) { po[i] = pa[i] * pb[i]; });
    detail::check_finite(out, "mul");
    if (rec) {
        auto sa = a.storage(), sb = b.storage(), so = out.storage();
        TapeT<S>::current()->record([sa, sb, so] {
            if (so->grad.empty()) return;
            const int64_t n = int64_t(so->data.size());
            if (sa->requires_grad) {
                sa->ensure_grad();
                for (int64_t i = 0; i < n; ++i) sa->grad[size_t(i)] += so->grad[size_t(i)] * sb->data[size_t(i)];
            }
            if (sb->requires_grad) {
                sb->ensure_grad();
                for (int64_t i = 0; i < n; ++i) sb->grad[size_t(i)] += so->grad[size_t(i)] * sa->data[size_t(i)];
            }
        });
    }
    return out;
}

// Multiply by a learnable scalar (shape [1]) tensor.
template <class S>
TensorT<S> scale(const TensorT<S>& x, const TensorT<S>& w) {
    if (w.numel() != 1) throw ShapeError("scale: weight must be scalar, got " + shape_str(w.shape()));
    const bool rec = detail::taped<S>({&x, &w});
    TensorT<S> out = detail::make_output<S>(x.shape(), "scale", rec);
    const S c = w.at(0);
    const S* px = x.data();
    S* po = out.data();
    detail::parallel_for(x.numel(), [&](int64_t i) { po[i] = px[i] * c; });
    detail::check_finite(out, "scale");
    if (rec) {
        auto sx = x.storage(), sw = w.storage(), so = out.storage();
        TapeT<S>::current()->record([sx, sw, so] {
            if (so->grad.empty()) return;
            const int64_t n = int64_t(so->data.size());
            const S c = sw->data[0];
            if (sx->requires_grad) {
                sx->ensure_grad();
                for (int64_t i = 0; i < n; ++i) sx->grad[size_t(i)] += so->grad[size_t(i)] * c;
            }
            if (sw->requires_grad) {
                sw->ensure_grad();
                S acc = 0;
                for (int64_t i = 0; i < n; ++i) acc += so->grad[size_t(i)] * sx->data[size_t(i)];
                sw->grad[0] += acc;
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> scale_const(const TensorT<S>& x, S c) {
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>(x.shape(), "scale_const", rec);
    const S* px = x.data();
    S* po = out.data();
    detail::parallel_for(x.numel(), [&](int64_t i) { po[i] = px[i] * c; });
    detail::check_finite(out, "scale_const");
    if (rec) {
        auto sx = x.storage(), so = out.storage();
        TapeT<S>::current()->record([sx, so, c] {
            if (so->grad.empty() || !sx->requires_grad) return;
            sx->ensure_grad();
            const int64_t n = int64_t(so->data.size());
            for (int64_t i = 0; i < n; ++i) sx->grad[size_t(i)] += so->grad[size_t(i)] * c;
        });
    }
    return out;
}

template <class S>
TensorT<S> relu(const TensorT<S>& x) {
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>(x.shape(), "relu", rec);
    const S* px = x.data();
    S* po = out.data();
    detail::parallel_for(x.numel(), [&](int64_t i) { po[i] = px[i] > S(0) ? px[i] : S(0); });
    detail::check_finite(out, "relu");
    if (rec) {
        auto sx = x.storage(), so = out.storage();
        TapeT<S>::current()->record([sx, so] {
            if (so->grad.empty() || !sx->requires_grad) return;
            sx->ensure_grad();
            const int64_t n = int64_t(so->data.size());
            for (int64_t i = 0; i < n; ++i)
                if (sx->data[size_t(i)] > S(0)) sx->grad[size_t(i)] += so->grad[size_t(i)];
        });
    }
    return out;
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>(x.shape(), "sigmoid", rec);
    const S* px = x.data();
    S* po = out.data();
    detail::parallel_for(x.numel(), [&](int64_t i) {
        const S v = px[i];
        po[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : S(1) - S(1) / (S(1) + std::exp(v));
    });
    detail::check_finite(out, "sigmoid");
    if (rec) {
        auto sx = x.storage(), so = out.storage();
        TapeT<S>::current()->record([sx, so] {
            if (so->grad.empty() || !sx->requires_grad) return;
            sx->ensure_grad();
            const int64_t n = int64_t(so->data.size());
            for (int64_t i = 0; i < n; ++i) {
                const S y = so->data[size_t(i)];
                sx->grad[size_t(i)] += so->grad[size_t(i)] * y * (S(1) - y);
            }
        });
    }
    return out;
}

// log(1+exp(x)), evaluated stably; derivative is sigmoid(x).
template <class S>
TensorT<S> softplus(const TensorT<S>& x) {
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>(x.shape(), "softplus", rec);
    const S* px = x.data();
    S* po = out.data();
    detail::parallel_for(x.numel(), [&](int64_t i) {
        const S v = px[i];
        po[i] = v > S(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    });
    detail::check_finite(out, "softplus");
    if (rec) {
        auto sx = x.storage(), so = out.storage();
        TapeT<S>::current()->record([sx, so] {
            if (so->grad.empty() || !sx->requires_grad) return;
            sx->ensure_grad();
            const int64_t n = int64_t(so->data.size());
            for (int64_t i = 0; i < n; ++i) {
                const S v = sx->data[size_t(i)];
                const S sg = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : S(1) - S(1) / (S(1) + std::exp(v));
                sx->grad[size_t(i)] += so->grad[size_t(i)] * sg;
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> sum_all(const TensorT<S>& x) {
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>({1}, "sum", rec);
    const S* px = x.data();
    S acc = 0;
    for (int64_t i = 0; i < x.numel(); ++i) acc += px[i];
    out.data()[0] = acc;
    detail::check_finite(out, "sum");
    if (rec) {
        auto sx = x.storage(), so = out.storage();
        TapeT<S>::current()->record([sx, so] {
            if (so->grad.empty() || !sx->requires_grad) return;
            sx->ensure_grad();
            const S g = so->grad[0];
            for (auto& gv : sx->grad) gv += g;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// matmul: [m,k]@[k,n], [B,m,k]@[k,n], [B,m,k]@[B,k,n]; optional bias over n
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
inline void mm_kernel(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n) {
    // c[m,n] += a[m,k] @ b[k,n]; row-major, accumulation order fixed over k.
    parallel_for(
        m,
        [&](int64_t i) {
            const S* ar = a + i * k;
            S* cr = c + i * n;
            for (int64_t kk = 0; kk < k; ++kk) {
                const S av = ar[kk];
                if (av == S(0)) continue;
                const S* br = b + kk * n;
                for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        },
        64);
}

// c[m,k] += g[m,n] @ b[k,n]^T
template <class S>
inline void mm_gbt(const S* g, const S* b, S* c, int64_t m, int64_t k, int64_t n) {
    parallel_for(
        m,
        [&](int64_t i) {
            const S* gr = g + i * n;
            S* cr = c + i * k;
            for (int64_t kk = 0; kk < k; ++kk) {
                const S* br = b + kk * n;
                S acc = 0;
                for (int64_t j = 0; j < n; ++j) acc += gr[j] * br[j];
                cr[kk] += acc;
            }
        },
        64);
}

// c[k,n] += a[m,k]^T @ g[m,n]; parallel over k so accumulation is race-free.
template <class S>
inline void mm_atg(const S* a, const S* g, S* c, int64_t m, int64_t k, int64_t n) {
    parallel_for(
        k,
        [&](int64_t kk) {
            S* cr = c + kk * n;
            for (int64_t i = 0; i < m; ++i) {
                const S av = a[i * k + kk];
                if (av == S(0)) continue;
                const S* gr = g + i * n;
                for (int64_t j = 0; j < n; ++j) cr[j] += av * gr[j];
            }
        },
        64);
}

}  // namespace detail

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b, const TensorT<S>* bias = nullptr) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    int64_t batch = 1, m = 0, k = 0, n = 0;
    bool a_batched = sa.size() == 3, b_batched = sb.size() == 3;
    if (sa.size() == 2 && sb.size() == 2) {
        m = sa[0]; k = sa[1]; n = sb[1];
    } else if (a_batched && sb.size() == 2) {
        batch = sa[0]; m = sa[1]; k = sa[2]; n = sb[1];
    } else if (a_batched && b_batched) {
        if (sa[0] != sb[0])
            throw ShapeError("matmul: batch mismatch " + shape_str(sa) + " vs " + shape_str(sb));
        batch = sa[0]; m = sa[1]; k = sa[2]; n = sb[2];
    } else {
        throw ShapeError("matmul: unsupported ranks " + shape_str(sa) + " @ " + shape_str(sb));
    }
    if (k != sb[b_batched ? 1 : 0])
        throw ShapeError("matmul: inner extent mismatch " + shape_str(sa) + " @ " + shape_str(sb));
    if (bias && bias->numel() != n) throw ShapeError("matmul: bias length must equal columns");

    const bool rec = detail::taped<S>({&a, &b, bias});
    Shape oshape = a_batched ? Shape{batch, m, n} : Shape{m, n};
    TensorT<S> out = detail::make_output<S>(oshape, "matmul", rec);

    for (int64_t bi = 0; bi < batch; ++bi)
        detail::mm_kernel(a.data() + bi * m * k, b.data() + (b_batched ? bi * k * n : 0),
                          out.data() + bi * m * n, m, k, n);
    if (bias) {
        const S* pb = bias->data();
        S* po = out.data();
        detail::parallel_for(batch * m, [&](int64_t r) {
            S* row = po + r * n;
            for (int64_t j = 0; j < n; ++j) row[j] += pb[j];
        });
    }
    detail::check_finite(out, "matmul");

    if (rec) {
        auto st_a = a.storage(), st_b = b.storage(), st_o = out.storage();
        auto st_bias = bias ? bias->storage() : nullptr;
        TapeT<S>::current()->record([st_a, st_b, st_o, st_bias, batch, m, k, n, b_batched] {
            if (st_o->grad.empty()) return;
            const S* g = st_o->grad.data();
            if (st_a->requires_grad) {
                st_a->ensure_grad();
                for (int64_t bi = 0; bi < batch; ++bi)
                    detail::mm_gbt(g + bi * m * n, st_b->data.data() + (b_batched ? bi * k * n : 0),
                                   st_a->grad.data() + bi * m * k, m, k, n);
            }
            if (st_b->requires_grad) {
                st_b->ensure_grad();
                for (int64_t bi = 0; bi < batch; ++bi)
                    detail::mm_atg(st_a->data.data() + bi * m * k, g + bi * m * n,
                                   st_b->grad.data() + (b_batched ? bi * k * n : 0), m, k, n);
            }
            if (st_bias && st_bias->requires_grad) {
                st_bias->ensure_grad();
                for (int64_t r = 0; r < batch * m; ++r)
                    for (int64_t j = 0; j < n; ++j) st_bias->grad[size_t(j)] += g[r * n + j];
            }
        });
    }
    return out;
}

// [B,m,n] -> [B,n,m]
template <class S>
TensorT<S> transpose_12(const TensorT<S>& x) {
    if (x.ndim() != 3) throw ShapeError("transpose_12 expects rank-3, got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), m = x.dim(1), n = x.dim(2);
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>({B, n, m}, "transpose_12", rec);
    const S* px = x.data();
    S* po = out.data();
    detail::parallel_for(B * n, [&](int64_t r) {
        const int64_t b = r / n, j = r % n;
        S* orow = po + (b * n + j) * m;
        const S* xcol = px + b * m * n + j;
        for (int64_t i = 0; i < m; ++i) orow[i] = xcol[i * n];
    });
    if (rec) {
        auto sx = x.storage(), so = out.storage();
        TapeT<S>::current()->record([sx, so, B, m, n] {
            if (so->grad.empty() || !sx->requires_grad) return;
            sx->ensure_grad();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j)
                        sx->grad[size_t(b * m * n + i * n + j)] += so->grad[size_t(b * n * m + j * m + i)];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax along an axis; rows are shifted by their max before exponentiation
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> softmax(const TensorT<S>& x, int axis) {
    if (axis < 0) axis += int(x.ndim());
    if (axis < 0 || axis >= int(x.ndim()))
        throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    int64_t outer, mid, inner;
    detail::axis_spans(x.shape(), axis, outer, mid, inner);
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>(x.shape(), "softmax", rec);
    const S* px = x.data();
    S* po = out.data();
    detail::parallel_for(
        outer * inner,
        [&](int64_t r) {
            const int64_t o = r / inner, in = r % inner;
            const S* row = px + o * mid * inner + in;
            S* orow = po + o * mid * inner + in;
            S mx = row[0];
            for (int64_t j = 1; j < mid; ++j) mx = std::max(mx, row[j * inner]);
            S denom = 0;
            for (int64_t j = 0; j < mid; ++j) {
                const S e = std::exp(row[j * inner] - mx);
                orow[j * inner] = e;
                denom += e;
            }
            const S invd = S(1) / denom;
            for (int64_t j = 0; j < mid; ++j) orow[j * inner] *= invd;
        },
        8);
    detail::check_finite(out, "softmax");
    if (rec) {
        auto sx = x.storage(), so = out.storage();
        TapeT<S>::current()->record([sx, so, outer, mid, inner] {
            if (so->grad.empty() || !sx->requires_grad) return;
            sx->ensure_grad();
            detail::parallel_for(
                outer * inner,
                [&](int64_t r) {
                    const int64_t o = r / inner, in = r % inner;
                    const int64_t base = o * mid * inner + in;
                    S dot = 0;
                    for (int64_t j = 0; j < mid; ++j) {
                        const size_t idx = size_t(base + j * inner);
                        dot += so->grad[idx] * so->data[idx];
                    }
                    for (int64_t j = 0; j < mid; ++j) {
                        const size_t idx = size_t(base + j * inner);
                        sx->grad[idx] += so->data[idx] * (so->grad[idx] - dot);
                    }
                },
                8);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// concat / split along an arbitrary axis; exact inverses on matching parts
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis < 0) axis += int(s0.size());
    if (axis < 0 || axis >= int(s0.size())) throw ShapeError("concat: axis out of range");
    Shape oshape = s0;
    int64_t total_axis = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
        for (size_t i = 0; i < s.size(); ++i)
            if (int(i) != axis && s[i] != s0[i])
                throw ShapeError("concat: ragged extent on axis " + std::to_string(i) + ": " + shape_str(s) +
                                 " vs " + shape_str(s0));
        total_axis += s[size_t(axis)];
    }
    oshape[size_t(axis)] = total_axis;

    bool rec = false;
    for (const auto& p : parts)
        if (detail::taped<S>({&p})) rec = true;
    TensorT<S> out = detail::make_output<S>(oshape, "concat", rec);

    int64_t outer, mid_o, inner;
    detail::axis_spans(oshape, axis, outer, mid_o, inner);
    int64_t offset = 0;
    for (const auto& p : parts) {
        const int64_t mid_p = p.dim(size_t(axis));
        const S* src = p.data();
        S* dst = out.data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(dst + (o * mid_o + offset) * inner, src + o * mid_p * inner,
                        size_t(mid_p * inner) * sizeof(S));
        offset += mid_p;
    }
    if (rec) {
        std::vector<std::shared_ptr<StorageT<S>>> srcs;
        for (const auto& p : parts) srcs.push_back(p.storage());
        auto so = out.storage();
        TapeT<S>::current()->record([srcs, so, outer, mid_o, inner, axis] {
            if (so->grad.empty()) return;
            int64_t offset = 0;
            for (auto& sp : srcs) {
                const int64_t mid_p = sp->shape[size_t(axis)];
                if (sp->requires_grad) {
                    sp->ensure_grad();
                    for (int64_t o = 0; o < outer; ++o) {
                        const S* g = so->grad.data() + (o * mid_o + offset) * inner;
                        S* dst = sp->grad.data() + o * mid_p * inner;
                        for (int64_t i = 0; i < mid_p * inner; ++i) dst[i] += g[i];
                    }
                }
                offset += mid_p;
            }
        });
    }
    return out;
}

template <class S>
std::vector<TensorT<S>> split(const TensorT<S>& x, int axis, const std::vector<int64_t>& sizes) {
    const Shape& s = x.shape();
    if (axis < 0) axis += int(s.size());
    if (axis < 0 || axis >= int(s.size())) throw ShapeError("split: axis out of range");
    int64_t total = 0;
    for (int64_t z : sizes) total += z;
    if (total != s[size_t(axis)])
        throw ShapeError("split: part sizes sum to " + std::to_string(total) + ", axis extent is " +
                         std::to_string(s[size_t(axis)]));
    int64_t outer, mid, inner;
    detail::axis_spans(s, axis, outer, mid, inner);
    const bool rec = detail::taped<S>({&x});

    std::vector<TensorT<S>> parts;
    int64_t offset = 0;
    for (int64_t z : sizes) {
        Shape pshape = s;
        pshape[size_t(axis)] = z;
        TensorT<S> p = detail::make_output<S>(pshape, "split", rec);
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(p.data() + o * z * inner, x.data() + (o * mid + offset) * inner,
                        size_t(z * inner) * sizeof(S));
        if (rec) {
            auto sx = x.storage();
            auto sp = p.storage();
            const int64_t off = offset;
            TapeT<S>::current()->record([sx, sp, outer, mid, inner, off, z] {
                if (sp->grad.empty() || !sx->requires_grad) return;
                sx->ensure_grad();
                for (int64_t o = 0; o < outer; ++o) {
                    const S* g = sp->grad.data() + o * z * inner;
                    S* dst = sx->grad.data() + (o * mid + off) * inner;
                    for (int64_t i = 0; i < z * inner; ++i) dst[i] += g[i];
                }
            });
        }
        parts.push_back(std::move(p));
        offset += z;
    }
    return parts;
}

template <class S>
std::vector<TensorT<S>> split_even(const TensorT<S>& x, int axis, int64_t nparts) {
    const int64_t extent = x.shape()[size_t(axis < 0 ? int(x.ndim()) + axis : axis)];
    if (extent % nparts != 0)
        throw ShapeError("split_even: extent " + std::to_string(extent) + " not divisible into " +
                         std::to_string(nparts) + " parts");
    return split(x, axis, std::vector<int64_t>(size_t(nparts), extent / nparts));
}

// Reorders channels of a [N,C,...] tensor: out channel j reads input channel idx[j].
template <class S>
TensorT<S> gather_channels(const TensorT<S>& x, const std::vector<int64_t>& idx) {
    if (x.ndim() < 2) throw ShapeError("gather_channels expects rank>=2");
    const int64_t N = x.dim(0), C = x.dim(1);
    int64_t inner = 1;
    for (size_t i = 2; i < x.ndim(); ++i) inner *= x.dim(i);
    for (int64_t j : idx)
        if (j < 0 || j >= C) throw ShapeError("gather_channels: index out of range");
    Shape oshape = x.shape();
    oshape[1] = int64_t(idx.size());
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>(oshape, "gather_channels", rec);
    for (int64_t n = 0; n < N; ++n)
        for (size_t j = 0; j < idx.size(); ++j)
            std::memcpy(out.data() + (n * int64_t(idx.size()) + int64_t(j)) * inner,
                        x.data() + (n * C + idx[j]) * inner, size_t(inner) * sizeof(S));
    if (rec) {
        auto sx = x.storage(), so = out.storage();
        TapeT<S>::current()->record([sx, so, idx, N, C, inner] {
            if (so->grad.empty() || !sx->requires_grad) return;
            sx->ensure_grad();
            for (int64_t n = 0; n < N; ++n)
                for (size_t j = 0; j < idx.size(); ++j) {
                    const S* g = so->grad.data() + (n * int64_t(idx.size()) + int64_t(j)) * inner;
                    S* dst = sx->grad.data() + (n * C + idx[j]) * inner;
                    for (int64_t i = 0; i < inner; ++i) dst[i] += g[i];
                }
        });
    }
    return out;
}

// Zero-pads the high side of the spatial axes of a [N,C,D,H,W] tensor.
template <class S>
TensorT<S> pad_spatial_right(const TensorT<S>& x, int64_t pd, int64_t ph, int64_t pw) {
    if (x.ndim() != 5) throw ShapeError("pad_spatial_right expects [N,C,D,H,W]");
    if (pd == 0 && ph == 0 && pw == 0) {
        // still materialize a node so downstream mutation rules stay uniform
    }
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t OD = D + pd, OH = H + ph, OW = W + pw;
    const bool rec = detail::taped<S>({&x});
    TensorT<S> out = detail::make_output<S>({N, C, OD, OH, OW}, "pad_spatial_right", rec);
    detail::parallel_for(N * C * D, [&](int64_t r) {
        const int64_t nc = r / D, d = r % D;
        for (int64_t h = 0; h < H; ++h)
            std::memcpy(out.data() + ((nc * OD + d) * OH + h) * OW, x.data() + ((nc * D + d) * H + h) * W,
                        size_t(W) * sizeof(S));
    });
    if (rec) {
        auto sx = x.storage(), so = out.storage();
        TapeT<S>::current()->record([sx, so, N, C, D, H, W, OD, OH, OW] {
            if (so->grad.empty() || !sx->requires_grad) return;
            sx->ensure_grad();
            for (int64_t nc = 0; nc < N * C; ++nc)
                for (int64_t d = 0; d < D; ++d)
                    for (int64_t h = 0; h < H; ++h) {
                        const S* g = so->grad.data() + ((nc * OD + d) * OH + h) * OW;
                        S* dst = sx->grad.data() + ((nc * D + d) * H + h) * W;
                        for (int64_t w = 0; w < W; ++w) dst[w] += g[w];
                    }
        });
    }
    return out;
}

}  // namespace hwau
