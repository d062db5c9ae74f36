#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "daevi/gemm.hpp"
#include "daevi/tape.hpp"
#include "daevi/tensor.hpp"

namespace daevi {

template <typename T>
inline constexpr T neg_inf() {
    return -std::numeric_limits<T>::infinity();
}

// NaN and +inf are error states everywhere; -inf is tolerated only where a
// masked attention score is expected (allow_neg_inf).
template <typename T>
inline void assert_finite(const Tensor<T>& t, const char* what, bool allow_neg_inf = false) {
    const T* p = t.data();
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const T v = p[i];
        if (std::isfinite(v)) {
            continue;
        }
        if (allow_neg_inf && v == neg_inf<T>()) {
            continue;
        }
        throw NumericError(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) {
        po[i] = pa[i] + pb[i];
    }
    if (Tape<T>* tp = tape_of(a, b)) {
        const int na = a.node(), nb = b.node();
        tp->record(out, [na, nb](Tape<T>& t, const std::vector<T>& g) {
            if (auto* ga = t.grad_buffer(na)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
            }
            if (auto* gb = t.grad_buffer(nb)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        po[i] = pa[i] - pb[i];
    }
    if (Tape<T>* tp = tape_of(a, b)) {
        const int na = a.node(), nb = b.node();
        tp->record(out, [na, nb](Tape<T>& t, const std::vector<T>& g) {
            if (auto* ga = t.grad_buffer(na)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
            }
            if (auto* gb = t.grad_buffer(nb)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "mul");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        po[i] = pa[i] * pb[i];
    }
    if (Tape<T>* tp = tape_of(a, b)) {
        const int na = a.node(), nb = b.node();
        auto sa = a.storage(), sb = b.storage();
        tp->record(out, [na, nb, sa, sb](Tape<T>& t, const std::vector<T>& g) {
            if (auto* ga = t.grad_buffer(na)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (*sb)[i];
            }
            if (auto* gb = t.grad_buffer(nb)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * (*sa)[i];
            }
        });
    }
    return out;
}

// y = scale·x + shift
template <typename T>
Tensor<T> scale_add(const Tensor<T>& x, T scale, T shift) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        po[i] = scale * px[i] + shift;
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        tp->record(out, [nx, scale](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += scale * g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
    return scale_add(x, T(-1), T(0));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        po[i] = px[i] > T(0) ? px[i] : T(0);
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        auto sx = x.storage();
        tp->record(out, [nx, sx](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if ((*sx)[i] > T(0)) (*gx)[i] += g[i];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T alpha = T(0.2)) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        po[i] = px[i] > T(0) ? px[i] : alpha * px[i];
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        auto sx = x.storage();
        tp->record(out, [nx, sx, alpha](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    (*gx)[i] += ((*sx)[i] > T(0) ? g[i] : alpha * g[i]);
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        const T v = px[i];
        if (v >= T(0)) {
            const T e = std::exp(-v);
            po[i] = T(1) / (T(1) + e);
        } else {
            const T e = std::exp(v);
            po[i] = e / (T(1) + e);
        }
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        auto so = out.storage();
        tp->record(out, [nx, so](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const T y = (*so)[i];
                    (*gx)[i] += g[i] * y * (T(1) - y);
                }
            }
        });
    }
    return out;
}

// |x| with subgradient 0 at the origin.
template <typename T>
Tensor<T> abs_val(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        po[i] = std::abs(px[i]);
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        auto sx = x.storage();
        tp->record(out, [nx, sx](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const T v = (*sx)[i];
                    if (v > T(0)) (*gx)[i] += g[i];
                    else if (v < T(0)) (*gx)[i] -= g[i];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw ShapeError("matmul: expected 2-D operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor<T> out(Shape{m, n});
    gemm(false, false, m, n, k, T(1), a.data(), k, b.data(), n, T(0), out.data(), n);
    if (Tape<T>* tp = tape_of(a, b)) {
        const int na = a.node(), nb = b.node();
        auto sa = a.storage(), sb = b.storage();
        tp->record(out, [na, nb, sa, sb, m, n, k](Tape<T>& t, const std::vector<T>& g) {
            if (auto* ga = t.grad_buffer(na)) {
                gemm(false, true, m, k, n, T(1), g.data(), n, sb->data(), n, T(1), ga->data(), k);
            }
            if (auto* gb = t.grad_buffer(nb)) {
                gemm(true, false, k, n, m, T(1), sa->data(), k, g.data(), n, T(1), gb->data(), n);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.ndim() != 2) {
        throw ShapeError("transpose: expected 2-D, got " + shape_str(x.shape()));
    }
    const int m = x.dim(0), n = x.dim(1);
    Tensor<T> out(Shape{n, m});
    const T* px = x.data();
    T* po = out.data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            po[static_cast<std::int64_t>(j) * m + i] = px[static_cast<std::int64_t>(i) * n + j];
        }
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        tp->record(out, [nx, m, n](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) {
                        (*gx)[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.size()) {
        throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
    }
    Tensor<T> out = x.detached().viewed_as(std::move(shape));
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        tp->record(out, [nx](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
            }
        });
    }
    return out;
}

namespace detail {

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
        st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] * s[static_cast<std::size_t>(i) + 1];
    }
    return st;
}

// out[i] = in[perm_map(i)] index translation for permute.
inline void permute_map(const Shape& in_shape, const std::vector<int>& perm,
                        std::vector<std::int64_t>& map) {
    const Shape& s = in_shape;
    Shape out_shape(perm.size());
    for (std::size_t d = 0; d < perm.size(); ++d) {
        out_shape[d] = s[static_cast<std::size_t>(perm[d])];
    }
    const auto in_strides = row_major_strides(s);
    const std::int64_t n = shape_numel(out_shape);
    map.resize(static_cast<std::size_t>(n));
    const int nd = static_cast<int>(perm.size());
    std::vector<std::int64_t> idx(perm.size(), 0);
    for (std::int64_t o = 0; o < n; ++o) {
        std::int64_t in_lin = 0;
        for (int d = 0; d < nd; ++d) {
            in_lin += idx[static_cast<std::size_t>(d)] * in_strides[static_cast<std::size_t>(perm[d])];
        }
        map[static_cast<std::size_t>(o)] = in_lin;
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) break;
            idx[static_cast<std::size_t>(d)] = 0;
        }
    }
}

} // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
    if (static_cast<int>(perm.size()) != x.ndim()) {
        throw ShapeError("permute: axis list length " + std::to_string(perm.size()) + " vs ndim " + std::to_string(x.ndim()));
    }
    Shape out_shape(perm.size());
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t d = 0; d < perm.size(); ++d) {
        const int p = perm[d];
        if (p < 0 || p >= x.ndim() || seen[static_cast<std::size_t>(p)]) {
            throw ShapeError("permute: invalid axis permutation");
        }
        seen[static_cast<std::size_t>(p)] = true;
        out_shape[d] = x.dim(p);
    }
    std::vector<std::int64_t> map;
    detail::permute_map(x.shape(), perm, map);
    Tensor<T> out(out_shape);
    const T* px = x.data();
    T* po = out.data();
    for (std::size_t i = 0; i < map.size(); ++i) {
        po[i] = px[map[i]];
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        const Shape in_shape = x.shape();
        tp->record(out, [nx, in_shape, perm](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                std::vector<std::int64_t> m2;
                detail::permute_map(in_shape, perm, m2);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    (*gx)[static_cast<std::size_t>(m2[i])] += g[i];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) {
        throw ContractError("concat: no operands");
    }
    const int nd = parts[0].ndim();
    if (axis < 0 || axis >= nd) {
        throw ShapeError("concat: axis out of range");
    }
    Shape out_shape = parts[0].shape();
    out_shape[static_cast<std::size_t>(axis)] = 0;
    for (const auto& p : parts) {
        if (p.ndim() != nd) {
            throw ShapeError("concat: rank mismatch");
        }
        for (int d = 0; d < nd; ++d) {
            if (d != axis && p.dim(d) != parts[0].dim(d)) {
                throw ShapeError("concat: extent mismatch on axis " + std::to_string(d));
            }
        }
        out_shape[static_cast<std::size_t>(axis)] += p.dim(axis);
    }
    std::int64_t inner = 1;
    for (int d = axis + 1; d < nd; ++d) inner *= parts[0].dim(d);
    std::int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= parts[0].dim(d);

    Tensor<T> out(out_shape);
    T* po = out.data();
    const std::int64_t out_axis_inner = static_cast<std::int64_t>(out_shape[static_cast<std::size_t>(axis)]) * inner;
    std::int64_t off = 0;
    std::vector<std::int64_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::int64_t blk = static_cast<std::int64_t>(p.dim(axis)) * inner;
        const T* pp = p.data();
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy_n(pp + o * blk, blk, po + o * out_axis_inner + off);
        }
        off += blk;
    }

    Tape<T>* tp = nullptr;
    for (const auto& p : parts) {
        Tape<T>* cand = p.tape();
        if (cand && tp && cand != tp) {
            throw ContractError("concat: operands from different tapes");
        }
        if (cand) tp = cand;
    }
    if (tp) {
        std::vector<int> nodes;
        std::vector<std::int64_t> blks;
        for (const auto& p : parts) {
            nodes.push_back(p.node());
            blks.push_back(static_cast<std::int64_t>(p.dim(axis)) * inner);
        }
        tp->record(out, [nodes, blks, offsets, outer, out_axis_inner](Tape<T>& t, const std::vector<T>& g) {
            for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                if (auto* gp = t.grad_buffer(nodes[pi])) {
                    const std::int64_t blk = blks[pi];
                    for (std::int64_t o = 0; o < outer; ++o) {
                        const T* src = g.data() + o * out_axis_inner + offsets[pi];
                        T* dst = gp->data() + o * blk;
                        for (std::int64_t i = 0; i < blk; ++i) dst[i] += src[i];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, int axis) {
    return concat(std::vector<Tensor<T>>(parts), axis);
}

template <typename T>
Tensor<T> slice_axis(const Tensor<T>& x, int axis, int start, int len) {
    if (axis < 0 || axis >= x.ndim()) {
        throw ShapeError("slice: axis out of range");
    }
    if (start < 0 || len <= 0 || start + len > x.dim(axis)) {
        throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) + ") out of extent " + std::to_string(x.dim(axis)));
    }
    std::int64_t inner = 1;
    for (int d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
    std::int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= x.dim(d);
    const std::int64_t in_blk = static_cast<std::int64_t>(x.dim(axis)) * inner;
    const std::int64_t out_blk = static_cast<std::int64_t>(len) * inner;

    Shape out_shape = x.shape();
    out_shape[static_cast<std::size_t>(axis)] = len;
    Tensor<T> out(out_shape);
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(px + o * in_blk + start * inner, out_blk, po + o * out_blk);
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        tp->record(out, [nx, outer, in_blk, out_blk, inner, start](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (std::int64_t o = 0; o < outer; ++o) {
                    const T* src = g.data() + o * out_blk;
                    T* dst = gx->data() + o * in_blk + start * inner;
                    for (std::int64_t i = 0; i < out_blk; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

// Nearest-neighbour 2x spatial upsampling of an N×C×H×W map.
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
    if (x.ndim() != 4) {
        throw ShapeError("upsample_nearest2x: expected N×C×H×W, got " + shape_str(x.shape()));
    }
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> out(Shape{n, c, 2 * h, 2 * w});
    const T* px = x.data();
    T* po = out.data();
    const std::int64_t planes = static_cast<std::int64_t>(n) * c;
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const T* src = px + pl * h * w;
        T* dst = po + pl * 4 * h * w;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const T v = src[static_cast<std::int64_t>(i) * w + j];
                T* row0 = dst + static_cast<std::int64_t>(2 * i) * 2 * w + 2 * j;
                row0[0] = v;
                row0[1] = v;
                row0[2 * w] = v;
                row0[2 * w + 1] = v;
            }
        }
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        tp->record(out, [nx, planes, h, w](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (std::int64_t pl = 0; pl < planes; ++pl) {
                    const T* src = g.data() + pl * 4 * h * w;
                    T* dst = gx->data() + pl * h * w;
                    for (int i = 0; i < h; ++i) {
                        for (int j = 0; j < w; ++j) {
                            const T* row0 = src + static_cast<std::int64_t>(2 * i) * 2 * w + 2 * j;
                            dst[static_cast<std::int64_t>(i) * w + j] += row0[0] + row0[1] + row0[2 * w] + row0[2 * w + 1];
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x) {
    double acc = 0.0;
    const T* px = x.data();
    for (std::int64_t i = 0; i < x.size(); ++i) {
        acc += static_cast<double>(px[i]);
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        tp->record(out, [nx](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (auto& v : *gx) v += g[0];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x) {
    if (x.size() == 0) {
        throw ContractError("reduce_mean: empty tensor");
    }
    double acc = 0.0;
    const T* px = x.data();
    for (std::int64_t i = 0; i < x.size(); ++i) {
        acc += static_cast<double>(px[i]);
    }
    const T inv_n = static_cast<T>(1.0 / static_cast<double>(x.size()));
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(x.size())));
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        tp->record(out, [nx, inv_n](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                const T gv = g[0] * inv_n;
                for (auto& v : *gx) v += gv;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

// Exp-normalization along `axis` with max-subtraction. -inf entries act as
// mask sentinels and receive weight 0; a row of only -inf yields all zeros.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    if (axis < 0 || axis >= x.ndim()) {
        throw ShapeError("softmax: axis out of range");
    }
    assert_finite(x, "softmax input", /*allow_neg_inf=*/true);
    const int len = x.dim(axis);
    std::int64_t inner = 1;
    for (int d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
    std::int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= x.dim(d);

    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            const std::int64_t base = o * len * inner + i;
            T mx = neg_inf<T>();
            for (int j = 0; j < len; ++j) {
                mx = std::max(mx, px[base + j * inner]);
            }
            if (mx == neg_inf<T>()) {
                for (int j = 0; j < len; ++j) {
                    po[base + j * inner] = T(0);
                }
                continue;
            }
            double z = 0.0;
            for (int j = 0; j < len; ++j) {
                const T v = px[base + j * inner];
                const double e = (v == neg_inf<T>()) ? 0.0 : std::exp(static_cast<double>(v - mx));
                po[base + j * inner] = static_cast<T>(e);
                z += e;
            }
            const double inv_z = 1.0 / z;
            for (int j = 0; j < len; ++j) {
                po[base + j * inner] = static_cast<T>(static_cast<double>(po[base + j * inner]) * inv_z);
            }
        }
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        auto so = out.storage();
        tp->record(out, [nx, so, outer, inner, len](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                const std::vector<T>& y = *so;
                for (std::int64_t o = 0; o < outer; ++o) {
                    for (std::int64_t i = 0; i < inner; ++i) {
                        const std::int64_t base = o * len * inner + i;
                        double dot = 0.0;
                        for (int j = 0; j < len; ++j) {
                            const std::int64_t k = base + j * inner;
                            dot += static_cast<double>(g[static_cast<std::size_t>(k)]) * static_cast<double>(y[static_cast<std::size_t>(k)]);
                        }
                        for (int j = 0; j < len; ++j) {
                            const std::int64_t k = base + j * inner;
                            (*gx)[static_cast<std::size_t>(k)] +=
                                y[static_cast<std::size_t>(k)] * (g[static_cast<std::size_t>(k)] - static_cast<T>(dot));
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// masking
// ---------------------------------------------------------------------------

// x ⊙ m with m broadcast over the channel axis: x is N×C×H×W, m is N×1×H×W.
// The mask is data, never a trainable quantity, so it must be untracked.
template <typename T>
Tensor<T> mul_channel_mask(const Tensor<T>& x, const Tensor<T>& m) {
    if (x.ndim() != 4 || m.ndim() != 4 || m.dim(1) != 1 || m.dim(0) != x.dim(0) ||
        m.dim(2) != x.dim(2) || m.dim(3) != x.dim(3)) {
        throw ShapeError("mul_channel_mask: need x N×C×H×W and mask N×1×H×W, got " +
                         shape_str(x.shape()) + " and " + shape_str(m.shape()));
    }
    if (m.tracked()) {
        throw ContractError("mul_channel_mask: mask must not require gradients");
    }
    const int n = x.dim(0), c = x.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
    Tensor<T> out(x.shape());
    const T* px = x.data();
    const T* pm = m.data();
    T* po = out.data();
    for (int b = 0; b < n; ++b) {
        const T* mp = pm + static_cast<std::int64_t>(b) * hw;
        for (int ch = 0; ch < c; ++ch) {
            const std::int64_t off = (static_cast<std::int64_t>(b) * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                po[off + i] = px[off + i] * mp[i];
            }
        }
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        auto sm = m.storage();
        tp->record(out, [nx, sm, n, c, hw](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (int b = 0; b < n; ++b) {
                    const T* mp = sm->data() + static_cast<std::int64_t>(b) * hw;
                    for (int ch = 0; ch < c; ++ch) {
                        const std::int64_t off = (static_cast<std::int64_t>(b) * c + ch) * hw;
                        for (std::int64_t i = 0; i < hw; ++i) {
                            (*gx)[static_cast<std::size_t>(off + i)] += g[static_cast<std::size_t>(off + i)] * mp[i];
                        }
                    }
                }
            }
        });
    }
    return out;
}

} // namespace daevi
