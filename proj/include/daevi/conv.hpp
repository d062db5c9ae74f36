#pragma once

#include <cstdint>
#include <vector>

#include "daevi/gemm.hpp"
#include "daevi/ops.hpp"

namespace daevi {

struct Conv2dSpec {
    int stride_h = 1;
    int stride_w = 1;
    int pad_h = 0;
    int pad_w = 0;
    int groups = 1;
};

struct Conv3dSpec {
    int stride_t = 1;
    int stride_h = 1;
    int stride_w = 1;
    int pad_t = 0;
    int pad_h = 0;
    int pad_w = 0;
    int groups = 1;
};

namespace detail {

inline int conv_extent(int in, int k, int stride, int pad, const char* what) {
    const int numer = in + 2 * pad - k;
    if (numer < 0 || stride < 1) {
        throw ShapeError(std::string(what) + ": kernel does not fit input extent " + std::to_string(in));
    }
    return numer / stride + 1;
}

// Copies one padded, strided input row into a column row: zero edges plus a
// bulk interior copy (contiguous when the stride is 1).
template <typename T>
inline void gather_row(const T* src, int w, int kj, int sw, int pw, int wo, T* dst) {
    int lo = 0;
    while (lo < wo && lo * sw - pw + kj < 0) ++lo;
    int hi = wo;
    while (hi > lo && (hi - 1) * sw - pw + kj >= w) --hi;
    for (int ow = 0; ow < lo; ++ow) dst[ow] = T(0);
    if (sw == 1) {
        std::copy_n(src + (lo - pw + kj), hi - lo, dst + lo);
    } else {
        for (int ow = lo; ow < hi; ++ow) dst[ow] = src[ow * sw - pw + kj];
    }
    for (int ow = hi; ow < wo; ++ow) dst[ow] = T(0);
}

// Scatters one channel-block image into column form: rows index (c, ki, kj),
// columns index (oh, ow). Out-of-bounds taps are zero.
template <typename T>
void im2col_2d(const T* x, int c, int h, int w, int kh, int kw,
               int sh, int sw, int ph, int pw, int ho, int wo, T* col) {
    const std::int64_t cols = static_cast<std::int64_t>(ho) * wo;
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = x + static_cast<std::int64_t>(ch) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                T* row = col + ((static_cast<std::int64_t>(ch) * kh + ki) * kw + kj) * cols;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * sh - ph + ki;
                    T* dst = row + static_cast<std::int64_t>(oh) * wo;
                    if (ih < 0 || ih >= h) {
                        for (int ow = 0; ow < wo; ++ow) dst[ow] = T(0);
                        continue;
                    }
                    gather_row(plane + static_cast<std::int64_t>(ih) * w, w, kj, sw, pw, wo, dst);
                }
            }
        }
    }
}

template <typename T>
void col2im_2d(const T* col, int c, int h, int w, int kh, int kw,
               int sh, int sw, int ph, int pw, int ho, int wo, T* x) {
    const std::int64_t cols = static_cast<std::int64_t>(ho) * wo;
    for (int ch = 0; ch < c; ++ch) {
        T* plane = x + static_cast<std::int64_t>(ch) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const T* row = col + ((static_cast<std::int64_t>(ch) * kh + ki) * kw + kj) * cols;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * sh - ph + ki;
                    if (ih < 0 || ih >= h) continue;
                    const T* src = row + static_cast<std::int64_t>(oh) * wo;
                    T* dst = plane + static_cast<std::int64_t>(ih) * w;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * sw - pw + kj;
                        if (iw >= 0 && iw < w) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

template <typename T>
void im2col_3d(const T* x, int c, int d, int h, int w, int kt, int kh, int kw,
               int st, int sh, int sw, int pt, int ph, int pw,
               int to, int ho, int wo, T* col) {
    const std::int64_t cols = static_cast<std::int64_t>(to) * ho * wo;
    for (int ch = 0; ch < c; ++ch) {
        const T* vol = x + static_cast<std::int64_t>(ch) * d * h * w;
        for (int kt_i = 0; kt_i < kt; ++kt_i) {
            for (int ki = 0; ki < kh; ++ki) {
                for (int kj = 0; kj < kw; ++kj) {
                    T* row = col + (((static_cast<std::int64_t>(ch) * kt + kt_i) * kh + ki) * kw + kj) * cols;
                    for (int ot = 0; ot < to; ++ot) {
                        const int it = ot * st - pt + kt_i;
                        for (int oh = 0; oh < ho; ++oh) {
                            const int ih = oh * sh - ph + ki;
                            T* dst = row + (static_cast<std::int64_t>(ot) * ho + oh) * wo;
                            if (it < 0 || it >= d || ih < 0 || ih >= h) {
                                for (int ow = 0; ow < wo; ++ow) dst[ow] = T(0);
                                continue;
                            }
                            gather_row(vol + (static_cast<std::int64_t>(it) * h + ih) * w, w, kj, sw, pw, wo, dst);
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_3d(const T* col, int c, int d, int h, int w, int kt, int kh, int kw,
               int st, int sh, int sw, int pt, int ph, int pw,
               int to, int ho, int wo, T* x) {
    const std::int64_t cols = static_cast<std::int64_t>(to) * ho * wo;
    for (int ch = 0; ch < c; ++ch) {
        T* vol = x + static_cast<std::int64_t>(ch) * d * h * w;
        for (int kt_i = 0; kt_i < kt; ++kt_i) {
            for (int ki = 0; ki < kh; ++ki) {
                for (int kj = 0; kj < kw; ++kj) {
                    const T* row = col + (((static_cast<std::int64_t>(ch) * kt + kt_i) * kh + ki) * kw + kj) * cols;
                    for (int ot = 0; ot < to; ++ot) {
                        const int it = ot * st - pt + kt_i;
                        if (it < 0 || it >= d) continue;
                        for (int oh = 0; oh < ho; ++oh) {
                            const int ih = oh * sh - ph + ki;
                            if (ih < 0 || ih >= h) continue;
                            const T* src = row + (static_cast<std::int64_t>(ot) * ho + oh) * wo;
                            T* dst = vol + (static_cast<std::int64_t>(it) * h + ih) * w;
                            for (int ow = 0; ow < wo; ++ow) {
                                const int iw = ow * sw - pw + kj;
                                if (iw >= 0 && iw < w) dst[iw] += src[ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

} // namespace detail

// Grouped 2-D cross-correlation with zero padding. x: N×Cin×H×W,
// w: Cout×(Cin/g)×kh×kw, b: Cout or empty. Depth-wise is groups == Cin.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 const Conv2dSpec& spec) {
    if (x.ndim() != 4 || w.ndim() != 4) {
        throw ShapeError("conv2d: expected x N×Cin×H×W and w Cout×Cg×kh×kw");
    }
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int g = spec.groups;
    if (g < 1 || cin % g != 0 || cout % g != 0) {
        throw ConfigError("conv2d: channels not divisible by groups (" + std::to_string(cin) + "/" +
                          std::to_string(cout) + " by " + std::to_string(g) + ")");
    }
    if (cg != cin / g) {
        throw ShapeError("conv2d: weight expects " + std::to_string(cg) + " channels per group, input provides " +
                         std::to_string(cin / g));
    }
    if (!b.empty() && (b.ndim() != 1 || b.dim(0) != cout)) {
        throw ShapeError("conv2d: bias must have Cout entries");
    }
    const int ho = detail::conv_extent(h, kh, spec.stride_h, spec.pad_h, "conv2d");
    const int wo = detail::conv_extent(wd, kw, spec.stride_w, spec.pad_w, "conv2d");
    const int cog = cout / g;
    const std::int64_t cols = static_cast<std::int64_t>(ho) * wo;
    const std::int64_t krows = static_cast<std::int64_t>(cg) * kh * kw;
    // 1x1 stride-1 convolutions skip im2col: the input block already is the
    // column matrix
    const bool pointwise = kh == 1 && kw == 1 && spec.stride_h == 1 && spec.stride_w == 1 &&
                           spec.pad_h == 0 && spec.pad_w == 0;

    Tensor<T> out(Shape{n, cout, ho, wo});
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(krows * cols));
    const T* px = x.data();
    const T* pw = w.data();
    T* po = out.data();
    for (int ni = 0; ni < n; ++ni) {
        for (int gi = 0; gi < g; ++gi) {
            const T* xg = px + (static_cast<std::int64_t>(ni) * cin + static_cast<std::int64_t>(gi) * cg) * h * wd;
            const T* colg = xg;
            if (!pointwise) {
                detail::im2col_2d(xg, cg, h, wd, kh, kw, spec.stride_h, spec.stride_w,
                                  spec.pad_h, spec.pad_w, ho, wo, col.data());
                colg = col.data();
            }
            const T* wg = pw + static_cast<std::int64_t>(gi) * cog * krows;
            T* og = po + (static_cast<std::int64_t>(ni) * cout + static_cast<std::int64_t>(gi) * cog) * cols;
            gemm(false, false, cog, static_cast<int>(cols), static_cast<int>(krows),
                 T(1), wg, static_cast<int>(krows), colg, static_cast<int>(cols),
                 T(0), og, static_cast<int>(cols));
        }
    }
    if (!b.empty()) {
        const T* pb = b.data();
        for (int ni = 0; ni < n; ++ni) {
            for (int co = 0; co < cout; ++co) {
                T* plane = po + (static_cast<std::int64_t>(ni) * cout + co) * cols;
                const T bv = pb[co];
                for (std::int64_t i = 0; i < cols; ++i) plane[i] += bv;
            }
        }
    }

    if (Tape<T>* tp = tape_of(x, w, b)) {
        const int nx = x.node(), nw = w.node(), nb = b.node();
        auto sx = x.storage();
        auto sw = w.storage();
        const Conv2dSpec sp = spec;
        tp->record(out, [nx, nw, nb, sx, sw, sp, n, cin, h, wd, cout, cg, kh, kw, ho, wo,
                         g, cog, cols, krows, pointwise](Tape<T>& t, const std::vector<T>& gr) {
            auto* gx = t.grad_buffer(nx);
            auto* gw = t.grad_buffer(nw);
            auto* gb = t.grad_buffer(nb);
            std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(krows * cols));
            std::vector<T> dcol((gx && !pointwise) ? static_cast<std::size_t>(krows * cols) : 0);
            for (int ni = 0; ni < n; ++ni) {
                for (int gi = 0; gi < g; ++gi) {
                    const T* grad_og = gr.data() +
                        (static_cast<std::int64_t>(ni) * cout + static_cast<std::int64_t>(gi) * cog) * cols;
                    if (gw) {
                        const T* xg = sx->data() +
                            (static_cast<std::int64_t>(ni) * cin + static_cast<std::int64_t>(gi) * cg) * h * wd;
                        const T* colg = xg;
                        if (!pointwise) {
                            detail::im2col_2d(xg, cg, h, wd, kh, kw, sp.stride_h, sp.stride_w,
                                              sp.pad_h, sp.pad_w, ho, wo, col.data());
                            colg = col.data();
                        }
                        T* gwg = gw->data() + static_cast<std::int64_t>(gi) * cog * krows;
                        gemm(false, true, cog, static_cast<int>(krows), static_cast<int>(cols),
                             T(1), grad_og, static_cast<int>(cols), colg, static_cast<int>(cols),
                             T(1), gwg, static_cast<int>(krows));
                    }
                    if (gx) {
                        const T* wg = sw->data() + static_cast<std::int64_t>(gi) * cog * krows;
                        T* gxg = gx->data() +
                            (static_cast<std::int64_t>(ni) * cin + static_cast<std::int64_t>(gi) * cg) * h * wd;
                        if (pointwise) {
                            gemm(true, false, static_cast<int>(krows), static_cast<int>(cols), cog,
                                 T(1), wg, static_cast<int>(krows), grad_og, static_cast<int>(cols),
                                 T(1), gxg, static_cast<int>(cols));
                        } else {
                            gemm(true, false, static_cast<int>(krows), static_cast<int>(cols), cog,
                                 T(1), wg, static_cast<int>(krows), grad_og, static_cast<int>(cols),
                                 T(0), dcol.data(), static_cast<int>(cols));
                            detail::col2im_2d(dcol.data(), cg, h, wd, kh, kw, sp.stride_h, sp.stride_w,
                                              sp.pad_h, sp.pad_w, ho, wo, gxg);
                        }
                    }
                }
            }
            if (gb) {
                for (int ni = 0; ni < n; ++ni) {
                    for (int co = 0; co < cout; ++co) {
                        const T* plane = gr.data() + (static_cast<std::int64_t>(ni) * cout + co) * cols;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < cols; ++i) acc += static_cast<double>(plane[i]);
                        (*gb)[static_cast<std::size_t>(co)] += static_cast<T>(acc);
                    }
                }
            }
        });
    }
    return out;
}

// Grouped 3-D cross-correlation over (T,H,W) volumes. x: N×Cin×D×H×W,
// w: Cout×(Cin/g)×kt×kh×kw.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 const Conv3dSpec& spec) {
    if (x.ndim() != 5 || w.ndim() != 5) {
        throw ShapeError("conv3d: expected x N×Cin×D×H×W and w Cout×Cg×kt×kh×kw");
    }
    const int n = x.dim(0), cin = x.dim(1), d = x.dim(2), h = x.dim(3), wd = x.dim(4);
    const int cout = w.dim(0), cg = w.dim(1), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const int g = spec.groups;
    if (g < 1 || cin % g != 0 || cout % g != 0) {
        throw ConfigError("conv3d: channels not divisible by groups");
    }
    if (cg != cin / g) {
        throw ShapeError("conv3d: weight group-channel mismatch");
    }
    if (!b.empty() && (b.ndim() != 1 || b.dim(0) != cout)) {
        throw ShapeError("conv3d: bias must have Cout entries");
    }
    const int to = detail::conv_extent(d, kt, spec.stride_t, spec.pad_t, "conv3d");
    const int ho = detail::conv_extent(h, kh, spec.stride_h, spec.pad_h, "conv3d");
    const int wo = detail::conv_extent(wd, kw, spec.stride_w, spec.pad_w, "conv3d");
    const int cog = cout / g;
    const std::int64_t cols = static_cast<std::int64_t>(to) * ho * wo;
    const std::int64_t krows = static_cast<std::int64_t>(cg) * kt * kh * kw;

    Tensor<T> out(Shape{n, cout, to, ho, wo});
    std::vector<T> col(static_cast<std::size_t>(krows * cols));
    const T* px = x.data();
    const T* pw = w.data();
    T* po = out.data();
    for (int ni = 0; ni < n; ++ni) {
        for (int gi = 0; gi < g; ++gi) {
            const T* xg = px + (static_cast<std::int64_t>(ni) * cin + static_cast<std::int64_t>(gi) * cg) * d * h * wd;
            detail::im2col_3d(xg, cg, d, h, wd, kt, kh, kw, spec.stride_t, spec.stride_h, spec.stride_w,
                              spec.pad_t, spec.pad_h, spec.pad_w, to, ho, wo, col.data());
            const T* wg = pw + static_cast<std::int64_t>(gi) * cog * krows;
            T* og = po + (static_cast<std::int64_t>(ni) * cout + static_cast<std::int64_t>(gi) * cog) * cols;
            gemm(false, false, cog, static_cast<int>(cols), static_cast<int>(krows),
                 T(1), wg, static_cast<int>(krows), col.data(), static_cast<int>(cols),
                 T(0), og, static_cast<int>(cols));
        }
    }
    if (!b.empty()) {
        const T* pb = b.data();
        for (int ni = 0; ni < n; ++ni) {
            for (int co = 0; co < cout; ++co) {
                T* plane = po + (static_cast<std::int64_t>(ni) * cout + co) * cols;
                const T bv = pb[co];
                for (std::int64_t i = 0; i < cols; ++i) plane[i] += bv;
            }
        }
    }

    if (Tape<T>* tp = tape_of(x, w, b)) {
        const int nx = x.node(), nw = w.node(), nb = b.node();
        auto sx = x.storage();
        auto sw = w.storage();
        const Conv3dSpec sp = spec;
        tp->record(out, [nx, nw, nb, sx, sw, sp, n, cin, d, h, wd, cout, cg, kt, kh, kw,
                         to, ho, wo, g, cog, cols, krows](Tape<T>& t, const std::vector<T>& gr) {
            auto* gx = t.grad_buffer(nx);
            auto* gw = t.grad_buffer(nw);
            auto* gb = t.grad_buffer(nb);
            std::vector<T> col(static_cast<std::size_t>(krows * cols));
            std::vector<T> dcol(gx ? static_cast<std::size_t>(krows * cols) : 0);
            for (int ni = 0; ni < n; ++ni) {
                for (int gi = 0; gi < g; ++gi) {
                    const T* grad_og = gr.data() +
                        (static_cast<std::int64_t>(ni) * cout + static_cast<std::int64_t>(gi) * cog) * cols;
                    if (gw) {
                        const T* xg = sx->data() +
                            (static_cast<std::int64_t>(ni) * cin + static_cast<std::int64_t>(gi) * cg) * d * h * wd;
                        detail::im2col_3d(xg, cg, d, h, wd, kt, kh, kw, sp.stride_t, sp.stride_h, sp.stride_w,
                                          sp.pad_t, sp.pad_h, sp.pad_w, to, ho, wo, col.data());
                        T* gwg = gw->data() + static_cast<std::int64_t>(gi) * cog * krows;
                        gemm(false, true, cog, static_cast<int>(krows), static_cast<int>(cols),
                             T(1), grad_og, static_cast<int>(cols), col.data(), static_cast<int>(cols),
                             T(1), gwg, static_cast<int>(krows));
                    }
                    if (gx) {
                        const T* wg = sw->data() + static_cast<std::int64_t>(gi) * cog * krows;
                        gemm(true, false, static_cast<int>(krows), static_cast<int>(cols), cog,
                             T(1), wg, static_cast<int>(krows), grad_og, static_cast<int>(cols),
                             T(0), dcol.data(), static_cast<int>(cols));
                        T* gxg = gx->data() +
                            (static_cast<std::int64_t>(ni) * cin + static_cast<std::int64_t>(gi) * cg) * d * h * wd;
                        detail::col2im_3d(dcol.data(), cg, d, h, wd, kt, kh, kw, sp.stride_t, sp.stride_h,
                                          sp.stride_w, sp.pad_t, sp.pad_h, sp.pad_w, to, ho, wo, gxg);
                    }
                }
            }
            if (gb) {
                for (int ni = 0; ni < n; ++ni) {
                    for (int co = 0; co < cout; ++co) {
                        const T* plane = gr.data() + (static_cast<std::int64_t>(ni) * cout + co) * cols;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < cols; ++i) acc += static_cast<double>(plane[i]);
                        (*gb)[static_cast<std::size_t>(co)] += static_cast<T>(acc);
                    }
                }
            }
        });
    }
    return out;
}

} // namespace daevi
