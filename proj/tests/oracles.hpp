#pragma once

// Reference implementations used as independent oracles. These deliberately
// take the dumbest possible route (nested loops, explicit formulas) and must
// not share code with the library paths they check.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "daevi/tensor.hpp"

namespace oracle {

template <typename T>
daevi::Tensor<T> matmul_triple_loop(const daevi::Tensor<T>& a, const daevi::Tensor<T>& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    daevi::Tensor<T> out(daevi::Shape{m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += static_cast<double>(a.at(static_cast<std::int64_t>(i) * k + p)) *
                       static_cast<double>(b.at(static_cast<std::int64_t>(p) * n + j));
            }
            out.at(static_cast<std::int64_t>(i) * n + j) = static_cast<T>(acc);
        }
    }
    return out;
}

// Direct grouped 2-D cross-correlation, six nested loops per output element.
template <typename T>
daevi::Tensor<T> conv2d_loops(const daevi::Tensor<T>& x, const daevi::Tensor<T>& w,
                              const daevi::Tensor<T>& b, int sh, int sw, int ph, int pw, int groups) {
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int ho = (h + 2 * ph - kh) / sh + 1;
    const int wo = (wd + 2 * pw - kw) / sw + 1;
    const int cog = cout / groups;
    daevi::Tensor<T> out(daevi::Shape{n, cout, ho, wo});
    auto xat = [&](int ni, int c, int i, int j) -> double {
        if (i < 0 || i >= h || j < 0 || j >= wd) return 0.0;
        return static_cast<double>(x.at(((static_cast<std::int64_t>(ni) * cin + c) * h + i) * wd + j));
    };
    for (int ni = 0; ni < n; ++ni) {
        for (int co = 0; co < cout; ++co) {
            const int gi = co / cog;
            for (int oh = 0; oh < ho; ++oh) {
                for (int ow = 0; ow < wo; ++ow) {
                    double acc = b.empty() ? 0.0 : static_cast<double>(b.at(co));
                    for (int ci = 0; ci < cg; ++ci) {
                        for (int ki = 0; ki < kh; ++ki) {
                            for (int kj = 0; kj < kw; ++kj) {
                                const double xv = xat(ni, gi * cg + ci, oh * sh - ph + ki, ow * sw - pw + kj);
                                const double wv = static_cast<double>(
                                    w.at(((static_cast<std::int64_t>(co) * cg + ci) * kh + ki) * kw + kj));
                                acc += xv * wv;
                            }
                        }
                    }
                    out.at(((static_cast<std::int64_t>(ni) * cout + co) * ho + oh) * wo + ow) = static_cast<T>(acc);
                }
            }
        }
    }
    return out;
}

template <typename T>
daevi::Tensor<T> conv3d_loops(const daevi::Tensor<T>& x, const daevi::Tensor<T>& w,
                              const daevi::Tensor<T>& b, int st, int sh, int sw,
                              int pt, int ph, int pw, int groups) {
    const int n = x.dim(0), cin = x.dim(1), d = x.dim(2), h = x.dim(3), wd = x.dim(4);
    const int cout = w.dim(0), cg = w.dim(1), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const int to = (d + 2 * pt - kt) / st + 1;
    const int ho = (h + 2 * ph - kh) / sh + 1;
    const int wo = (wd + 2 * pw - kw) / sw + 1;
    const int cog = cout / groups;
    daevi::Tensor<T> out(daevi::Shape{n, cout, to, ho, wo});
    auto xat = [&](int ni, int c, int t, int i, int j) -> double {
        if (t < 0 || t >= d || i < 0 || i >= h || j < 0 || j >= wd) return 0.0;
        return static_cast<double>(
            x.at((((static_cast<std::int64_t>(ni) * cin + c) * d + t) * h + i) * wd + j));
    };
    for (int ni = 0; ni < n; ++ni) {
        for (int co = 0; co < cout; ++co) {
            const int gi = co / cog;
            for (int ot = 0; ot < to; ++ot) {
                for (int oh = 0; oh < ho; ++oh) {
                    for (int ow = 0; ow < wo; ++ow) {
                        double acc = b.empty() ? 0.0 : static_cast<double>(b.at(co));
                        for (int ci = 0; ci < cg; ++ci) {
                            for (int kt_i = 0; kt_i < kt; ++kt_i) {
                                for (int ki = 0; ki < kh; ++ki) {
                                    for (int kj = 0; kj < kw; ++kj) {
                                        const double xv = xat(ni, gi * cg + ci, ot * st - pt + kt_i,
                                                              oh * sh - ph + ki, ow * sw - pw + kj);
                                        const double wv = static_cast<double>(w.at(
                                            ((((static_cast<std::int64_t>(co) * cg + ci) * kt + kt_i) * kh + ki) * kw + kj)));
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        out.at((((static_cast<std::int64_t>(ni) * cout + co) * to + ot) * ho + oh) * wo + ow) =
                            static_cast<T>(acc);
                    }
                }
            }
        }
    }
    return out;
}

// Exp-normalization of one row in long double, no max subtraction trickery
// beyond what the direct formula needs.
inline std::vector<double> softmax_row_direct(const std::vector<double>& row) {
    long double mx = -std::numeric_limits<long double>::infinity();
    for (double v : row) mx = std::max(mx, static_cast<long double>(v));
    std::vector<double> out(row.size(), 0.0);
    if (mx == -std::numeric_limits<long double>::infinity()) {
        return out;
    }
    long double z = 0.0L;
    for (double v : row) {
        if (v == -std::numeric_limits<double>::infinity()) continue;
        z += std::exp(static_cast<long double>(v) - mx);
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (row[i] == -std::numeric_limits<double>::infinity()) {
            out[i] = 0.0;
        } else {
            out[i] = static_cast<double>(std::exp(static_cast<long double>(row[i]) - mx) / z);
        }
    }
    return out;
}

template <typename T>
double max_abs_diff(const daevi::Tensor<T>& a, const daevi::Tensor<T>& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a.at(i)) - static_cast<double>(b.at(i))));
    }
    return m;
}

} // namespace oracle
