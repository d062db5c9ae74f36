#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "daevi/rng.hpp"
#include "daevi/tensor.hpp"

namespace daevi {

// Central-difference gradient of a deterministic scalar function. f must read
// x through its storage at call time (the probe mutates x in place and
// restores it). Nondeterministic f gives undefined results.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T()>& f, Tensor<T>& x, T eps = static_cast<T>(1e-4)) {
    if (eps <= T(0)) {
        throw ContractError("finite_diff_grad: eps must be positive");
    }
    Tensor<T> grad(x.shape());
    T* px = x.data();
    T* pg = grad.data();
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const T saved = px[i];
        px[i] = saved + eps;
        const T fp = f();
        px[i] = saved - eps;
        const T fm = f();
        px[i] = saved;
        pg[i] = (fp - fm) / (T(2) * eps);
    }
    return grad;
}

struct FdReport {
    double max_rel_err = 0.0;
    std::int64_t coords_checked = 0;
    std::int64_t coords_excluded = 0;

    bool pass(double tol) const { return max_rel_err <= tol; }
};

// Compares an analytic gradient against central differences on up to
// max_coords coordinates (all of them when max_coords <= 0). The error is
// normalized by max(1, |analytic|_inf, |fd|_inf) over the checked set.
//
// Each coordinate is probed at eps and eps/2. Where the two estimates do not
// converge the probe straddles an activation kink (relu-family subgradient
// points form a measure-zero set where central differences are undefined);
// such coordinates are excluded, capped at a quarter of the set so a
// genuinely wrong backward — whose estimates converge to the wrong value —
// can never hide behind the exclusion.
template <typename T>
FdReport fd_compare(const std::function<T()>& f, Tensor<T>& x, const Tensor<T>& analytic,
                    T eps, std::int64_t max_coords = 0, SplitMix64* rng = nullptr) {
    check_same_shape(x.shape(), analytic.shape(), "fd_compare");
    std::vector<std::int64_t> coords;
    const std::int64_t n = x.size();
    if (max_coords <= 0 || max_coords >= n) {
        coords.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
        SplitMix64 local(0xC0FFEE);
        SplitMix64& r = rng ? *rng : local;
        std::vector<std::int64_t> all(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
        for (std::int64_t i = 0; i < max_coords; ++i) {
            const std::int64_t j = i + static_cast<std::int64_t>(r.next_below(static_cast<std::uint64_t>(n - i)));
            std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
        }
        coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(max_coords));
    }

    T* px = x.data();
    const T* pa = analytic.data();
    auto central = [&](std::int64_t ci, T step) {
        const T saved = px[ci];
        px[ci] = saved + step;
        const double fp = static_cast<double>(f());
        px[ci] = saved - step;
        const double fm = static_cast<double>(f());
        px[ci] = saved;
        return (fp - fm) / (2.0 * static_cast<double>(step));
    };

    double max_abs_err = 0.0;
    double scale = 1.0;
    std::int64_t excluded = 0;
    for (std::int64_t ci : coords) {
        const double fd1 = central(ci, eps);
        const double fd2 = central(ci, eps / T(2));
        if (std::abs(fd1 - fd2) > std::max(1e-6, 1e-3 * std::max(std::abs(fd1), std::abs(fd2)))) {
            ++excluded;
            continue;
        }
        const double an = static_cast<double>(pa[ci]);
        max_abs_err = std::max(max_abs_err, std::abs(an - fd2));
        scale = std::max({scale, std::abs(an), std::abs(fd2)});
    }
    FdReport rep;
    rep.coords_checked = static_cast<std::int64_t>(coords.size()) - excluded;
    rep.coords_excluded = excluded;
    rep.max_rel_err = max_abs_err / scale;
    if (excluded * 4 > static_cast<std::int64_t>(coords.size())) {
        rep.max_rel_err = std::numeric_limits<double>::infinity();
    }
    return rep;
}

} // namespace daevi
