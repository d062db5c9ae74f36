#include "daevi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "daevi/error.hpp"

namespace daevi {

namespace {

void check_metric_inputs(const Tensor<float>& pred, const Tensor<float>& truth, const Tensor<float>& mask) {
    if (pred.ndim() != 4 || pred.dim(1) != 3) {
        throw ShapeError("metrics: expected pred T×3×H×W, got " + shape_str(pred.shape()));
    }
    check_same_shape(pred.shape(), truth.shape(), "metrics");
    if (mask.ndim() != 4 || mask.dim(1) != 1 || mask.dim(0) != pred.dim(0) ||
        mask.dim(2) != pred.dim(2) || mask.dim(3) != pred.dim(3)) {
        throw ShapeError("metrics: mask " + shape_str(mask.shape()) + " does not match " +
                         shape_str(pred.shape()));
    }
}

std::int64_t corrupted_count(const Tensor<float>& mask) {
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < mask.size(); ++i) {
        if (mask.at(i) < 0.5f) ++n;
    }
    return n;
}

// Gaussian taps for the SSIM window.
std::vector<double> gaussian_kernel(int radius, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable filtering with border renormalization: out = filter(img) /
// filter(ones), evaluated by tracking the in-bounds weight mass per position.
void filter_plane(const double* img, int h, int w, const std::vector<double>& k,
                  std::vector<double>& tmp, std::vector<double>& out,
                  std::vector<double>& wtmp, std::vector<double>& wout) {
    const int radius = static_cast<int>(k.size() / 2);
    tmp.assign(static_cast<std::size_t>(h) * w, 0.0);
    wtmp.assign(static_cast<std::size_t>(h) * w, 0.0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double acc = 0.0, wacc = 0.0;
            for (int d = -radius; d <= radius; ++d) {
                const int jj = j + d;
                if (jj < 0 || jj >= w) continue;
                const double kv = k[static_cast<std::size_t>(d + radius)];
                acc += kv * img[static_cast<std::size_t>(i) * w + jj];
                wacc += kv;
            }
            tmp[static_cast<std::size_t>(i) * w + j] = acc;
            wtmp[static_cast<std::size_t>(i) * w + j] = wacc;
        }
    }
    out.assign(static_cast<std::size_t>(h) * w, 0.0);
    wout.assign(static_cast<std::size_t>(h) * w, 0.0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double acc = 0.0, wacc = 0.0;
            for (int d = -radius; d <= radius; ++d) {
                const int ii = i + d;
                if (ii < 0 || ii >= h) continue;
                const double kv = k[static_cast<std::size_t>(d + radius)];
                acc += kv * tmp[static_cast<std::size_t>(ii) * w + j];
                wacc += kv * wtmp[static_cast<std::size_t>(ii) * w + j];
            }
            out[static_cast<std::size_t>(i) * w + j] = acc / wacc;
            wout[static_cast<std::size_t>(i) * w + j] = wacc;
        }
    }
}

} // namespace

double mse_crop(const Tensor<float>& pred, const Tensor<float>& truth, const Tensor<float>& mask) {
    check_metric_inputs(pred, truth, mask);
    const std::int64_t ncorr = corrupted_count(mask);
    if (ncorr == 0) {
        throw ContractError("mse_crop: mask marks no corrupted pixels");
    }
    const int t = pred.dim(0), h = pred.dim(2), w = pred.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    double acc = 0.0;
    for (int ti = 0; ti < t; ++ti) {
        const float* mp = mask.data() + static_cast<std::int64_t>(ti) * plane;
        for (int c = 0; c < 3; ++c) {
            const float* pp = pred.data() + (static_cast<std::int64_t>(ti) * 3 + c) * plane;
            const float* tp = truth.data() + (static_cast<std::int64_t>(ti) * 3 + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                if (mp[i] < 0.5f) {
                    const double d = 255.0 * (static_cast<double>(pp[i]) - static_cast<double>(tp[i]));
                    acc += d * d;
                }
            }
        }
    }
    return acc / (3.0 * static_cast<double>(ncorr));
}

double psnr_crop(const Tensor<float>& pred, const Tensor<float>& truth, const Tensor<float>& mask) {
    const double mse = mse_crop(pred, truth, mask);
    if (mse == 0.0) {
        return 99.0;
    }
    return std::min(99.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim_crop(const Tensor<float>& pred, const Tensor<float>& truth, const Tensor<float>& mask) {
    check_metric_inputs(pred, truth, mask);
    const std::int64_t ncorr = corrupted_count(mask);
    if (ncorr == 0) {
        throw ContractError("ssim_crop: mask marks no corrupted pixels");
    }
    const int t = pred.dim(0), h = pred.dim(2), w = pred.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const auto kernel = gaussian_kernel(5, 1.5);
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);

    std::vector<double> x(static_cast<std::size_t>(plane)), y(static_cast<std::size_t>(plane));
    std::vector<double> xx(static_cast<std::size_t>(plane)), yy(static_cast<std::size_t>(plane)),
        xy(static_cast<std::size_t>(plane));
    std::vector<double> mu_x, mu_y, m_xx, m_yy, m_xy, tmp, wtmp, wout;

    double acc = 0.0;
    std::int64_t count = 0;
    for (int ti = 0; ti < t; ++ti) {
        const float* mp = mask.data() + static_cast<std::int64_t>(ti) * plane;
        for (int c = 0; c < 3; ++c) {
            const float* pp = pred.data() + (static_cast<std::int64_t>(ti) * 3 + c) * plane;
            const float* tp = truth.data() + (static_cast<std::int64_t>(ti) * 3 + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                // valid pixels are taken from the ground truth, so windows see
                // real context and pred's valid region cannot move the score
                const float pv = mp[i] < 0.5f ? pp[i] : tp[i];
                x[static_cast<std::size_t>(i)] = 255.0 * static_cast<double>(pv);
                y[static_cast<std::size_t>(i)] = 255.0 * static_cast<double>(tp[i]);
                xx[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
                yy[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
                xy[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
            }
            filter_plane(x.data(), h, w, kernel, tmp, mu_x, wtmp, wout);
            filter_plane(y.data(), h, w, kernel, tmp, mu_y, wtmp, wout);
            filter_plane(xx.data(), h, w, kernel, tmp, m_xx, wtmp, wout);
            filter_plane(yy.data(), h, w, kernel, tmp, m_yy, wtmp, wout);
            filter_plane(xy.data(), h, w, kernel, tmp, m_xy, wtmp, wout);
            for (std::int64_t i = 0; i < plane; ++i) {
                if (mp[i] >= 0.5f) continue;
                const double mx = mu_x[static_cast<std::size_t>(i)];
                const double my = mu_y[static_cast<std::size_t>(i)];
                const double vx = m_xx[static_cast<std::size_t>(i)] - mx * mx;
                const double vy = m_yy[static_cast<std::size_t>(i)] - my * my;
                const double cov = m_xy[static_cast<std::size_t>(i)] - mx * my;
                const double v = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                                 ((mx * mx + my * my + c1) * (vx + vy + c2));
                acc += v;
                ++count;
            }
        }
    }
    return acc / static_cast<double>(count);
}

} // namespace daevi
