#pragma once

#include "daevi/tensor.hpp"

namespace daevi {

// Masked-region quality metrics on the 0-255 scale. pred/truth: T×3×H×W in
// [0,1]; mask: T×1×H×W with 0 = corrupted. All three require at least one
// corrupted pixel and evaluate corrupted pixels only, so valid-region changes
// in pred never move them.

double mse_crop(const Tensor<float>& pred, const Tensor<float>& truth, const Tensor<float>& mask);

// 10*log10(255^2 / mse_crop), capped at 99 dB (exactly 99 for zero error).
double psnr_crop(const Tensor<float>& pred, const Tensor<float>& truth, const Tensor<float>& mask);

// Mean SSIM over windows centered on corrupted pixels: 11x11 Gaussian window
// with sigma 1.5, K1 = 0.01, K2 = 0.03, L = 255, channel-averaged. Windows
// are renormalized where they overlap the frame border.
double ssim_crop(const Tensor<float>& pred, const Tensor<float>& truth, const Tensor<float>& mask);

} // namespace daevi
