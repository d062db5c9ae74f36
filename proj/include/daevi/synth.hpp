#pragma once

#include <cstdint>

#include "daevi/tensor.hpp"

namespace daevi {

// Procedural endoscopy-like tube interior. Every field that moves over time
// has its own rate so a fully static scene (all rates zero) is expressible.
// The same seed always produces bit-identical frames and depth.
struct SyntheticScene {
    std::uint64_t seed = 1;
    int polyps = 3;
    double camera_drift = 0.4;     // amplitude of the tube-center drift, fraction of frame
    double polyp_speed = 0.5;      // angular/radial drift rate of the polyp disks
    double texture_drift = 0.7;    // phase velocity of the sinusoidal wall texture
    double texture_strength = 0.25;
};

template <typename T>
struct ClipWithDepth {
    Tensor<T> frames; // T×3×H×W in [0,1]
    Tensor<T> depth;  // T×1×H×W in [0,1]
};

// Tube center of the scene at frame t, in pixel coordinates (x, y).
void scene_center(const SyntheticScene& scene, int frame, int h, int w, double* cx, double* cy);

// Frames plus pixel-aligned analytic depth (normalized radial distance with
// polyp bumps). H and W must be divisible by 4, t >= 1.
ClipWithDepth<float> generate_clip(const SyntheticScene& scene, int t, int h, int w);

// Seeded corruption masks: drifting specular-style blobs plus an optional
// instrument-style bar, calibrated so the realized corrupted fraction lands
// within fraction ± 0.03 (0 = corrupted, 1 = valid).
struct MaskSpec {
    std::uint64_t seed = 7;
    double fraction = 0.08;
    int min_blobs = 2;
    int max_blobs = 5;
    bool instrument_bar = true;
};

Tensor<float> generate_masks(const MaskSpec& spec, int t, int h, int w);

} // namespace daevi
