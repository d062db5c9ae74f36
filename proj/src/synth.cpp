#include "daevi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "daevi/error.hpp"
#include "daevi/rng.hpp"

namespace daevi {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Polyp {
    double orbit_radius;  // fraction of the tube radius, kept in [0.3, 0.7]
    double angle0;
    double angular_rate;
    double radius;        // disk radius as a fraction of min(H, W)
    double bump;          // depth modification height
    double tint_r, tint_g, tint_b;
};

struct SceneState {
    double drift_ax, drift_ay;     // drift amplitudes (fraction of frame)
    double drift_wx, drift_wy;     // drift angular rates
    double drift_px, drift_py;     // drift phases
    double tex_k_angle, tex_k_radius;
    double tex_phase;
    std::vector<Polyp> polyps;
};

SceneState setup_scene(const SyntheticScene& scene) {
    SplitMix64 rng(scene.seed);
    SceneState st;
    st.drift_ax = scene.camera_drift * rng.uniform(0.04, 0.10);
    st.drift_ay = scene.camera_drift * rng.uniform(0.04, 0.10);
    st.drift_wx = rng.uniform(0.15, 0.45);
    st.drift_wy = rng.uniform(0.15, 0.45);
    st.drift_px = rng.uniform(0.0, kTwoPi);
    st.drift_py = rng.uniform(0.0, kTwoPi);
    st.tex_k_angle = std::floor(rng.uniform(3.0, 7.0));
    st.tex_k_radius = rng.uniform(6.0, 12.0);
    st.tex_phase = rng.uniform(0.0, kTwoPi);
    for (int i = 0; i < scene.polyps; ++i) {
        Polyp p;
        p.orbit_radius = rng.uniform(0.30, 0.70);
        p.angle0 = rng.uniform(0.0, kTwoPi);
        p.angular_rate = scene.polyp_speed * rng.uniform(0.05, 0.20);
        p.radius = rng.uniform(0.06, 0.12);
        p.bump = rng.uniform(0.08, 0.15);
        p.tint_r = rng.uniform(0.55, 0.85);
        p.tint_g = rng.uniform(0.25, 0.45);
        p.tint_b = rng.uniform(0.20, 0.40);
        st.polyps.push_back(p);
    }
    return st;
}

double smoothstep01(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

} // namespace

void scene_center(const SyntheticScene& scene, int frame, int h, int w, double* cx, double* cy) {
    const SceneState st = setup_scene(scene);
    const double t = static_cast<double>(frame);
    *cx = 0.5 * w + st.drift_ax * w * std::sin(st.drift_wx * t + st.drift_px);
    *cy = 0.5 * h + st.drift_ay * h * std::sin(st.drift_wy * t + st.drift_py);
}

ClipWithDepth<float> generate_clip(const SyntheticScene& scene, int t, int h, int w) {
    if (t < 1) {
        throw ConfigError("generate_clip: need at least one frame");
    }
    if (h % 4 != 0 || w % 4 != 0 || h < 8 || w < 8) {
        throw ConfigError("generate_clip: H and W must be >= 8 and divisible by 4, got " +
                          std::to_string(h) + "x" + std::to_string(w));
    }
    const SceneState st = setup_scene(scene);
    ClipWithDepth<float> out;
    out.frames = Tensor<float>(Shape{t, 3, h, w});
    out.depth = Tensor<float>(Shape{t, 1, h, w});
    float* pf = out.frames.data();
    float* pd = out.depth.data();
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;

    for (int ti = 0; ti < t; ++ti) {
        const double ft = static_cast<double>(ti);
        const double cx = 0.5 * w + st.drift_ax * w * std::sin(st.drift_wx * ft + st.drift_px);
        const double cy = 0.5 * h + st.drift_ay * h * std::sin(st.drift_wy * ft + st.drift_py);
        // farthest corner from the current center normalizes the radial field
        double rmax = 0.0;
        for (int corner = 0; corner < 4; ++corner) {
            const double px = (corner & 1) ? w - 1.0 : 0.0;
            const double py = (corner & 2) ? h - 1.0 : 0.0;
            rmax = std::max(rmax, std::hypot(px - cx, py - cy));
        }
        const double tube_r = rmax;

        float* fr = pf + static_cast<std::int64_t>(ti) * 3 * plane;
        float* fg = fr + plane;
        float* fb = fg + plane;
        float* dz = pd + static_cast<std::int64_t>(ti) * plane;

        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const double dx = j - cx;
                const double dy = i - cy;
                const double r = std::hypot(dx, dy) / tube_r; // in [0, 1]
                const double angle = std::atan2(dy, dx);

                double depth = 0.1 + 0.8 * r;

                const double tex = std::sin(st.tex_k_angle * angle + st.tex_k_radius * r * kTwoPi +
                                            st.tex_phase + scene.texture_drift * ft);
                const double brightness = 0.30 + 0.55 * r + scene.texture_strength * 0.5 * tex;
                double cr = brightness * 0.95;
                double cg = brightness * 0.45;
                double cb = brightness * 0.38;

                for (const Polyp& p : st.polyps) {
                    const double ang = p.angle0 + p.angular_rate * ft;
                    const double px = cx + p.orbit_radius * tube_r * 0.5 * std::cos(ang);
                    const double py = cy + p.orbit_radius * tube_r * 0.5 * std::sin(ang);
                    const double pr = p.radius * std::min(h, w);
                    const double d = std::hypot(j - px, i - py);
                    if (d < pr) {
                        const double s = smoothstep01(1.0 - d / pr);
                        depth -= p.bump * s;
                        cr = cr * (1.0 - s) + p.tint_r * s;
                        cg = cg * (1.0 - s) + p.tint_g * s;
                        cb = cb * (1.0 - s) + p.tint_b * s;
                    }
                }

                const std::int64_t idx = static_cast<std::int64_t>(i) * w + j;
                dz[idx] = static_cast<float>(std::clamp(depth, 0.0, 1.0));
                fr[idx] = static_cast<float>(std::clamp(cr, 0.0, 1.0));
                fg[idx] = static_cast<float>(std::clamp(cg, 0.0, 1.0));
                fb[idx] = static_cast<float>(std::clamp(cb, 0.0, 1.0));
            }
        }
    }
    return out;
}

namespace {

struct Blob {
    double x0, y0;        // start center, fraction of frame
    double vx, vy;        // linear drift per frame, fraction of frame
    double wobble_a, wobble_w, wobble_p;
    double rx, ry;        // radii, fraction of min(H, W)
    double angle;
};

struct Bar {
    double x0, y0;
    double angle;
    double width;         // fraction of min(H, W)
    double vx, vy;
};

struct MaskLayout {
    std::vector<Blob> blobs;
    Bar bar;
    bool has_bar = false;
};

MaskLayout setup_masks(const MaskSpec& spec) {
    SplitMix64 rng(spec.seed);
    MaskLayout lay;
    const int count = spec.min_blobs +
        static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.max_blobs - spec.min_blobs + 1)));
    for (int i = 0; i < count; ++i) {
        Blob b;
        b.x0 = rng.uniform(0.15, 0.85);
        b.y0 = rng.uniform(0.15, 0.85);
        b.vx = rng.uniform(-0.01, 0.01);
        b.vy = rng.uniform(-0.01, 0.01);
        b.wobble_a = rng.uniform(0.0, 0.02);
        b.wobble_w = rng.uniform(0.2, 0.8);
        b.wobble_p = rng.uniform(0.0, kTwoPi);
        b.rx = rng.uniform(0.05, 0.12);
        b.ry = rng.uniform(0.04, 0.10);
        b.angle = rng.uniform(0.0, kTwoPi);
        lay.blobs.push_back(b);
    }
    if (spec.instrument_bar && rng.next_double() < 0.75) {
        lay.has_bar = true;
        lay.bar.x0 = rng.uniform(0.2, 0.8);
        lay.bar.y0 = rng.uniform(0.6, 1.0);
        lay.bar.angle = rng.uniform(-0.5, 0.5) + kTwoPi / 4.0;
        lay.bar.width = rng.uniform(0.04, 0.08);
        lay.bar.vx = rng.uniform(-0.008, 0.008);
        lay.bar.vy = rng.uniform(-0.004, 0.004);
    }
    return lay;
}

// Rasterizes the layout at a given size scale; returns the corrupted count.
std::int64_t rasterize(const MaskLayout& lay, double scale, int t, int h, int w, float* data) {
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const double m = std::min(h, w);
    std::int64_t corrupted = 0;
    std::fill(data, data + static_cast<std::int64_t>(t) * plane, 1.0f);
    for (int ti = 0; ti < t; ++ti) {
        float* mk = data + static_cast<std::int64_t>(ti) * plane;
        const double ft = static_cast<double>(ti);
        for (const Blob& b : lay.blobs) {
            const double cx = (b.x0 + b.vx * ft + b.wobble_a * std::sin(b.wobble_w * ft + b.wobble_p)) * w;
            const double cy = (b.y0 + b.vy * ft + b.wobble_a * std::cos(b.wobble_w * ft + b.wobble_p)) * h;
            const double rx = std::max(1.0, b.rx * m * scale);
            const double ry = std::max(1.0, b.ry * m * scale);
            const double ca = std::cos(b.angle), sa = std::sin(b.angle);
            const int ilo = std::max(0, static_cast<int>(cy - rx - ry));
            const int ihi = std::min(h - 1, static_cast<int>(cy + rx + ry));
            const int jlo = std::max(0, static_cast<int>(cx - rx - ry));
            const int jhi = std::min(w - 1, static_cast<int>(cx + rx + ry));
            for (int i = ilo; i <= ihi; ++i) {
                for (int j = jlo; j <= jhi; ++j) {
                    const double ux = (j - cx) * ca + (i - cy) * sa;
                    const double uy = -(j - cx) * sa + (i - cy) * ca;
                    if ((ux * ux) / (rx * rx) + (uy * uy) / (ry * ry) <= 1.0) {
                        mk[static_cast<std::int64_t>(i) * w + j] = 0.0f;
                    }
                }
            }
        }
        if (lay.has_bar) {
            const double cx = (lay.bar.x0 + lay.bar.vx * ft) * w;
            const double cy = (lay.bar.y0 + lay.bar.vy * ft) * h;
            const double half = 0.5 * std::max(1.0, lay.bar.width * m * scale);
            const double ca = std::cos(lay.bar.angle), sa = std::sin(lay.bar.angle);
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    // signed distance to the bar axis; the bar spans the frame
                    const double dist = std::abs(-(j - cx) * sa + (i - cy) * ca);
                    const double along = (j - cx) * ca + (i - cy) * sa;
                    if (dist <= half && along > -0.8 * h) {
                        mk[static_cast<std::int64_t>(i) * w + j] = 0.0f;
                    }
                }
            }
        }
        for (std::int64_t k = 0; k < plane; ++k) {
            if (mk[k] == 0.0f) ++corrupted;
        }
    }
    return corrupted;
}

} // namespace

namespace {

// Grows or erodes the corrupted set along its boundary until exactly `target`
// pixels are corrupted. Deterministic sweep; keeps the blobs blob-shaped.
void trim_to_count(Tensor<float>& mask, int t, int h, int w, std::int64_t target) {
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    float* data = mask.data();
    std::int64_t current = 0;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(t) * plane; ++i) {
        if (data[i] == 0.0f) ++current;
    }
    if (current == target) return;
    if (current == 0 && target > 0) {
        // nothing rasterized at all; seed one pixel per frame to grow from
        for (int ti = 0; ti < t; ++ti) {
            data[ti * plane + (h / 2) * w + w / 2] = 0.0f;
        }
        current = t;
    }
    auto neighbor_differs = [&](const float* mk, int i, int j, float self) {
        const float other = self == 0.0f ? 1.0f : 0.0f;
        return (i > 0 && mk[(i - 1) * w + j] == other) || (i + 1 < h && mk[(i + 1) * w + j] == other) ||
               (j > 0 && mk[i * w + (j - 1)] == other) || (j + 1 < w && mk[i * w + (j + 1)] == other);
    };
    int guard = 0;
    while (current != target && guard++ < 4096) {
        const bool grow = current < target;
        for (int ti = 0; ti < t && current != target; ++ti) {
            float* mk = data + ti * plane;
            for (int i = 0; i < h && current != target; ++i) {
                for (int j = 0; j < w && current != target; ++j) {
                    const float self = mk[i * w + j];
                    if (grow && self == 1.0f && neighbor_differs(mk, i, j, self)) {
                        mk[i * w + j] = 0.0f;
                        ++current;
                    } else if (!grow && self == 0.0f && neighbor_differs(mk, i, j, self)) {
                        mk[i * w + j] = 1.0f;
                        --current;
                    }
                }
            }
        }
    }
}

} // namespace

Tensor<float> generate_masks(const MaskSpec& spec, int t, int h, int w) {
    if (t < 1 || h < 4 || w < 4) {
        throw ConfigError("generate_masks: invalid extents");
    }
    if (spec.fraction < 0.0) {
        throw ConfigError("generate_masks: fraction must be >= 0");
    }
    if (spec.fraction >= 0.5) {
        throw ConfigError("generate_masks: fraction " + std::to_string(spec.fraction) +
                          " leaves too little valid context (must be < 0.5)");
    }
    Tensor<float> mask(Shape{t, 1, h, w});
    if (spec.fraction == 0.0) {
        for (auto& v : mask.vec()) v = 1.0f;
        return mask;
    }
    const MaskLayout lay = setup_masks(spec);
    const std::int64_t total = static_cast<std::int64_t>(t) * h * w;

    // bisection on a global size scale; discrete rasterization can step over
    // the tolerance band at small extents, so a boundary trim finishes the job
    double lo = 0.02, hi = 10.0;
    double best_scale = 1.0;
    double best_err = 1e9;
    for (int iter = 0; iter < 48; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const std::int64_t corrupted = rasterize(lay, mid, t, h, w, mask.data());
        const double frac = static_cast<double>(corrupted) / static_cast<double>(total);
        const double err = std::abs(frac - spec.fraction);
        if (err < best_err) {
            best_err = err;
            best_scale = mid;
        }
        if (err <= 0.01) {
            return mask;
        }
        if (frac < spec.fraction) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    rasterize(lay, best_scale, t, h, w, mask.data());
    trim_to_count(mask, t, h, w, static_cast<std::int64_t>(std::llround(spec.fraction * static_cast<double>(total))));
    return mask;
}

} // namespace daevi
