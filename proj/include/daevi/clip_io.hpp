#pragma once

#include <string>

#include "daevi/tensor.hpp"

namespace daevi {

// Binary clip container "DVT1": magic, little-endian u32 T,H,W,C, then
// T*H*W*C little-endian float32 values in planar frame-major (t,c,h,w)
// order. Round trips are bit-exact.
void write_clip(const std::string& path, const Tensor<float>& clip);
Tensor<float> read_clip(const std::string& path);

// 8-bit interchange: a directory of P6 PPM frames (frame_00000.ppm, ...) for
// 3-channel clips, and P5 PGM files for 1-channel masks/depth (0 byte =
// corrupted under the mask convention).
void write_ppm_frames(const std::string& dir, const Tensor<float>& clip);
Tensor<float> read_ppm_frames(const std::string& dir);
void write_pgm_frames(const std::string& dir, const Tensor<float>& planes);
Tensor<float> read_pgm_frames(const std::string& dir);

// Reads either a DVT1 container or a PPM/PGM frame directory.
Tensor<float> read_clip_any(const std::string& path);

} // namespace daevi
