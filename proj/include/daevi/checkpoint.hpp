#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "daevi/tensor.hpp"

namespace daevi {

// Checkpoint container "DVCK": magic, u32 version, then little-endian u64
// config hash / iteration / rng state / both Adam step counters, and
// name-length-prefixed float32 tensor blocks. Round trips are bit-exact.
struct Snapshot {
    std::uint64_t config_hash = 0;
    std::uint64_t iteration = 0;
    std::uint64_t rng_state = 0;
    std::uint64_t gen_adam_step = 0;
    std::uint64_t ded_adam_step = 0;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

void save_snapshot(const std::string& path, const Snapshot& snap);
Snapshot load_snapshot(const std::string& path);

} // namespace daevi
