#include "daevi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "daevi/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace daevi {

namespace {

constexpr char kMagic[4] = {'D', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw DataError(std::string("checkpoint: truncated while reading ") + what);
    }
    return v;
}

} // namespace

void save_snapshot(const std::string& path, const Snapshot& snap) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("checkpoint: cannot open " + path + " for writing");
    }
    os.write(kMagic, 4);
    put(os, kVersion);
    put(os, snap.config_hash);
    put(os, snap.iteration);
    put(os, snap.rng_state);
    put(os, snap.gen_adam_step);
    put(os, snap.ded_adam_step);
    put(os, static_cast<std::uint32_t>(snap.tensors.size()));
    for (const auto& [name, tensor] : snap.tensors) {
        put(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put(os, static_cast<std::uint32_t>(tensor.ndim()));
        for (int d = 0; d < tensor.ndim(); ++d) {
            put(os, static_cast<std::uint32_t>(tensor.dim(d)));
        }
        os.write(reinterpret_cast<const char*>(tensor.data()),
                 static_cast<std::streamsize>(sizeof(float) * tensor.size()));
    }
    if (!os) {
        throw DataError("checkpoint: write failed for " + path);
    }
}

Snapshot load_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("checkpoint: cannot open " + path);
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("checkpoint: bad magic at byte offset 0 in " + path);
    }
    const auto version = get<std::uint32_t>(is, "version");
    if (version != kVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    Snapshot snap;
    snap.config_hash = get<std::uint64_t>(is, "config hash");
    snap.iteration = get<std::uint64_t>(is, "iteration");
    snap.rng_state = get<std::uint64_t>(is, "rng state");
    snap.gen_adam_step = get<std::uint64_t>(is, "generator adam step");
    snap.ded_adam_step = get<std::uint64_t>(is, "critic adam step");
    const auto count = get<std::uint32_t>(is, "tensor count");
    snap.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = get<std::uint32_t>(is, "name length");
        if (name_len > 4096) {
            throw DataError("checkpoint: implausible name length " + std::to_string(name_len));
        }
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) {
            throw DataError("checkpoint: truncated tensor name");
        }
        const auto ndim = get<std::uint32_t>(is, "rank");
        if (ndim > 8) {
            throw DataError("checkpoint: implausible tensor rank " + std::to_string(ndim));
        }
        Shape shape(ndim);
        std::int64_t numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<int>(get<std::uint32_t>(is, "extent"));
            numel *= shape[d];
        }
        if (numel < 0 || numel > (std::int64_t(1) << 31)) {
            throw DataError("checkpoint: tensor '" + name + "' has implausible extents");
        }
        Tensor<float> tensor(shape);
        is.read(reinterpret_cast<char*>(tensor.data()),
                static_cast<std::streamsize>(sizeof(float) * tensor.size()));
        if (is.gcount() != static_cast<std::streamsize>(sizeof(float) * tensor.size())) {
            throw DataError("checkpoint: truncated payload for tensor '" + name + "'");
        }
        snap.tensors.emplace_back(std::move(name), std::move(tensor));
    }
    return snap;
}

} // namespace daevi
