#include "daevi/clip_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "daevi/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "clip container I/O assumes a little-endian host");

namespace daevi {

namespace {

constexpr char kMagic[4] = {'D', 'V', 'T', '1'};
constexpr std::int64_t kMaxElements = std::int64_t(1) << 31;

void write_u32(std::ofstream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& is, std::int64_t offset, const std::string& what) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) {
        throw DataError("clip container: truncated " + what + " at byte offset " + std::to_string(offset));
    }
    return v;
}

std::uint8_t to_byte(float v) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

std::vector<std::string> sorted_frame_files(const std::string& dir, const std::string& ext) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw DataError("frame directory does not exist: " + dir);
    }
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ext) {
            files.push_back(entry.path().string());
        }
    }
    if (files.empty()) {
        throw DataError("no " + ext + " frames found in " + dir);
    }
    std::sort(files.begin(), files.end());
    return files;
}

// Reads the "P6\n<w> <h>\n<max>\n" style header shared by PPM and PGM.
void read_netpbm_header(std::ifstream& is, const std::string& path, const char* magic,
                        int* w, int* h) {
    std::string tag;
    is >> tag;
    if (tag != magic) {
        throw DataError(path + ": expected " + magic + " header, got '" + tag + "'");
    }
    int maxval = 0;
    auto next_int = [&](int* out) {
        // skip whitespace and '#' comments
        for (;;) {
            const int c = is.peek();
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
        if (!(is >> *out)) {
            throw DataError(path + ": malformed header");
        }
    };
    next_int(w);
    next_int(h);
    next_int(&maxval);
    if (maxval != 255) {
        throw DataError(path + ": only 8-bit (maxval 255) frames are supported");
    }
    is.get(); // single whitespace before the raster
}

} // namespace

void write_clip(const std::string& path, const Tensor<float>& clip) {
    if (clip.ndim() != 4) {
        throw ShapeError("write_clip: expected T×C×H×W, got " + shape_str(clip.shape()));
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("write_clip: cannot open " + path);
    }
    os.write(kMagic, 4);
    write_u32(os, static_cast<std::uint32_t>(clip.dim(0)));
    write_u32(os, static_cast<std::uint32_t>(clip.dim(2)));
    write_u32(os, static_cast<std::uint32_t>(clip.dim(3)));
    write_u32(os, static_cast<std::uint32_t>(clip.dim(1)));
    os.write(reinterpret_cast<const char*>(clip.data()),
             static_cast<std::streamsize>(sizeof(float) * clip.size()));
    if (!os) {
        throw DataError("write_clip: write failed for " + path);
    }
}

Tensor<float> read_clip(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("read_clip: cannot open " + path);
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("read_clip: bad magic at byte offset 0 in " + path);
    }
    const std::uint32_t t = read_u32(is, 4, "frame count");
    const std::uint32_t h = read_u32(is, 8, "height");
    const std::uint32_t w = read_u32(is, 12, "width");
    const std::uint32_t c = read_u32(is, 16, "channel count");
    const std::int64_t n = static_cast<std::int64_t>(t) * h * w * c;
    if (t == 0 || h == 0 || w == 0 || c == 0 || n > kMaxElements) {
        throw DataError("read_clip: header extents overflow sane limits (" + std::to_string(t) + "x" +
                        std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c) + ")");
    }
    Tensor<float> clip(Shape{static_cast<int>(t), static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)});
    is.read(reinterpret_cast<char*>(clip.data()), static_cast<std::streamsize>(sizeof(float) * n));
    if (is.gcount() != static_cast<std::streamsize>(sizeof(float) * n)) {
        throw DataError("read_clip: truncated payload at byte offset " +
                        std::to_string(20 + is.gcount()) + " in " + path);
    }
    return clip;
}

void write_ppm_frames(const std::string& dir, const Tensor<float>& clip) {
    if (clip.ndim() != 4 || clip.dim(1) != 3) {
        throw ShapeError("write_ppm_frames: expected T×3×H×W, got " + shape_str(clip.shape()));
    }
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const int t = clip.dim(0), h = clip.dim(2), w = clip.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
    for (int ti = 0; ti < t; ++ti) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05d.ppm", ti);
        std::ofstream os(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw DataError("write_ppm_frames: cannot open frame file in " + dir);
        }
        os << "P6\n" << w << " " << h << "\n255\n";
        const float* r = clip.data() + static_cast<std::int64_t>(ti) * 3 * plane;
        const float* g = r + plane;
        const float* b = g + plane;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                row[static_cast<std::size_t>(j) * 3 + 0] = to_byte(r[static_cast<std::int64_t>(i) * w + j]);
                row[static_cast<std::size_t>(j) * 3 + 1] = to_byte(g[static_cast<std::int64_t>(i) * w + j]);
                row[static_cast<std::size_t>(j) * 3 + 2] = to_byte(b[static_cast<std::int64_t>(i) * w + j]);
            }
            os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
        }
    }
}

Tensor<float> read_ppm_frames(const std::string& dir) {
    const auto files = sorted_frame_files(dir, ".ppm");
    Tensor<float> clip;
    int h = 0, w = 0;
    const int t = static_cast<int>(files.size());
    for (int ti = 0; ti < t; ++ti) {
        std::ifstream is(files[static_cast<std::size_t>(ti)], std::ios::binary);
        int fw = 0, fh = 0;
        read_netpbm_header(is, files[static_cast<std::size_t>(ti)], "P6", &fw, &fh);
        if (ti == 0) {
            h = fh;
            w = fw;
            clip = Tensor<float>(Shape{t, 3, h, w});
        } else if (fh != h || fw != w) {
            throw DataError("read_ppm_frames: frame extents differ across " + dir);
        }
        std::vector<std::uint8_t> raster(static_cast<std::size_t>(w) * h * 3);
        is.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
        if (is.gcount() != static_cast<std::streamsize>(raster.size())) {
            throw DataError(files[static_cast<std::size_t>(ti)] + ": truncated raster");
        }
        const std::int64_t plane = static_cast<std::int64_t>(h) * w;
        float* r = clip.data() + static_cast<std::int64_t>(ti) * 3 * plane;
        float* g = r + plane;
        float* b = g + plane;
        for (std::int64_t i = 0; i < plane; ++i) {
            r[i] = static_cast<float>(raster[static_cast<std::size_t>(i) * 3 + 0]) / 255.0f;
            g[i] = static_cast<float>(raster[static_cast<std::size_t>(i) * 3 + 1]) / 255.0f;
            b[i] = static_cast<float>(raster[static_cast<std::size_t>(i) * 3 + 2]) / 255.0f;
        }
    }
    return clip;
}

void write_pgm_frames(const std::string& dir, const Tensor<float>& planes) {
    if (planes.ndim() != 4 || planes.dim(1) != 1) {
        throw ShapeError("write_pgm_frames: expected T×1×H×W, got " + shape_str(planes.shape()));
    }
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const int t = planes.dim(0), h = planes.dim(2), w = planes.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w));
    for (int ti = 0; ti < t; ++ti) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05d.pgm", ti);
        std::ofstream os(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw DataError("write_pgm_frames: cannot open frame file in " + dir);
        }
        os << "P5\n" << w << " " << h << "\n255\n";
        const float* p = planes.data() + static_cast<std::int64_t>(ti) * plane;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                row[static_cast<std::size_t>(j)] = to_byte(p[static_cast<std::int64_t>(i) * w + j]);
            }
            os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
        }
    }
}

Tensor<float> read_pgm_frames(const std::string& dir) {
    const auto files = sorted_frame_files(dir, ".pgm");
    Tensor<float> planes;
    int h = 0, w = 0;
    const int t = static_cast<int>(files.size());
    for (int ti = 0; ti < t; ++ti) {
        std::ifstream is(files[static_cast<std::size_t>(ti)], std::ios::binary);
        int fw = 0, fh = 0;
        read_netpbm_header(is, files[static_cast<std::size_t>(ti)], "P5", &fw, &fh);
        if (ti == 0) {
            h = fh;
            w = fw;
            planes = Tensor<float>(Shape{t, 1, h, w});
        } else if (fh != h || fw != w) {
            throw DataError("read_pgm_frames: frame extents differ across " + dir);
        }
        std::vector<std::uint8_t> raster(static_cast<std::size_t>(w) * h);
        is.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
        if (is.gcount() != static_cast<std::streamsize>(raster.size())) {
            throw DataError(files[static_cast<std::size_t>(ti)] + ": truncated raster");
        }
        float* p = planes.data() + static_cast<std::int64_t>(ti) * static_cast<std::int64_t>(h) * w;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
            p[i] = static_cast<float>(raster[static_cast<std::size_t>(i)]) / 255.0f;
        }
    }
    return planes;
}

Tensor<float> read_clip_any(const std::string& path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        bool has_ppm = false;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.path().extension() == ".ppm") {
                has_ppm = true;
                break;
            }
        }
        return has_ppm ? read_ppm_frames(path) : read_pgm_frames(path);
    }
    return read_clip(path);
}

} // namespace daevi
