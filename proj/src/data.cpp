#include "edgenet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "edgenet/log.hpp"
#include "edgenet/rng.hpp"

namespace fs = std::filesystem;

namespace edgenet {

void LabeledDataset::validate() const {
    if (class_names.empty()) throw ConfigError("dataset has no classes");
    if (items.empty()) throw ConfigError("dataset has no items");
    std::vector<int64_t> counts(class_names.size(), 0);
    const ImageU8& first = items.front().image;
    for (const auto& item : items) {
        if (item.label < 0 || item.label >= num_classes())
            throw ConfigError("dataset item label out of range");
        ++counts[static_cast<size_t>(item.label)];
        if (item.image.height != first.height || item.image.width != first.width ||
            item.image.channels != first.channels)
            throw ConfigError("dataset images have mixed extents");
    }
    for (size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) throw ConfigError("class '" + class_names[c] + "' has no items");
    }
}

std::vector<uint8_t> encode_ppm(const ImageU8& img) {
    if (img.channels != 3) throw InputError("encode_ppm: expected 3 channels");
    if (img.pixels.size() != static_cast<size_t>(img.height * img.width * 3))
        throw InputError("encode_ppm: pixel buffer does not match extents");
    char header[64];
    const int n = std::snprintf(header, sizeof(header), "P6\n%lld %lld\n255\n",
                                static_cast<long long>(img.width), static_cast<long long>(img.height));
    std::vector<uint8_t> out;
    out.reserve(static_cast<size_t>(n) + img.pixels.size());
    out.insert(out.end(), header, header + n);
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

namespace {

// PPM header tokenizer: skips whitespace and '#' comment lines.
struct PpmParser {
    std::span<const uint8_t> bytes;
    size_t pos = 0;

    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            const uint8_t c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(c)) {
                ++pos;
            } else {
                break;
            }
        }
    }

    int64_t next_int() {
        skip_space_and_comments();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
            throw FormatError("ppm: expected integer at offset " + std::to_string(pos));
        int64_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > (int64_t(1) << 30)) throw FormatError("ppm: integer overflow in header");
            ++pos;
        }
        return v;
    }
};

} // namespace

ImageU8 decode_ppm(std::span<const uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw FormatError("ppm: bad magic at offset 0 (want P6)");
    PpmParser p{bytes, 2};
    ImageU8 img;
    img.width = p.next_int();
    img.height = p.next_int();
    const int64_t maxval = p.next_int();
    if (img.width < 1 || img.height < 1)
        throw FormatError("ppm: degenerate extents " + std::to_string(img.width) + "x" +
                          std::to_string(img.height));
    if (maxval != 255) throw FormatError("ppm: unsupported maxval " + std::to_string(maxval));
    if (p.pos >= bytes.size() || !std::isspace(bytes[p.pos]))
        throw FormatError("ppm: missing header terminator at offset " + std::to_string(p.pos));
    ++p.pos; // single whitespace separates header from raster

    img.channels = 3;
    const size_t need = static_cast<size_t>(img.width * img.height * 3);
    if (bytes.size() - p.pos < need)
        throw FormatError("ppm: raster truncated at offset " + std::to_string(bytes.size()) +
                          " (need " + std::to_string(p.pos + need) + " bytes)");
    img.pixels.assign(bytes.begin() + static_cast<ptrdiff_t>(p.pos),
                      bytes.begin() + static_cast<ptrdiff_t>(p.pos + need));
    return img;
}

ImageU8 read_image(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path.string());
    return decode_ppm(bytes);
}

void write_image(const ImageU8& img, const fs::path& path) {
    const std::vector<uint8_t> bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out.good()) throw IoError("write failed for " + path.string());
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool dirs) {
    std::vector<fs::path> out;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(dir, ec)) {
        if (dirs == e.is_directory()) out.push_back(e.path());
    }
    if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
    std::sort(out.begin(), out.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    return out;
}

} // namespace

LabeledDataset scan_class_folders(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());

    LabeledDataset ds;
    const std::vector<fs::path> class_dirs = sorted_entries(root, true);
    if (class_dirs.empty()) throw ConfigError("no class folders under " + root.string());

    for (const auto& dir : class_dirs) ds.class_names.push_back(dir.filename().string());

    for (size_t ci = 0; ci < class_dirs.size(); ++ci) {
        size_t added = 0;
        for (const auto& file : sorted_entries(class_dirs[ci], false)) {
            try {
                ds.items.push_back({read_image(file), static_cast<int32_t>(ci)});
                ++added;
            } catch (const FormatError& e) {
                log_warn("skipping undecodable file " + file.string() + ": " + e.what());
            }
        }
        if (added == 0)
            throw ConfigError("class folder has no decodable image: " + class_dirs[ci].string());
    }
    ds.validate();
    return ds;
}

ImageU8 resize_bilinear(const ImageU8& img, int64_t target_h, int64_t target_w) {
    if (img.height < 1 || img.width < 1) throw InputError("resize: empty source image");
    if (target_h < 1 || target_w < 1) throw InputError("resize: target extents must be >= 1");

    ImageU8 out;
    out.height = target_h;
    out.width = target_w;
    out.channels = img.channels;
    out.pixels.resize(static_cast<size_t>(target_h * target_w * img.channels));

    const double sy = static_cast<double>(img.height) / static_cast<double>(target_h);
    const double sx = static_cast<double>(img.width) / static_cast<double>(target_w);

    for (int64_t y = 0; y < target_h; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        int64_t y0 = static_cast<int64_t>(std::floor(fy));
        const double wy = fy - static_cast<double>(y0);
        const int64_t y0c = std::clamp<int64_t>(y0, 0, img.height - 1);
        const int64_t y1c = std::clamp<int64_t>(y0 + 1, 0, img.height - 1);
        for (int64_t x = 0; x < target_w; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            int64_t x0 = static_cast<int64_t>(std::floor(fx));
            const double wx = fx - static_cast<double>(x0);
            const int64_t x0c = std::clamp<int64_t>(x0, 0, img.width - 1);
            const int64_t x1c = std::clamp<int64_t>(x0 + 1, 0, img.width - 1);
            for (int64_t c = 0; c < img.channels; ++c) {
                const double v00 = img.at(y0c, x0c, c);
                const double v01 = img.at(y0c, x1c, c);
                const double v10 = img.at(y1c, x0c, c);
                const double v11 = img.at(y1c, x1c, c);
                const double v = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                                 wy * ((1.0 - wx) * v10 + wx * v11);
                out.at(y, x, c) =
                    static_cast<uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
            }
        }
    }
    return out;
}

void build_size_variants(const fs::path& source_root, const fs::path& out_root,
                         const std::vector<int64_t>& sizes) {
    if (!fs::is_directory(source_root))
        throw IoError("source root is not a directory: " + source_root.string());
    if (sizes.empty()) throw ConfigError("build_size_variants: no sizes requested");

    const std::vector<fs::path> class_dirs = sorted_entries(source_root, true);
    if (class_dirs.empty()) throw ConfigError("no class folders under " + source_root.string());

    for (const auto& class_dir : class_dirs) {
        const std::vector<fs::path> files = sorted_entries(class_dir, false);
        size_t decodable = 0;
        for (const auto& file : files) {
            ImageU8 img;
            try {
                img = read_image(file);
            } catch (const FormatError& e) {
                log_warn("skipping undecodable file " + file.string() + ": " + e.what());
                continue;
            }
            ++decodable;
            for (int64_t size : sizes) {
                const fs::path out_dir =
                    out_root / ("folder_" + std::to_string(size)) / class_dir.filename();
                std::error_code ec;
                fs::create_directories(out_dir, ec);
                if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
                const fs::path out_file = out_dir / (file.stem().string() + ".ppm");
                write_image(resize_bilinear(img, size, size), out_file);
            }
        }
        if (decodable == 0)
            throw ConfigError("class folder has no decodable image: " + class_dir.string());
    }
}

namespace {

const char* kGestureNames[5] = {"one", "two", "three", "four", "five"};

// Render one glyph image. Every random draw happens unconditionally and in a
// fixed order, so zeroed nuisance ranges yield exact per-class duplicates
// while consuming the same rng stream.
ImageU8 render_glyph(int64_t size, int bars, Rng& rng, const SynthOptions& o) {
    const double b_jit = 1.0 + rng.uniform(-1.0, 1.0) * o.brightness_jitter;
    const double rot = rng.uniform(-1.0, 1.0) * o.rotation_deg * 0.017453292519943295;
    const double tx = rng.uniform(-1.0, 1.0) * o.translate_frac * static_cast<double>(size);
    const double ty = rng.uniform(-1.0, 1.0) * o.translate_frac * static_cast<double>(size);
    const double sc = 1.0 + rng.uniform(-1.0, 1.0) * o.scale_jitter;

    // 4x4 control grid per channel, bilinearly stretched over the canvas.
    double grid[4][4][3];
    double base[3];
    for (int c = 0; c < 3; ++c) base[c] = 160.0 + rng.uniform(-1.0, 1.0) * o.background_amp;
    for (int gy = 0; gy < 4; ++gy)
        for (int gx = 0; gx < 4; ++gx)
            for (int c = 0; c < 3; ++c)
                grid[gy][gx][c] = base[c] + rng.uniform(-1.0, 1.0) * o.background_amp;

    const double fg = 25.0;
    const double wg = 0.62 * static_cast<double>(size) * sc;
    const double hg = 0.55 * static_cast<double>(size) * sc;
    const double barw = wg / static_cast<double>(2 * bars - 1);
    const double cx = static_cast<double>(size) / 2.0 + tx;
    const double cy = static_cast<double>(size) / 2.0 + ty;
    const double cosr = std::cos(rot), sinr = std::sin(rot);

    ImageU8 img;
    img.height = size;
    img.width = size;
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(size * size * 3));

    for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
            const double px = static_cast<double>(x) + 0.5 - cx;
            const double py = static_cast<double>(y) + 0.5 - cy;
            const double u = cosr * px + sinr * py;
            const double v = -sinr * px + cosr * py;

            bool inside = false;
            if (std::abs(v) <= hg / 2.0) {
                const double us = u + wg / 2.0;
                if (us >= 0.0 && us < wg) {
                    const int64_t stripe = static_cast<int64_t>(us / barw);
                    inside = (stripe % 2) == 0;
                }
            }

            const double gx = (static_cast<double>(x) / static_cast<double>(size - 1)) * 3.0;
            const double gy = (static_cast<double>(y) / static_cast<double>(size - 1)) * 3.0;
            const int ix = std::min(static_cast<int>(gx), 2);
            const int iy = std::min(static_cast<int>(gy), 2);
            const double fxw = gx - ix, fyw = gy - iy;

            for (int c = 0; c < 3; ++c) {
                double val;
                if (inside) {
                    val = fg;
                } else {
                    val = (1.0 - fyw) * ((1.0 - fxw) * grid[iy][ix][c] + fxw * grid[iy][ix + 1][c]) +
                          fyw * ((1.0 - fxw) * grid[iy + 1][ix][c] + fxw * grid[iy + 1][ix + 1][c]);
                }
                val = val * b_jit + rng.normal() * o.noise_sigma;
                img.pixels[static_cast<size_t>((y * size + x) * 3 + c)] =
                    static_cast<uint8_t>(std::clamp(std::nearbyint(val), 0.0, 255.0));
            }
        }
    }
    return img;
}

} // namespace

LabeledDataset synthesize(int64_t per_class, uint64_t seed, const SynthOptions& opts) {
    if (per_class < 2) throw ConfigError("synthesize: per_class must be >= 2");
    if (opts.classes < 2 || opts.classes > 5)
        throw ConfigError("synthesize: classes must be between 2 and 5");
    if (opts.size < 8) throw ConfigError("synthesize: size must be >= 8");

    LabeledDataset ds;
    for (int64_t c = 0; c < opts.classes; ++c) ds.class_names.push_back(kGestureNames[c]);

    Rng rng(seed);
    for (int64_t c = 0; c < opts.classes; ++c) {
        for (int64_t i = 0; i < per_class; ++i) {
            ds.items.push_back(
                {render_glyph(opts.size, static_cast<int>(c) + 1, rng, opts), static_cast<int32_t>(c)});
        }
    }
    return ds;
}

void write_dataset(const LabeledDataset& ds, const fs::path& root) {
    ds.validate();
    std::vector<int64_t> counter(ds.class_names.size(), 0);
    for (const auto& item : ds.items) {
        const fs::path dir = root / ds.class_names[static_cast<size_t>(item.label)];
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        char name[32];
        std::snprintf(name, sizeof(name), "img_%04lld.ppm",
                      static_cast<long long>(counter[static_cast<size_t>(item.label)]++));
        write_image(item.image, dir / name);
    }
}

} // namespace edgenet
