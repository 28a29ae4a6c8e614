#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "edgenet/error.hpp"
#include "edgenet/tensor.hpp"

namespace edgenet {

// 8-bit RGB image, row-major H,W,C.
struct ImageU8 {
    int64_t height = 0;
    int64_t width = 0;
    int64_t channels = 0;
    std::vector<uint8_t> pixels;

    uint8_t& at(int64_t y, int64_t x, int64_t c) {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }
    uint8_t at(int64_t y, int64_t x, int64_t c) const {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }
    bool operator==(const ImageU8&) const = default;
};

struct LabeledImage {
    ImageU8 image;
    int32_t label = 0;
};

// Directory-per-class dataset: all images share extents, every class has at
// least one item.
struct LabeledDataset {
    std::vector<LabeledImage> items;
    std::vector<std::string> class_names;

    int64_t num_classes() const { return static_cast<int64_t>(class_names.size()); }
    void validate() const;
};

// Native image format is binary PPM (P6, maxval 255): byte-exact round trips
// for goldens and synthetic output.
std::vector<uint8_t> encode_ppm(const ImageU8& img);
ImageU8 decode_ppm(std::span<const uint8_t> bytes);

ImageU8 read_image(const std::filesystem::path& path);
void write_image(const ImageU8& img, const std::filesystem::path& path);

// Scan a root with one subdirectory per class. Class names are the sorted
// subdirectory names; files are visited in lexicographic order. Undecodable
// files are skipped with a warning; a class with no decodable image is a
// config error.
LabeledDataset scan_class_folders(const std::filesystem::path& root);

// Bilinear resize, channel-independent, pixel-center sampling
// (align-corners false). Output values stay inside the input value range.
ImageU8 resize_bilinear(const ImageU8& img, int64_t target_h, int64_t target_w);

// Mirror a class-folder tree into out_root/folder_<size>/<class>/... with
// every image resized to size x size. Re-running produces identical bytes.
void build_size_variants(const std::filesystem::path& source_root,
                         const std::filesystem::path& out_root,
                         const std::vector<int64_t>& sizes = {64, 96, 128, 256});

// Nuisance ranges for the synthetic gesture stand-in generator. All zeros
// makes every image of a class an exact duplicate.
struct SynthOptions {
    int64_t size = 96;
    int64_t classes = 5;             // glyphs "one".."five"
    double brightness_jitter = 0.15; // multiplicative, +/-
    double rotation_deg = 10.0;      // +/-
    double translate_frac = 0.06;    // +/- fraction of canvas
    double scale_jitter = 0.06;      // +/-
    double background_amp = 20.0;    // background texture amplitude, u8 units
    double noise_sigma = 3.0;        // additive gaussian, u8 units
};

// Deterministic synthetic 5-class dataset: k+1 vertical bars stand in for
// gesture class k, rendered over a textured background with randomized
// brightness, rotation, translation, scale and noise.
LabeledDataset synthesize(int64_t per_class, uint64_t seed, const SynthOptions& opts = {});

// Write a dataset as class folders of PPM files (img_0000.ppm, ...).
void write_dataset(const LabeledDataset& ds, const std::filesystem::path& root);

} // namespace edgenet
