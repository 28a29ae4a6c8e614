#include <doctest.h>

#include <fstream>

#include "edgenet/data.hpp"

using namespace edgenet;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("data");

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "edgenet_data_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<uint8_t> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("ppm golden: 1x1 red pixel") {
    ImageU8 img{1, 1, 3, {255, 0, 0}};
    const std::vector<uint8_t> bytes = encode_ppm(img);
    const std::vector<uint8_t> expected{'P', '6', '\n', '1', ' ', '1', '\n',
                                        '2', '5', '5', '\n', 255, 0, 0};
    CHECK(bytes == expected);
    CHECK(decode_ppm(bytes) == img);
}

TEST_CASE("ppm encode/decode round trip") {
    ImageU8 img{3, 2, 3, {}};
    for (int i = 0; i < 18; ++i) img.pixels.push_back(static_cast<uint8_t>(i * 13));
    CHECK(decode_ppm(encode_ppm(img)) == img);
}

TEST_CASE("ppm accepts header comments") {
    const std::string text = "P6\n# a comment\n2 1\n# another\n255\n";
    std::vector<uint8_t> bytes(text.begin(), text.end());
    for (int i = 0; i < 6; ++i) bytes.push_back(7);
    const ImageU8 img = decode_ppm(bytes);
    CHECK(img.width == 2);
    CHECK(img.height == 1);
}

TEST_CASE("ppm malformed inputs are format errors") {
    const std::string good = "P6\n2 2\n255\n";
    std::vector<uint8_t> truncated(good.begin(), good.end());
    truncated.resize(truncated.size() + 11); // needs 12 raster bytes
    CHECK_THROWS_AS(decode_ppm(truncated), FormatError);

    const std::string bad_magic = "P5\n2 2\n255\n";
    CHECK_THROWS_AS(decode_ppm(std::vector<uint8_t>(bad_magic.begin(), bad_magic.end())),
                    FormatError);

    const std::string bad_maxval = "P6\n2 2\n65535\n";
    CHECK_THROWS_AS(decode_ppm(std::vector<uint8_t>(bad_maxval.begin(), bad_maxval.end())),
                    FormatError);
}

TEST_CASE("scan_class_folders sorts classes and files, skips junk") {
    const fs::path root = fresh_dir("scan");
    LabeledDataset ds = synthesize(3, 5, SynthOptions{.size = 8});
    write_dataset(ds, root);

    // a non-image file among the images is skipped
    {
        std::ofstream junk(root / "one" / "notes.txt");
        junk << "not an image";
    }

    const LabeledDataset scanned = scan_class_folders(root);
    CHECK(scanned.items.size() == 15);
    // lexicographic class order
    CHECK(scanned.class_names ==
          std::vector<std::string>{"five", "four", "one", "three", "two"});

    const LabeledDataset again = scan_class_folders(root);
    REQUIRE(again.items.size() == scanned.items.size());
    for (size_t i = 0; i < scanned.items.size(); ++i) {
        CHECK(again.items[i].image == scanned.items[i].image);
        CHECK(again.items[i].label == scanned.items[i].label);
    }
}

TEST_CASE("scan_class_folders rejects a class with no decodable image") {
    const fs::path root = fresh_dir("scan_empty");
    LabeledDataset ds = synthesize(2, 5, SynthOptions{.size = 8, .classes = 2});
    write_dataset(ds, root);
    fs::create_directories(root / "zzz_empty");
    {
        std::ofstream junk(root / "zzz_empty" / "junk.bin");
        junk << "xx";
    }
    CHECK_THROWS_AS(scan_class_folders(root), ConfigError);
}

TEST_CASE("resize keeps constant images constant") {
    ImageU8 img{5, 7, 3, std::vector<uint8_t>(5 * 7 * 3, 99)};
    const ImageU8 out = resize_bilinear(img, 16, 16);
    CHECK(out.height == 16);
    CHECK(out.width == 16);
    for (uint8_t v : out.pixels) CHECK(v == 99);
}

TEST_CASE("resize to the source extents is the identity") {
    ImageU8 img{4, 4, 3, {}};
    for (int i = 0; i < 48; ++i) img.pixels.push_back(static_cast<uint8_t>(i * 5));
    CHECK(resize_bilinear(img, 4, 4) == img);
}

TEST_CASE("2x checkerboard upsample preserves corners under pixel-center sampling") {
    // 2x2 checkerboard, single value per channel
    ImageU8 img{2, 2, 3, {0, 0, 0, 255, 255, 255, 255, 255, 255, 0, 0, 0}};
    const ImageU8 out = resize_bilinear(img, 4, 4);
    CHECK(out.at(0, 0, 0) == 0);
    CHECK(out.at(0, 3, 0) == 255);
    CHECK(out.at(3, 0, 0) == 255);
    CHECK(out.at(3, 3, 0) == 0);
    // interior samples are convex combinations, inside the value range
    for (uint8_t v : out.pixels) {
        CHECK(v >= 0);
        CHECK(v <= 255);
    }
}

TEST_CASE("build_size_variants mirrors the class tree per size, idempotently") {
    const fs::path src = fresh_dir("variants_src");
    const fs::path out = fresh_dir("variants_out");
    LabeledDataset ds = synthesize(3, 9, SynthOptions{.size = 24, .classes = 2});
    write_dataset(ds, src);

    build_size_variants(src, out, {8, 16});
    for (const char* folder : {"folder_8", "folder_16"}) {
        for (const char* cls : {"one", "two"}) {
            size_t count = 0;
            for (const auto& e : fs::directory_iterator(out / folder / cls)) {
                ++count;
                (void)e;
            }
            CHECK(count == 3);
        }
    }
    const ImageU8 sample = read_image(out / "folder_16" / "one" / "img_0000.ppm");
    CHECK(sample.height == 16);
    CHECK(sample.width == 16);

    const std::vector<uint8_t> before = slurp(out / "folder_8" / "two" / "img_0002.ppm");
    build_size_variants(src, out, {8, 16});
    CHECK(slurp(out / "folder_8" / "two" / "img_0002.ppm") == before);

    CHECK_THROWS_AS(build_size_variants(fresh_dir("no_classes"), out, {8}), ConfigError);
}

TEST_CASE("synthesize is deterministic and exactly balanced") {
    const LabeledDataset a = synthesize(4, 77, SynthOptions{.size = 16});
    const LabeledDataset b = synthesize(4, 77, SynthOptions{.size = 16});
    REQUIRE(a.items.size() == 20);
    std::vector<int64_t> counts(5, 0);
    for (size_t i = 0; i < a.items.size(); ++i) {
        CHECK(a.items[i].image == b.items[i].image);
        ++counts[static_cast<size_t>(a.items[i].label)];
    }
    for (int64_t c : counts) CHECK(c == 4);

    const LabeledDataset other = synthesize(4, 78, SynthOptions{.size = 16});
    bool any_difference = false;
    for (size_t i = 0; i < a.items.size(); ++i)
        if (!(other.items[i].image == a.items[i].image)) any_difference = true;
    CHECK(any_difference);
}

TEST_CASE("zeroed nuisance ranges yield exact per-class duplicates") {
    SynthOptions opts;
    opts.size = 16;
    opts.brightness_jitter = 0;
    opts.rotation_deg = 0;
    opts.translate_frac = 0;
    opts.scale_jitter = 0;
    opts.background_amp = 0;
    opts.noise_sigma = 0;
    const LabeledDataset ds = synthesize(3, 5, opts);
    for (int64_t c = 0; c < 5; ++c) {
        const auto& first = ds.items[static_cast<size_t>(c * 3)].image;
        for (int64_t i = 1; i < 3; ++i)
            CHECK(ds.items[static_cast<size_t>(c * 3 + i)].image == first);
    }
    // classes still differ from each other
    CHECK_FALSE(ds.items[0].image == ds.items[3].image);
}

TEST_CASE("synthesize validates its arguments") {
    CHECK_THROWS_AS(synthesize(1, 0, SynthOptions{.size = 16}), ConfigError);
    CHECK_THROWS_AS(synthesize(2, 0, SynthOptions{.size = 16, .classes = 6}), ConfigError);
    CHECK_THROWS_AS(synthesize(2, 0, SynthOptions{.size = 4}), ConfigError);
}

TEST_SUITE_END();
