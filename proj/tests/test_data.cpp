#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "ttp/data.hpp"
#include "ttp/png_io.hpp"

using namespace ttp;
namespace fs = std::filesystem;

namespace {

SynthConfig base(std::uint64_t seed = 0) {
    SynthConfig c;
    c.seed = seed;
    return c;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ttp_data_" + name);
    fs::remove_all(p);
    return p;
}

BitemporalSample ramp(std::size_t h, std::size_t w) {
    BitemporalSample s;
    s.img0 = Image(3, h, w);
    s.img1 = Image(3, h, w);
    s.mask = Mask(h, w);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                s.img0.at(c, y, x) = static_cast<double>((y * w + x + c) % 256) / 255.0;
                s.img1.at(c, y, x) = static_cast<double>((3 * y + x + 7 * c) % 256) / 255.0;
            }
        }
    }
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) s.mask.at(y, x) = (x * 7 + y * 3) % 5 == 0;
    }
    s.id = "ramp";
    return s;
}

}  // namespace

TEST(Synth, NoChangeGivesEmptyMaskAndSameLayout) {
    auto cfg = base(4);
    cfg.change_fraction = 0.0;
    for (const auto& scene : synth_generate_scenes(cfg, 10)) {
        EXPECT_EQ(scene.sample.mask.count(), 0u);
        ASSERT_EQ(scene.shapes0.size(), scene.shapes1.size());
        for (std::size_t i = 0; i < scene.shapes0.size(); ++i) EXPECT_EQ(scene.shapes0[i].id, scene.shapes1[i].id);
    }
}

TEST(Synth, FullChangeMasksEveryShape) {
    auto cfg = base(5);
    cfg.change_fraction = 1.0;
    for (const auto& scene : synth_generate_scenes(cfg, 10)) {
        std::size_t covered = 0;
        const auto& m = scene.sample.mask;
        for (std::size_t y = 0; y < m.height; ++y) {
            for (std::size_t x = 0; x < m.width; ++x) {
                bool any = false;
                for (const auto* list : {&scene.shapes0, &scene.shapes1}) {
                    for (const auto& s : *list) any |= s.covers(x, y);
                }
                covered += any;
                EXPECT_EQ(m.at(y, x), any ? 1 : 0);
            }
        }
        EXPECT_GT(covered, 0u);
        // Every shape lives in exactly one phase.
        for (const auto& s : scene.shapes0) {
            for (const auto& t : scene.shapes1) EXPECT_NE(s.id, t.id);
        }
    }
}

TEST(Synth, Deterministic) {
    const auto a = synth_generate(base(7), 4);
    const auto b = synth_generate(base(7), 4);
    const auto c = synth_generate(base(8), 4);
    EXPECT_EQ(a, b);
    EXPECT_NE(a[0].img0.values, c[0].img0.values);
    // Sample i does not depend on how many are generated.
    EXPECT_EQ(synth_generate(base(7), 2)[1], a[1]);
    EXPECT_EQ(a[2].id, "synth_7_2");
}

TEST(Synth, MaskMatchesRasterizedShapes) {
    for (const auto& scene : synth_generate_scenes(base(9), 8)) {
        EXPECT_EQ(scene.sample.mask, rasterize_change(scene.shapes0, scene.shapes1, 64, 64));
        // Unchanged pixels outside every shape come from the same background.
        for (double v : scene.sample.img0.values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
            EXPECT_DOUBLE_EQ(std::round(v * 255.0) / 255.0, v);
        }
    }
}

TEST(Synth, ChangedRegionDiffersMoreThanBackground) {
    auto cfg = base(10);
    cfg.noise_sigma = 0.0;
    cfg.brightness_delta = 0.0;
    cfg.contrast_min = cfg.contrast_max = 1.0;
    for (const auto& s : synth_generate(cfg, 6)) {
        for (std::size_t y = 0; y < 64; ++y) {
            for (std::size_t x = 0; x < 64; ++x) {
                double d = 0;
                for (std::size_t c = 0; c < 3; ++c) d += std::abs(s.img0.at(c, y, x) - s.img1.at(c, y, x));
                if (s.mask.at(y, x)) {
                    EXPECT_GT(d, 0.3);
                } else {
                    EXPECT_EQ(d, 0.0);
                }
            }
        }
    }
}

TEST(Synth, ValidateRejectsBadConfig) {
    auto c = base();
    c.change_fraction = 1.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = base();
    c.max_extent = 40;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = base();
    c.rectangles = c.ellipses = false;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_THROW(synth_generate(base(), 0), std::invalid_argument);
}

TEST(Levir, RoundTrip) {
    const fs::path dir = temp_dir("roundtrip");
    const auto samples = synth_generate(base(11), 3);
    write_levir_dir(dir, samples);
    auto loaded = load_levir_dir(dir);
    ASSERT_EQ(loaded.size(), 3u);
    // Loaded order is lexicographic by file name; ids are the stems.
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(loaded[i], samples[i]);
    fs::remove_all(dir);
}

TEST(Levir, MissingCounterpartNamed) {
    const fs::path dir = temp_dir("missing");
    write_levir_dir(dir, synth_generate(base(12), 2));
    fs::remove(dir / "B" / "synth_12_1.png");
    try {
        load_levir_dir(dir);
        FAIL();
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find("B/synth_12_1.png"), std::string::npos) << e.what();
    }
    fs::remove_all(dir);
}

TEST(Levir, BadLabelValueAndSizeMismatch) {
    const fs::path dir = temp_dir("badlabel");
    write_levir_dir(dir, synth_generate(base(13), 1));
    Raster8 bad{1, 64, 64, std::vector<std::uint8_t>(64 * 64, 0)};
    bad.pixels[10] = 128;
    write_png(dir / "label" / "synth_13_0.png", bad);
    EXPECT_THROW(load_levir_dir(dir), DatasetError);
    write_png(dir / "label" / "synth_13_0.png", Raster8{1, 32, 32, std::vector<std::uint8_t>(32 * 32, 255)});
    EXPECT_THROW(load_levir_dir(dir), DatasetError);
    EXPECT_THROW(load_levir_dir(dir / "nope"), DatasetError);
    fs::remove_all(dir);
}

TEST(Levir, EmptyDirectoryLoadsNothing) {
    const fs::path dir = temp_dir("empty");
    for (const char* sub : {"A", "B", "label"}) fs::create_directories(dir / sub);
    EXPECT_TRUE(load_levir_dir(dir).empty());
    fs::remove_all(dir);
}

TEST(Tiling, LevirSizeGivesFourTiles) {
    EXPECT_EQ(tile_offsets(1024, 512, 512), (std::vector<std::size_t>{0, 512}));
    EXPECT_EQ(tile_offsets(100, 40, 40), (std::vector<std::size_t>{0, 40, 60}));
    EXPECT_EQ(tile_offsets(64, 64, 64), (std::vector<std::size_t>{0}));
    EXPECT_THROW(tile_offsets(32, 64, 64), std::invalid_argument);
    EXPECT_THROW(tile_offsets(64, 32, 0), std::invalid_argument);

    const auto s = ramp(64, 64);
    const auto tiles = tile(s, 32, 32);
    ASSERT_EQ(tiles.size(), 4u);
    EXPECT_EQ(tiles[3].id, "ramp_32_32");
    for (std::size_t y = 0; y < 32; ++y) {
        for (std::size_t x = 0; x < 32; ++x) {
            EXPECT_EQ(tiles[1].img0.at(2, y, x), s.img0.at(2, y, x + 32));
            EXPECT_EQ(tiles[2].mask.at(y, x), s.mask.at(y + 32, x));
        }
    }
    EXPECT_EQ(tile(s, 64, 64)[0], s);
}

TEST(Tensors, StackAndTargets) {
    const std::vector<BitemporalSample> samples{ramp(8, 8), ramp(8, 8)};
    const Tensor t = stack_images(samples, {1, 0}, 1);
    EXPECT_EQ(t.shape(), (Shape{2, 3, 8, 8}));
    EXPECT_EQ(t.at({0, 2, 3, 4}), samples[1].img1.at(2, 3, 4));
    const Tensor y = mask_targets(samples, {0}, 4, 4);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
    // Nearest sampling picks the odd pixels 2i+1.
    EXPECT_EQ(y.at({0, 0, 1, 2}), samples[0].mask.at(3, 5));
    EXPECT_THROW(stack_images(samples, {}, 0), DatasetError);
    EXPECT_THROW(stack_images(samples, {0}, 2), std::invalid_argument);
}

TEST(Augment, GeometryMovesImageAndMaskTogether) {
    auto s = ramp(16, 16);
    // Tag each pixel so its origin can be read back after any transform.
    for (std::size_t y = 0; y < 16; ++y) {
        for (std::size_t x = 0; x < 16; ++x) {
            s.img0.at(0, y, x) = static_cast<double>(y * 16 + x);
            s.mask.at(y, x) = (y + 2 * x) % 3 == 0;
        }
    }
    for (int rot = 0; rot < 4; ++rot) {
        for (int flips = 0; flips < 4; ++flips) {
            GeometricTransform t;
            t.rot90 = rot;
            t.hflip = flips & 1;
            t.vflip = flips & 2;
            const Image img = apply_geometric(s.img0, t);
            const Mask m = apply_geometric(s.mask, t);
            for (std::size_t y = 0; y < 16; ++y) {
                for (std::size_t x = 0; x < 16; ++x) {
                    const auto src = static_cast<std::size_t>(img.at(0, y, x));
                    EXPECT_EQ(m.at(y, x), s.mask.values[src]);
                }
            }
        }
    }
}

TEST(Augment, QuarterTurnIsCounterClockwise) {
    Mask m(2, 3);
    m.at(0, 2) = 1;  // top-right corner
    GeometricTransform t;
    t.rot90 = 1;
    const Mask r = apply_geometric(m, t);
    EXPECT_EQ(r.height, 3u);
    EXPECT_EQ(r.width, 2u);
    EXPECT_EQ(r.at(0, 0), 1);  // ends up top-left
    EXPECT_EQ(r.count(), 1u);
}

TEST(Augment, DeterministicAndMaskUntouchedByPhotometric) {
    const auto s = synth_generate(base(14), 1)[0];
    AugmentConfig cfg;
    cfg.geometric = false;
    cfg.photometric_prob = 1.0;
    const auto a = augment(s, 3, cfg);
    const auto b = augment(s, 3, cfg);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.mask, s.mask);
    EXPECT_NE(a.img0.values, s.img0.values);
    for (double v : a.img1.values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    const auto c = augment(s, 4, cfg);
    EXPECT_NE(c.img0.values, a.img0.values);
}

TEST(Augment, RecordedTransformReproducesOutput) {
    const auto s = synth_generate(base(15), 1)[0];
    AugmentConfig cfg;
    cfg.photometric = false;
    cfg.crop_prob = 1.0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const auto r = augment_recorded(s, seed, cfg);
        EXPECT_TRUE(r.transform.crop);
        EXPECT_EQ(r.sample.mask, apply_geometric(s.mask, r.transform));
        EXPECT_EQ(r.sample.img1, apply_geometric(s.img1, r.transform));
        EXPECT_EQ(r.sample.img0.height, 64u);
    }
}

TEST(Augment, FullCropIsIdentity) {
    const auto s = ramp(8, 8);
    GeometricTransform t;
    t.crop = true;
    t.crop_h = t.crop_w = 8;
    EXPECT_EQ(apply_geometric(s.img0, t), s.img0);
    EXPECT_EQ(apply_geometric(s.mask, t), s.mask);
    t.crop_y = 1;
    EXPECT_THROW(apply_geometric(s.mask, t), std::invalid_argument);
}
