#include <algorithm>
#include <cmath>

#include "ttp/data.hpp"
#include "ttp/kernels.hpp"
#include "ttp/rng.hpp"

namespace ttp {

namespace {

// Maps an output pixel of a quarter-turn CCW rotation back to its source.
void rot_source(int k, std::size_t y, std::size_t x, std::size_t in_h, std::size_t in_w, std::size_t& sy,
                std::size_t& sx) {
    switch (k) {
        case 1:
            sy = x;
            sx = in_w - 1 - y;
            break;
        case 2:
            sy = in_h - 1 - y;
            sx = in_w - 1 - x;
            break;
        case 3:
            sy = in_h - 1 - x;
            sx = y;
            break;
        default:
            sy = y;
            sx = x;
    }
}

// Rotation and flips on any plane type; `get(c, y, x)` reads the source.
template <typename Get, typename Set>
void orient(const GeometricTransform& t, std::size_t channels, std::size_t in_h, std::size_t in_w, Get get, Set set) {
    const int k = ((t.rot90 % 4) + 4) % 4;
    const std::size_t out_h = k % 2 ? in_w : in_h;
    const std::size_t out_w = k % 2 ? in_h : in_w;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < out_h; ++y) {
            for (std::size_t x = 0; x < out_w; ++x) {
                const std::size_t fy = t.vflip ? out_h - 1 - y : y;
                const std::size_t fx = t.hflip ? out_w - 1 - x : x;
                std::size_t sy = 0;
                std::size_t sx = 0;
                rot_source(k, fy, fx, in_h, in_w, sy, sx);
                set(c, y, x, get(c, sy, sx));
            }
        }
    }
}

void check_crop(const GeometricTransform& t, std::size_t h, std::size_t w) {
    if (t.crop && (t.crop_h == 0 || t.crop_w == 0 || t.crop_y + t.crop_h > h || t.crop_x + t.crop_w > w)) {
        throw std::invalid_argument("crop window falls outside the image");
    }
}

Image crop_resize(const Image& img, const GeometricTransform& t) {
    Image out(img.channels, img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        const auto ty = kernels::bilinear_tap(y, t.crop_h, img.height);
        for (std::size_t x = 0; x < img.width; ++x) {
            const auto tx = kernels::bilinear_tap(x, t.crop_w, img.width);
            for (std::size_t c = 0; c < img.channels; ++c) {
                auto px = [&](std::size_t yy, std::size_t xx) { return img.at(c, t.crop_y + yy, t.crop_x + xx); };
                const double top = px(ty.i0, tx.i0) * (1 - tx.frac) + px(ty.i0, tx.i1) * tx.frac;
                const double bot = px(ty.i1, tx.i0) * (1 - tx.frac) + px(ty.i1, tx.i1) * tx.frac;
                out.at(c, y, x) = top * (1 - ty.frac) + bot * ty.frac;
            }
        }
    }
    return out;
}

Mask crop_resize(const Mask& m, const GeometricTransform& t) {
    Mask out(m.height, m.width);
    for (std::size_t y = 0; y < m.height; ++y) {
        const auto sy = static_cast<std::size_t>((static_cast<double>(y) + 0.5) * static_cast<double>(t.crop_h) /
                                                 static_cast<double>(m.height));
        for (std::size_t x = 0; x < m.width; ++x) {
            const auto sx = static_cast<std::size_t>((static_cast<double>(x) + 0.5) * static_cast<double>(t.crop_w) /
                                                     static_cast<double>(m.width));
            out.at(y, x) = m.at(t.crop_y + std::min(sy, t.crop_h - 1), t.crop_x + std::min(sx, t.crop_w - 1));
        }
    }
    return out;
}

void photometric(Image& img, Rng& rng, const AugmentConfig& cfg) {
    const double shift = rng.uniform(-cfg.brightness_delta, cfg.brightness_delta);
    const double contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
    const double saturation = rng.uniform(cfg.saturation_min, cfg.saturation_max);
    double mean = 0.0;
    for (double v : img.values) mean += v;
    mean /= static_cast<double>(std::max<std::size_t>(img.values.size(), 1));
    for (auto& v : img.values) v = (v - mean) * contrast + mean + shift;
    if (img.channels == 3) {
        for (std::size_t y = 0; y < img.height; ++y) {
            for (std::size_t x = 0; x < img.width; ++x) {
                const double gray = (img.at(0, y, x) + img.at(1, y, x) + img.at(2, y, x)) / 3.0;
                for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = gray + saturation * (img.at(c, y, x) - gray);
            }
        }
    }
    for (auto& v : img.values) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace

Image apply_geometric(const Image& image, const GeometricTransform& t) {
    check_crop(t, image.height, image.width);
    const Image src = t.crop ? crop_resize(image, t) : image;
    const int k = ((t.rot90 % 4) + 4) % 4;
    Image out(src.channels, k % 2 ? src.width : src.height, k % 2 ? src.height : src.width);
    orient(
        t, src.channels, src.height, src.width, [&](std::size_t c, std::size_t y, std::size_t x) { return src.at(c, y, x); },
        [&](std::size_t c, std::size_t y, std::size_t x, double v) { out.at(c, y, x) = v; });
    return out;
}

Mask apply_geometric(const Mask& mask, const GeometricTransform& t) {
    check_crop(t, mask.height, mask.width);
    const Mask src = t.crop ? crop_resize(mask, t) : mask;
    const int k = ((t.rot90 % 4) + 4) % 4;
    Mask out(k % 2 ? src.width : src.height, k % 2 ? src.height : src.width);
    orient(
        t, 1, src.height, src.width, [&](std::size_t, std::size_t y, std::size_t x) { return src.at(y, x); },
        [&](std::size_t, std::size_t y, std::size_t x, std::uint8_t v) { out.at(y, x) = v; });
    return out;
}

AugmentResult augment_recorded(const BitemporalSample& sample, std::uint64_t seed, const AugmentConfig& cfg) {
    Rng rng(derive_seed(seed, "augment"));
    GeometricTransform t;
    const std::size_t h = sample.img0.height;
    const std::size_t w = sample.img0.width;
    if (cfg.geometric) {
        if (rng.bernoulli(cfg.crop_prob)) {
            const double scale = rng.uniform(cfg.crop_min_scale, 1.0);
            t.crop = true;
            t.crop_h = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(scale * static_cast<double>(h))), 1, h);
            t.crop_w = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(scale * static_cast<double>(w))), 1, w);
            t.crop_y = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(h - t.crop_h)));
            t.crop_x = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w - t.crop_w)));
        }
        // Quarter turns only on square inputs so batch shapes stay fixed.
        if (h == w && rng.bernoulli(cfg.rotate_prob)) t.rot90 = static_cast<int>(rng.uniform_int(1, 3));
        t.hflip = rng.bernoulli(cfg.flip_prob);
        t.vflip = rng.bernoulli(cfg.flip_prob);
    }
    AugmentResult r;
    r.transform = t;
    r.sample.id = sample.id;
    r.sample.img0 = apply_geometric(sample.img0, t);
    r.sample.img1 = apply_geometric(sample.img1, t);
    r.sample.mask = apply_geometric(sample.mask, t);
    if (cfg.photometric) {
        Rng r0(derive_seed(seed, "photometric.0"));
        Rng r1(derive_seed(seed, "photometric.1"));
        if (r0.bernoulli(cfg.photometric_prob)) photometric(r.sample.img0, r0, cfg);
        if (r1.bernoulli(cfg.photometric_prob)) photometric(r.sample.img1, r1, cfg);
    }
    return r;
}

BitemporalSample augment(const BitemporalSample& sample, std::uint64_t seed, const AugmentConfig& cfg) {
    return augment_recorded(sample, seed, cfg).sample;
}

}  // namespace ttp
