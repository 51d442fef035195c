#include <algorithm>
#include <cmath>

#include "ttp/data.hpp"
#include "ttp/rng.hpp"

namespace ttp {

namespace {

constexpr std::size_t kNoiseGrid = 5;
constexpr double kBackgroundLo = 0.30;
constexpr double kBackgroundHi = 0.62;

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

Image background(Rng& rng, std::size_t canvas) {
    const double level = rng.uniform(0.40, 0.52);
    std::array<double, 3> tint{rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03)};
    std::vector<double> coarse(kNoiseGrid * kNoiseGrid);
    for (auto& v : coarse) v = rng.uniform(-0.08, 0.08);
    Image img(3, canvas, canvas);
    const double span = static_cast<double>(kNoiseGrid - 1) / static_cast<double>(canvas);
    for (std::size_t y = 0; y < canvas; ++y) {
        const double gy = (static_cast<double>(y) + 0.5) * span;
        const std::size_t y0 = std::min(static_cast<std::size_t>(gy), kNoiseGrid - 2);
        const double fy = gy - static_cast<double>(y0);
        for (std::size_t x = 0; x < canvas; ++x) {
            const double gx = (static_cast<double>(x) + 0.5) * span;
            const std::size_t x0 = std::min(static_cast<std::size_t>(gx), kNoiseGrid - 2);
            const double fx = gx - static_cast<double>(x0);
            const double n = coarse[y0 * kNoiseGrid + x0] * (1 - fy) * (1 - fx) +
                             coarse[y0 * kNoiseGrid + x0 + 1] * (1 - fy) * fx +
                             coarse[(y0 + 1) * kNoiseGrid + x0] * fy * (1 - fx) +
                             coarse[(y0 + 1) * kNoiseGrid + x0 + 1] * fy * fx;
            for (std::size_t c = 0; c < 3; ++c) {
                img.at(c, y, x) = std::clamp(level + n + tint[c], kBackgroundLo, kBackgroundHi);
            }
        }
    }
    return img;
}

SceneShape random_shape(Rng& rng, const SynthConfig& cfg, std::uint32_t id) {
    SceneShape s;
    s.id = id;
    if (cfg.rectangles && cfg.ellipses) {
        s.kind = rng.bernoulli(0.5) ? ShapeKind::Rectangle : ShapeKind::Ellipse;
    } else {
        s.kind = cfg.rectangles ? ShapeKind::Rectangle : ShapeKind::Ellipse;
    }
    const double canvas = static_cast<double>(cfg.canvas);
    s.rx = rng.uniform(cfg.min_extent, cfg.max_extent);
    s.ry = rng.uniform(cfg.min_extent, cfg.max_extent);
    s.cx = rng.uniform(s.rx, canvas - s.rx);
    s.cy = rng.uniform(s.ry, canvas - s.ry);
    const bool bright = rng.bernoulli(0.5);
    const double base = bright ? rng.uniform(0.88, 0.97) : rng.uniform(0.03, 0.07);
    for (auto& c : s.color) c = base + rng.uniform(-0.03, 0.03);
    return s;
}

bool overlaps(const SceneShape& a, const SceneShape& b) {
    constexpr double kGap = 2.0;
    return std::abs(a.cx - b.cx) < a.rx + b.rx + kGap && std::abs(a.cy - b.cy) < a.ry + b.ry + kGap;
}

void draw(Image& img, const SceneShape& s) {
    const auto y_lo = static_cast<std::size_t>(std::max(0.0, std::floor(s.cy - s.ry)));
    const auto y_hi = std::min(img.height, static_cast<std::size_t>(std::ceil(s.cy + s.ry)) + 1);
    const auto x_lo = static_cast<std::size_t>(std::max(0.0, std::floor(s.cx - s.rx)));
    const auto x_hi = std::min(img.width, static_cast<std::size_t>(std::ceil(s.cx + s.rx)) + 1);
    for (std::size_t y = y_lo; y < y_hi; ++y) {
        for (std::size_t x = x_lo; x < x_hi; ++x) {
            if (!s.covers(x, y)) continue;
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = s.color[c];
        }
    }
}

void finish(Image& img, Rng& rng, double sigma) {
    for (auto& v : img.values) v = quantize(v + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0));
}

}  // namespace

bool SceneShape::covers(std::size_t x, std::size_t y) const {
    const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
    const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
    if (kind == ShapeKind::Rectangle) return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
    return dx * dx + dy * dy <= 1.0;
}

void SynthConfig::validate() const {
    if (canvas < 8) throw std::invalid_argument("synthetic canvas must be at least 8 pixels");
    if (min_shapes > max_shapes) throw std::invalid_argument("min_shapes exceeds max_shapes");
    if (!(min_extent > 0.0) || min_extent > max_extent || 2.0 * max_extent > static_cast<double>(canvas)) {
        throw std::invalid_argument("shape extents must satisfy 0 < min <= max <= canvas / 2");
    }
    if (!rectangles && !ellipses) throw std::invalid_argument("at least one shape kind must be enabled");
    if (!(change_fraction >= 0.0 && change_fraction <= 1.0)) {
        throw std::invalid_argument("change_fraction must lie in [0, 1]");
    }
    if (!std::isfinite(brightness_delta) || !std::isfinite(contrast_min) || !std::isfinite(contrast_max) ||
        !std::isfinite(noise_sigma) || contrast_min > contrast_max || noise_sigma < 0.0 || brightness_delta < 0.0) {
        throw std::invalid_argument("photometric jitter ranges must be finite and ordered");
    }
}

Mask rasterize_change(const std::vector<SceneShape>& shapes0, const std::vector<SceneShape>& shapes1,
                      std::size_t height, std::size_t width) {
    auto contains = [](const std::vector<SceneShape>& list, std::uint32_t id) {
        return std::any_of(list.begin(), list.end(), [id](const auto& s) { return s.id == id; });
    };
    std::vector<const SceneShape*> changed;
    for (const auto& s : shapes0) {
        if (!contains(shapes1, s.id)) changed.push_back(&s);
    }
    for (const auto& s : shapes1) {
        if (!contains(shapes0, s.id)) changed.push_back(&s);
    }
    Mask m(height, width);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (const auto* s : changed) {
                if (s->covers(x, y)) {
                    m.at(y, x) = 1;
                    break;
                }
            }
        }
    }
    return m;
}

std::vector<SynthScene> synth_generate_scenes(const SynthConfig& cfg, std::size_t n) {
    cfg.validate();
    if (n == 0) throw std::invalid_argument("synth_generate needs n >= 1");
    std::vector<SynthScene> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        const Image bg = background(rng, cfg.canvas);

        const auto k = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(cfg.min_shapes), static_cast<std::int64_t>(cfg.max_shapes)));
        std::vector<SceneShape> shapes;
        for (std::size_t attempt = 0; shapes.size() < k && attempt < 200; ++attempt) {
            SceneShape s = random_shape(rng, cfg, static_cast<std::uint32_t>(shapes.size()));
            if (std::none_of(shapes.begin(), shapes.end(), [&](const auto& o) { return overlaps(s, o); })) {
                shapes.push_back(s);
            }
        }
        const auto n_changed =
            static_cast<std::size_t>(std::lround(cfg.change_fraction * static_cast<double>(shapes.size())));
        std::vector<std::size_t> order(shapes.size());
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
        std::shuffle(order.begin(), order.end(), rng.engine());

        SynthScene& scene = out[i];
        std::vector<SceneShape> changed0;
        std::vector<SceneShape> changed1;
        std::vector<bool> is_changed(shapes.size(), false);
        for (std::size_t j = 0; j < n_changed; ++j) is_changed[order[j]] = true;
        for (std::size_t j = 0; j < shapes.size(); ++j) {
            if (!is_changed[j]) {
                scene.shapes0.push_back(shapes[j]);
                scene.shapes1.push_back(shapes[j]);
            } else if (rng.bernoulli(0.5)) {
                changed0.push_back(shapes[j]);
            } else {
                changed1.push_back(shapes[j]);
            }
        }
        // Persistent shapes first so changed ones are never occluded.
        scene.shapes0.insert(scene.shapes0.end(), changed0.begin(), changed0.end());
        scene.shapes1.insert(scene.shapes1.end(), changed1.begin(), changed1.end());

        Image img0 = bg;
        Image img1 = bg;
        for (const auto& s : scene.shapes0) draw(img0, s);
        for (const auto& s : scene.shapes1) draw(img1, s);

        const double shift = rng.uniform(-cfg.brightness_delta, cfg.brightness_delta);
        const double contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
        for (auto& v : img1.values) v = (v - 0.5) * contrast + 0.5 + shift;
        finish(img0, rng, cfg.noise_sigma);
        finish(img1, rng, cfg.noise_sigma);

        scene.sample.img0 = std::move(img0);
        scene.sample.img1 = std::move(img1);
        scene.sample.mask = rasterize_change(scene.shapes0, scene.shapes1, cfg.canvas, cfg.canvas);
        scene.sample.id = "synth_" + std::to_string(cfg.seed) + "_" + std::to_string(i);
    }
    return out;
}

std::vector<BitemporalSample> synth_generate(const SynthConfig& cfg, std::size_t n) {
    std::vector<BitemporalSample> out;
    for (auto& scene : synth_generate_scenes(cfg, n)) out.push_back(std::move(scene.sample));
    return out;
}

}  // namespace ttp
