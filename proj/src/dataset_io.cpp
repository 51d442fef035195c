#include <algorithm>
#include <set>

#include "ttp/data.hpp"
#include "ttp/png_io.hpp"

namespace fs = std::filesystem;

namespace ttp {

namespace {

std::set<std::string> png_names(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DatasetError("missing directory " + dir.string());
    std::set<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") names.insert(entry.path().filename().string());
    }
    return names;
}

Mask read_label(const fs::path& path) {
    const Raster8 r = read_png(path);
    Mask m(r.height, r.width);
    for (std::size_t i = 0; i < r.height * r.width; ++i) {
        for (std::size_t c = 0; c < r.channels; ++c) {
            const std::uint8_t v = r.pixels[i * r.channels + c];
            if (v != 0 && v != 255) {
                throw DatasetError("label " + path.filename().string() + " has value " + std::to_string(v) +
                                   " (expected 0 or 255)");
            }
            if (c == 0) m.values[i] = v == 255 ? 1 : 0;
        }
    }
    return m;
}

Image crop_image(const Image& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    Image out(img.channels, h, w);
    for (std::size_t c = 0; c < img.channels; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
        }
    }
    return out;
}

Mask crop_mask(const Mask& m, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    Mask out(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) out.at(y, x) = m.at(y0 + y, x0 + x);
    }
    return out;
}

void check_aligned(const BitemporalSample& s) {
    if (s.img0.height != s.img1.height || s.img0.width != s.img1.width || s.mask.height != s.img0.height ||
        s.mask.width != s.img0.width || s.img0.channels != s.img1.channels) {
        throw DatasetError("sample '" + s.id + "' is not spatially aligned");
    }
}

}  // namespace

std::vector<BitemporalSample> load_levir_dir(const fs::path& root) {
    const auto a = png_names(root / "A");
    const auto b = png_names(root / "B");
    const auto label = png_names(root / "label");
    auto require = [&](const std::set<std::string>& have, const std::string& name, const char* sub) {
        if (!have.count(name)) throw DatasetError("missing " + std::string(sub) + "/" + name);
    };
    for (const auto& name : a) {
        require(b, name, "B");
        require(label, name, "label");
    }
    for (const auto& name : b) require(a, name, "A");
    for (const auto& name : label) require(a, name, "A");

    std::vector<BitemporalSample> out;
    out.reserve(a.size());
    for (const auto& name : a) {
        BitemporalSample s;
        try {
            s.img0 = read_rgb(root / "A" / name);
            s.img1 = read_rgb(root / "B" / name);
        } catch (const ImageIoError& e) {
            throw DatasetError(name + ": " + e.what());
        }
        s.mask = read_label(root / "label" / name);
        s.id = fs::path(name).stem().string();
        if (s.img0.height != s.img1.height || s.img0.width != s.img1.width || s.mask.height != s.img0.height ||
            s.mask.width != s.img0.width) {
            throw DatasetError("size mismatch between A/B/label for " + name);
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_levir_dir(const fs::path& root, const std::vector<BitemporalSample>& samples) {
    for (const char* sub : {"A", "B", "label"}) fs::create_directories(root / sub);
    for (const auto& s : samples) {
        check_aligned(s);
        if (s.id.empty()) throw DatasetError("cannot write a sample without an id");
        const std::string name = s.id + ".png";
        write_rgb(root / "A" / name, s.img0);
        write_rgb(root / "B" / name, s.img1);
        write_mask(root / "label" / name, s.mask);
    }
}

std::vector<std::size_t> tile_offsets(std::size_t extent, std::size_t tile_size, std::size_t stride) {
    if (tile_size == 0 || stride == 0) throw std::invalid_argument("tile size and stride must be positive");
    if (tile_size > extent) {
        throw std::invalid_argument("tile size " + std::to_string(tile_size) + " exceeds image extent " +
                                    std::to_string(extent));
    }
    std::vector<std::size_t> offsets;
    for (std::size_t o = 0;; o += stride) {
        if (o + tile_size >= extent) {
            offsets.push_back(extent - tile_size);
            break;
        }
        offsets.push_back(o);
    }
    return offsets;
}

std::vector<BitemporalSample> tile(const BitemporalSample& sample, std::size_t tile_size, std::size_t stride) {
    check_aligned(sample);
    const auto ys = tile_offsets(sample.img0.height, tile_size, stride);
    const auto xs = tile_offsets(sample.img0.width, tile_size, stride);
    if (ys.size() == 1 && xs.size() == 1 && tile_size == sample.img0.height && tile_size == sample.img0.width) {
        return {sample};
    }
    std::vector<BitemporalSample> out;
    for (auto y : ys) {
        for (auto x : xs) {
            BitemporalSample t;
            t.img0 = crop_image(sample.img0, y, x, tile_size, tile_size);
            t.img1 = crop_image(sample.img1, y, x, tile_size, tile_size);
            t.mask = crop_mask(sample.mask, y, x, tile_size, tile_size);
            t.id = sample.id + "_" + std::to_string(y) + "_" + std::to_string(x);
            out.push_back(std::move(t));
        }
    }
    return out;
}

Mask downsample_nearest(const Mask& mask, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw std::invalid_argument("downsample target must be non-empty");
    Mask out(out_h, out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const auto sy = static_cast<std::size_t>((static_cast<double>(y) + 0.5) * static_cast<double>(mask.height) /
                                                 static_cast<double>(out_h));
        for (std::size_t x = 0; x < out_w; ++x) {
            const auto sx = static_cast<std::size_t>((static_cast<double>(x) + 0.5) * static_cast<double>(mask.width) /
                                                     static_cast<double>(out_w));
            out.at(y, x) = mask.at(std::min(sy, mask.height - 1), std::min(sx, mask.width - 1));
        }
    }
    return out;
}

Tensor stack_images(const std::vector<BitemporalSample>& samples, const std::vector<std::size_t>& indices, int phase) {
    if (indices.empty()) throw DatasetError("cannot stack an empty batch");
    if (phase != 0 && phase != 1) throw std::invalid_argument("phase must be 0 or 1");
    const Image& first = phase == 0 ? samples.at(indices[0]).img0 : samples.at(indices[0]).img1;
    const std::size_t per = first.values.size();
    std::vector<double> data;
    data.reserve(per * indices.size());
    for (auto i : indices) {
        const Image& img = phase == 0 ? samples.at(i).img0 : samples.at(i).img1;
        if (img.channels != first.channels || img.height != first.height || img.width != first.width) {
            throw DatasetError("batch mixes image sizes (sample '" + samples.at(i).id + "')");
        }
        data.insert(data.end(), img.values.begin(), img.values.end());
    }
    return Tensor::from({indices.size(), first.channels, first.height, first.width}, std::move(data));
}

Tensor mask_targets(const std::vector<BitemporalSample>& samples, const std::vector<std::size_t>& indices,
                    std::size_t out_h, std::size_t out_w) {
    if (indices.empty()) throw DatasetError("cannot stack an empty batch");
    std::vector<double> data;
    data.reserve(indices.size() * out_h * out_w);
    for (auto i : indices) {
        const Mask& m = samples.at(i).mask;
        const Mask small = (m.height == out_h && m.width == out_w) ? m : downsample_nearest(m, out_h, out_w);
        for (auto v : small.values) data.push_back(static_cast<double>(v));
    }
    return Tensor::from({indices.size(), 1, out_h, out_w}, std::move(data));
}

}  // namespace ttp
