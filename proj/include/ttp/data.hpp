#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttp/image.hpp"
#include "ttp/tensor.hpp"

namespace ttp {

struct BitemporalSample {
    Image img0;
    Image img1;
    Mask mask;
    std::string id;

    bool operator==(const BitemporalSample&) const = default;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Synthetic pairs

enum class ShapeKind { Rectangle, Ellipse };

struct SceneShape {
    std::uint32_t id = 0;
    ShapeKind kind = ShapeKind::Rectangle;
    double cx = 0, cy = 0;  // centre, pixel units
    double rx = 0, ry = 0;  // half extents
    std::array<double, 3> color{};

    /// Pixel (x, y) is covered when its centre lies inside the shape.
    bool covers(std::size_t x, std::size_t y) const;
};

struct SynthConfig {
    std::size_t canvas = 64;
    std::size_t min_shapes = 2;
    std::size_t max_shapes = 4;
    double min_extent = 7.0;   // half-size range in pixels
    double max_extent = 13.0;
    bool rectangles = true;
    bool ellipses = true;
    /// Share of shapes present in only one phase.
    double change_fraction = 0.5;
    double brightness_delta = 0.1;  // img1 brightness shift drawn from [-d, d]
    double contrast_min = 0.85;
    double contrast_max = 1.15;
    double noise_sigma = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthScene {
    BitemporalSample sample;
    std::vector<SceneShape> shapes0;
    std::vector<SceneShape> shapes1;
};

/// Scenes with their shape lists. Sample i depends only on (seed, i). Pixel
/// values are multiples of 1/255 so PNG export is lossless.
std::vector<SynthScene> synth_generate_scenes(const SynthConfig& cfg, std::size_t n);
std::vector<BitemporalSample> synth_generate(const SynthConfig& cfg, std::size_t n);

/// Raster of the shapes that appear in exactly one of the two lists (matched by id).
Mask rasterize_change(const std::vector<SceneShape>& shapes0, const std::vector<SceneShape>& shapes1,
                      std::size_t height, std::size_t width);

// ---------------------------------------------------------------------------
// LEVIR-CD directory layout: root/{A,B,label}/<name>.png

std::vector<BitemporalSample> load_levir_dir(const std::filesystem::path& root);
void write_levir_dir(const std::filesystem::path& root, const std::vector<BitemporalSample>& samples);

/// Aligned crops covering the whole pair; the last row/column of tiles is
/// clamped to the image edge.
std::vector<BitemporalSample> tile(const BitemporalSample& sample, std::size_t tile_size, std::size_t stride);
std::vector<std::size_t> tile_offsets(std::size_t extent, std::size_t tile_size, std::size_t stride);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentConfig {
    bool geometric = true;
    bool photometric = true;
    double rotate_prob = 0.5;
    double flip_prob = 0.5;
    double crop_prob = 0.25;
    double crop_min_scale = 0.75;
    double photometric_prob = 0.5;
    double brightness_delta = 0.1;
    double contrast_min = 0.85;
    double contrast_max = 1.15;
    double saturation_min = 0.85;
    double saturation_max = 1.15;
};

/// Geometric part of an augmentation, applied as crop-resize, then rotation,
/// then flips.
struct GeometricTransform {
    int rot90 = 0;  // counter-clockwise quarter turns
    bool hflip = false;
    bool vflip = false;
    bool crop = false;
    std::size_t crop_y = 0, crop_x = 0, crop_h = 0, crop_w = 0;
};

struct AugmentResult {
    BitemporalSample sample;
    GeometricTransform transform;
};

AugmentResult augment_recorded(const BitemporalSample& sample, std::uint64_t seed, const AugmentConfig& cfg = {});
BitemporalSample augment(const BitemporalSample& sample, std::uint64_t seed, const AugmentConfig& cfg = {});

Image apply_geometric(const Image& image, const GeometricTransform& t);
Mask apply_geometric(const Mask& mask, const GeometricTransform& t);

// ---------------------------------------------------------------------------
// Tensor conversion

/// (b, 3, H, W) stack of img0 (phase 0) or img1 (phase 1) for the listed samples.
Tensor stack_images(const std::vector<BitemporalSample>& samples, const std::vector<std::size_t>& indices, int phase);
/// (b, 1, out_h, out_w) nearest-neighbour downsampled masks as 0/1 floats.
Tensor mask_targets(const std::vector<BitemporalSample>& samples, const std::vector<std::size_t>& indices,
                    std::size_t out_h, std::size_t out_w);
Mask downsample_nearest(const Mask& mask, std::size_t out_h, std::size_t out_w);

}  // namespace ttp
