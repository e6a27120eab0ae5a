#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "csdetect/core.hpp"

namespace csdetect {

/// Synthesis parameters that cannot be satisfied (cells do not fit).
class InfeasibleParams : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SynthesisParams {
    ImageGrid grid{260, 260};
    int count_min = 5;
    int count_max = 20;
    double blob_radius_min = 4.0;
    double blob_radius_max = 7.0;
    double intensity_min = 0.6;
    double intensity_max = 1.0;
    double background_level = 0.1;
    double background_noise_sigma = 0.03;
    double min_separation = 30.0;
    /// Place centroids on pixel centres, as hand annotations are.
    bool integer_centroids = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticImage {
    Image pixels;  // values in [0, 1]
    AnnotationSet annotations;
};

/// Draws a cell count, places centroids by rejection sampling with the
/// minimum separation, renders each cell as a Gaussian blob (sigma = radius / 2)
/// on a noisy background and clamps to [0, 1].
SyntheticImage generate_image(const SynthesisParams& params);

struct Patch {
    Image pixels;
    AnnotationSet annotations;  // patch-local coordinates
    int origin_x = 0;           // 0-based column of the patch's first pixel in the source image
    int origin_y = 0;
};

/// Non-overlapping square tiles starting at (dx, dy); partial tiles along the
/// right and bottom edges are dropped. A cell belongs to the tile holding its
/// rounded pixel, so each cell lands in at most one tile. Local coordinates
/// are clamped to [1, patch_size].
std::vector<Patch> extract_patches(const Image& image, const AnnotationSet& annotations, int patch_size,
                                   std::pair<int, int> offset = {0, 0});

/// Maps a patch-local point back into source image coordinates.
inline Point2 patch_to_image(const Patch& patch, const Point2& local) {
    return {local.x + patch.origin_x, local.y + patch.origin_y};
}

/// 0, 90, 180 and 270 degree rotations (counter-clockwise as displayed) of a
/// square patch and its annotations.
std::array<std::pair<Image, AnnotationSet>, 4> rotate_augment(const Image& patch, const AnnotationSet& annotations);

/// Box-filter downsampling to `size` x `size`.
Image downsample(const Image& image, int size);

// Binary 8-bit portable graymap (P5).
void write_pgm(const std::filesystem::path& path, const Image& image);
Image read_pgm(const std::filesystem::path& path);

struct ManifestEntry {
    std::string id;
    std::string split;        // "train" or "test"
    std::string image;        // paths relative to the manifest directory
    std::string annotations;
};

struct Manifest {
    ImageGrid grid{260, 260};
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split(const std::string& name) const;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace csdetect
