#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace csdetect {

// Coordinate convention used everywhere in the library: pixel coordinates are
// 1-based, x runs along the width (columns) and y along the height (rows).
// Pixel (x, y) covers the continuous square [x - 0.5, x + 0.5) x [y - 0.5, y + 0.5).

/// Raised when two objects that must agree on a size do not.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

/// Row-major grayscale raster, rows = height, cols = width.
using Image = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BinaryMap = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ImageGrid {
public:
    ImageGrid(int width, int height);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    double diagonal() const;
    bool contains(const Point2& p) const {
        return p.x >= 1.0 && p.x <= width_ && p.y >= 1.0 && p.y <= height_;
    }

    friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

private:
    int width_;
    int height_;
};

/// Cell centroids on a grid. Coordinates may be sub-pixel; every cell lies in
/// [1, w] x [1, h] and no two cells coincide.
class AnnotationSet {
public:
    explicit AnnotationSet(ImageGrid grid, std::vector<Point2> cells = {});

    const ImageGrid& grid() const { return grid_; }
    const std::vector<Point2>& cells() const { return cells_; }
    std::size_t size() const { return cells_.size(); }
    bool empty() const { return cells_.empty(); }

private:
    ImageGrid grid_;
    std::vector<Point2> cells_;
};

/// Round half up, the rasterization rule for centroids.
inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

double sparsity_fraction(const AnnotationSet& annotations);

/// height x width map with 1 at each rounded centroid pixel.
BinaryMap to_dense_map(const AnnotationSet& annotations);

/// Integer pixel coordinates of the nonzero entries of a map, in row-major order.
std::vector<Point2> nonzero_pixels(const BinaryMap& map);

/// Sparse vector with 1-based indices in strictly increasing order and no
/// stored zeros.
class SparseLocationSignal {
public:
    struct Entry {
        std::size_t index;
        double value;

        friend bool operator==(const Entry&, const Entry&) = default;
    };

    explicit SparseLocationSignal(std::size_t length, std::vector<Entry> entries = {});

    /// Keeps entries with |value| > floor.
    static SparseLocationSignal from_dense(const Eigen::VectorXd& dense, double floor = 0.0);

    std::size_t length() const { return length_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t nonzeros() const { return entries_.size(); }
    Eigen::VectorXd to_dense() const;

private:
    std::size_t length_;
    std::vector<Entry> entries_;
};

/// Concatenation of block_count measurement blocks of size block_size.
class CompressedSignal {
public:
    CompressedSignal(Eigen::VectorXd values, std::size_t block_size, std::size_t block_count = 1);

    const Eigen::VectorXd& values() const { return values_; }
    std::size_t block_size() const { return block_size_; }
    std::size_t block_count() const { return block_count_; }
    std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

    /// Zero-based block view.
    Eigen::VectorXd block(std::size_t l) const;

private:
    Eigen::VectorXd values_;
    std::size_t block_size_;
    std::size_t block_count_;
};

struct Detection {
    double x = 0.0;
    double y = 0.0;
    int support = 1;
};

struct DetectionResult {
    std::vector<Detection> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// CSV interchange. Annotations use the header `x,y`, detections `x,y,support`.
void write_annotations_csv(const std::filesystem::path& path, const AnnotationSet& annotations);
AnnotationSet read_annotations_csv(const std::filesystem::path& path, const ImageGrid& grid);
void write_detections_csv(const std::filesystem::path& path, const DetectionResult& detections);
DetectionResult read_detections_csv(const std::filesystem::path& path);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is visited
/// exactly once; callers write results into per-index slots.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn);

}  // namespace csdetect

#include "csdetect/detail/parallel.hpp"
