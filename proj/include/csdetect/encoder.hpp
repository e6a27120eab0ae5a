#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "csdetect/core.hpp"
#include "csdetect/sensing.hpp"

namespace csdetect {

// ---------------------------------------------------------------------------
// Scheme 1: flatten the binary annotation map and project it.
// ---------------------------------------------------------------------------

/// 1-based position of pixel (x, y) in the flattened map: x + w (y - 1).
inline std::size_t flat_index(int x, int y, const ImageGrid& grid) {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(grid.width()) * static_cast<std::size_t>(y - 1);
}

struct FlattenedAnnotations {
    SparseLocationSignal signal;
    std::size_t collapsed_duplicates = 0;  // cells sharing a rounded pixel with an earlier cell
};

FlattenedAnnotations flatten_annotations(const AnnotationSet& annotations);

CompressedSignal encode_scheme1(const AnnotationSet& annotations, const SensingMatrix& phi);

// ---------------------------------------------------------------------------
// Scheme 2: signed distances to observation axes placed around the image.
// ---------------------------------------------------------------------------

/// Directed line with R unit bins starting at `origin`. The normal is the
/// direction rotated by +90 degrees.
class ObservationAxis {
public:
    ObservationAxis(int index, Point2 origin, Point2 direction, int bin_count);

    int index() const { return index_; }
    const Point2& origin() const { return origin_; }
    const Point2& direction() const { return direction_; }
    const Point2& normal() const { return normal_; }
    int bin_count() const { return bin_count_; }

    /// Point at arc length `along` and signed offset `offset`.
    Point2 point_at(double along, double offset) const {
        return {origin_.x + along * direction_.x + offset * normal_.x,
                origin_.y + along * direction_.y + offset * normal_.y};
    }

private:
    int index_;
    Point2 origin_;
    Point2 direction_;
    Point2 normal_;
    int bin_count_;
};

/// L axes at angles (l - 1) pi / L, each tangent to the circle of radius
/// (half diagonal + margin) about the image centre so the image lies on the
/// positive-normal side of every axis.
class AxisLayout {
public:
    AxisLayout(std::vector<ObservationAxis> axes, ImageGrid grid, double margin);

    const std::vector<ObservationAxis>& axes() const { return axes_; }
    const ImageGrid& grid() const { return grid_; }
    double margin() const { return margin_; }
    std::size_t size() const { return axes_.size(); }
    int bin_count() const { return axes_.front().bin_count(); }

    std::string to_text() const;
    static AxisLayout from_text(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static AxisLayout load(const std::filesystem::path& path);

private:
    std::vector<ObservationAxis> axes_;
    ImageGrid grid_;
    double margin_;
};

/// Default axis margin: 5% of the image diagonal.
inline double default_axis_margin(const ImageGrid& grid) { return 0.05 * grid.diagonal(); }

/// ceil(sqrt(w^2 + h^2)).
int axis_bin_count(const ImageGrid& grid);

AxisLayout build_axis_layout(const ImageGrid& grid, int axis_count, double margin);

struct AxisProjection {
    int bin;          // 1-based, clamped to [1, R]
    double distance;  // signed offset along the normal
    double along;     // unrounded, unclamped arc length
};

AxisProjection project_to_axis(const Point2& cell, const ObservationAxis& axis);

/// Location signal for one axis. Cells that fall into an occupied bin are
/// resolved in favour of the smaller |distance| (then smaller x, then y).
SparseLocationSignal axis_location_signal(const AnnotationSet& annotations, const ObservationAxis& axis);

CompressedSignal encode_scheme2(const AnnotationSet& annotations, const AxisLayout& layout,
                                const SensingMatrix& phi, int workers = 1);

}  // namespace csdetect
