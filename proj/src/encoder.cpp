#include "csdetect/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace csdetect {

FlattenedAnnotations flatten_annotations(const AnnotationSet& annotations) {
    const auto& grid = annotations.grid();
    std::set<std::size_t> indices;
    std::size_t duplicates = 0;
    for (const auto& c : annotations.cells()) {
        if (!indices.insert(flat_index(round_half_up(c.x), round_half_up(c.y), grid)).second) ++duplicates;
    }
    std::vector<SparseLocationSignal::Entry> entries;
    entries.reserve(indices.size());
    for (auto i : indices) entries.push_back({i, 1.0});
    return {SparseLocationSignal(grid.pixel_count(), std::move(entries)), duplicates};
}

CompressedSignal encode_scheme1(const AnnotationSet& annotations, const SensingMatrix& phi) {
    if (phi.cols() != annotations.grid().pixel_count()) {
        throw DimensionError(fmt::format("scheme-1 needs {} columns, matrix has {}",
                                         annotations.grid().pixel_count(), phi.cols()));
    }
    const auto flat = flatten_annotations(annotations);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(phi.rows()));
    for (const auto& e : flat.signal.entries()) {
        y += e.value * phi.matrix().col(static_cast<Eigen::Index>(e.index - 1));
    }
    return CompressedSignal(std::move(y), phi.rows(), 1);
}

ObservationAxis::ObservationAxis(int index, Point2 origin, Point2 direction, int bin_count)
    : index_(index), origin_(origin), direction_(direction), normal_{-direction.y, direction.x},
      bin_count_(bin_count) {
    const double norm = std::hypot(direction.x, direction.y);
    if (std::abs(norm - 1.0) > 1e-12) throw std::invalid_argument("axis direction must be a unit vector");
    if (bin_count < 1) throw std::invalid_argument("axis needs at least one bin");
}

int axis_bin_count(const ImageGrid& grid) { return static_cast<int>(std::ceil(grid.diagonal())); }

namespace {

// Centre of the continuous image rectangle [0.5, w + 0.5] x [0.5, h + 0.5].
Point2 image_centre(const ImageGrid& grid) { return {(grid.width() + 1) / 2.0, (grid.height() + 1) / 2.0}; }

// Does the segment a-b touch the closed rectangle [x0, x1] x [y0, y1]? (Liang-Barsky clip)
bool segment_hits_rect(Point2 a, Point2 b, double x0, double x1, double y0, double y1) {
    double t0 = 0.0, t1 = 1.0;
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {a.x - x0, x1 - a.x, a.y - y0, y1 - a.y};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
        } else {
            const double t = q[i] / p[i];
            if (p[i] < 0.0) t0 = std::max(t0, t);
            else t1 = std::min(t1, t);
            if (t0 > t1) return false;
        }
    }
    return true;
}

}  // namespace

AxisLayout::AxisLayout(std::vector<ObservationAxis> axes, ImageGrid grid, double margin)
    : axes_(std::move(axes)), grid_(grid), margin_(margin) {
    if (axes_.empty()) throw std::invalid_argument("axis layout needs at least one axis");
    for (const auto& axis : axes_) {
        if (axis.bin_count() != axes_.front().bin_count()) {
            throw std::invalid_argument("all axes in a layout share one bin count");
        }
        const Point2 end = axis.point_at(axis.bin_count(), 0.0);
        if (segment_hits_rect(axis.origin(), end, 1.0, grid_.width(), 1.0, grid_.height())) {
            throw std::invalid_argument(fmt::format("observation axis {} intersects the image", axis.index()));
        }
    }
}

AxisLayout build_axis_layout(const ImageGrid& grid, int axis_count, double margin) {
    if (axis_count < 1) throw std::invalid_argument("need at least one observation axis");
    if (!(margin > 0.0)) throw std::invalid_argument("axis margin must be positive");
    const int bins = axis_bin_count(grid);
    const Point2 centre = image_centre(grid);
    const double radius = grid.diagonal() / 2.0 + margin;
    std::vector<ObservationAxis> axes;
    axes.reserve(static_cast<std::size_t>(axis_count));
    for (int l = 1; l <= axis_count; ++l) {
        const double theta = (l - 1) * std::numbers::pi / axis_count;
        const Point2 dir{std::cos(theta), std::sin(theta)};
        const Point2 normal{-dir.y, dir.x};
        // tangent point on the far side of the normal, then back off half the axis length
        const Point2 tangent{centre.x - radius * normal.x, centre.y - radius * normal.y};
        const Point2 origin{tangent.x - 0.5 * bins * dir.x, tangent.y - 0.5 * bins * dir.y};
        axes.emplace_back(l, origin, dir, bins);
    }
    return AxisLayout(std::move(axes), grid, margin);
}

AxisProjection project_to_axis(const Point2& cell, const ObservationAxis& axis) {
    const double rx = cell.x - axis.origin().x;
    const double ry = cell.y - axis.origin().y;
    const double along = rx * axis.direction().x + ry * axis.direction().y;
    const double offset = rx * axis.normal().x + ry * axis.normal().y;
    const int bin = std::clamp(round_half_up(along), 1, axis.bin_count());
    return {bin, offset, along};
}

SparseLocationSignal axis_location_signal(const AnnotationSet& annotations, const ObservationAxis& axis) {
    struct Occupant {
        double distance;
        Point2 cell;
    };
    auto preferred = [](const Occupant& a, const Occupant& b) {
        const double da = std::abs(a.distance), db = std::abs(b.distance);
        if (da != db) return da < db;
        if (a.cell.x != b.cell.x) return a.cell.x < b.cell.x;
        return a.cell.y < b.cell.y;
    };
    std::map<int, Occupant> bins;
    for (const auto& c : annotations.cells()) {
        const auto p = project_to_axis(c, axis);
        if (p.distance == 0.0) continue;  // on the axis: no representable signal
        Occupant candidate{p.distance, c};
        auto [it, inserted] = bins.emplace(p.bin, candidate);
        if (!inserted && preferred(candidate, it->second)) it->second = candidate;
    }
    std::vector<SparseLocationSignal::Entry> entries;
    entries.reserve(bins.size());
    for (const auto& [bin, occ] : bins) entries.push_back({static_cast<std::size_t>(bin), occ.distance});
    return SparseLocationSignal(static_cast<std::size_t>(axis.bin_count()), std::move(entries));
}

CompressedSignal encode_scheme2(const AnnotationSet& annotations, const AxisLayout& layout,
                                const SensingMatrix& phi, int workers) {
    if (phi.cols() != static_cast<std::size_t>(layout.bin_count())) {
        throw DimensionError(
            fmt::format("scheme-2 needs {} columns (R), matrix has {}", layout.bin_count(), phi.cols()));
    }
    if (!(annotations.grid() == layout.grid())) throw DimensionError("annotations and axis layout grids differ");
    const auto m = static_cast<Eigen::Index>(phi.rows());
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m * static_cast<Eigen::Index>(layout.size()));
    parallel_for(layout.size(), workers, [&](std::size_t l) {
        const auto f = axis_location_signal(annotations, layout.axes()[l]);
        auto block = y.segment(static_cast<Eigen::Index>(l) * m, m);
        for (const auto& e : f.entries()) {
            block += e.value * phi.matrix().col(static_cast<Eigen::Index>(e.index - 1));
        }
    });
    return CompressedSignal(std::move(y), phi.rows(), layout.size());
}

std::string AxisLayout::to_text() const {
    nlohmann::ordered_json j;
    j["width"] = grid_.width();
    j["height"] = grid_.height();
    j["margin"] = margin_;
    j["bin_count"] = bin_count();
    auto& arr = j["axes"] = nlohmann::ordered_json::array();
    for (const auto& a : axes_) {
        arr.push_back({{"index", a.index()},
                       {"origin", {a.origin().x, a.origin().y}},
                       {"direction", {a.direction().x, a.direction().y}}});
    }
    return j.dump(2) + "\n";
}

AxisLayout AxisLayout::from_text(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    const ImageGrid grid(j.at("width").get<int>(), j.at("height").get<int>());
    const int bins = j.at("bin_count").get<int>();
    std::vector<ObservationAxis> axes;
    for (const auto& a : j.at("axes")) {
        axes.emplace_back(a.at("index").get<int>(), Point2{a.at("origin")[0], a.at("origin")[1]},
                          Point2{a.at("direction")[0], a.at("direction")[1]}, bins);
    }
    return AxisLayout(std::move(axes), grid, j.at("margin").get<double>());
}

void AxisLayout::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_text();
}

AxisLayout AxisLayout::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

}  // namespace csdetect
