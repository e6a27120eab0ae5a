#include "csdetect/core.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <fmt/format.h>

namespace csdetect {

ImageGrid::ImageGrid(int width, int height) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument(fmt::format("image grid must be at least 1x1, got {}x{}", width, height));
    }
}

double ImageGrid::diagonal() const {
    return std::sqrt(static_cast<double>(width_) * width_ + static_cast<double>(height_) * height_);
}

AnnotationSet::AnnotationSet(ImageGrid grid, std::vector<Point2> cells)
    : grid_(grid), cells_(std::move(cells)) {
    std::set<std::pair<double, double>> seen;
    for (const auto& c : cells_) {
        if (!std::isfinite(c.x) || !std::isfinite(c.y) || !grid_.contains(c)) {
            throw std::invalid_argument(fmt::format("cell ({}, {}) lies outside the {}x{} grid", c.x, c.y,
                                                    grid_.width(), grid_.height()));
        }
        if (!seen.emplace(c.x, c.y).second) {
            throw std::invalid_argument(fmt::format("duplicate cell ({}, {})", c.x, c.y));
        }
    }
}

double sparsity_fraction(const AnnotationSet& annotations) {
    return static_cast<double>(annotations.size()) / static_cast<double>(annotations.grid().pixel_count());
}

BinaryMap to_dense_map(const AnnotationSet& annotations) {
    const auto& grid = annotations.grid();
    BinaryMap map = BinaryMap::Zero(grid.height(), grid.width());
    for (const auto& c : annotations.cells()) {
        map(round_half_up(c.y) - 1, round_half_up(c.x) - 1) = 1;
    }
    return map;
}

std::vector<Point2> nonzero_pixels(const BinaryMap& map) {
    std::vector<Point2> out;
    for (Eigen::Index r = 0; r < map.rows(); ++r) {
        for (Eigen::Index c = 0; c < map.cols(); ++c) {
            if (map(r, c) != 0) out.push_back({static_cast<double>(c + 1), static_cast<double>(r + 1)});
        }
    }
    return out;
}

SparseLocationSignal::SparseLocationSignal(std::size_t length, std::vector<Entry> entries)
    : length_(length), entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.index < 1 || e.index > length_) {
            throw std::invalid_argument(fmt::format("sparse index {} outside 1..{}", e.index, length_));
        }
        if (i > 0 && e.index <= entries_[i - 1].index) {
            throw std::invalid_argument("sparse indices must be strictly increasing");
        }
        if (e.value == 0.0) throw std::invalid_argument("sparse signal stores an explicit zero");
    }
}

SparseLocationSignal SparseLocationSignal::from_dense(const Eigen::VectorXd& dense, double floor) {
    std::vector<Entry> entries;
    for (Eigen::Index i = 0; i < dense.size(); ++i) {
        if (std::abs(dense[i]) > floor && dense[i] != 0.0) {
            entries.push_back({static_cast<std::size_t>(i) + 1, dense[i]});
        }
    }
    return SparseLocationSignal(static_cast<std::size_t>(dense.size()), std::move(entries));
}

Eigen::VectorXd SparseLocationSignal::to_dense() const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(length_));
    for (const auto& e : entries_) v[static_cast<Eigen::Index>(e.index - 1)] = e.value;
    return v;
}

CompressedSignal::CompressedSignal(Eigen::VectorXd values, std::size_t block_size, std::size_t block_count)
    : values_(std::move(values)), block_size_(block_size), block_count_(block_count) {
    if (block_size_ == 0 || block_count_ == 0) throw std::invalid_argument("empty block structure");
    if (static_cast<std::size_t>(values_.size()) != block_size_ * block_count_) {
        throw DimensionError(fmt::format("signal length {} != {} blocks of {}", values_.size(), block_count_,
                                         block_size_));
    }
}

Eigen::VectorXd CompressedSignal::block(std::size_t l) const {
    if (l >= block_count_) throw std::out_of_range("block index out of range");
    return values_.segment(static_cast<Eigen::Index>(l * block_size_), static_cast<Eigen::Index>(block_size_));
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::vector<std::vector<double>> read_numeric_rows(const std::filesystem::path& path,
                                                   const std::string& expected_header) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header) {
        throw std::runtime_error(fmt::format("{}: expected header '{}', got '{}'", path.string(), expected_header, line));
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            try {
                row.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw std::runtime_error(fmt::format("{}: bad number '{}'", path.string(), field));
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

void write_annotations_csv(const std::filesystem::path& path, const AnnotationSet& annotations) {
    auto out = open_output(path);
    out << "x,y\n";
    for (const auto& c : annotations.cells()) out << fmt::format("{},{}\n", c.x, c.y);
}

AnnotationSet read_annotations_csv(const std::filesystem::path& path, const ImageGrid& grid) {
    std::vector<Point2> cells;
    for (const auto& row : read_numeric_rows(path, "x,y")) {
        if (row.size() != 2) throw std::runtime_error(path.string() + ": expected 2 columns");
        cells.push_back({row[0], row[1]});
    }
    return AnnotationSet(grid, std::move(cells));
}

void write_detections_csv(const std::filesystem::path& path, const DetectionResult& detections) {
    auto out = open_output(path);
    out << "x,y,support\n";
    for (const auto& d : detections.points) out << fmt::format("{:.4f},{:.4f},{}\n", d.x, d.y, d.support);
}

DetectionResult read_detections_csv(const std::filesystem::path& path) {
    DetectionResult result;
    for (const auto& row : read_numeric_rows(path, "x,y,support")) {
        if (row.size() != 3) throw std::runtime_error(path.string() + ": expected 3 columns");
        result.points.push_back({row[0], row[1], static_cast<int>(row[2])});
    }
    return result;
}

}  // namespace csdetect
