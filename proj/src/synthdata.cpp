#include "csdetect/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "csdetect/rng.hpp"

namespace csdetect {

void SynthesisParams::validate() const {
    if (count_min < 0 || count_min > count_max) throw std::invalid_argument("bad cell count range");
    if (!(blob_radius_min > 0.0) || blob_radius_min > blob_radius_max) throw std::invalid_argument("bad blob radius range");
    if (intensity_min < 0.0 || intensity_min > intensity_max || intensity_max > 1.0) {
        throw std::invalid_argument("bad intensity range");
    }
    if (min_separation < 0.0) throw std::invalid_argument("min_separation must be non-negative");
    if (background_noise_sigma < 0.0) throw std::invalid_argument("background noise must be non-negative");
}

SyntheticImage generate_image(const SynthesisParams& params) {
    params.validate();
    const auto& grid = params.grid;
    if (params.min_separation * std::sqrt(static_cast<double>(params.count_max)) >
        std::min(grid.width(), grid.height())) {
        throw InfeasibleParams(fmt::format("{} cells {} px apart do not fit a {}x{} grid", params.count_max,
                                           params.min_separation, grid.width(), grid.height()));
    }
    Rng rng(params.seed);
    const auto count = static_cast<int>(rng.between(params.count_min, params.count_max));

    constexpr int kAttemptsPerCell = 2000;
    constexpr int kRestarts = 50;
    std::vector<Point2> cells;
    bool placed = false;
    for (int restart = 0; restart < kRestarts && !placed; ++restart) {
        cells.clear();
        placed = true;
        for (int c = 0; c < count && placed; ++c) {
            bool ok = false;
            for (int attempt = 0; attempt < kAttemptsPerCell && !ok; ++attempt) {
                const Point2 p = params.integer_centroids
                                     ? Point2{double(rng.between(1, grid.width())), double(rng.between(1, grid.height()))}
                                     : Point2{rng.uniform(1.0, grid.width()), rng.uniform(1.0, grid.height())};
                ok = std::all_of(cells.begin(), cells.end(),
                                 [&](const Point2& q) { return distance(p, q) >= params.min_separation; });
                if (ok) cells.push_back(p);
            }
            placed = ok;
        }
    }
    if (!placed) {
        throw InfeasibleParams(fmt::format("could not place {} cells with separation {}", count, params.min_separation));
    }

    Image img = Image::Constant(grid.height(), grid.width(), params.background_level);
    for (const auto& c : cells) {
        const double radius = rng.uniform(params.blob_radius_min, params.blob_radius_max);
        const double peak = rng.uniform(params.intensity_min, params.intensity_max);
        const double sigma = radius / 2.0;
        const int reach = static_cast<int>(std::ceil(4.0 * sigma));
        const int cx = round_half_up(c.x), cy = round_half_up(c.y);
        for (int y = std::max(1, cy - reach); y <= std::min(grid.height(), cy + reach); ++y) {
            for (int x = std::max(1, cx - reach); x <= std::min(grid.width(), cx + reach); ++x) {
                const double d2 = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
                img(y - 1, x - 1) += peak * std::exp(-d2 / (2.0 * sigma * sigma));
            }
        }
    }
    if (params.background_noise_sigma > 0.0) {
        for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] += params.background_noise_sigma * rng.normal();
    }
    img = img.cwiseMax(0.0).cwiseMin(1.0);
    return {std::move(img), AnnotationSet(grid, std::move(cells))};
}

std::vector<Patch> extract_patches(const Image& image, const AnnotationSet& annotations, int patch_size,
                                   std::pair<int, int> offset) {
    const int w = static_cast<int>(image.cols()), h = static_cast<int>(image.rows());
    if (annotations.grid().width() != w || annotations.grid().height() != h) {
        throw DimensionError("annotation grid differs from the image size");
    }
    if (patch_size < 1 || patch_size > std::min(w, h)) throw std::invalid_argument("patch size exceeds the image");
    const auto [dx, dy] = offset;
    if (dx < 0 || dy < 0 || dx >= patch_size || dy >= patch_size) {
        throw std::invalid_argument("patch offset must lie in [0, patch_size)");
    }
    const int cols = (w - dx) / patch_size;
    const int rows = (h - dy) / patch_size;

    std::vector<std::vector<Point2>> local(static_cast<std::size_t>(rows * cols));
    for (const auto& c : annotations.cells()) {
        const int u = round_half_up(c.x) - 1 - dx;
        const int v = round_half_up(c.y) - 1 - dy;
        if (u < 0 || v < 0) continue;
        const int i = u / patch_size, j = v / patch_size;
        if (i >= cols || j >= rows) continue;
        const double lx = std::clamp(c.x - dx - i * patch_size, 1.0, static_cast<double>(patch_size));
        const double ly = std::clamp(c.y - dy - j * patch_size, 1.0, static_cast<double>(patch_size));
        local[static_cast<std::size_t>(j * cols + i)].push_back({lx, ly});
    }

    const ImageGrid patch_grid(patch_size, patch_size);
    std::vector<Patch> patches;
    patches.reserve(local.size());
    for (int j = 0; j < rows; ++j) {
        for (int i = 0; i < cols; ++i) {
            const int ox = dx + i * patch_size, oy = dy + j * patch_size;
            patches.push_back({image.block(oy, ox, patch_size, patch_size),
                               AnnotationSet(patch_grid, std::move(local[static_cast<std::size_t>(j * cols + i)])),
                               ox, oy});
        }
    }
    return patches;
}

std::array<std::pair<Image, AnnotationSet>, 4> rotate_augment(const Image& patch, const AnnotationSet& annotations) {
    if (patch.rows() != patch.cols()) throw std::invalid_argument("rotation augmentation needs a square patch");
    const auto s = patch.rows();
    if (annotations.grid().width() != s || annotations.grid().height() != s) {
        throw DimensionError("annotation grid differs from the patch size");
    }
    // (x, y) -> (y, s + 1 - x)
    auto rotate_once = [s](const Image& img, const AnnotationSet& ann) {
        Image out(s, s);
        for (Eigen::Index r = 0; r < s; ++r) {
            for (Eigen::Index c = 0; c < s; ++c) out(s - 1 - c, r) = img(r, c);
        }
        std::vector<Point2> cells;
        cells.reserve(ann.size());
        for (const auto& p : ann.cells()) cells.push_back({p.y, static_cast<double>(s) + 1.0 - p.x});
        return std::pair<Image, AnnotationSet>{std::move(out), AnnotationSet(ann.grid(), std::move(cells))};
    };
    std::array<std::pair<Image, AnnotationSet>, 4> out{std::pair<Image, AnnotationSet>{patch, annotations},
                                                       rotate_once(patch, annotations),
                                                       std::pair<Image, AnnotationSet>{patch, annotations},
                                                       std::pair<Image, AnnotationSet>{patch, annotations}};
    out[2] = rotate_once(out[1].first, out[1].second);
    out[3] = rotate_once(out[2].first, out[2].second);
    return out;
}

Image downsample(const Image& image, int size) {
    if (size < 1) throw std::invalid_argument("downsample size must be positive");
    const auto h = image.rows(), w = image.cols();
    Image out = Image::Zero(size, size);
    for (int r = 0; r < size; ++r) {
        const Eigen::Index r0 = r * h / size, r1 = std::max<Eigen::Index>((r + 1) * h / size, r0 + 1);
        for (int c = 0; c < size; ++c) {
            const Eigen::Index c0 = c * w / size, c1 = std::max<Eigen::Index>((c + 1) * w / size, c0 + 1);
            out(r, c) = image.block(r0, c0, r1 - r0, c1 - c0).mean();
        }
    }
    return out;
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
    std::vector<char> bytes(static_cast<std::size_t>(image.size()));
    for (Eigen::Index i = 0; i < image.size(); ++i) {
        const double v = std::clamp(image.data()[i], 0.0, 1.0);
        bytes[static_cast<std::size_t>(i)] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    auto token = [&]() {
        std::string t;
        char ch;
        while (in.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(in, skip);
            } else if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!t.empty()) break;
            } else {
                t.push_back(ch);
            }
        }
        return t;
    };
    if (token() != "P5") throw std::runtime_error(path.string() + ": not a binary PGM");
    const int w = std::stoi(token()), h = std::stoi(token()), maxval = std::stoi(token());
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) throw std::runtime_error(path.string() + ": unsupported PGM");
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw std::runtime_error(path.string() + ": truncated PGM");
    }
    Image img(h, w);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = bytes[static_cast<std::size_t>(i)] / double(maxval);
    return img;
}

std::vector<ManifestEntry> Manifest::split(const std::string& name) const {
    std::vector<ManifestEntry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
                 [&](const ManifestEntry& e) { return e.split == name; });
    return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    nlohmann::ordered_json j;
    j["width"] = manifest.grid.width();
    j["height"] = manifest.grid.height();
    auto& arr = j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : manifest.entries) {
        arr.push_back({{"id", e.id}, {"split", e.split}, {"image", e.image}, {"annotations", e.annotations}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const auto j = nlohmann::json::parse(in);
    Manifest m{ImageGrid(j.at("width").get<int>(), j.at("height").get<int>()), {}};
    for (const auto& e : j.at("entries")) {
        m.entries.push_back({e.at("id").get<std::string>(), e.at("split").get<std::string>(),
                             e.at("image").get<std::string>(), e.at("annotations").get<std::string>()});
    }
    return m;
}

}  // namespace csdetect
