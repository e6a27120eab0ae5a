#include "csdetect/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace csdetect {

namespace {

bool lex_less(double ax, double ay, double bx, double by) {
    if (ax != bx) return ax < bx;
    return ay < by;
}

}  // namespace

DecodeParams DecodeParams::resolved(const AxisLayout& layout) const {
    DecodeParams p = *this;
    const int axes = static_cast<int>(layout.size());
    if (p.noise_margin == 0.0) p.noise_margin = layout.margin();
    if (p.bandwidth == 0.0) p.bandwidth = p.noise_margin / 2.0;
    if (p.min_support == 0) p.min_support = (axes + 1) / 2;
    if (!(p.noise_margin > 0.0) || !(p.bandwidth > 0.0) || !(p.merge_radius > 0.0) || !(p.scheme1_threshold >= 0.0)) {
        throw std::invalid_argument("decode parameters must be positive");
    }
    if (p.min_support < 1 || p.min_support > axes) {
        throw std::invalid_argument(fmt::format("min_support {} outside 1..{}", p.min_support, axes));
    }
    if (p.merge_min_count < 1) throw std::invalid_argument("merge_min_count must be at least 1");
    return p;
}

DetectionResult decode_scheme1(const SparseLocationSignal& f_hat, const ImageGrid& grid, double threshold) {
    if (f_hat.length() != grid.pixel_count()) {
        throw DimensionError(fmt::format("scheme-1 signal has length {}, grid has {} pixels", f_hat.length(),
                                         grid.pixel_count()));
    }
    DetectionResult result;
    const auto w = static_cast<std::size_t>(grid.width());
    for (const auto& e : f_hat.entries()) {
        if (e.value <= threshold) continue;
        const std::size_t zero_based = e.index - 1;
        result.points.push_back(
            {static_cast<double>(zero_based % w + 1), static_cast<double>(zero_based / w + 1), 1});
    }
    return result;
}

std::vector<CandidatePoint> backproject_axis(const SparseLocationSignal& f_hat, const ObservationAxis& axis) {
    if (f_hat.length() != static_cast<std::size_t>(axis.bin_count())) {
        throw DimensionError("axis signal length differs from the axis bin count");
    }
    std::vector<CandidatePoint> out;
    out.reserve(f_hat.nonzeros());
    for (const auto& e : f_hat.entries()) {
        const Point2 p = axis.point_at(static_cast<double>(e.index), e.value);
        out.push_back({p.x, p.y, axis.index(), std::abs(e.value)});
    }
    return out;
}

std::vector<CandidatePoint> filter_noise_candidates(const std::vector<CandidatePoint>& candidates,
                                                    const ImageGrid& grid, double noise_margin) {
    std::vector<CandidatePoint> kept;
    const double x0 = 1.0 - noise_margin, x1 = grid.width() + noise_margin;
    const double y0 = 1.0 - noise_margin, y1 = grid.height() + noise_margin;
    for (const auto& c : candidates) {
        if (c.magnitude < noise_margin) continue;
        if (c.x < x0 || c.x > x1 || c.y < y0 || c.y > y1) continue;
        kept.push_back(c);
    }
    return kept;
}

std::vector<Cluster> meanshift_cluster(const std::vector<CandidatePoint>& candidates, double bandwidth) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("mean-shift bandwidth must be positive");
    if (candidates.empty()) return {};

    std::vector<Point2> pts;
    pts.reserve(candidates.size());
    for (const auto& c : candidates) pts.push_back({c.x, c.y});
    std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return lex_less(a.x, a.y, b.x, b.y); });

    const double bw2 = bandwidth * bandwidth;
    std::vector<Point2> modes(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        Point2 cur = pts[i];
        for (int it = 0; it < 100; ++it) {
            double sx = 0.0, sy = 0.0;
            int count = 0;
            for (const auto& q : pts) {
                const double dx = q.x - cur.x, dy = q.y - cur.y;
                if (dx * dx + dy * dy <= bw2) {
                    sx += q.x;
                    sy += q.y;
                    ++count;
                }
            }
            const Point2 next{sx / count, sy / count};
            const double moved = distance(next, cur);
            cur = next;
            if (moved < 1e-3) break;
        }
        modes[i] = cur;
    }

    struct Acc {
        Point2 mode;
        double sx = 0.0, sy = 0.0;
        int count = 0;
    };
    std::vector<Acc> groups;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const Acc& g) { return distance(g.mode, modes[i]) < bandwidth / 2.0; });
        if (it == groups.end()) {
            groups.push_back({modes[i]});
            it = std::prev(groups.end());
        }
        it->sx += pts[i].x;
        it->sy += pts[i].y;
        ++it->count;
    }
    std::vector<Cluster> clusters;
    clusters.reserve(groups.size());
    for (const auto& g : groups) clusters.push_back({{g.sx / g.count, g.sy / g.count}, g.count});
    return clusters;
}

DetectionResult clusters_to_detections(const std::vector<Cluster>& clusters, int min_support) {
    DetectionResult result;
    for (const auto& c : clusters) {
        if (c.support >= min_support) result.points.push_back({c.mean.x, c.mean.y, c.support});
    }
    return result;
}

Scheme2Decoding decode_scheme2(const CompressedSignal& y_hat, const AxisLayout& layout, const SensingMatrix& phi,
                               const DecodeParams& params, const RecoveryParams& recovery, int workers) {
    const DecodeParams p = params.resolved(layout);
    if (y_hat.block_count() != layout.size() || y_hat.block_size() != phi.rows()) {
        throw DimensionError(fmt::format("signal has {} blocks of {}, layout expects {} blocks of {}",
                                         y_hat.block_count(), y_hat.block_size(), layout.size(), phi.rows()));
    }
    if (phi.cols() != static_cast<std::size_t>(layout.bin_count())) {
        throw DimensionError("sensing matrix width differs from the axis bin count");
    }

    Scheme2Decoding out;
    out.axis_candidates.resize(layout.size());
    out.axis_recoveries.resize(layout.size(), RecoveryResult{SparseLocationSignal(phi.cols()), false, 0, 0.0, {}});
    // warm the shared norm cache before fanning out
    if (p.solver == Solver::BasisPursuit && recovery.shrinkage_step == 0.0) (void)phi.lipschitz();

    parallel_for(layout.size(), workers, [&](std::size_t l) {
        const Eigen::VectorXd block = y_hat.block(l);
        out.axis_recoveries[l] =
            p.solver == Solver::Omp ? omp_recover(block, phi, recovery) : bp_recover(block, phi, recovery);
        out.axis_candidates[l] = backproject_axis(out.axis_recoveries[l].signal, layout.axes()[l]);
    });

    std::vector<CandidatePoint> pooled;
    for (std::size_t l = 0; l < layout.size(); ++l) {
        if (!out.axis_recoveries[l].converged) ++out.failed_axes;
        const auto kept = filter_noise_candidates(out.axis_candidates[l], layout.grid(), p.noise_margin);
        pooled.insert(pooled.end(), kept.begin(), kept.end());
    }
    out.clusters = meanshift_cluster(pooled, p.bandwidth);
    out.detections = clusters_to_detections(out.clusters, p.min_support);
    return out;
}

DetectionResult merge_ensemble(const std::vector<DetectionResult>& detection_sets, double merge_radius,
                               int merge_min_count) {
    if (merge_min_count < 1) throw std::invalid_argument("merge_min_count must be at least 1");
    std::vector<Point2> pts;
    for (const auto& set : detection_sets) {
        for (const auto& d : set.points) pts.push_back({d.x, d.y});
    }
    std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return lex_less(a.x, a.y, b.x, b.y); });

    const std::size_t n = pts.size();
    std::vector<std::vector<std::size_t>> neighbours(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (distance(pts[i], pts[j]) <= merge_radius) {
                neighbours[i].push_back(j);
                neighbours[j].push_back(i);
            }
        }
    }
    std::vector<std::size_t> live_count(n);
    for (std::size_t i = 0; i < n; ++i) live_count[i] = neighbours[i].size();
    std::vector<bool> consumed(n, false);

    auto consume = [&](std::size_t i) {
        consumed[i] = true;
        for (auto j : neighbours[i]) --live_count[j];
    };

    DetectionResult merged;
    for (std::size_t remaining = n; remaining > 0;) {
        // pts is sorted, so the first maximum is the lowest (x, y)
        std::size_t seed = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!consumed[i] && (seed == n || live_count[i] > live_count[seed])) seed = i;
        }
        std::vector<std::size_t> group{seed};
        for (auto j : neighbours[seed]) {
            if (!consumed[j]) group.push_back(j);
        }
        if (static_cast<int>(group.size()) >= merge_min_count) {
            double sx = 0.0, sy = 0.0;
            for (auto g : group) {
                sx += pts[g].x;
                sy += pts[g].y;
            }
            merged.points.push_back({sx / group.size(), sy / group.size(), static_cast<int>(group.size())});
            for (auto g : group) consume(g);
            remaining -= group.size();
        } else {
            consume(seed);
            --remaining;
        }
    }
    return merged;
}

}  // namespace csdetect
