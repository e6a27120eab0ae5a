#include "csdetect/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

#include "csdetect/core.hpp"
#include "csdetect/detail/binary_io.hpp"
#include "csdetect/rng.hpp"

namespace csdetect {

SensingMatrix::SensingMatrix(Eigen::MatrixXd entries, std::uint64_t seed)
    : entries_(std::move(entries)), seed_(seed) {
    if (entries_.rows() < 1 || entries_.cols() < 1) throw std::invalid_argument("empty sensing matrix");
}

Eigen::VectorXd SensingMatrix::apply(const Eigen::VectorXd& f) const {
    if (f.size() != entries_.cols()) {
        throw DimensionError(fmt::format("sensing matrix has {} columns, signal has length {}", entries_.cols(),
                                         f.size()));
    }
    return entries_ * f;
}

double SensingMatrix::lipschitz() const {
    std::call_once(norm_cache_->once, [this] {
        const double sigma = spectral_norm(entries_);
        norm_cache_->value = sigma * sigma;
    });
    return norm_cache_->value;
}

SensingMatrix make_sensing_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    if (rows < 1 || rows >= cols) {
        throw std::invalid_argument(fmt::format("sensing matrix needs 1 <= M < N, got M={} N={}", rows, cols));
    }
    Rng rng(seed);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(rows));
    Eigen::MatrixXd phi(rows, cols);
    for (Eigen::Index r = 0; r < phi.rows(); ++r) {
        for (Eigen::Index c = 0; c < phi.cols(); ++c) phi(r, c) = stddev * rng.normal();
    }
    return SensingMatrix(std::move(phi), seed);
}

std::size_t minimum_rows(std::size_t sparsity, std::size_t n, double c_m) {
    if (sparsity < 1) throw std::invalid_argument("sparsity must be at least 1");
    if (n < 2) throw std::invalid_argument("signal length must exceed 1");
    if (!(c_m > 1.0)) throw std::invalid_argument("measurement constant must exceed 1");
    return static_cast<std::size_t>(
        std::ceil(c_m * static_cast<double>(sparsity) * std::log(static_cast<double>(n))));
}

RipReport empirical_rip_check(const Eigen::MatrixXd& phi, std::size_t k, std::size_t trials, std::uint64_t seed,
                              double delta_bound, int workers) {
    const auto n = static_cast<std::size_t>(phi.cols());
    const std::size_t support = 2 * k;
    if (support > n) throw std::invalid_argument("2k exceeds the signal length");

    std::vector<double> ratios(trials, 1.0);
    parallel_for(trials, workers, [&](std::size_t t) {
        Rng rng = Rng::derived(seed, t);
        // partial Fisher-Yates for a uniformly random support
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < support; ++i) {
            std::swap(idx[i], idx[i + rng.below(n - i)]);
        }
        Eigen::VectorXd values(static_cast<Eigen::Index>(support));
        for (auto& v : values) v = rng.normal();
        const double norm = values.norm();
        if (norm == 0.0) return;
        values /= norm;
        Eigen::VectorXd image = Eigen::VectorXd::Zero(phi.rows());
        for (std::size_t i = 0; i < support; ++i) {
            image += values[static_cast<Eigen::Index>(i)] * phi.col(static_cast<Eigen::Index>(idx[i]));
        }
        ratios[t] = image.norm();
    });

    RipReport report;
    report.trials = trials;
    report.sparsity_tested = support;
    report.delta_bound = delta_bound;
    for (double r : ratios) {
        const double deviation = std::abs(r - 1.0);
        report.delta_observed = std::max(report.delta_observed, deviation);
        report.min_ratio = std::min(report.min_ratio, r);
        report.max_ratio = std::max(report.max_ratio, r);
        if (deviation > delta_bound) ++report.violation_count;
    }
    return report;
}

double spectral_norm(const Eigen::MatrixXd& phi, int iterations) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(phi.cols()).normalized();
    double sigma = 0.0;
    for (int i = 0; i < iterations; ++i) {
        Eigen::VectorXd w = phi.transpose() * (phi * v);
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        v = w / norm;
        const double next = std::sqrt(norm);
        if (i > 0 && std::abs(next - sigma) <= 1e-10 * next) {
            sigma = next;
            break;
        }
        sigma = next;
    }
    return sigma;
}

// Binary layout: three little-endian int64 words (M, N, seed) then M*N
// little-endian IEEE-754 doubles in row-major order.
using detail::get_le;
using detail::put_le;

void SensingMatrix::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    put_le<std::int64_t>(out, entries_.rows());
    put_le<std::int64_t>(out, entries_.cols());
    put_le<std::int64_t>(out, static_cast<std::int64_t>(seed_));
    for (Eigen::Index r = 0; r < entries_.rows(); ++r) {
        for (Eigen::Index c = 0; c < entries_.cols(); ++c) put_le<double>(out, entries_(r, c));
    }
}

SensingMatrix SensingMatrix::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const auto rows = get_le<std::int64_t>(in);
    const auto cols = get_le<std::int64_t>(in);
    const auto seed = static_cast<std::uint64_t>(get_le<std::int64_t>(in));
    if (rows < 1 || cols < 1) throw std::runtime_error(path.string() + ": bad matrix dimensions");
    Eigen::MatrixXd entries(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) entries(r, c) = get_le<double>(in);
    }
    return SensingMatrix(std::move(entries), seed);
}

}  // namespace csdetect
