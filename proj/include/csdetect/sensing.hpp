#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>

#include <Eigen/Core>

namespace csdetect {

/// M x N Gaussian projection with entries iid N(0, 1/M), so that
/// E||Phi f||^2 = ||f||^2. The seed fully determines the entries: they are
/// drawn row-major from Rng(seed).
class SensingMatrix {
public:
    SensingMatrix(Eigen::MatrixXd entries, std::uint64_t seed);

    std::size_t rows() const { return static_cast<std::size_t>(entries_.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(entries_.cols()); }
    std::uint64_t seed() const { return seed_; }
    const Eigen::MatrixXd& matrix() const { return entries_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& f) const;

    /// ||Phi||_2^2, the Lipschitz constant of the least-squares gradient.
    /// Computed once on first use and shared between copies.
    double lipschitz() const;

    void save(const std::filesystem::path& path) const;
    static SensingMatrix load(const std::filesystem::path& path);

private:
    struct NormCache {
        std::once_flag once;
        double value = 0.0;
    };

    Eigen::MatrixXd entries_;
    std::uint64_t seed_;
    std::shared_ptr<NormCache> norm_cache_ = std::make_shared<NormCache>();
};

/// Throws std::invalid_argument unless 1 <= M < N.
SensingMatrix make_sensing_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed);

inline constexpr double kDefaultMeasurementConstant = 4.0;

/// ceil(c_m * k * ln N): measurements needed for stable k-sparse recovery.
std::size_t minimum_rows(std::size_t sparsity, std::size_t n, double c_m = kDefaultMeasurementConstant);

struct RipReport {
    double delta_observed = 0.0;   // max | ||Phi f|| - 1 | over unit test vectors
    double min_ratio = 1.0;        // min ||Phi f|| / ||f||
    double max_ratio = 1.0;        // max ||Phi f|| / ||f||
    std::size_t trials = 0;
    std::size_t sparsity_tested = 0;  // support size of the test vectors (2k)
    std::size_t violation_count = 0;  // trials with deviation above delta_bound
    double delta_bound = 0.0;
};

/// Monte-Carlo check of the restricted isometry sandwich on random 2k-sparse
/// unit vectors. Trial t draws from its own stream derived from (seed, t),
/// so the report does not depend on evaluation order or worker count.
RipReport empirical_rip_check(const Eigen::MatrixXd& phi, std::size_t k, std::size_t trials, std::uint64_t seed,
                              double delta_bound = 0.6, int workers = 1);

inline RipReport empirical_rip_check(const SensingMatrix& phi, std::size_t k, std::size_t trials,
                                     std::uint64_t seed, double delta_bound = 0.6, int workers = 1) {
    return empirical_rip_check(phi.matrix(), k, trials, seed, delta_bound, workers);
}

/// Largest singular value of phi by power iteration (deterministic start).
double spectral_norm(const Eigen::MatrixXd& phi, int iterations = 300);

}  // namespace csdetect
