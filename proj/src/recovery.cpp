#include "csdetect/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include <Eigen/QR>
#include <fmt/format.h>

namespace csdetect {

namespace {

constexpr double kBudgetFloor = 1e-9;     // relative residual standing in for an exact constraint
constexpr double kHardThreshold = 1e-4;   // relative to max |f|
constexpr int kStageIterations = 500;
constexpr double kLipschitzSafety = 1.05;

void check_measurements(const Eigen::VectorXd& y, const SensingMatrix& phi) {
    if (static_cast<std::size_t>(y.size()) != phi.rows()) {
        throw DimensionError(fmt::format("measurement vector has length {}, matrix has {} rows", y.size(), phi.rows()));
    }
}

// Phi * x, skipping zero entries when x is sparse.
Eigen::VectorXd apply_sparse(const Eigen::MatrixXd& phi, const Eigen::VectorXd& x) {
    Eigen::Index nnz = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) nnz += x[i] != 0.0;
    if (4 * nnz >= x.size()) return phi * x;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(phi.rows());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] != 0.0) out.noalias() += x[i] * phi.col(i);
    }
    return out;
}

double lagrangian(const Eigen::VectorXd& y, const Eigen::VectorXd& image, const Eigen::VectorXd& x, double lambda) {
    return 0.5 * (y - image).squaredNorm() + lambda * x.lpNorm<1>();
}

// Least-squares refit of y on the columns in `support`. Returns false when the
// system is not overdetermined.
bool refit(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, const std::vector<Eigen::Index>& support,
           Eigen::VectorXd& coef) {
    if (support.empty() || static_cast<Eigen::Index>(support.size()) >= phi.rows()) return false;
    Eigen::MatrixXd sub(phi.rows(), static_cast<Eigen::Index>(support.size()));
    for (std::size_t i = 0; i < support.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = phi.col(support[i]);
    coef = sub.colPivHouseholderQr().solve(y);
    return coef.allFinite();
}

SparseLocationSignal to_signal(const Eigen::VectorXd& x) { return SparseLocationSignal::from_dense(x, 0.0); }

}  // namespace

void RecoveryParams::validate() const {
    if (!(residual_tol > 0.0)) throw std::invalid_argument("residual_tol must be positive");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be at least 1");
    if (!(noise_budget >= 0.0)) throw std::invalid_argument("noise_budget must be non-negative");
    if (!(shrinkage_step >= 0.0)) throw std::invalid_argument("shrinkage_step must be non-negative");
}

std::size_t default_max_sparsity(std::size_t m, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(static_cast<double>(m) / (4.0 * std::log(static_cast<double>(n)))));
}

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

RecoveryResult omp_recover(const Eigen::VectorXd& y, const SensingMatrix& phi, const RecoveryParams& params) {
    params.validate();
    check_measurements(y, phi);
    const auto& a = phi.matrix();
    const auto n = static_cast<Eigen::Index>(phi.cols());
    const double y_norm = y.norm();

    RecoveryResult result{SparseLocationSignal(phi.cols()), true, 0, y_norm, {}};
    if (y_norm == 0.0) return result;

    std::size_t cap = params.max_sparsity ? params.max_sparsity : default_max_sparsity(phi.rows(), phi.cols());
    cap = std::min(cap, phi.rows());
    const double budget = params.relative_budget ? params.noise_budget * y_norm : params.noise_budget;
    const double stop = std::max(params.residual_tol * y_norm, budget);

    std::vector<Eigen::Index> support;
    Eigen::VectorXd coef;
    Eigen::VectorXd residual = y;
    result.converged = false;
    while (support.size() < cap) {
        Eigen::VectorXd corr = (a.transpose() * residual).cwiseAbs();
        for (auto j : support) corr[j] = 0.0;
        Eigen::Index best = 0;
        const double peak = corr.maxCoeff(&best);
        if (peak == 0.0) break;
        support.push_back(best);
        Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(support.size()));
        for (std::size_t i = 0; i < support.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = a.col(support[i]);
        coef = sub.colPivHouseholderQr().solve(y);
        residual = y - sub * coef;
        result.trace.push_back(residual.norm());
        ++result.iterations;
        if (result.trace.back() <= stop) {
            result.converged = true;
            break;
        }
    }

    Eigen::VectorXd dense = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < support.size(); ++i) dense[support[i]] = coef[static_cast<Eigen::Index>(i)];
    result.signal = to_signal(dense);
    result.residual_norm = residual.norm();
    return result;
}

ShrinkageRun shrinkage_solve(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, double lambda, double step,
                             const Eigen::VectorXd& x0, int max_iterations, double tol) {
    ShrinkageRun run;
    Eigen::VectorXd x = x0;
    Eigen::VectorXd image = apply_sparse(phi, x);
    double value = lagrangian(y, image, x, lambda);

    Eigen::VectorXd point = x;  // extrapolated point
    Eigen::VectorXd point_image = image;
    double t = 1.0;
    const double threshold = step * lambda;
    Eigen::VectorXd z(x.size());

    for (int k = 0; k < max_iterations; ++k) {
        const Eigen::VectorXd grad = phi.transpose() * (point_image - y);
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = soft_threshold(point[i] - step * grad[i], threshold);
        const Eigen::VectorXd z_image = apply_sparse(phi, z);
        const double z_value = lagrangian(y, z_image, z, lambda);

        const Eigen::VectorXd x_prev = x;
        const Eigen::VectorXd image_prev = image;
        if (z_value <= value) {
            x = z;
            image = z_image;
            value = z_value;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double a = t / t_next;
        const double b = (t - 1.0) / t_next;
        point = x + a * (z - x) + b * (x - x_prev);
        point_image = image + a * (z_image - image) + b * (image - image_prev);
        t = t_next;

        run.objective.push_back(value);
        run.residual.push_back((y - image).norm());
        ++run.iterations;
        const double scale = std::max(x.norm(), std::numeric_limits<double>::min());
        if ((z - x_prev).norm() <= tol * scale) break;
    }
    run.x = std::move(x);
    return run;
}

RecoveryResult bp_recover(const Eigen::VectorXd& y, const SensingMatrix& phi, const RecoveryParams& params) {
    params.validate();
    check_measurements(y, phi);
    const auto& a = phi.matrix();
    const auto n = static_cast<Eigen::Index>(phi.cols());
    const double y_norm = y.norm();

    RecoveryResult result{SparseLocationSignal(phi.cols()), true, 0, y_norm, {}};
    if (y_norm == 0.0) return result;

    const double budget = params.relative_budget ? params.noise_budget * y_norm : params.noise_budget;
    const double target = std::max(budget, kBudgetFloor * y_norm);
    const double step = params.shrinkage_step > 0.0 ? params.shrinkage_step : 1.0 / (kLipschitzSafety * phi.lipschitz());

    const double lambda0 = 0.5 * (a.transpose() * y).lpNorm<Eigen::Infinity>();
    double lambda = lambda0;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd best = x;
    double best_residual = y_norm;
    result.converged = false;

    while (result.iterations < params.max_iterations && lambda > 1e-15 * lambda0) {
        const int budget_left = params.max_iterations - result.iterations;
        auto run = shrinkage_solve(a, y, lambda, step, x, std::min(kStageIterations, budget_left));
        result.iterations += run.iterations;
        x = std::move(run.x);
        result.trace.insert(result.trace.end(), run.residual.begin(), run.residual.end());

        Eigen::VectorXd candidate = x;
        const double peak = candidate.cwiseAbs().maxCoeff();
        std::vector<Eigen::Index> support;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(candidate[i]) <= kHardThreshold * peak) candidate[i] = 0.0;
            else support.push_back(i);
        }
        Eigen::VectorXd coef;
        if (params.debias && refit(a, y, support, coef)) {
            candidate.setZero();
            for (std::size_t i = 0; i < support.size(); ++i) candidate[support[i]] = coef[static_cast<Eigen::Index>(i)];
        }
        const double residual = (y - apply_sparse(a, candidate)).norm();
        if (residual < best_residual) {
            best = candidate;
            best_residual = residual;
        }
        if (residual <= target) {
            result.converged = true;
            best = candidate;
            best_residual = residual;
            break;
        }
        lambda *= 0.5;
    }

    const double peak = best.size() ? best.cwiseAbs().maxCoeff() : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(best[i]) <= kHardThreshold * peak) best[i] = 0.0;
    }
    result.signal = to_signal(best);
    result.residual_norm = best_residual;
    return result;
}

ReconstructionErrors reconstruction_error_diagnostic(const SparseLocationSignal& f_true,
                                                     const SparseLocationSignal& f_hat,
                                                     const Eigen::VectorXd& y_pred, const SensingMatrix& phi) {
    if (f_true.length() != f_hat.length() || f_true.length() != phi.cols()) {
        throw DimensionError("reconstruction diagnostic: signal lengths disagree with the sensing matrix");
    }
    check_measurements(y_pred, phi);
    const Eigen::VectorXd truth = f_true.to_dense();
    return {(f_hat.to_dense() - truth).squaredNorm(), (y_pred - phi.apply(truth)).squaredNorm()};
}

}  // namespace csdetect
