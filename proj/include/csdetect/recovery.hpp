#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "csdetect/core.hpp"
#include "csdetect/sensing.hpp"

namespace csdetect {

struct RecoveryParams {
    /// OMP support cap; 0 selects ceil(M / (4 ln N)).
    std::size_t max_sparsity = 0;
    /// Stop once ||y - Phi f|| <= residual_tol * ||y||.
    double residual_tol = 1e-9;
    /// Residual budget epsilon (basis pursuit constraint; OMP stops once it is
    /// met). Read as a fraction of ||y|| when relative_budget is set.
    double noise_budget = 0.0;
    bool relative_budget = false;
    /// Cap on shrinkage iterations (summed over continuation stages).
    int max_iterations = 20000;
    /// Shrinkage step; 0 selects 1 / (1.05 ||Phi||^2).
    double shrinkage_step = 0.0;
    /// Least-squares refit of basis-pursuit output on its support.
    bool debias = true;

    void validate() const;
};

/// OMP support cap used when max_sparsity is 0.
std::size_t default_max_sparsity(std::size_t m, std::size_t n);

struct RecoveryResult {
    SparseLocationSignal signal;
    bool converged = false;
    int iterations = 0;
    double residual_norm = 0.0;
    /// Residual norm after each iteration (each shrinkage step for basis pursuit).
    std::vector<double> trace;
};

/// Orthogonal matching pursuit with a least-squares refit over the active set
/// at every step. Stops at max(residual_tol ||y||, epsilon) or the support cap.
RecoveryResult omp_recover(const Eigen::VectorXd& y, const SensingMatrix& phi, const RecoveryParams& params);

/// min ||f||_1 subject to ||y - Phi f|| <= epsilon.
///
/// Solved by monotone accelerated iterative shrinkage on the Lagrangian form
/// 1/2 ||y - Phi f||^2 + lambda ||f||_1 with lambda continuation: lambda halves
/// from ||Phi^T y||_inf / 2 until the (optionally debiased) iterate meets the
/// residual budget. A zero budget is replaced by 1e-9 ||y||. Entries below
/// 1e-4 max|f| are zeroed before the refit.
RecoveryResult bp_recover(const Eigen::VectorXd& y, const SensingMatrix& phi, const RecoveryParams& params);

struct ShrinkageRun {
    Eigen::VectorXd x;
    std::vector<double> objective;  // Lagrangian value after each iteration
    std::vector<double> residual;   // ||y - Phi x|| after each iteration
    int iterations = 0;
};

/// Monotone FISTA for a fixed lambda, starting from x0. Stops when the
/// relative iterate change drops below tol or after max_iterations.
ShrinkageRun shrinkage_solve(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, double lambda, double step,
                             const Eigen::VectorXd& x0, int max_iterations, double tol = 1e-7);

double soft_threshold(double v, double t);

struct ReconstructionErrors {
    double recon_err = 0.0;  // ||f_hat - f||^2
    double pred_err = 0.0;   // ||y_pred - Phi f||^2
};

ReconstructionErrors reconstruction_error_diagnostic(const SparseLocationSignal& f_true,
                                                     const SparseLocationSignal& f_hat,
                                                     const Eigen::VectorXd& y_pred, const SensingMatrix& phi);

}  // namespace csdetect
