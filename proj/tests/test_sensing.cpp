#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "csdetect/rng.hpp"
#include "csdetect/sensing.hpp"

using namespace csdetect;

TEST(SensingMatrix, ShapeForDefaultPatch) {
    auto phi = make_sensing_matrix(112, 368, 7);
    EXPECT_EQ(phi.rows(), 112u);
    EXPECT_EQ(phi.cols(), 368u);
    EXPECT_EQ(phi.seed(), 7u);
}

TEST(SensingMatrix, SeedDeterminesEntries) {
    auto a = make_sensing_matrix(20, 50, 3);
    auto b = make_sensing_matrix(20, 50, 3);
    auto c = make_sensing_matrix(20, 50, 4);
    EXPECT_EQ(a.matrix(), b.matrix());
    EXPECT_NE(a.matrix(), c.matrix());
}

TEST(SensingMatrix, EntriesFollowTheDocumentedStream) {
    // row-major draws of N(0, 1/M) from Rng(seed)
    const std::size_t m = 5, n = 8;
    auto phi = make_sensing_matrix(m, n, 99);
    Rng rng(99);
    const double sd = 1.0 / std::sqrt(static_cast<double>(m));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(phi.matrix()(i, j), rng.normal() * sd);
    }
}

TEST(SensingMatrix, EntryMoments) {
    const double m = 100, n = 1000;
    auto phi = make_sensing_matrix(100, 1000, 1);
    const double mean = phi.matrix().mean();
    // standard error of the mean of MN draws with variance 1/M
    EXPECT_NEAR(mean, 0.0, 3.0 / std::sqrt(m * n * m));
    const double var = phi.matrix().array().square().mean();
    EXPECT_NEAR(var * m, 1.0, 0.02);
}

TEST(SensingMatrix, Linearity) {
    auto phi = make_sensing_matrix(30, 80, 2);
    Rng rng(8);
    Eigen::VectorXd f1(80), f2(80);
    for (int i = 0; i < 80; ++i) {
        f1(i) = rng.normal();
        f2(i) = rng.normal();
    }
    const double a = 1.7, b = -0.3;
    Eigen::VectorXd lhs = phi.apply(a * f1 + b * f2);
    Eigen::VectorXd rhs = a * phi.apply(f1) + b * phi.apply(f2);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SensingMatrix, RejectsBadShapes) {
    EXPECT_THROW(make_sensing_matrix(0, 10, 1), std::invalid_argument);
    EXPECT_THROW(make_sensing_matrix(10, 10, 1), std::invalid_argument);
    auto phi = make_sensing_matrix(3, 6, 1);
    EXPECT_THROW(phi.apply(Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST(SensingMatrix, SaveLoadRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "csdetect_phi_test.bin";
    auto phi = make_sensing_matrix(7, 19, 1234);
    phi.save(path);
    auto back = SensingMatrix::load(path);
    EXPECT_EQ(back.matrix(), phi.matrix());
    EXPECT_EQ(back.seed(), phi.seed());
    std::filesystem::remove(path);
}

TEST(SensingMatrix, LipschitzMatchesSvd) {
    auto phi = make_sensing_matrix(25, 60, 17);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(phi.matrix());
    const double s = svd.singularValues()(0);
    EXPECT_NEAR(phi.lipschitz(), s * s, 1e-6 * s * s);
    EXPECT_NEAR(spectral_norm(phi.matrix()), s, 1e-6 * s);
}

TEST(MinimumRows, Formula) {
    // 4 * 10 * ln(4096) = 332.71...
    EXPECT_EQ(minimum_rows(10, 4096, 4.0), 333u);
    EXPECT_EQ(minimum_rows(10, 4096, 4.0), static_cast<std::size_t>(std::ceil(40.0 * std::log(4096.0))));
    EXPECT_EQ(minimum_rows(1, 3, 1.5), static_cast<std::size_t>(std::ceil(1.5 * std::log(3.0))));
    EXPECT_THROW(minimum_rows(0, 100), std::invalid_argument);
}

TEST(RipCheck, OrthonormalIsIsometry) {
    Rng rng(3);
    Eigen::MatrixXd a(40, 40);
    for (int i = 0; i < a.size(); ++i) a(i) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    auto report = empirical_rip_check(q, 5, 200, 9);
    EXPECT_LT(report.delta_observed, 1e-12);
    EXPECT_EQ(report.violation_count, 0u);
    EXPECT_EQ(report.sparsity_tested, 10u);
}

TEST(RipCheck, ZeroTrialsIsVacuous) {
    auto phi = make_sensing_matrix(20, 100, 1);
    auto report = empirical_rip_check(phi, 3, 0, 1);
    EXPECT_EQ(report.delta_observed, 0.0);
    EXPECT_EQ(report.violation_count, 0u);
    EXPECT_EQ(report.trials, 0u);
}

TEST(RipCheck, IndependentOfWorkerCount) {
    auto phi = make_sensing_matrix(60, 500, 5);
    auto a = empirical_rip_check(phi, 4, 300, 21, 0.6, 1);
    auto b = empirical_rip_check(phi, 4, 300, 21, 0.6, 4);
    EXPECT_EQ(a.delta_observed, b.delta_observed);
    EXPECT_EQ(a.min_ratio, b.min_ratio);
    EXPECT_EQ(a.max_ratio, b.max_ratio);
}

TEST(RipCheck, SandwichHoldsAtMinimumRows) {
    const std::size_t k = 5, n = 1000;
    auto phi = make_sensing_matrix(minimum_rows(k, n), n, 12);
    auto report = empirical_rip_check(phi, k, 500, 13);
    EXPECT_GE(report.min_ratio, 0.4);
    EXPECT_LE(report.max_ratio, 1.6);
    EXPECT_LE(report.delta_observed, 0.6);
}
