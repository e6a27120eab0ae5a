#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <filesystem>

#include "csdetect/core.hpp"
#include "csdetect/rng.hpp"

using namespace csdetect;

TEST(SparsityFraction, LargeGrid) {
    // 5000 cells on a 2000 x 2000 grid
    std::vector<Point2> cells;
    for (int i = 0; i < 5000; ++i) cells.push_back({1.0 + i % 2000, 1.0 + 2.0 * (i / 2000)});
    AnnotationSet set(ImageGrid(2000, 2000), cells);
    EXPECT_DOUBLE_EQ(sparsity_fraction(set), 5000.0 / (2000.0 * 2000.0));
}

TEST(SparsityFraction, EmptyAndFull) {
    EXPECT_EQ(sparsity_fraction(AnnotationSet(ImageGrid(7, 9))), 0.0);
    EXPECT_EQ(sparsity_fraction(AnnotationSet(ImageGrid(1, 1), {{1, 1}})), 1.0);
}

TEST(DenseMap, SingleCell) {
    AnnotationSet set(ImageGrid(4, 4), {{2, 3}});
    BinaryMap map = to_dense_map(set);
    ASSERT_EQ(map.rows(), 4);
    ASSERT_EQ(map.cols(), 4);
    EXPECT_EQ(map.cast<int>().sum(), 1);
    EXPECT_EQ(map(2, 1), 1);  // row 3, column 2
}

TEST(DenseMap, EmptyAndCardinality) {
    EXPECT_EQ(to_dense_map(AnnotationSet(ImageGrid(5, 3))).cast<int>().sum(), 0);
    AnnotationSet two(ImageGrid(5, 3), {{1, 1}, {5, 3}});
    EXPECT_EQ(to_dense_map(two).cast<int>().sum(), 2);
}

TEST(DenseMap, RoundsHalfUp) {
    AnnotationSet set(ImageGrid(4, 4), {{1.5, 2.49}});
    EXPECT_EQ(nonzero_pixels(to_dense_map(set)), (std::vector<Point2>{{2, 2}}));
}

TEST(DenseMap, NonzeroPixelsInvertsRasterization) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const ImageGrid grid(30, 20);
        std::vector<Point2> cells;
        for (int i = 0; i < 15; ++i) {
            Point2 p{rng.uniform(1.0, 30.0), rng.uniform(1.0, 20.0)};
            const Point2 r{static_cast<double>(round_half_up(p.x)), static_cast<double>(round_half_up(p.y))};
            const bool dup = std::any_of(cells.begin(), cells.end(), [&](const Point2& c) {
                return round_half_up(c.x) == r.x && round_half_up(c.y) == r.y;
            });
            if (!dup) cells.push_back(p);
        }
        std::vector<Point2> expected;
        for (const auto& c : cells) {
            expected.push_back({static_cast<double>(round_half_up(c.x)), static_cast<double>(round_half_up(c.y))});
        }
        std::sort(expected.begin(), expected.end(),
                  [](const Point2& a, const Point2& b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
        AnnotationSet set(grid, cells);
        EXPECT_EQ(nonzero_pixels(to_dense_map(set)), expected);
        const double s = sparsity_fraction(set);
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
    }
}

TEST(AnnotationSet, RejectsOutOfGridAndDuplicates) {
    EXPECT_THROW(AnnotationSet(ImageGrid(4, 4), {{0.5, 2}}), std::invalid_argument);
    EXPECT_THROW(AnnotationSet(ImageGrid(4, 4), {{2, 4.5}}), std::invalid_argument);
    EXPECT_THROW(AnnotationSet(ImageGrid(4, 4), {{2, 2}, {2, 2}}), std::invalid_argument);
    EXPECT_THROW(ImageGrid(0, 3), std::invalid_argument);
}

TEST(SparseLocationSignal, DenseRoundTrip) {
    Eigen::VectorXd dense = Eigen::VectorXd::Zero(6);
    dense(1) = 2.5;
    dense(4) = -1.0;
    dense(5) = 1e-9;
    auto s = SparseLocationSignal::from_dense(dense, 1e-6);
    ASSERT_EQ(s.nonzeros(), 2u);
    EXPECT_EQ(s.entries()[0], (SparseLocationSignal::Entry{2, 2.5}));
    EXPECT_EQ(s.entries()[1], (SparseLocationSignal::Entry{5, -1.0}));
    Eigen::VectorXd back = s.to_dense();
    dense(5) = 0.0;
    EXPECT_EQ(back, dense);
}

TEST(SparseLocationSignal, RejectsBadEntries) {
    EXPECT_THROW(SparseLocationSignal(4, {{0, 1.0}}), std::invalid_argument);
    EXPECT_THROW(SparseLocationSignal(4, {{5, 1.0}}), std::invalid_argument);
    EXPECT_THROW(SparseLocationSignal(4, {{3, 1.0}, {2, 1.0}}), std::invalid_argument);
}

TEST(CompressedSignal, Blocks) {
    Eigen::VectorXd v(6);
    v << 1, 2, 3, 4, 5, 6;
    CompressedSignal y(v, 3, 2);
    EXPECT_EQ(y.block(1), (Eigen::VectorXd(3) << 4, 5, 6).finished());
    EXPECT_THROW(CompressedSignal(v, 4, 2), DimensionError);
}

TEST(Csv, AnnotationAndDetectionRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "csdetect_test_core";
    std::filesystem::create_directories(dir);
    AnnotationSet set(ImageGrid(50, 40), {{1.25, 3.5}, {49.0, 40.0}});
    write_annotations_csv(dir / "a.csv", set);
    auto back = read_annotations_csv(dir / "a.csv", set.grid());
    EXPECT_EQ(back.cells(), set.cells());

    DetectionResult det{{{3.5, 4.25, 7}, {10.0, 11.0, 1}}};
    write_detections_csv(dir / "d.csv", det);
    auto det_back = read_detections_csv(dir / "d.csv");
    ASSERT_EQ(det_back.size(), 2u);
    EXPECT_EQ(det_back.points[0].x, 3.5);
    EXPECT_EQ(det_back.points[0].support, 7);
    std::filesystem::remove_all(dir);
}

TEST(ParallelFor, VisitsEachIndexOnce) {
    for (int workers : {1, 3, 8}) {
        std::vector<std::atomic<int>> hits(101);
        parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i].fetch_add(1); });
        for (auto& h : hits) EXPECT_EQ(h.load(), 1);
    }
}

TEST(Rng, ReproducibleAndInRange) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        EXPECT_EQ(u, b.uniform());
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        const auto k = a.between(-3, 3);
        b.between(-3, 3);
        EXPECT_GE(k, -3);
        EXPECT_LE(k, 3);
    }
    EXPECT_NE(Rng::mix(1, 2), Rng::mix(2, 1));
}

TEST(Rng, NormalMoments) {
    Rng rng(5);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sq / n, 1.0, 0.01);
}
