#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "csdetect/encoder.hpp"
#include "csdetect/rng.hpp"

using namespace csdetect;

TEST(Flatten, IndexFormula) {
    AnnotationSet set(ImageGrid(4, 4), {{2, 3}});
    auto flat = flatten_annotations(set);
    ASSERT_EQ(flat.signal.length(), 16u);
    ASSERT_EQ(flat.signal.nonzeros(), 1u);
    EXPECT_EQ(flat.signal.entries()[0].index, 10u);  // 2 + 4 * (3 - 1)
    EXPECT_EQ(flat.signal.entries()[0].value, 1.0);

    EXPECT_EQ(flatten_annotations(AnnotationSet(ImageGrid(4, 4), {{1, 1}})).signal.entries()[0].index, 1u);
    auto empty = flatten_annotations(AnnotationSet(ImageGrid(4, 4)));
    EXPECT_EQ(empty.signal.length(), 16u);
    EXPECT_EQ(empty.signal.nonzeros(), 0u);
}

TEST(Flatten, FullPatchLength) {
    auto flat = flatten_annotations(AnnotationSet(ImageGrid(260, 260), {{130, 7}}));
    EXPECT_EQ(flat.signal.length(), 67600u);
}

TEST(Flatten, CollapsesCellsSharingAPixel) {
    auto flat = flatten_annotations(AnnotationSet(ImageGrid(8, 8), {{3.2, 3.1}, {2.9, 3.3}, {6, 6}}));
    EXPECT_EQ(flat.signal.nonzeros(), 2u);
    EXPECT_EQ(flat.collapsed_duplicates, 1u);
}

TEST(Scheme1, EmptyEncodesToZero) {
    auto phi = make_sensing_matrix(5, 16, 1);
    auto y = encode_scheme1(AnnotationSet(ImageGrid(4, 4)), phi);
    EXPECT_EQ(y.size(), 5u);
    EXPECT_EQ(y.values(), Eigen::VectorXd::Zero(5));
}

TEST(Scheme1, Linear) {
    const ImageGrid grid(10, 10);
    auto phi = make_sensing_matrix(30, 100, 4);
    AnnotationSet a(grid, {{1, 1}, {4, 7}, {9, 2}});
    AnnotationSet b(grid, {{5, 5}, {10, 10}});
    AnnotationSet ab(grid, {{1, 1}, {4, 7}, {9, 2}, {5, 5}, {10, 10}});
    Eigen::VectorXd diff = encode_scheme1(ab, phi).values() - encode_scheme1(a, phi).values() -
                           encode_scheme1(b, phi).values();
    EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Scheme1, ColumnCountChecked) {
    auto phi = make_sensing_matrix(5, 20, 1);
    EXPECT_THROW(encode_scheme1(AnnotationSet(ImageGrid(4, 4)), phi), DimensionError);
}

TEST(AxisLayout, BinCount) {
    EXPECT_EQ(axis_bin_count(ImageGrid(260, 260)), 368);
    EXPECT_EQ(axis_bin_count(ImageGrid(3, 4)), 5);
    EXPECT_EQ(axis_bin_count(ImageGrid(16, 16)), 23);
}

TEST(AxisLayout, SingleAxisIsHorizontal) {
    const ImageGrid grid(50, 40);
    auto layout = build_axis_layout(grid, 1, default_axis_margin(grid));
    ASSERT_EQ(layout.size(), 1u);
    const auto& axis = layout.axes()[0];
    EXPECT_NEAR(axis.direction().x, 1.0, 1e-15);
    EXPECT_NEAR(axis.direction().y, 0.0, 1e-15);
    // the whole image lies on the positive-normal side
    EXPECT_LT(axis.origin().y, 1.0);
}

TEST(AxisLayout, AngularSpacing) {
    const ImageGrid grid(260, 260);
    auto layout = build_axis_layout(grid, 27, default_axis_margin(grid));
    ASSERT_EQ(layout.size(), 27u);
    EXPECT_EQ(layout.bin_count(), 368);
    for (std::size_t l = 0; l < layout.size(); ++l) {
        const auto& d = layout.axes()[l].direction();
        const double theta = std::atan2(d.y, d.x);
        EXPECT_NEAR(theta, static_cast<double>(l) * std::numbers::pi / 27.0, 1e-12);
        EXPECT_EQ(layout.axes()[l].index(), static_cast<int>(l) + 1);
    }
}

TEST(AxisLayout, CornersStayBeyondTheMargin) {
    const ImageGrid grid(260, 200);
    const double margin = default_axis_margin(grid);
    EXPECT_DOUBLE_EQ(margin, 0.05 * std::sqrt(260.0 * 260.0 + 200.0 * 200.0));
    auto layout = build_axis_layout(grid, 13, margin);
    const std::vector<Point2> corners{{1, 1}, {260, 1}, {1, 200}, {260, 200}};
    for (const auto& axis : layout.axes()) {
        for (const auto& c : corners) {
            const auto p = project_to_axis(c, axis);
            EXPECT_GE(p.distance, margin - 1e-9);
            EXPECT_GE(p.along, 0.5);
            EXPECT_LT(p.along, axis.bin_count() + 0.5);
        }
    }
}

TEST(AxisLayout, TextRoundTrip) {
    auto layout = build_axis_layout(ImageGrid(30, 20), 5, 2.5);
    auto back = AxisLayout::from_text(layout.to_text());
    ASSERT_EQ(back.size(), layout.size());
    EXPECT_EQ(back.grid(), layout.grid());
    EXPECT_EQ(back.margin(), layout.margin());
    for (std::size_t l = 0; l < layout.size(); ++l) {
        EXPECT_EQ(back.axes()[l].origin(), layout.axes()[l].origin());
        EXPECT_EQ(back.axes()[l].direction(), layout.axes()[l].direction());
    }
}

TEST(AxisLayout, RejectsBadArguments) {
    EXPECT_THROW(build_axis_layout(ImageGrid(10, 10), 0, 1.0), std::invalid_argument);
    EXPECT_THROW(build_axis_layout(ImageGrid(10, 10), 3, 0.0), std::invalid_argument);
}

TEST(Projection, AxisAligned) {
    ObservationAxis axis(1, {0, 0}, {1, 0}, 100);
    auto p = project_to_axis({3, 4}, axis);
    EXPECT_EQ(p.bin, 3);
    EXPECT_DOUBLE_EQ(p.distance, 4.0);
    EXPECT_EQ(project_to_axis({7, 0}, axis).distance, 0.0);
}

TEST(Projection, VerticalAxis) {
    ObservationAxis axis(1, {10, 0}, {0, 1}, 100);
    EXPECT_EQ(axis.normal(), (Point2{-1, 0}));
    auto p = project_to_axis({3, 4}, axis);
    EXPECT_EQ(p.bin, 4);
    EXPECT_DOUBLE_EQ(p.distance, 7.0);
}

TEST(Projection, ReconstructsTheCell) {
    const ImageGrid grid(260, 260);
    auto layout = build_axis_layout(grid, 27, default_axis_margin(grid));
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        const Point2 cell{rng.uniform(1.0, 260.0), rng.uniform(1.0, 260.0)};
        for (const auto& axis : layout.axes()) {
            const auto p = project_to_axis(cell, axis);
            const Point2 back = axis.point_at(p.along, p.distance);
            EXPECT_NEAR(back.x, cell.x, 1e-10);
            EXPECT_NEAR(back.y, cell.y, 1e-10);
        }
    }
}

TEST(Scheme2, EmptyEncodesToZero) {
    const ImageGrid grid(20, 20);
    auto layout = build_axis_layout(grid, 4, 1.0);
    auto phi = make_sensing_matrix(10, static_cast<std::size_t>(layout.bin_count()), 1);
    auto y = encode_scheme2(AnnotationSet(grid), layout, phi);
    EXPECT_EQ(y.size(), 40u);
    EXPECT_EQ(y.block_count(), 4u);
    EXPECT_EQ(y.values(), Eigen::VectorXd::Zero(40));
}

TEST(Scheme2, SingleCellBlocksAreScaledColumns) {
    const ImageGrid grid(20, 20);
    auto layout = build_axis_layout(grid, 2, 1.0);
    auto phi = make_sensing_matrix(10, static_cast<std::size_t>(layout.bin_count()), 2);
    const Point2 cell{7.3, 12.8};
    auto y = encode_scheme2(AnnotationSet(grid, {cell}), layout, phi);
    for (std::size_t l = 0; l < 2; ++l) {
        const auto p = project_to_axis(cell, layout.axes()[l]);
        Eigen::VectorXd expected = p.distance * phi.matrix().col(p.bin - 1);
        EXPECT_LT((y.block(l) - expected).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GT(y.block(l).norm(), 0.0);
    }
}

TEST(Scheme2, DefaultPatchLength) {
    const ImageGrid grid(260, 260);
    auto layout = build_axis_layout(grid, 27, default_axis_margin(grid));
    auto phi = make_sensing_matrix(112, 368, 7);
    auto y = encode_scheme2(AnnotationSet(grid, {{100, 100}}), layout, phi);
    EXPECT_EQ(y.size(), 3024u);
}

TEST(Scheme2, BinConflictKeepsNearerCell) {
    ObservationAxis axis(1, {0, 0}, {1, 0}, 50);
    AnnotationSet set(ImageGrid(40, 40), {{10.2, 30}, {9.9, 12}, {25, 5}});
    auto f = axis_location_signal(set, axis);
    ASSERT_EQ(f.nonzeros(), 2u);
    EXPECT_EQ(f.entries()[0].index, 10u);
    EXPECT_DOUBLE_EQ(f.entries()[0].value, 12.0);
    EXPECT_EQ(f.entries()[1].index, 25u);
}

TEST(Scheme2, BinConflictTieBreaksOnX) {
    // equal |distance| on opposite sides: smaller x wins
    ObservationAxis axis(1, {0, 20}, {1, 0}, 50);
    AnnotationSet set(ImageGrid(40, 40), {{10.3, 28}, {9.8, 12}});
    auto f = axis_location_signal(set, axis);
    ASSERT_EQ(f.nonzeros(), 1u);
    EXPECT_EQ(f.entries()[0].value, -8.0);
}

TEST(Scheme2, ConflictsNeverCoverEveryAxis) {
    // Cells 1.5 px or more apart always differ by more than one bin on some
    // axis when L >= 3, so no pair can collide on all of them.
    Rng rng(77);
    for (int L : {3, 5, 27}) {
        const ImageGrid grid(60, 60);
        auto layout = build_axis_layout(grid, L, default_axis_margin(grid));
        for (int trial = 0; trial < 2000; ++trial) {
            const Point2 a{rng.uniform(1.0, 60.0), rng.uniform(1.0, 60.0)};
            const double r = rng.uniform(1.5, 6.0), t = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const Point2 b{a.x + r * std::cos(t), a.y + r * std::sin(t)};
            if (!grid.contains(b)) continue;
            int shared = 0;
            for (const auto& axis : layout.axes()) {
                shared += project_to_axis(a, axis).bin == project_to_axis(b, axis).bin ? 1 : 0;
            }
            EXPECT_LE(shared, L - 1);
        }
    }
}

TEST(Scheme2, DeterministicAcrossWorkers) {
    const ImageGrid grid(80, 80);
    auto layout = build_axis_layout(grid, 9, default_axis_margin(grid));
    auto phi = make_sensing_matrix(20, static_cast<std::size_t>(layout.bin_count()), 3);
    AnnotationSet set(grid, {{5, 5}, {40.5, 22.25}, {70, 79}});
    auto a = encode_scheme2(set, layout, phi, 1);
    auto b = encode_scheme2(set, layout, phi, 4);
    EXPECT_EQ(a.values(), b.values());
}
