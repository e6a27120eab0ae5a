#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "csdetect/decoder.hpp"
#include "csdetect/encoder.hpp"
#include "csdetect/predictor.hpp"
#include "csdetect/rng.hpp"
#include "csdetect/synthdata.hpp"

using namespace csdetect;

namespace {

// Four 8x8 patches with one cell each, encoded with L=3, M=6.
struct TinyTask {
    ImageGrid grid{8, 8};
    AxisLayout layout = build_axis_layout(grid, 3, 1.0);
    SensingMatrix phi = make_sensing_matrix(6, static_cast<std::size_t>(layout.bin_count()), 4);
    LabelLayout labels{6, 3, true, 0.2};
    std::vector<TrainingExample> examples;

    explicit TinyTask(int count) {
        Rng rng(5);
        for (int i = 0; i < count; ++i) {
            Image patch(8, 8);
            for (auto& v : patch.reshaped()) v = rng.uniform();
            const Point2 cell{1.0 + static_cast<double>(rng.below(8)), 1.0 + static_cast<double>(rng.below(8))};
            AnnotationSet ann(grid, {cell});
            examples.push_back({patch, fuse_labels(encode_scheme2(ann, layout, phi), 1, labels.lambda)});
        }
    }
};

TrainingOptions tiny_options() {
    TrainingOptions o;
    o.input_side = 8;
    o.hidden_units = 24;
    o.epochs = 3000;
    o.learning_rate = 0.05;
    o.batch_size = 4;
    o.seed = 17;
    return o;
}

}  // namespace

TEST(Labels, Fuse) {
    CompressedSignal y((Eigen::VectorXd(2) << 1, 2).finished(), 2);
    EXPECT_EQ(fuse_labels(y, 3, 0.2), (Eigen::VectorXd(3) << 1, 2, 0.2 * 3).finished());
    EXPECT_EQ(fuse_labels(y, 3, 0.0)(2), 0.0);
    EXPECT_EQ(fuse_labels(y, 0, 0.7)(2), 0.0);
}

TEST(Labels, SplitInvertsFuse) {
    Rng rng(1);
    Eigen::VectorXd v(12);
    for (auto& x : v) x = rng.normal();
    CompressedSignal y(v, 4, 3);
    for (double lambda : {0.2, 1.0, 3.7}) {
        for (std::size_t c : {0u, 1u, 23u}) {
            auto split = split_label(fuse_labels(y, c, lambda), 4, 3, true, lambda);
            EXPECT_EQ(split.signal.values(), y.values());
            ASSERT_TRUE(split.count.has_value());
            EXPECT_NEAR(*split.count, static_cast<double>(c), 1e-9);
        }
    }
    auto plain = split_label(v, 4, 3, false, 0.2);
    EXPECT_FALSE(plain.count.has_value());
    EXPECT_THROW(split_label(v, 4, 3, true, 0.2), DimensionError);
}

TEST(Oracle, ZeroNoiseIsIdentity) {
    CompressedSignal y(Eigen::VectorXd::LinSpaced(20, -1, 1), 10, 2);
    EXPECT_EQ(oracle_predict(y, 0.0, 3).values(), y.values());
}

TEST(Oracle, SeedDeterminesNoise) {
    CompressedSignal y(Eigen::VectorXd::LinSpaced(20, -1, 1), 10, 2);
    EXPECT_EQ(oracle_predict(y, 0.1, 3).values(), oracle_predict(y, 0.1, 3).values());
    EXPECT_NE(oracle_predict(y, 0.1, 3).values(), oracle_predict(y, 0.1, 4).values());
}

TEST(Oracle, RelativeErrorConcentrates) {
    auto phi = make_sensing_matrix(112, 368, 2);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(368);
    f(10) = 40;
    f(200) = -25;
    CompressedSignal y(phi.apply(f), 112);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto y_hat = oracle_predict(y, 0.05, seed);
        const double rel = (y_hat.values() - y.values()).norm() / y.values().norm();
        EXPECT_GE(rel, 0.03);
        EXPECT_LE(rel, 0.07);
    }
}

TEST(Oracle, CleanPredictionDecodesExactly) {
    const ImageGrid grid(100, 100);
    auto layout = build_axis_layout(grid, 9, default_axis_margin(grid));
    auto phi = make_sensing_matrix(40, static_cast<std::size_t>(layout.bin_count()), 6);
    AnnotationSet truth(grid, {{20, 30}, {70.5, 65.25}, {45, 80}});
    auto y_hat = oracle_predict(encode_scheme2(truth, layout, phi), 0.0, 1);
    RecoveryParams r;
    auto out = decode_scheme2(y_hat, layout, phi, DecodeParams{}.resolved(layout), r);
    ASSERT_EQ(out.detections.size(), 3u);
    for (const auto& cell : truth.cells()) {
        double best = 1e9;
        for (const auto& d : out.detections.points) best = std::min(best, distance(cell, Point2{d.x, d.y}));
        EXPECT_LT(best, 1.0);
    }
}

TEST(Regressor, SingleExampleIsReproduced) {
    TinyTask task(1);
    auto model = train_regressor(task.examples, task.labels, tiny_options());
    const auto p = predict(model, task.examples[0].patch);
    const Eigen::VectorXd y = task.examples[0].label.head(18);
    EXPECT_LT((p.signal.values() - y).norm(), 1e-2 * y.norm());
    ASSERT_TRUE(p.predicted_count.has_value());
    EXPECT_NEAR(*p.predicted_count, 1.0, 1e-2);
}

TEST(Regressor, MemorizesSmallSet) {
    TinyTask task(4);
    auto model = train_regressor(task.examples, task.labels, tiny_options());
    const auto& meta = model.meta();
    ASSERT_GT(meta.initial_loss, 0.0);
    EXPECT_LT(meta.final_loss, 1e-3 * meta.initial_loss);
    EXPECT_EQ(meta.loss_history.size(), 3000u);
    for (const auto& ex : task.examples) {
        const Eigen::VectorXd y = ex.label.head(18);
        EXPECT_LT((predict(model, ex.patch).signal.values() - y).norm(), 1e-2 * y.norm());
    }
    EXPECT_LT(meta.relative_residual, 1e-2);
    EXPECT_DOUBLE_EQ(meta.relative_residual, relative_residual(model, task.examples));
}

TEST(Regressor, SeededTrainingIsDeterministic) {
    TinyTask task(4);
    auto o = tiny_options();
    o.epochs = 50;
    auto a = train_regressor(task.examples, task.labels, o);
    auto b = train_regressor(task.examples, task.labels, o);
    EXPECT_EQ(a.w1(), b.w1());
    EXPECT_EQ(a.b1(), b.b1());
    EXPECT_EQ(a.w2(), b.w2());
    EXPECT_EQ(a.b2(), b.b2());
    o.seed = 18;
    EXPECT_NE(train_regressor(task.examples, task.labels, o).w1(), a.w1());
}

TEST(Regressor, ZeroModelPredictsZero) {
    RegressorModel model(4, 5, LabelLayout{6, 3, true, 0.2});
    Image patch = Image::Constant(16, 16, 0.3);
    const auto p = predict(model, patch);
    EXPECT_EQ(p.signal.size(), 18u);
    EXPECT_EQ(p.signal.block_count(), 3u);
    EXPECT_EQ(p.signal.values(), Eigen::VectorXd::Zero(18));
    EXPECT_EQ(*p.predicted_count, 0.0);
}

TEST(Regressor, OutputLengthIsLTimesM) {
    RegressorModel model(8, 3, LabelLayout{112, 27, false, 0.2});
    Image patch = Image::Random(260, 260);
    const auto p = predict(model, patch);
    EXPECT_EQ(p.signal.size(), 112u * 27u);
    EXPECT_FALSE(p.predicted_count.has_value());
    EXPECT_THROW(predict(model, Image::Zero(4, 4)), DimensionError);
}

TEST(Regressor, GradientsMatchFiniteDifferences) {
    Rng rng(9);
    for (int net = 0; net < 3; ++net) {
        RegressorModel model(3, 4, LabelLayout{2, 2, true, 0.2});
        for (auto* m : {&model.w1(), &model.w2()}) {
            for (auto& v : m->reshaped()) v = rng.normal(0.0, 0.5);
        }
        for (auto* v : {&model.b1(), &model.b2()}) {
            for (auto& x : *v) x = rng.normal(0.0, 0.5);
        }
        Eigen::MatrixXd x(9, 5), t(5, 5);
        for (auto& v : x.reshaped()) v = rng.normal();
        for (auto& v : t.reshaped()) v = rng.normal();
        Gradients g;
        loss_and_gradients(model, x, t, &g);

        auto probe = [&](Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad) {
            for (int k = 0; k < 5; ++k) {
                const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(param.size())));
                double& w = param.data()[i];
                const double saved = w, h = 1e-5;
                w = saved + h;
                const double up = loss_and_gradients(model, x, t, nullptr);
                w = saved - h;
                const double down = loss_and_gradients(model, x, t, nullptr);
                w = saved;
                const double numeric = (up - down) / (2 * h);
                const double analytic = grad.data()[i];
                EXPECT_LE(std::abs(numeric - analytic), 1e-4 * std::max(1e-3, std::abs(numeric) + std::abs(analytic)));
            }
        };
        probe(model.w1(), g.w1);
        probe(model.b1(), g.b1);
        probe(model.w2(), g.w2);
        probe(model.b2(), g.b2);
    }
}

TEST(Regressor, SaveLoadRoundTrip) {
    TinyTask task(4);
    auto o = tiny_options();
    o.epochs = 20;
    auto model = train_regressor(task.examples, task.labels, o);
    const auto dir = std::filesystem::temp_directory_path() / "csdetect_test_predictor";
    std::filesystem::create_directories(dir);
    model.save(dir / "model.bin");
    auto back = RegressorModel::load(dir / "model.bin");
    EXPECT_EQ(back.w1(), model.w1());
    EXPECT_EQ(back.b2(), model.b2());
    EXPECT_EQ(back.offset(), model.offset());
    EXPECT_EQ(back.input_mean(), model.input_mean());
    EXPECT_EQ(back.scale(), model.scale());
    EXPECT_EQ(back.meta().relative_residual, model.meta().relative_residual);
    EXPECT_EQ(predict(back, task.examples[2].patch).signal.values(),
              predict(model, task.examples[2].patch).signal.values());

    // truncated files are rejected
    std::filesystem::resize_file(dir / "model.bin", std::filesystem::file_size(dir / "model.bin") - 8);
    EXPECT_ANY_THROW(RegressorModel::load(dir / "model.bin"));

    write_training_log(dir / "log.csv", model.meta());
    std::ifstream in(dir / "log.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_FALSE(header.empty());
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 21);  // epoch 0 holds the initial loss
    std::filesystem::remove_all(dir);
}
