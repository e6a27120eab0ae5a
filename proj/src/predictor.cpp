#include "csdetect/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "csdetect/detail/binary_io.hpp"
#include "csdetect/rng.hpp"
#include "csdetect/synthdata.hpp"

namespace csdetect {

using detail::get_le;
using detail::put_le;

Eigen::VectorXd fuse_labels(const CompressedSignal& y, std::size_t cell_count, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("count weight must be non-negative");
    Eigen::VectorXd label(y.values().size() + 1);
    label << y.values(), lambda * static_cast<double>(cell_count);
    return label;
}

SplitLabel split_label(const Eigen::VectorXd& label, std::size_t block_size, std::size_t block_count, bool has_count,
                       double lambda) {
    const auto signal_size = static_cast<Eigen::Index>(block_size * block_count);
    if (label.size() != signal_size + (has_count ? 1 : 0)) {
        throw DimensionError(fmt::format("label length {} does not match {} blocks of {}{}", label.size(),
                                         block_count, block_size, has_count ? " plus a count" : ""));
    }
    SplitLabel out{CompressedSignal(label.head(signal_size), block_size, block_count), std::nullopt};
    if (has_count && lambda > 0.0) out.count = label[signal_size] / lambda;
    return out;
}

CompressedSignal oracle_predict(const CompressedSignal& y_true, double sigma_rel, std::uint64_t seed) {
    if (sigma_rel < 0.0) throw std::invalid_argument("oracle noise level must be non-negative");
    Eigen::VectorXd noisy = y_true.values();
    if (sigma_rel == 0.0) return y_true;
    Rng rng(seed);
    const auto m = static_cast<Eigen::Index>(y_true.block_size());
    for (std::size_t l = 0; l < y_true.block_count(); ++l) {
        auto block = noisy.segment(static_cast<Eigen::Index>(l) * m, m);
        const double stddev = sigma_rel * block.norm() / std::sqrt(static_cast<double>(m));
        for (auto& v : block) v += stddev * rng.normal();
    }
    return CompressedSignal(std::move(noisy), y_true.block_size(), y_true.block_count());
}

RegressorModel::RegressorModel(int input_side, int hidden_units, LabelLayout layout)
    : input_side_(input_side), layout_(layout) {
    if (input_side < 1 || hidden_units < 1) throw std::invalid_argument("regressor sizes must be positive");
    if (layout.block_size == 0 || layout.block_count == 0) throw std::invalid_argument("empty label layout");
    const auto d = static_cast<Eigen::Index>(input_size());
    const auto h = static_cast<Eigen::Index>(hidden_units);
    const auto o = static_cast<Eigen::Index>(layout.size());
    w1_ = Eigen::MatrixXd::Zero(h, d);
    b1_ = Eigen::VectorXd::Zero(h);
    w2_ = Eigen::MatrixXd::Zero(o, h);
    b2_ = Eigen::VectorXd::Zero(o);
    offset_ = Eigen::VectorXd::Zero(o);
    input_mean_ = Eigen::VectorXd::Zero(d);
}

bool RegressorModel::finite() const {
    return w1_.allFinite() && b1_.allFinite() && w2_.allFinite() && b2_.allFinite() && offset_.allFinite() && input_mean_.allFinite() &&
           std::isfinite(scale_);
}

Eigen::VectorXd RegressorModel::input_for(const Image& patch) const {
    const Image small = (patch.rows() == input_side_ && patch.cols() == input_side_) ? patch : downsample(patch, input_side_);
    return Eigen::Map<const Eigen::VectorXd>(small.data(), small.size()) - input_mean_;
}

Eigen::MatrixXd RegressorModel::forward(const Eigen::MatrixXd& inputs) const {
    if (inputs.rows() != w1_.cols()) throw DimensionError("regressor input size mismatch");
    const Eigen::MatrixXd hidden = ((w1_ * inputs).colwise() + b1_).array().tanh().matrix();
    Eigen::MatrixXd out = (w2_ * hidden).colwise() + b2_;
    return (scale_ * out).colwise() + offset_;
}

namespace {

Eigen::MatrixXd input_matrix(const RegressorModel& model, const std::vector<TrainingExample>& examples) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(model.input_size()), static_cast<Eigen::Index>(examples.size()));
    for (std::size_t i = 0; i < examples.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = model.input_for(examples[i].patch);
    return x;
}

Eigen::MatrixXd label_matrix(const std::vector<TrainingExample>& examples, std::size_t size) {
    Eigen::MatrixXd y(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(examples.size()));
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (static_cast<std::size_t>(examples[i].label.size()) != size) {
            throw DimensionError(fmt::format("example {} has label length {}, expected {}", i, examples[i].label.size(), size));
        }
        y.col(static_cast<Eigen::Index>(i)) = examples[i].label;
    }
    return y;
}

void check_examples(const std::vector<TrainingExample>& examples) {
    if (examples.empty()) throw std::invalid_argument("training needs at least one example");
    const auto rows = examples.front().patch.rows(), cols = examples.front().patch.cols();
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].patch.rows() != rows || examples[i].patch.cols() != cols) {
            throw DimensionError(fmt::format("example {} patch is {}x{}, expected {}x{}", i, examples[i].patch.cols(),
                                             examples[i].patch.rows(), cols, rows));
        }
    }
}

// Full-dataset mean Euclidean loss in label units.
double dataset_loss(const RegressorModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& labels) {
    return 0.5 * (model.forward(x) - labels).colwise().squaredNorm().mean();
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double upper = *mid;
    return 0.5 * (upper + *std::max_element(v.begin(), mid));
}

}  // namespace

RegressorModel initial_model(const std::vector<TrainingExample>& examples, const LabelLayout& layout,
                             const TrainingOptions& options) {
    check_examples(examples);
    RegressorModel model(options.input_side, options.hidden_units, layout);
    const Eigen::MatrixXd labels = label_matrix(examples, layout.size());
    model.offset() = labels.rowwise().mean();
    model.input_mean() = input_matrix(model, examples).rowwise().mean();
    const double spread = std::sqrt((labels.colwise() - model.offset()).squaredNorm() / static_cast<double>(labels.size()));
    model.scale() = spread > 0.0 ? spread : 1.0;

    Rng rng(options.seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(model.input_size()));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(model.hidden_units()));
    for (Eigen::Index i = 0; i < model.w1().size(); ++i) model.w1().data()[i] = s1 * rng.normal();
    for (Eigen::Index i = 0; i < model.w2().size(); ++i) model.w2().data()[i] = s2 * rng.normal();
    return model;
}

double loss_and_gradients(const RegressorModel& model, const Eigen::MatrixXd& inputs,
                          const Eigen::MatrixXd& normalized_targets, Gradients* grads) {
    const double batch = static_cast<double>(inputs.cols());
    const Eigen::MatrixXd hidden = ((model.w1() * inputs).colwise() + model.b1()).array().tanh().matrix();
    const Eigen::MatrixXd out = (model.w2() * hidden).colwise() + model.b2();
    const Eigen::MatrixXd err = out - normalized_targets;
    const double loss = 0.5 * err.squaredNorm() / batch;
    if (grads) {
        const Eigen::MatrixXd d_out = err / batch;
        grads->w2.noalias() = d_out * hidden.transpose();
        grads->b2 = d_out.rowwise().sum();
        const Eigen::MatrixXd d_hidden =
            ((model.w2().transpose() * d_out).array() * (1.0 - hidden.array().square())).matrix();
        grads->w1.noalias() = d_hidden * inputs.transpose();
        grads->b1 = d_hidden.rowwise().sum();
    }
    return loss;
}

RegressorModel train_regressor(const std::vector<TrainingExample>& examples, const LabelLayout& layout,
                               const TrainingOptions& options) {
    if (options.epochs < 0 || options.batch_size < 1 || !(options.learning_rate > 0.0)) {
        throw std::invalid_argument("bad training options");
    }
    RegressorModel model = initial_model(examples, layout, options);
    const Eigen::MatrixXd x = input_matrix(model, examples);
    const Eigen::MatrixXd labels = label_matrix(examples, layout.size());
    const Eigen::MatrixXd targets = (labels.colwise() - model.offset()) / model.scale();

    auto& meta = model.meta();
    meta.epochs = options.epochs;
    meta.learning_rate = options.learning_rate;
    meta.initial_loss = dataset_loss(model, x, labels);

    Gradients g, v{Eigen::MatrixXd::Zero(model.w1().rows(), model.w1().cols()), Eigen::VectorXd::Zero(model.b1().size()),
                   Eigen::MatrixXd::Zero(model.w2().rows(), model.w2().cols()), Eigen::VectorXd::Zero(model.b2().size())};
    const auto n = static_cast<std::size_t>(x.cols());
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng = Rng::derived(options.seed, 1);
    const auto batch = static_cast<std::size_t>(options.batch_size);
    const double lr = options.learning_rate, mu = options.momentum;

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(n, start + batch);
            const auto b = static_cast<Eigen::Index>(stop - start);
            Eigen::MatrixXd xb(x.rows(), b), tb(targets.rows(), b);
            for (Eigen::Index k = 0; k < b; ++k) {
                xb.col(k) = x.col(order[start + static_cast<std::size_t>(k)]);
                tb.col(k) = targets.col(order[start + static_cast<std::size_t>(k)]);
            }
            loss_and_gradients(model, xb, tb, &g);
            v.w1 = mu * v.w1 - lr * g.w1;
            v.b1 = mu * v.b1 - lr * g.b1;
            v.w2 = mu * v.w2 - lr * g.w2;
            v.b2 = mu * v.b2 - lr * g.b2;
            model.w1() += v.w1;
            model.b1() += v.b1;
            model.w2() += v.w2;
            model.b2() += v.b2;
        }
        meta.loss_history.push_back(dataset_loss(model, x, labels));
        if (!std::isfinite(meta.loss_history.back())) throw std::runtime_error("training diverged");
    }
    meta.final_loss = meta.loss_history.empty() ? meta.initial_loss : meta.loss_history.back();

    meta.relative_residual = relative_residual(model, examples);
    return model;
}

double relative_residual(const RegressorModel& model, const std::vector<TrainingExample>& examples) {
    check_examples(examples);
    const auto& layout = model.layout();
    const Eigen::MatrixXd labels = label_matrix(examples, layout.size());
    const Eigen::MatrixXd fitted = model.forward(input_matrix(model, examples));
    const auto signal_rows = static_cast<Eigen::Index>(layout.block_size * layout.block_count);
    std::vector<double> rel;
    for (Eigen::Index i = 0; i < labels.cols(); ++i) {
        const double truth = labels.col(i).head(signal_rows).norm();
        if (truth > 0.0) rel.push_back((fitted.col(i).head(signal_rows) - labels.col(i).head(signal_rows)).norm() / truth);
    }
    return median(std::move(rel));
}

Prediction predict(const RegressorModel& model, const Image& patch) {
    const auto expected = static_cast<Eigen::Index>(model.input_side());
    const bool direct = patch.rows() == expected && patch.cols() == expected;
    if (!direct && (patch.rows() < expected || patch.cols() < expected)) {
        throw DimensionError(fmt::format("patch {}x{} is smaller than the model input {}x{}", patch.cols(), patch.rows(),
                                         expected, expected));
    }
    const Eigen::VectorXd out = model.forward(model.input_for(patch));
    const auto& layout = model.layout();
    auto split = split_label(out, layout.block_size, layout.block_count, layout.has_count, layout.lambda);
    return {std::move(split.signal), split.count};
}

// Binary model file: "CSRG" + version, int64 header (input side, hidden units,
// block size, block count, has_count, epochs), f64 (lambda, scale, learning
// rate, final loss, relative residual), then w1, b1, w2, b2, offset, input mean as
// row-major little-endian doubles.
namespace {
constexpr char kMagic[4] = {'C', 'S', 'R', 'G'};
constexpr std::int64_t kVersion = 1;

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<double>(out, m(r, c));
    }
}

void get_matrix(std::istream& in, Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get_le<double>(in);
    }
}

void get_vector(std::istream& in, Eigen::VectorXd& v) {
    for (auto& x : v) x = get_le<double>(in);
}
}  // namespace

void RegressorModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kMagic, 4);
    put_le<std::int64_t>(out, kVersion);
    put_le<std::int64_t>(out, input_side_);
    put_le<std::int64_t>(out, w1_.rows());
    put_le<std::int64_t>(out, static_cast<std::int64_t>(layout_.block_size));
    put_le<std::int64_t>(out, static_cast<std::int64_t>(layout_.block_count));
    put_le<std::int64_t>(out, layout_.has_count ? 1 : 0);
    put_le<std::int64_t>(out, meta_.epochs);
    put_le<double>(out, layout_.lambda);
    put_le<double>(out, scale_);
    put_le<double>(out, meta_.learning_rate);
    put_le<double>(out, meta_.final_loss);
    put_le<double>(out, meta_.relative_residual);
    put_matrix(out, w1_);
    put_matrix(out, b1_);
    put_matrix(out, w2_);
    put_matrix(out, b2_);
    put_matrix(out, offset_);
    put_matrix(out, input_mean_);
}

RegressorModel RegressorModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw std::runtime_error(path.string() + ": not a model file");
    if (get_le<std::int64_t>(in) != kVersion) throw std::runtime_error(path.string() + ": unsupported model version");
    const auto side = get_le<std::int64_t>(in);
    const auto hidden = get_le<std::int64_t>(in);
    LabelLayout layout;
    layout.block_size = static_cast<std::size_t>(get_le<std::int64_t>(in));
    layout.block_count = static_cast<std::size_t>(get_le<std::int64_t>(in));
    layout.has_count = get_le<std::int64_t>(in) != 0;
    const auto epochs = get_le<std::int64_t>(in);
    layout.lambda = get_le<double>(in);
    RegressorModel model(static_cast<int>(side), static_cast<int>(hidden), layout);
    model.scale_ = get_le<double>(in);
    model.meta_.epochs = static_cast<int>(epochs);
    model.meta_.learning_rate = get_le<double>(in);
    model.meta_.final_loss = get_le<double>(in);
    model.meta_.relative_residual = get_le<double>(in);
    get_matrix(in, model.w1_);
    get_vector(in, model.b1_);
    get_matrix(in, model.w2_);
    get_vector(in, model.b2_);
    get_vector(in, model.offset_);
    get_vector(in, model.input_mean_);
    if (!in) throw std::runtime_error(path.string() + ": truncated model file");
    return model;
}

void write_training_log(const std::filesystem::path& path, const TrainingMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,loss\n";
    out << fmt::format("0,{:.9g}\n", meta.initial_loss);
    for (std::size_t i = 0; i < meta.loss_history.size(); ++i) out << fmt::format("{},{:.9g}\n", i + 1, meta.loss_history[i]);
}

}  // namespace csdetect
