#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "csdetect/core.hpp"

namespace csdetect {

inline constexpr double kDefaultCountWeight = 0.20;

/// [y..., lambda * count]
Eigen::VectorXd fuse_labels(const CompressedSignal& y, std::size_t cell_count, double lambda);

struct SplitLabel {
    CompressedSignal signal;
    std::optional<double> count;  // recovered cell count when a count channel was present
};

/// Inverse of fuse_labels: drops the trailing channel and rescales it by 1/lambda.
SplitLabel split_label(const Eigen::VectorXd& label, std::size_t block_size, std::size_t block_count,
                       bool has_count, double lambda);

/// y plus Gaussian noise whose per-block standard deviation is
/// sigma_rel * ||y_block|| / sqrt(M), so ||noise_block|| ~ sigma_rel ||y_block||.
CompressedSignal oracle_predict(const CompressedSignal& y_true, double sigma_rel, std::uint64_t seed);

struct TrainingExample {
    Image patch;
    Eigen::VectorXd label;
};

struct LabelLayout {
    std::size_t block_size = 0;
    std::size_t block_count = 0;
    bool has_count = true;
    double lambda = kDefaultCountWeight;

    std::size_t size() const { return block_size * block_count + (has_count ? 1 : 0); }
};

struct TrainingOptions {
    int epochs = 40;
    double learning_rate = 0.05;
    double momentum = 0.9;
    int batch_size = 32;
    int hidden_units = 256;
    int input_side = 32;  // patches are box-downsampled to input_side x input_side
    std::uint64_t seed = 0;
};

struct TrainingMeta {
    int epochs = 0;
    double learning_rate = 0.0;
    std::vector<double> loss_history;  // mean Euclidean loss per epoch, in label units
    double initial_loss = 0.0;
    double final_loss = 0.0;
    /// Median over training examples of ||prediction - y|| / ||y|| on the signal
    /// channels; a calibrated noise budget for recovery.
    double relative_residual = 0.0;
};

/// One-hidden-layer regressor: label = offset + scale * (W2 tanh(W1 x + b1) + b2),
/// with x the flattened downsampled patch minus the training mean input. `offset` is the per-channel label
/// mean and `scale` one global label spread, both fixed before training, so
/// the squared error in network units is the Euclidean label loss divided by
/// scale^2.
class RegressorModel {
public:
    RegressorModel(int input_side, int hidden_units, LabelLayout layout);

    int input_side() const { return input_side_; }
    std::size_t input_size() const { return static_cast<std::size_t>(input_side_) * input_side_; }
    std::size_t hidden_units() const { return static_cast<std::size_t>(w1_.rows()); }
    std::size_t output_size() const { return static_cast<std::size_t>(w2_.rows()); }
    const LabelLayout& layout() const { return layout_; }
    const TrainingMeta& meta() const { return meta_; }
    TrainingMeta& meta() { return meta_; }

    Eigen::MatrixXd& w1() { return w1_; }
    Eigen::VectorXd& b1() { return b1_; }
    Eigen::MatrixXd& w2() { return w2_; }
    Eigen::VectorXd& b2() { return b2_; }
    Eigen::VectorXd& offset() { return offset_; }
    Eigen::VectorXd& input_mean() { return input_mean_; }
    double& scale() { return scale_; }
    const Eigen::MatrixXd& w1() const { return w1_; }
    const Eigen::VectorXd& b1() const { return b1_; }
    const Eigen::MatrixXd& w2() const { return w2_; }
    const Eigen::VectorXd& b2() const { return b2_; }
    const Eigen::VectorXd& offset() const { return offset_; }
    const Eigen::VectorXd& input_mean() const { return input_mean_; }
    double scale() const { return scale_; }

    bool finite() const;

    /// Centred, flattened network input for a patch (downsampled when needed).
    Eigen::VectorXd input_for(const Image& patch) const;
    /// Raw label-space output for prepared inputs (one column per sample).
    Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

    void save(const std::filesystem::path& path) const;
    static RegressorModel load(const std::filesystem::path& path);

private:
    int input_side_;
    LabelLayout layout_;
    Eigen::MatrixXd w1_;
    Eigen::VectorXd b1_;
    Eigen::MatrixXd w2_;
    Eigen::VectorXd b2_;
    Eigen::VectorXd offset_;
    Eigen::VectorXd input_mean_;
    double scale_ = 1.0;
    TrainingMeta meta_;
};

/// Randomly initialised, untrained model for the given examples.
RegressorModel initial_model(const std::vector<TrainingExample>& examples, const LabelLayout& layout,
                             const TrainingOptions& options);

struct Gradients {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
};

/// Mean Euclidean loss 1/(2B) sum ||out - target||^2 in network units
/// (targets already offset and scaled) and its analytic gradients.
double loss_and_gradients(const RegressorModel& model, const Eigen::MatrixXd& inputs,
                          const Eigen::MatrixXd& normalized_targets, Gradients* grads);

/// Median over examples of ||prediction - y|| / ||y|| on the signal channels.
double relative_residual(const RegressorModel& model, const std::vector<TrainingExample>& examples);

/// Mini-batch gradient descent with momentum on the Euclidean loss.
RegressorModel train_regressor(const std::vector<TrainingExample>& examples, const LabelLayout& layout,
                               const TrainingOptions& options);

struct Prediction {
    CompressedSignal signal;
    std::optional<double> predicted_count;
};

Prediction predict(const RegressorModel& model, const Image& patch);

void write_training_log(const std::filesystem::path& path, const TrainingMeta& meta);

}  // namespace csdetect
