#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "csdetect/decoder.hpp"
#include "csdetect/predictor.hpp"
#include "csdetect/recovery.hpp"
#include "csdetect/synthdata.hpp"

namespace csdetect {

/// Invalid or inconsistent configuration (CLI exit status 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SynthConfig {
    int width = 520;
    int height = 520;
    int count_min = 10;
    int count_max = 40;
    double blob_radius_min = 6.0;
    double blob_radius_max = 9.0;
    double intensity_min = 0.6;
    double intensity_max = 1.0;
    double background_level = 0.1;
    double background_noise_sigma = 0.03;
    double min_separation = 30.0;
    bool integer_centroids = false;
    int train_images = 50;
    int test_images = 50;

    friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct SensingConfig {
    int rows = 112;  // M
    double measurement_constant = kDefaultMeasurementConstant;

    friend bool operator==(const SensingConfig&, const SensingConfig&) = default;
};

struct EncoderConfig {
    int axes = 27;        // L
    double margin = 0.0;  // 0: 5% of the patch diagonal

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct RecoveryConfig {
    std::string solver = "bp";  // "bp" or "omp"
    int max_sparsity = 0;
    double residual_tol = 1e-9;
    double noise_budget = 0.1;
    bool relative_budget = true;
    /// Replace noise_budget by the predictor's expected relative error (oracle
    /// sigma, or the trained model's median training residual).
    bool calibrate_budget = true;
    int max_iterations = 20000;
    double shrinkage_step = 0.0;
    bool debias = true;

    friend bool operator==(const RecoveryConfig&, const RecoveryConfig&) = default;
};

struct DecoderConfig {
    double scheme1_threshold = 0.5;
    double bandwidth = 0.0;
    int min_support = 0;
    double noise_margin = 0.0;
    double merge_radius = 9.0;
    int merge_min_count = 6;

    friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

struct PredictorConfig {
    std::string mode = "oracle";  // "oracle" or "trained"
    double sigma_rel = 0.05;
    bool count_channel = true;
    double lambda = kDefaultCountWeight;
    int hidden_units = 256;
    int input_side = 32;
    int epochs = 40;
    double learning_rate = 0.05;
    double momentum = 0.9;
    int batch_size = 32;

    friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

struct EvaluationConfig {
    double rho = 0.0;  // 0: smallest blob radius
    bool macro = false;

    friend bool operator==(const EvaluationConfig&, const EvaluationConfig&) = default;
};

struct RunConfig {
    int patch_size = 260;
    std::vector<int> offsets{0, 20, 40, 60, 80, 100, 120, 140, 160, 180};
    int workers = 1;
    std::uint64_t seed = 0;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct PipelineConfig {
    SynthConfig synth;
    SensingConfig sensing;
    EncoderConfig encoder;
    RecoveryConfig recovery;
    DecoderConfig decoder;
    PredictorConfig predictor;
    EvaluationConfig evaluation;
    RunConfig run;

    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;

    /// Cross-field checks; throws ConfigError.
    void validate() const;

    std::string to_text() const;
    /// Missing keys keep their defaults; unknown keys are errors.
    static PipelineConfig from_text(const std::string& text);
    static PipelineConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    // Derived parameter blocks.
    SynthesisParams synthesis_params(std::uint64_t seed) const;
    ImageGrid patch_grid() const { return ImageGrid(run.patch_size, run.patch_size); }
    RecoveryParams recovery_params() const;
    DecodeParams decode_params() const;
    LabelLayout label_layout() const;
    TrainingOptions training_options() const;
    double rho() const { return evaluation.rho > 0.0 ? evaluation.rho : synth.blob_radius_min; }
};

}  // namespace csdetect
