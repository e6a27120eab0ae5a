#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csdetect/config.hpp"
#include "csdetect/decoder.hpp"
#include "csdetect/encoder.hpp"
#include "csdetect/predictor.hpp"
#include "csdetect/sensing.hpp"
#include "csdetect/synthdata.hpp"

namespace csdetect {

/// Layout, sensing matrix and solver settings shared by every patch of a run.
struct PipelineContext {
    PipelineConfig config;
    AxisLayout layout;
    SensingMatrix phi;
    RecoveryParams recovery;
    DecodeParams decode;

    static PipelineContext make(const PipelineConfig& config);

    /// Per-block relative noise budget to use for a predictor whose expected
    /// relative error is `relative_error`.
    void calibrate_budget(double relative_error);
};

std::uint64_t sensing_seed(const PipelineConfig& config);

/// Patch-level encoded targets for the regressor: every patch of the image at
/// offset 0, in all four rotations.
std::vector<TrainingExample> training_examples(const PipelineContext& ctx, const Image& image,
                                               const AnnotationSet& annotations);

struct PatchDiagnostics {
    int patch = 0;
    int origin_x = 0;
    int origin_y = 0;
    Scheme2Decoding decoding;
};

struct ImageOutcome {
    std::string id;
    std::vector<Point2> truth;               // cells inside the tiled region
    std::vector<Detection> clusters;         // every cluster, support attached
    DetectionResult detections;              // clusters meeting min_support
    std::vector<PatchDiagnostics> patches;   // kept only when requested
    std::size_t failed_axes = 0;
};

/// Tiles the image at (offset, offset), predicts each patch's compressed
/// signal (oracle when model is null), decodes and maps detections back to
/// image coordinates.
ImageOutcome process_image(const PipelineContext& ctx, const Image& image, const AnnotationSet& annotations,
                           int offset, std::uint64_t image_seed, const RegressorModel* model,
                           bool keep_diagnostics);

/// True when the cell's rounded pixel falls in a complete tile at this offset.
bool tile_covered(const Point2& cell, const ImageGrid& grid, int patch_size, int offset);

struct RunOptions {
    std::string mode = "oracle";  // or "trained"
    std::optional<std::filesystem::path> model;
    bool diagnostics = false;
};

// Subcommands. Each returns a process exit status: 0 on success, 1 when some
// image failed. Configuration problems throw ConfigError.
int cmd_synth(const PipelineConfig& config, const std::filesystem::path& out_dir);
int cmd_train(const PipelineConfig& config, const std::filesystem::path& manifest,
              const std::filesystem::path& out_dir);
int cmd_run(const PipelineConfig& config, const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
            const RunOptions& options);
int cmd_ensemble(const PipelineConfig& config, const std::filesystem::path& manifest,
                 const std::filesystem::path& out_dir, const RunOptions& options);
int cmd_ripcheck(const PipelineConfig& config, const std::filesystem::path& out_csv, std::size_t sparsity,
                 std::size_t trials);

}  // namespace csdetect
