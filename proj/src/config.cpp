#include "csdetect/config.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "csdetect/encoder.hpp"
#include "csdetect/rng.hpp"

namespace csdetect {

using nlohmann::ordered_json;

namespace {

// Field table shared by the reader and writer so the two cannot drift.
template <class Visitor>
void visit_fields(PipelineConfig& c, Visitor&& v) {
    v("synth", "width", c.synth.width);
    v("synth", "height", c.synth.height);
    v("synth", "count_min", c.synth.count_min);
    v("synth", "count_max", c.synth.count_max);
    v("synth", "blob_radius_min", c.synth.blob_radius_min);
    v("synth", "blob_radius_max", c.synth.blob_radius_max);
    v("synth", "intensity_min", c.synth.intensity_min);
    v("synth", "intensity_max", c.synth.intensity_max);
    v("synth", "background_level", c.synth.background_level);
    v("synth", "background_noise_sigma", c.synth.background_noise_sigma);
    v("synth", "min_separation", c.synth.min_separation);
    v("synth", "integer_centroids", c.synth.integer_centroids);
    v("synth", "train_images", c.synth.train_images);
    v("synth", "test_images", c.synth.test_images);

    v("sensing", "rows", c.sensing.rows);
    v("sensing", "measurement_constant", c.sensing.measurement_constant);

    v("encoder", "axes", c.encoder.axes);
    v("encoder", "margin", c.encoder.margin);

    v("recovery", "solver", c.recovery.solver);
    v("recovery", "max_sparsity", c.recovery.max_sparsity);
    v("recovery", "residual_tol", c.recovery.residual_tol);
    v("recovery", "noise_budget", c.recovery.noise_budget);
    v("recovery", "relative_budget", c.recovery.relative_budget);
    v("recovery", "calibrate_budget", c.recovery.calibrate_budget);
    v("recovery", "max_iterations", c.recovery.max_iterations);
    v("recovery", "shrinkage_step", c.recovery.shrinkage_step);
    v("recovery", "debias", c.recovery.debias);

    v("decoder", "scheme1_threshold", c.decoder.scheme1_threshold);
    v("decoder", "bandwidth", c.decoder.bandwidth);
    v("decoder", "min_support", c.decoder.min_support);
    v("decoder", "noise_margin", c.decoder.noise_margin);
    v("decoder", "merge_radius", c.decoder.merge_radius);
    v("decoder", "merge_min_count", c.decoder.merge_min_count);

    v("predictor", "mode", c.predictor.mode);
    v("predictor", "sigma_rel", c.predictor.sigma_rel);
    v("predictor", "count_channel", c.predictor.count_channel);
    v("predictor", "lambda", c.predictor.lambda);
    v("predictor", "hidden_units", c.predictor.hidden_units);
    v("predictor", "input_side", c.predictor.input_side);
    v("predictor", "epochs", c.predictor.epochs);
    v("predictor", "learning_rate", c.predictor.learning_rate);
    v("predictor", "momentum", c.predictor.momentum);
    v("predictor", "batch_size", c.predictor.batch_size);

    v("evaluation", "rho", c.evaluation.rho);
    v("evaluation", "macro", c.evaluation.macro);

    v("run", "patch_size", c.run.patch_size);
    v("run", "offsets", c.run.offsets);
    v("run", "workers", c.run.workers);
    v("run", "seed", c.run.seed);
}

}  // namespace

void PipelineConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (synth.width < 1 || synth.height < 1) fail("synth: image size must be positive");
    if (synth.count_min < 0 || synth.count_min > synth.count_max) fail("synth: bad cell count range");
    if (!(synth.blob_radius_min > 0.0) || synth.blob_radius_min > synth.blob_radius_max) fail("synth: bad blob radius range");
    if (synth.intensity_min < 0.0 || synth.intensity_min > synth.intensity_max || synth.intensity_max > 1.0) {
        fail("synth: intensities must satisfy 0 <= min <= max <= 1");
    }
    if (synth.min_separation < 0.0) fail("synth: min_separation must be non-negative");
    if (synth.min_separation * std::sqrt(static_cast<double>(synth.count_max)) > std::min(synth.width, synth.height)) {
        fail(fmt::format("synth: {} cells {} px apart do not fit a {}x{} image", synth.count_max, synth.min_separation,
                         synth.width, synth.height));
    }
    if (synth.train_images < 0 || synth.test_images < 0) fail("synth: image counts must be non-negative");

    if (run.patch_size < 2) fail("run: patch_size must be at least 2");
    if (run.patch_size > std::min(synth.width, synth.height)) fail("run: patch_size exceeds the image size");
    if (run.offsets.empty()) fail("run: offsets must not be empty");
    for (int o : run.offsets) {
        if (o < 0 || o >= run.patch_size) fail(fmt::format("run: offset {} outside [0, patch_size)", o));
    }
    if (run.workers < 1) fail("run: workers must be at least 1");

    const int bins = axis_bin_count(patch_grid());
    if (sensing.rows < 1 || sensing.rows >= bins) {
        fail(fmt::format("sensing: rows M={} must satisfy 1 <= M < R={}", sensing.rows, bins));
    }
    if (!(sensing.measurement_constant > 1.0)) fail("sensing: measurement_constant must exceed 1");
    if (encoder.axes < 1) fail("encoder: axes must be at least 1");
    if (encoder.margin < 0.0) fail("encoder: margin must be non-negative");

    if (recovery.solver != "bp" && recovery.solver != "omp") fail("recovery: solver must be 'bp' or 'omp'");
    try {
        recovery_params().validate();
    } catch (const std::invalid_argument& e) {
        fail(std::string("recovery: ") + e.what());
    }
    if (decoder.min_support < 0 || decoder.min_support > encoder.axes) fail("decoder: min_support must lie in 0..L");
    if (decoder.bandwidth < 0.0 || decoder.noise_margin < 0.0) fail("decoder: bandwidth and noise_margin must be >= 0");
    if (!(decoder.merge_radius > 0.0) || decoder.merge_min_count < 1) fail("decoder: bad merge rule");
    if (decoder.scheme1_threshold < 0.0) fail("decoder: scheme1_threshold must be >= 0");

    if (predictor.mode != "oracle" && predictor.mode != "trained") fail("predictor: mode must be 'oracle' or 'trained'");
    if (predictor.sigma_rel < 0.0) fail("predictor: sigma_rel must be non-negative");
    if (predictor.lambda < 0.0) fail("predictor: lambda must be non-negative");
    if (predictor.hidden_units < 1 || predictor.input_side < 1 || predictor.epochs < 0 || predictor.batch_size < 1 ||
        !(predictor.learning_rate > 0.0)) {
        fail("predictor: bad training options");
    }
    if (predictor.input_side > run.patch_size) fail("predictor: input_side exceeds patch_size");
    if (evaluation.rho < 0.0) fail("evaluation: rho must be non-negative");
}

std::string PipelineConfig::to_text() const {
    ordered_json j = ordered_json::object();
    auto copy = *this;
    visit_fields(copy, [&](const char* block, const char* key, auto& value) { j[block][key] = value; });
    return j.dump(2) + "\n";
}

PipelineConfig PipelineConfig::from_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object of blocks");

    PipelineConfig config;
    std::size_t matched = 0;
    visit_fields(config, [&](const char* block, const char* key, auto& value) {
        if (!j.contains(block) || !j[block].contains(key)) return;
        ++matched;
        try {
            j[block][key].get_to(value);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(fmt::format("config: {}.{} has the wrong type", block, key));
        }
    });
    std::size_t present = 0;
    for (const auto& [block, fields] : j.items()) {
        if (!fields.is_object()) throw ConfigError(fmt::format("config: block '{}' must be an object", block));
        bool known = false;
        visit_fields(config, [&](const char* b, const char*, auto&) { known = known || block == b; });
        if (!known) throw ConfigError(fmt::format("config: unknown block '{}'", block));
        present += fields.size();
    }
    if (present != matched) {
        // find the offender for the message
        PipelineConfig probe;
        for (const auto& [block, fields] : j.items()) {
            for (const auto& [key, _] : fields.items()) {
                bool known = false;
                visit_fields(probe, [&](const char* b, const char* k, auto&) { known = known || (block == b && key == k); });
                if (!known) throw ConfigError(fmt::format("config: unknown key {}.{}", block, key));
            }
        }
    }
    return config;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void PipelineConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_text();
}

SynthesisParams PipelineConfig::synthesis_params(std::uint64_t seed) const {
    SynthesisParams p;
    p.grid = ImageGrid(synth.width, synth.height);
    p.count_min = synth.count_min;
    p.count_max = synth.count_max;
    p.blob_radius_min = synth.blob_radius_min;
    p.blob_radius_max = synth.blob_radius_max;
    p.intensity_min = synth.intensity_min;
    p.intensity_max = synth.intensity_max;
    p.background_level = synth.background_level;
    p.background_noise_sigma = synth.background_noise_sigma;
    p.min_separation = synth.min_separation;
    p.integer_centroids = synth.integer_centroids;
    p.seed = seed;
    return p;
}

RecoveryParams PipelineConfig::recovery_params() const {
    RecoveryParams p;
    p.max_sparsity = static_cast<std::size_t>(std::max(recovery.max_sparsity, 0));
    p.residual_tol = recovery.residual_tol;
    p.noise_budget = recovery.noise_budget;
    p.relative_budget = recovery.relative_budget;
    p.max_iterations = recovery.max_iterations;
    p.shrinkage_step = recovery.shrinkage_step;
    p.debias = recovery.debias;
    return p;
}

DecodeParams PipelineConfig::decode_params() const {
    DecodeParams p;
    p.scheme1_threshold = decoder.scheme1_threshold;
    p.bandwidth = decoder.bandwidth;
    p.min_support = decoder.min_support;
    p.noise_margin = decoder.noise_margin;
    p.merge_radius = decoder.merge_radius;
    p.merge_min_count = decoder.merge_min_count;
    p.solver = recovery.solver == "omp" ? Solver::Omp : Solver::BasisPursuit;
    return p;
}

LabelLayout PipelineConfig::label_layout() const {
    return {static_cast<std::size_t>(sensing.rows), static_cast<std::size_t>(encoder.axes), predictor.count_channel,
            predictor.lambda};
}

TrainingOptions PipelineConfig::training_options() const {
    TrainingOptions o;
    o.epochs = predictor.epochs;
    o.learning_rate = predictor.learning_rate;
    o.momentum = predictor.momentum;
    o.batch_size = predictor.batch_size;
    o.hidden_units = predictor.hidden_units;
    o.input_side = predictor.input_side;
    o.seed = Rng::mix(run.seed, 3);
    return o;
}

}  // namespace csdetect
