#include "csdetect/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <fmt/format.h>

#include "csdetect/evaluation.hpp"
#include "csdetect/rng.hpp"

namespace csdetect {

namespace fs = std::filesystem;

namespace {

// Seed streams derived from run.seed.
constexpr std::uint64_t kStreamSensing = 1;
constexpr std::uint64_t kStreamOracle = 2;
constexpr std::uint64_t kStreamSynth = 4;

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error(fmt::format("cannot create directory {}: {}", dir.string(), ec.message()));
}

struct LoadedImage {
    std::string id;
    Image image;
    AnnotationSet annotations;
};

LoadedImage load_entry(const fs::path& base, const ManifestEntry& e, const ImageGrid& grid) {
    Image img = read_pgm(base / e.image);
    if (img.cols() != grid.width() || img.rows() != grid.height()) {
        throw DimensionError(fmt::format("{}: image is {}x{}, manifest says {}x{}", (base / e.image).string(), img.cols(),
                                         img.rows(), grid.width(), grid.height()));
    }
    return {e.id, std::move(img), read_annotations_csv(base / e.annotations, grid)};
}

Manifest checked_manifest(const PipelineConfig& config, const fs::path& path) {
    Manifest m = read_manifest(path);
    if (config.run.patch_size > std::min(m.grid.width(), m.grid.height())) {
        throw ConfigError(fmt::format("patch_size {} exceeds the {}x{} images of {}", config.run.patch_size,
                                      m.grid.width(), m.grid.height(), path.string()));
    }
    return m;
}

std::optional<RegressorModel> load_model_for(const PipelineContext& ctx, const RunOptions& options) {
    if (options.mode == "oracle") return std::nullopt;
    if (options.mode != "trained") throw ConfigError("mode must be 'oracle' or 'trained'");
    if (!options.model) throw ConfigError("trained mode needs a model file");
    RegressorModel model = RegressorModel::load(*options.model);
    const auto want = ctx.config.label_layout();
    const auto& have = model.layout();
    if (have.block_size != want.block_size || have.block_count != want.block_count || have.has_count != want.has_count) {
        throw ConfigError(fmt::format("model {} predicts {} blocks of {} but the config encodes {} blocks of {}",
                                      options.model->string(), have.block_count, have.block_size, want.block_count,
                                      want.block_size));
    }
    return model;
}

double predictor_error(const PipelineConfig& config, const std::optional<RegressorModel>& model) {
    return model ? model->meta().relative_residual : config.predictor.sigma_rel;
}

void write_diagnostics(const fs::path& dir, const ImageOutcome& out, int offset) {
    ensure_dir(dir);
    const auto stem = fmt::format("{}_o{}", out.id, offset);
    std::ofstream cand(dir / (stem + "_candidates.csv"), std::ios::binary);
    std::ofstream trace(dir / (stem + "_traces.csv"), std::ios::binary);
    if (!cand || !trace) throw std::runtime_error("cannot write diagnostics under " + dir.string());
    cand << "patch,axis,x,y,magnitude\n";
    trace << "patch,axis,iteration,residual\n";
    for (const auto& p : out.patches) {
        for (const auto& per_axis : p.decoding.axis_candidates) {
            for (const auto& c : per_axis) {
                cand << fmt::format("{},{},{:.4f},{:.4f},{:.6f}\n", p.patch, c.source_axis, c.x + p.origin_x,
                                    c.y + p.origin_y, c.magnitude);
            }
        }
        for (std::size_t a = 0; a < p.decoding.axis_recoveries.size(); ++a) {
            const auto& t = p.decoding.axis_recoveries[a].trace;
            for (std::size_t i = 0; i < t.size(); ++i) {
                trace << fmt::format("{},{},{},{:.6e}\n", p.patch, a + 1, i + 1, t[i]);
            }
        }
    }
}

struct ImageSlot {
    std::optional<ImageOutcome> outcome;
    std::string error;
};

std::vector<ImageSlot> process_split(const PipelineContext& ctx, const Manifest& manifest, const fs::path& base,
                                     const std::vector<ManifestEntry>& entries, int offset,
                                     const RegressorModel* model, bool diagnostics, const fs::path& diag_dir) {
    std::vector<ImageSlot> slots(entries.size());
    parallel_for(entries.size(), ctx.config.run.workers, [&](std::size_t i) {
        try {
            const auto loaded = load_entry(base, entries[i], manifest.grid);
            const auto image_seed = Rng::mix(Rng::mix(ctx.config.run.seed, kStreamOracle), i);
            auto out = process_image(ctx, loaded.image, loaded.annotations, offset, image_seed, model, diagnostics);
            out.id = loaded.id;
            if (diagnostics) {
                write_diagnostics(diag_dir, out, offset);
                out.patches.clear();
            }
            slots[i].outcome = std::move(out);
        } catch (const std::exception& e) {
            slots[i].error = e.what();
        }
    });
    return slots;
}

MatchReport evaluate_at_support(const std::vector<ImageSlot>& slots, int min_support, double rho) {
    MatchReport total;
    for (const auto& s : slots) {
        if (!s.outcome) continue;
        std::vector<Point2> kept;
        for (const auto& c : s.outcome->clusters) {
            if (c.support >= min_support) kept.push_back({c.x, c.y});
        }
        total += match_detections(kept, s.outcome->truth, rho);
    }
    return total;
}

}  // namespace

std::uint64_t sensing_seed(const PipelineConfig& config) { return Rng::mix(config.run.seed, kStreamSensing); }

PipelineContext PipelineContext::make(const PipelineConfig& config) {
    config.validate();
    const auto grid = config.patch_grid();
    const double margin = config.encoder.margin > 0.0 ? config.encoder.margin : default_axis_margin(grid);
    auto layout = build_axis_layout(grid, config.encoder.axes, margin);
    auto phi = make_sensing_matrix(static_cast<std::size_t>(config.sensing.rows),
                                   static_cast<std::size_t>(layout.bin_count()), sensing_seed(config));
    auto decode = config.decode_params().resolved(layout);
    return {config, std::move(layout), std::move(phi), config.recovery_params(), decode};
}

void PipelineContext::calibrate_budget(double relative_error) {
    if (!config.recovery.calibrate_budget) return;
    recovery.relative_budget = true;
    recovery.noise_budget = std::max(relative_error, 0.0);
}

std::vector<TrainingExample> training_examples(const PipelineContext& ctx, const Image& image,
                                               const AnnotationSet& annotations) {
    const auto label_layout = ctx.config.label_layout();
    std::vector<TrainingExample> out;
    for (const auto& patch : extract_patches(image, annotations, ctx.config.run.patch_size, {0, 0})) {
        for (auto& [pixels, cells] : rotate_augment(patch.pixels, patch.annotations)) {
            const auto y = encode_scheme2(cells, ctx.layout, ctx.phi);
            Eigen::VectorXd label = label_layout.has_count ? fuse_labels(y, cells.size(), label_layout.lambda)
                                                           : y.values();
            out.push_back({std::move(pixels), std::move(label)});
        }
    }
    return out;
}

bool tile_covered(const Point2& cell, const ImageGrid& grid, int patch_size, int offset) {
    const int u = round_half_up(cell.x) - 1 - offset;
    const int v = round_half_up(cell.y) - 1 - offset;
    if (u < 0 || v < 0) return false;
    return u / patch_size < (grid.width() - offset) / patch_size && v / patch_size < (grid.height() - offset) / patch_size;
}

ImageOutcome process_image(const PipelineContext& ctx, const Image& image, const AnnotationSet& annotations,
                           int offset, std::uint64_t image_seed, const RegressorModel* model, bool keep_diagnostics) {
    ImageOutcome out;
    const int s = ctx.config.run.patch_size;
    for (const auto& c : annotations.cells()) {
        if (tile_covered(c, annotations.grid(), s, offset)) out.truth.push_back(c);
    }
    const auto patches = extract_patches(image, annotations, s, {offset, offset});
    for (std::size_t p = 0; p < patches.size(); ++p) {
        const auto& patch = patches[p];
        CompressedSignal y_hat = [&] {
            if (model) return predict(*model, patch.pixels).signal;
            const auto y = encode_scheme2(patch.annotations, ctx.layout, ctx.phi);
            if (ctx.config.predictor.sigma_rel == 0.0) return y;
            return oracle_predict(y, ctx.config.predictor.sigma_rel,
                                  Rng::mix(image_seed, static_cast<std::uint64_t>(offset) * 1000003u + p));
        }();
        auto decoded = decode_scheme2(y_hat, ctx.layout, ctx.phi, ctx.decode, ctx.recovery);
        out.failed_axes += decoded.failed_axes;
        for (const auto& c : decoded.clusters) {
            out.clusters.push_back({c.mean.x + patch.origin_x, c.mean.y + patch.origin_y, c.support});
        }
        for (const auto& d : decoded.detections.points) {
            out.detections.points.push_back({d.x + patch.origin_x, d.y + patch.origin_y, d.support});
        }
        if (keep_diagnostics) {
            out.patches.push_back({static_cast<int>(p), patch.origin_x, patch.origin_y, std::move(decoded)});
        }
    }
    return out;
}

int cmd_synth(const PipelineConfig& config, const fs::path& out_dir) {
    config.validate();
    ensure_dir(out_dir);
    const int total = config.synth.train_images + config.synth.test_images;
    Manifest manifest{ImageGrid(config.synth.width, config.synth.height), {}};
    std::vector<SyntheticImage> images(static_cast<std::size_t>(total),
                                       SyntheticImage{Image(), AnnotationSet(manifest.grid, {})});
    parallel_for(images.size(), config.run.workers, [&](std::size_t i) {
        images[i] = generate_image(config.synthesis_params(Rng::mix(Rng::mix(config.run.seed, kStreamSynth), i)));
    });
    for (int i = 0; i < total; ++i) {
        const auto id = fmt::format("img_{:04d}", i);
        ManifestEntry e{id, i < config.synth.train_images ? "train" : "test", id + ".pgm", id + ".csv"};
        write_pgm(out_dir / e.image, images[static_cast<std::size_t>(i)].pixels);
        write_annotations_csv(out_dir / e.annotations, images[static_cast<std::size_t>(i)].annotations);
        manifest.entries.push_back(std::move(e));
    }
    write_manifest(out_dir / "manifest.json", manifest);
    config.save(out_dir / "config.json");
    log_line(fmt::format("wrote {} images ({} train, {} test) to {}", total, config.synth.train_images,
                         config.synth.test_images, out_dir.string()));
    return 0;
}

int cmd_train(const PipelineConfig& config, const fs::path& manifest_path, const fs::path& out_dir) {
    const auto ctx = PipelineContext::make(config);
    const auto manifest = checked_manifest(config, manifest_path);
    const auto entries = manifest.split("train");
    if (entries.empty()) throw ConfigError(manifest_path.string() + " has no training images");
    const auto base = manifest_path.parent_path();

    std::vector<std::vector<TrainingExample>> per_image(entries.size());
    parallel_for(entries.size(), config.run.workers, [&](std::size_t i) {
        const auto loaded = load_entry(base, entries[i], manifest.grid);
        per_image[i] = training_examples(ctx, loaded.image, loaded.annotations);
    });
    std::vector<TrainingExample> examples;
    for (auto& v : per_image) {
        for (auto& e : v) examples.push_back(std::move(e));
    }
    if (examples.empty()) throw ConfigError("no training patches could be extracted");
    const auto layout = config.label_layout();
    for (const auto& e : examples) {
        if (static_cast<std::size_t>(e.label.size()) != layout.size()) {
            throw DimensionError(fmt::format("label has {} entries, expected {}", e.label.size(), layout.size()));
        }
    }
    log_line(fmt::format("training on {} patches ({} images, 4 rotations each)", examples.size(), entries.size()));
    const auto model = train_regressor(examples, layout, config.training_options());
    ensure_dir(out_dir);
    model.save(out_dir / "model.bin");
    write_training_log(out_dir / "training_log.csv", model.meta());
    config.save(out_dir / "config.json");
    log_line(fmt::format("loss {:.6g} -> {:.6g}; median relative residual {:.4f}", model.meta().initial_loss,
                         model.meta().final_loss, model.meta().relative_residual));
    return 0;
}

int cmd_run(const PipelineConfig& config, const fs::path& manifest_path, const fs::path& out_dir,
            const RunOptions& options) {
    auto ctx = PipelineContext::make(config);
    const auto model = load_model_for(ctx, options);
    ctx.calibrate_budget(predictor_error(config, model));
    const auto manifest = checked_manifest(config, manifest_path);
    const auto entries = manifest.split("test");
    const int offset = config.run.offsets.front();

    ensure_dir(out_dir / "detections");
    const auto slots = process_split(ctx, manifest, manifest_path.parent_path(), entries, offset,
                                     model ? &*model : nullptr, options.diagnostics, out_dir / "diagnostics");

    int status = 0;
    std::vector<ImageEvaluation> rows;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& s = slots[i];
        if (!s.outcome) {
            log_line(fmt::format("{}: failed: {}", entries[i].id, s.error));
            status = 1;
            continue;
        }
        if (s.outcome->failed_axes > 0) {
            log_line(fmt::format("{}: {} axis recoveries did not converge", s.outcome->id, s.outcome->failed_axes));
        }
        write_detections_csv(out_dir / "detections" / (s.outcome->id + ".csv"), s.outcome->detections);
        rows.push_back({s.outcome->id, match_detections(s.outcome->detections, AnnotationSet(manifest.grid, s.outcome->truth),
                                                        config.rho())});
    }
    write_evaluation_csv(out_dir / "evaluation.csv", rows, config.evaluation.macro);

    std::vector<double> thresholds;
    for (int t = 1; t <= config.encoder.axes; ++t) thresholds.push_back(t);
    const auto curve = pr_curve(thresholds, [&](double t) {
        return evaluate_at_support(slots, static_cast<int>(t), config.rho());
    });
    write_pr_csv(out_dir / "pr_sweep.csv", curve);

    MatchReport total;
    for (const auto& r : rows) total += r.report;
    const auto sc = prf1(total);
    log_line(fmt::format("{} images: P={:.4f} R={:.4f} F1={:.4f}", rows.size(), sc.precision, sc.recall, sc.f1));
    return status;
}

int cmd_ensemble(const PipelineConfig& config, const fs::path& manifest_path, const fs::path& out_dir,
                 const RunOptions& options) {
    auto ctx = PipelineContext::make(config);
    const auto model = load_model_for(ctx, options);
    ctx.calibrate_budget(predictor_error(config, model));
    const auto manifest = checked_manifest(config, manifest_path);
    const auto entries = manifest.split("test");
    const auto base = manifest_path.parent_path();

    std::vector<std::vector<ImageSlot>> per_offset;
    for (int offset : config.run.offsets) {
        per_offset.push_back(process_split(ctx, manifest, base, entries, offset, model ? &*model : nullptr,
                                           options.diagnostics, out_dir / "diagnostics"));
    }

    ensure_dir(out_dir / "detections");
    int status = 0;
    std::vector<ImageEvaluation> rows;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        std::vector<DetectionResult> sets;
        std::string error;
        for (const auto& slots : per_offset) {
            if (slots[i].outcome) {
                sets.push_back(slots[i].outcome->detections);
            } else if (error.empty()) {
                error = slots[i].error;
            }
        }
        if (!error.empty()) {
            log_line(fmt::format("{}: failed: {}", entries[i].id, error));
            status = 1;
            continue;
        }
        const auto merged = merge_ensemble(sets, ctx.decode.merge_radius, ctx.decode.merge_min_count);
        write_detections_csv(out_dir / "detections" / (entries[i].id + ".csv"), merged);

        // Only cells tiled by enough offsets can pass the merge rule.
        const auto ann = read_annotations_csv(base / entries[i].annotations, manifest.grid);
        std::vector<Point2> truth;
        for (const auto& c : ann.cells()) {
            const auto votes = std::count_if(config.run.offsets.begin(), config.run.offsets.end(), [&](int o) {
                return tile_covered(c, manifest.grid, config.run.patch_size, o);
            });
            if (votes >= ctx.decode.merge_min_count) truth.push_back(c);
        }
        rows.push_back({entries[i].id, match_detections(merged, AnnotationSet(manifest.grid, truth), config.rho())});
    }
    write_evaluation_csv(out_dir / "evaluation.csv", rows, config.evaluation.macro);
    MatchReport total;
    for (const auto& r : rows) total += r.report;
    const auto sc = prf1(total);
    log_line(fmt::format("{} images, {} offsets: P={:.4f} R={:.4f} F1={:.4f}", rows.size(), config.run.offsets.size(),
                         sc.precision, sc.recall, sc.f1));
    return status;
}

int cmd_ripcheck(const PipelineConfig& config, const fs::path& out_csv, std::size_t sparsity, std::size_t trials) {
    const auto ctx = PipelineContext::make(config);
    const auto report = empirical_rip_check(ctx.phi, sparsity, trials, Rng::mix(config.run.seed, 5), 0.6,
                                            config.run.workers);
    if (out_csv.has_parent_path()) ensure_dir(out_csv.parent_path());
    std::ofstream out(out_csv, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_csv.string());
    out << "rows,cols,sparsity_tested,trials,min_ratio,max_ratio,delta_observed,delta_bound,violation_count\n";
    out << fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", ctx.phi.rows(), ctx.phi.cols(),
                       report.sparsity_tested, report.trials, report.min_ratio, report.max_ratio,
                       report.delta_observed, report.delta_bound, report.violation_count);
    log_line(fmt::format("RIP check {}x{}, {}-sparse, {} trials: ratio in [{:.4f}, {:.4f}], delta {:.4f}",
                         ctx.phi.rows(), ctx.phi.cols(), report.sparsity_tested, report.trials, report.min_ratio,
                         report.max_ratio, report.delta_observed));
    return 0;
}

}  // namespace csdetect
