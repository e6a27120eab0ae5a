// csdetect: command-line driver for synthesis, training, detection runs,
// offset ensembles and sensing-matrix checks.
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "csdetect/config.hpp"
#include "csdetect/pipeline.hpp"

namespace {

std::vector<int> parse_offsets(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw csdetect::ConfigError("bad --offsets entry '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw csdetect::ConfigError("--offsets must list at least one offset");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compressed-sensing point detection pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool diagnostics = false;
    std::string offsets;
    app.add_option("--config", config_path, "Pipeline configuration (JSON, one block per module)");
    app.add_option("--seed", seed, "Master seed (overrides run.seed)");
    app.add_option("--workers", workers, "Worker threads (overrides run.workers)");
    app.add_flag("--diagnostics", diagnostics, "Dump per-axis candidates and solver traces");
    app.add_option("--offsets", offsets, "Comma-separated patch offsets, e.g. 0,20,40");

    std::string out;
    std::string manifest;
    std::string mode = "oracle";
    std::string model;
    std::size_t sparsity = 10;
    std::size_t trials = 1000;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and manifest");
    synth->add_option("--out", out, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train the regressor on the manifest's train split");
    train->add_option("--manifest", manifest, "Dataset manifest")->required();
    train->add_option("--out", out, "Output directory for model.bin and training_log.csv")->required();

    auto add_run_options = [&](CLI::App* sub) {
        sub->add_option("--manifest", manifest, "Dataset manifest")->required();
        sub->add_option("--out", out, "Output directory")->required();
        sub->add_option("--mode", mode, "oracle or trained")->check(CLI::IsMember({"oracle", "trained"}));
        sub->add_option("--model", model, "Model file for trained mode");
    };
    auto* run = app.add_subcommand("run", "Encode, predict, decode and evaluate the test split");
    add_run_options(run);
    auto* ensemble = app.add_subcommand("ensemble", "Run every offset and merge the detections");
    add_run_options(ensemble);

    auto* rip = app.add_subcommand("ripcheck", "Monte-Carlo restricted isometry check of the sensing matrix");
    rip->add_option("--out", out, "Output CSV")->required();
    rip->add_option("--sparsity", sparsity, "Sparsity k (vectors are 2k-sparse)")->check(CLI::PositiveNumber);
    rip->add_option("--trials", trials, "Number of random trials")->check(CLI::PositiveNumber);

    auto* show = app.add_subcommand("config", "Print the effective configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        csdetect::PipelineConfig config;
        if (!config_path.empty()) config = csdetect::PipelineConfig::load(config_path);
        if (seed) config.run.seed = *seed;
        if (workers) config.run.workers = *workers;
        if (!offsets.empty()) config.run.offsets = parse_offsets(offsets);
        config.validate();

        csdetect::RunOptions options;
        options.mode = mode;
        options.diagnostics = diagnostics;
        if (!model.empty()) options.model = model;

        if (*synth) return csdetect::cmd_synth(config, out);
        if (*train) return csdetect::cmd_train(config, manifest, out);
        if (*run) return csdetect::cmd_run(config, manifest, out, options);
        if (*ensemble) return csdetect::cmd_ensemble(config, manifest, out, options);
        if (*rip) return csdetect::cmd_ripcheck(config, out, sparsity, trials);
        if (*show) {
            std::cout << config.to_text();
            return 0;
        }
    } catch (const csdetect::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
