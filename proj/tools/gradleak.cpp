#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gradleak/config.hpp"
#include "gradleak/errors.hpp"
#include "gradleak/experiment.hpp"

namespace {

using namespace gradleak;

struct Overrides {
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    bool verbose = false;
};

void apply(harness::ExperimentConfig& config, const Overrides& o) {
    if (!o.out.empty()) config.output_dir = o.out;
    if (o.seed) config.base_seed = *o.seed;
    if (o.jobs) config.jobs = *o.jobs;
    harness::validate(config);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

void print_summary(const harness::ExperimentReport& report) {
    std::printf("%-28s %6s %10s %8s %9s %8s\n", "controller", "asr", "mse", "ssim", "time_s", "iter_avg");
    for (const auto& row : report.rows) {
        const auto& s = row.summary;
        std::printf("%-28s %6s %10s %8s %9s %8s\n", row.label.c_str(), fmt(s.asr).c_str(), fmt(s.mse_avg).c_str(),
                    fmt(s.ssim_avg).c_str(), fmt(s.recon_time_s).c_str(), fmt(s.iter_avg).c_str());
    }
}

int execute(harness::ExperimentConfig config, const Overrides& o) {
    apply(config, o);
    harness::ProgressFn progress;
    if (o.verbose) {
        progress = [](const harness::ControllerRow& row, const harness::OutcomeRecord& rec) {
            const auto& out = rec.outcome;
            std::fprintf(stderr, "[%s] sample %s label %zu->%zu iter %zu ssim %.4f %.2fs %s%s%s\n",
                         row.label.c_str(), out.sample_id.c_str(), rec.true_label, rec.inferred_label,
                         out.iterations, out.ssim, out.seconds, stop::to_string(out.cause).c_str(),
                         rec.error.empty() ? "" : " error: ", rec.error.c_str());
        };
    }
    const auto report = harness::run_experiment(config, progress);
    harness::emit_report(report, config.output_dir, config.write_images);
    print_summary(report);
    std::printf("report written to %s\n", config.output_dir.string().c_str());
    return 0;
}

harness::ExperimentConfig demo_config() {
    return harness::parse_config(R"(
[dataset]
name = synthetic
shape = 1x8x8
classes = 10

[model]
arch = mlp

[controllers]
kinds = never, hybrid
thresholds = 1e-5
patiences = 15

[experiment]
samples = 4
output_dir = demo-out
)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient leakage attack lab"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides o;
    app.add_option("--out", o.out, "Output directory (overrides the config)");
    app.add_option("--seed", o.seed, "Base seed (overrides the config)");
    app.add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--verbose,-v", o.verbose, "Per-sample progress on stderr");

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    auto* check = app.add_subcommand("validate", "Parse and validate a config file");
    check->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    auto* demo = app.add_subcommand("demo", "Small synthetic end-to-end run");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return execute(harness::load_config(config_path), o);
        if (*demo) return execute(demo_config(), o);
        if (*check) {
            auto config = harness::load_config(config_path);
            apply(config, o);
            std::printf("ok: %s, %zu samples, %zu controller configurations\n", config.dataset.name.c_str(),
                        config.samples, config.controllers.expand().size());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
