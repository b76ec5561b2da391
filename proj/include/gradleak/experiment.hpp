#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gradleak/config.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/stop_control.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak::harness {

struct ControllerRow {
    std::string label;
    stop::ControllerKind kind = stop::ControllerKind::never;
    double threshold = 0.0;
    std::size_t patience = 0;
    metrics::SummaryRow summary;
};

struct OutcomeRecord {
    std::size_t controller = 0;  // index into ExperimentReport::rows
    std::size_t position = 0;    // rank among the selected samples
    std::size_t dataset_index = 0;
    std::size_t true_label = 0;
    std::size_t inferred_label = 0;
    metrics::SampleOutcome outcome;
    std::vector<double> loss_history;
    Tensor original;
    Tensor reconstruction;
    std::string error;  // empty unless the attack aborted
};

struct Provenance {
    std::string version;
    std::string dataset;
    std::uint64_t base_seed = 0;
    std::uint64_t model_seed = 0;
    std::uint64_t selection_seed = 0;
    std::vector<std::size_t> selected;  // dataset indices, in position order
    std::vector<std::uint64_t> dummy_seeds;
    std::string config_source;
    std::string started_at;  // UTC, ISO 8601
    double wall_seconds = 0.0;
    std::size_t jobs = 1;
};

struct ExperimentReport {
    std::vector<ControllerRow> rows;
    std::vector<OutcomeRecord> outcomes;  // controller-major, then position
    Provenance provenance;

    const OutcomeRecord& outcome(std::size_t controller, std::size_t position) const;
    std::size_t sample_count() const;
};

std::string version();

/// Called from worker threads (serialised) as each attack finishes.
using ProgressFn = std::function<void(const ControllerRow&, const OutcomeRecord&)>;

/// Attacks every selected sample under every controller configuration. Each
/// sample uses the same model and dummy seed under all configurations.
/// Dataset problems throw; attack failures are recorded in the outcome.
ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

/// summary.csv, outcomes.csv, provenance.json, loss/<controller>/loss_<id>.csv
/// and, when `images` is set, original/<id>.pgm|ppm and
/// reconstructed/<controller>/<id>.pgm|ppm.
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir, bool images = true);

inline constexpr const char* kSummaryHeader =
    "dataset,controller,threshold,patience,asr,mse_avg,ssim_avg,recon_time_s,iter_max,iter_min,iter_avg,iter_sd";

std::string sample_id(std::size_t dataset_index);

}  // namespace gradleak::harness
