#pragma once

// Experiment configuration, read from an INI-style document:
//
//   # comment
//   [dataset]
//   name = mnist
//   images = data/mnist-subset/images-idx3-ubyte
//   labels = data/mnist-subset/labels-idx1-ubyte
//
//   [controllers]
//   kinds = threshold, hybrid
//   thresholds = 1e-3, 1e-4
//   patiences = 15
//
// Only [dataset] name is required. Lists are comma separated.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gradleak/attack.hpp"
#include "gradleak/model.hpp"
#include "gradleak/stop_control.hpp"

namespace gradleak::harness {

struct DatasetConfig {
    std::string name;  // synthetic | mnist | cifar10
    std::filesystem::path images;
    std::filesystem::path labels;
    std::vector<std::filesystem::path> batches;
    // synthetic only
    Shape shape{1, 8, 8};
    std::size_t classes = 10;
    std::optional<std::size_t> count;
    std::optional<std::uint64_t> seed;
};

/// Controller configurations are expanded in `kinds` order: threshold gives one
/// per threshold, plateau one per patience, hybrid one per (threshold, patience)
/// pair with thresholds outermost, never exactly one.
struct ControllerSweep {
    std::vector<stop::ControllerKind> kinds{stop::ControllerKind::hybrid};
    std::vector<double> thresholds{1e-5};
    std::vector<std::size_t> patiences{15};

    std::vector<stop::StopController> expand() const;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    ModelSpec model;
    bool model_explicit = false;  // [model] arch given
    double init_low = -0.5;
    double init_high = 0.5;
    std::optional<std::uint64_t> model_seed;
    std::size_t samples = 100;
    std::optional<std::uint64_t> selection_seed;
    std::uint64_t base_seed = 0;
    attack::AttackConfig attack;
    ControllerSweep controllers;
    std::filesystem::path output_dir = "out";
    std::size_t jobs = 1;
    bool write_images = true;
    std::string source;  // config text as read

    std::uint64_t effective_model_seed() const { return model_seed.value_or(base_seed); }
    std::uint64_t effective_selection_seed() const { return selection_seed.value_or(base_seed); }
    std::uint64_t dummy_seed(std::size_t sample_position) const { return base_seed + sample_position; }
};

/// Parses and validates. Relative dataset paths are resolved against `base_dir`.
/// Throws ConfigError with the offending line number.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Throws ConfigError when settings are inconsistent.
void validate(const ExperimentConfig& config);

}  // namespace gradleak::harness
