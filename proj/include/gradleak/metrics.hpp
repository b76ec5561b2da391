#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "gradleak/stop_control.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak::metrics {

inline constexpr double kSuccessSsim = 0.9;

/// Gaussian-window SSIM settings. Windows are evaluated only where they fit
/// entirely inside the image.
struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double data_range = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Default options with the window shrunk to the largest odd size that fits `image_shape`.
SsimOptions ssim_options_for(const Shape& image_shape);

/// Mean squared error after clamping both images to [0,1].
double mse(const Tensor& a, const Tensor& b);

/// Mean local SSIM after clamping both images to [0,1]; channels of a [C,H,W]
/// image are scored separately and averaged. A rank-2 tensor is one channel.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options = {});

/// ssim > 0.9, strictly.
bool attack_success(double ssim_value);

struct SampleOutcome {
    std::string sample_id;
    bool success = false;
    double mse = 0.0;
    double ssim = 0.0;
    std::size_t iterations = 0;
    double seconds = 0.0;
    stop::StopCause cause = stop::StopCause::none;
};

/// Aggregates over a set of outcomes. ASR and total time cover every sample;
/// MSE, SSIM and the iteration statistics cover successful samples only and
/// are NaN when there are none. iter_sd is the population standard deviation.
struct SummaryRow {
    std::size_t samples = 0;
    std::size_t successes = 0;
    double asr = 0.0;
    double mse_avg = 0.0;
    double ssim_avg = 0.0;
    double recon_time_s = 0.0;
    double iter_max = 0.0;
    double iter_min = 0.0;
    double iter_avg = 0.0;
    double iter_sd = 0.0;
};

SummaryRow summarize(std::span<const SampleOutcome> outcomes);

}  // namespace gradleak::metrics
