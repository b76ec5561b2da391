#include "gradleak/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gradleak/errors.hpp"

namespace gradleak::metrics {

namespace {

struct Planes {
    std::size_t channels, height, width;
};

Planes planes_of(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
    const Shape& s = a.shape();
    if (s.size() == 2) return {1, s[0], s[1]};
    if (s.size() == 3) return {s[0], s[1], s[2]};
    throw ShapeError(std::string(op) + ": expected an image of shape [C,H,W] or [H,W], got " + shape_string(s));
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
    std::vector<double> k(size);
    const double centre = static_cast<double>(size - 1) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - centre;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += k[i];
    }
    for (double& v : k) v /= total;
    return k;
}

// Separable valid-mode filter of a height x width plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t height, std::size_t width,
                                 const std::vector<double>& kernel) {
    const std::size_t n = kernel.size();
    const std::size_t out_w = width - n + 1;
    const std::size_t out_h = height - n + 1;
    std::vector<double> rows(height * out_w, 0.0);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += kernel[k] * plane[y * width + x + k];
            rows[y * out_w + x] = acc;
        }
    }
    std::vector<double> out(out_h * out_w, 0.0);
    for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += kernel[k] * rows[(y + k) * out_w + x];
            out[y * out_w + x] = acc;
        }
    }
    return out;
}

}  // namespace

SsimOptions ssim_options_for(const Shape& image_shape) {
    SsimOptions options;
    if (image_shape.size() < 2) return options;
    const std::size_t h = image_shape[image_shape.size() - 2];
    const std::size_t w = image_shape[image_shape.size() - 1];
    std::size_t fit = std::min({options.window, h, w});
    if (fit % 2 == 0) --fit;
    options.window = std::max<std::size_t>(fit, 1);
    return options;
}

double mse(const Tensor& a, const Tensor& b) {
    planes_of("mse", a, b);
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = clamp01(a[i]) - clamp01(b[i]);
        total += d * d;
    }
    return total / static_cast<double>(a.size());
}

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options) {
    const Planes p = planes_of("ssim", a, b);
    if (options.window == 0 || !(options.sigma > 0.0)) throw InvalidArgument("ssim: invalid window settings");
    if (p.height < options.window || p.width < options.window) {
        throw ShapeError("ssim: image " + shape_string(a.shape()) + " is smaller than the " +
                         std::to_string(options.window) + "x" + std::to_string(options.window) + " window");
    }
    const double c1 = std::pow(options.k1 * options.data_range, 2);
    const double c2 = std::pow(options.k2 * options.data_range, 2);
    const auto kernel = gaussian_kernel(options.window, options.sigma);

    const std::size_t plane = p.height * p.width;
    double channel_total = 0.0;
    for (std::size_t c = 0; c < p.channels; ++c) {
        std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            x[i] = clamp01(a[c * plane + i]);
            y[i] = clamp01(b[c * plane + i]);
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mu_x = filter_valid(x, p.height, p.width, kernel);
        const auto mu_y = filter_valid(y, p.height, p.width, kernel);
        const auto e_xx = filter_valid(xx, p.height, p.width, kernel);
        const auto e_yy = filter_valid(yy, p.height, p.width, kernel);
        const auto e_xy = filter_valid(xy, p.height, p.width, kernel);
        double total = 0.0;
        for (std::size_t i = 0; i < mu_x.size(); ++i) {
            const double mx = mu_x[i], my = mu_y[i];
            const double var_x = e_xx[i] - mx * mx;
            const double var_y = e_yy[i] - my * my;
            const double cov = e_xy[i] - mx * my;
            const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            const double den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
            total += num / den;
        }
        channel_total += total / static_cast<double>(mu_x.size());
    }
    return channel_total / static_cast<double>(p.channels);
}

bool attack_success(double ssim_value) { return ssim_value > kSuccessSsim; }

SummaryRow summarize(std::span<const SampleOutcome> outcomes) {
    if (outcomes.empty()) throw InvalidArgument("summarize: no outcomes");
    SummaryRow row;
    row.samples = outcomes.size();
    double mse_total = 0.0, ssim_total = 0.0, iter_total = 0.0;
    double iter_max = -std::numeric_limits<double>::infinity();
    double iter_min = std::numeric_limits<double>::infinity();
    for (const auto& o : outcomes) {
        row.recon_time_s += o.seconds;
        if (!o.success) continue;
        ++row.successes;
        mse_total += o.mse;
        ssim_total += o.ssim;
        const auto it = static_cast<double>(o.iterations);
        iter_total += it;
        iter_max = std::max(iter_max, it);
        iter_min = std::min(iter_min, it);
    }
    row.asr = static_cast<double>(row.successes) / static_cast<double>(row.samples);
    if (row.successes == 0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.mse_avg = row.ssim_avg = row.iter_max = row.iter_min = row.iter_avg = row.iter_sd = nan;
        return row;
    }
    const auto n = static_cast<double>(row.successes);
    row.mse_avg = mse_total / n;
    row.ssim_avg = ssim_total / n;
    row.iter_avg = iter_total / n;
    row.iter_max = iter_max;
    row.iter_min = iter_min;
    double sq = 0.0;
    for (const auto& o : outcomes) {
        if (!o.success) continue;
        const double d = static_cast<double>(o.iterations) - row.iter_avg;
        sq += d * d;
    }
    row.iter_sd = std::sqrt(sq / n);
    return row;
}

}  // namespace gradleak::metrics
