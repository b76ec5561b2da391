#pragma once

// Reference implementations and fixture builders shared by the unit and acceptance tests.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "gradleak/stop_control.hpp"
#include "gradleak/tensor.hpp"

namespace fixtures {

using gradleak::Shape;
using gradleak::Tensor;
using gradleak::stop::StopCause;
using gradleak::stop::StopController;

inline constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

// 1-based index of the observation at which `c` stops, or kNever.
inline std::size_t stop_index(StopController c, const std::vector<double>& losses, StopCause* cause = nullptr) {
    for (std::size_t i = 0; i < losses.size(); ++i) {
        const auto d = c.observe(losses[i]);
        if (d.stop) {
            if (cause) *cause = d.cause;
            return i + 1;
        }
    }
    return kNever;
}

// Re-scan of the whole history: stop at t when the last P values are all at or
// above the best value seen before them.
inline std::size_t plateau_oracle(const std::vector<double>& x, std::size_t p) {
    for (std::size_t t = p + 1; t <= x.size(); ++t) {
        const double before = *std::min_element(x.begin(), x.begin() + static_cast<long>(t - p));
        const double recent = *std::min_element(x.begin() + static_cast<long>(t - p), x.begin() + static_cast<long>(t));
        if (recent >= before) return t;
    }
    return kNever;
}

inline std::size_t threshold_oracle(const std::vector<double>& x, double t) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < t) return i + 1;
    }
    return kNever;
}

inline std::vector<double> random_sequence(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> len(1, 80), style(0, 2), level(0, 6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(static_cast<std::size_t>(len(rng)));
    double v = 1.0;
    const int s = style(rng);
    for (auto& e : x) {
        if (s == 0) {
            e = u(rng);  // noise
        } else if (s == 1) {
            v *= 0.5 + u(rng);  // noisy decay
            e = v;
        } else {
            e = level(rng) * 0.25;  // many ties
        }
    }
    return x;
}

inline Tensor random_image(const Shape& shape, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

inline double naive_mse(const Tensor& a, const Tensor& b) {
    const auto& s = a.shape();
    double total = 0.0;
    for (std::size_t c = 0; c < s[0]; ++c)
        for (std::size_t i = 0; i < s[1] * s[2]; ++i) {
            const double d = clamp01(a[c * s[1] * s[2] + i]) - clamp01(b[c * s[1] * s[2] + i]);
            total += d * d;
        }
    return total / static_cast<double>(a.size());
}

// Direct 2-D windowed SSIM with an explicit 2-D Gaussian weight table.
inline double naive_ssim(const Tensor& a, const Tensor& b, std::size_t win, double sigma) {
    const std::size_t C = a.shape()[0], H = a.shape()[1], W = a.shape()[2];
    std::vector<double> w(win * win);
    const double mid = (static_cast<double>(win) - 1) / 2;
    double norm = 0.0;
    for (std::size_t i = 0; i < win; ++i)
        for (std::size_t j = 0; j < win; ++j) {
            const double di = static_cast<double>(i) - mid, dj = static_cast<double>(j) - mid;
            w[i * win + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            norm += w[i * win + j];
        }
    for (auto& v : w) v /= norm;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double channels = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        auto px = [&](const Tensor& t, std::size_t y, std::size_t x) { return clamp01(t[(c * H + y) * W + x]); };
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t y = 0; y + win <= H; ++y)
            for (std::size_t x = 0; x + win <= W; ++x) {
                double mx = 0, my = 0;
                for (std::size_t i = 0; i < win; ++i)
                    for (std::size_t j = 0; j < win; ++j) {
                        mx += w[i * win + j] * px(a, y + i, x + j);
                        my += w[i * win + j] * px(b, y + i, x + j);
                    }
                double vx = 0, vy = 0, cxy = 0;
                for (std::size_t i = 0; i < win; ++i)
                    for (std::size_t j = 0; j < win; ++j) {
                        const double dx = px(a, y + i, x + j) - mx, dy = px(b, y + i, x + j) - my;
                        vx += w[i * win + j] * dx * dx;
                        vy += w[i * win + j] * dy * dy;
                        cxy += w[i * win + j] * dx * dy;
                    }
                total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        channels += total / static_cast<double>(count);
    }
    return channels / static_cast<double>(C);
}

using Bytes = std::vector<std::uint8_t>;

inline void put_be32(Bytes& b, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline Bytes idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols, std::uint32_t magic = 0x803) {
    Bytes b;
    put_be32(b, magic);
    put_be32(b, n);
    put_be32(b, rows);
    put_be32(b, cols);
    for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back(static_cast<std::uint8_t>((i * 7) % 256));
    return b;
}

inline Bytes idx_labels(const std::vector<std::uint8_t>& labels, std::uint32_t magic = 0x801) {
    Bytes b;
    put_be32(b, magic);
    put_be32(b, static_cast<std::uint32_t>(labels.size()));
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

inline Bytes cifar_records(std::size_t n, std::uint8_t first_label) {
    Bytes b;
    for (std::size_t r = 0; r < n; ++r) {
        b.push_back(static_cast<std::uint8_t>((first_label + r) % 10));
        for (std::size_t i = 0; i < 3072; ++i) b.push_back(static_cast<std::uint8_t>((r + i) % 256));
    }
    return b;
}

struct Pnm {
    std::string magic;
    std::size_t width = 0, height = 0, maxval = 0;
    Bytes pixels;
};

// Independent reader: whitespace-separated header tokens (with # comments), one
// whitespace byte, then raw samples.
inline Pnm parse_pnm(const Bytes& data) {
    Pnm out;
    std::size_t pos = 0;
    auto token = [&] {
        while (pos < data.size()) {
            if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else if (std::isspace(data[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::string t;
        while (pos < data.size() && !std::isspace(data[pos])) t.push_back(static_cast<char>(data[pos++]));
        return t;
    };
    out.magic = token();
    out.width = std::stoul(token());
    out.height = std::stoul(token());
    out.maxval = std::stoul(token());
    ++pos;  // single whitespace byte before the raster
    out.pixels.assign(data.begin() + static_cast<long>(pos), data.end());
    return out;
}

}  // namespace fixtures
