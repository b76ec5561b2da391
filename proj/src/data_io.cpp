#include "gradleak/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "gradleak/errors.hpp"

namespace gradleak::io {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const char* what) {
    if (bytes.size() < offset + 4) throw FormatError(std::string("truncated ") + what, bytes.size());
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Dataset parse_mnist(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
    const std::uint32_t image_magic = read_be32(images, 0, "images header");
    if (image_magic != kIdxImagesMagic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "bad images magic 0x%08x (expected 0x%08x)", image_magic, kIdxImagesMagic);
        throw FormatError(buf, 0);
    }
    const std::size_t n = read_be32(images, 4, "images header");
    const std::size_t rows = read_be32(images, 8, "images header");
    const std::size_t cols = read_be32(images, 12, "images header");
    if (rows == 0 || cols == 0) throw FormatError("image dimensions must be non-zero", 8);

    const std::uint32_t label_magic = read_be32(labels, 0, "labels header");
    if (label_magic != kIdxLabelsMagic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "bad labels magic 0x%08x (expected 0x%08x)", label_magic, kIdxLabelsMagic);
        throw FormatError(buf, 0);
    }
    const std::size_t n_labels = read_be32(labels, 4, "labels header");
    if (n_labels != n) {
        throw FormatError("label count " + std::to_string(n_labels) + " does not match image count " +
                          std::to_string(n), 4);
    }
    if (n == 0) throw FormatError("dataset has no images", 4);

    const std::size_t pixels = rows * cols;
    if (images.size() < 16 + n * pixels) throw FormatError("truncated images payload", images.size());
    if (labels.size() < 8 + n) throw FormatError("truncated labels payload", labels.size());

    Dataset ds;
    ds.name = "mnist";
    ds.image_shape = {1, rows, cols};
    ds.classes = 10;
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label_offset = 8 + i;
        if (labels[label_offset] >= ds.classes) {
            throw FormatError("label " + std::to_string(labels[label_offset]) + " out of range", label_offset);
        }
        Tensor image(ds.image_shape);
        const std::uint8_t* src = images.data() + 16 + i * pixels;
        for (std::size_t p = 0; p < pixels; ++p) image[p] = src[p] / 255.0;
        ds.samples.push_back({std::move(image), labels[label_offset]});
    }
    return ds;
}

Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto image_bytes = read_file(images);
    const auto label_bytes = read_file(labels);
    return parse_mnist(image_bytes, label_bytes);
}

Dataset parse_cifar10(std::span<const std::vector<std::uint8_t>> batches) {
    Dataset ds;
    ds.name = "cifar10";
    ds.image_shape = {3, kCifarSide, kCifarSide};
    ds.classes = 10;
    for (const auto& batch : batches) {
        if (batch.size() % kCifarRecord != 0) {
            throw FormatError("file length " + std::to_string(batch.size()) + " is not a multiple of " +
                              std::to_string(kCifarRecord), batch.size() - batch.size() % kCifarRecord);
        }
        for (std::size_t offset = 0; offset < batch.size(); offset += kCifarRecord) {
            const std::uint8_t label = batch[offset];
            if (label >= ds.classes) {
                throw FormatError("invalid label " + std::to_string(label), offset);
            }
            Tensor image(ds.image_shape);
            for (std::size_t p = 0; p < kCifarPixels; ++p) image[p] = batch[offset + 1 + p] / 255.0;
            ds.samples.push_back({std::move(image), label});
        }
    }
    if (ds.samples.empty()) throw FormatError("no CIFAR-10 records", 0);
    return ds;
}

Dataset load_cifar10(std::span<const std::filesystem::path> batches) {
    std::vector<std::vector<std::uint8_t>> bytes;
    for (const auto& path : batches) bytes.push_back(read_file(path));
    return parse_cifar10(bytes);
}

Dataset synth_dataset(const Shape& image_shape, std::size_t classes, std::size_t count, std::uint64_t seed) {
    if (classes < 1 || count < 1) throw InvalidArgument("synth_dataset: counts must be >= 1");
    if (image_shape.size() != 3) throw InvalidArgument("synth_dataset: shape must be [C,H,W]");
    const std::size_t channels = image_shape[0], height = image_shape[1], width = image_shape[2];

    Dataset ds;
    ds.name = "synthetic";
    ds.image_shape = image_shape;
    ds.classes = classes;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t label = i % classes;
        const double angle = std::numbers::pi * static_cast<double>(label) / static_cast<double>(classes);
        const double cycles = 1.0 + static_cast<double>(label % 3);
        const double phase = phase_dist(rng);
        Tensor image(image_shape);
        for (std::size_t c = 0; c < channels; ++c) {
            const double shift = 0.1 * static_cast<double>(c);
            for (std::size_t y = 0; y < height; ++y) {
                for (std::size_t x = 0; x < width; ++x) {
                    const double u = (std::cos(angle) * static_cast<double>(x) / static_cast<double>(width) +
                                      std::sin(angle) * static_cast<double>(y) / static_cast<double>(height));
                    const double v = 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * cycles * u + phase) + shift;
                    image[(c * height + y) * width + x] = std::clamp(v, 0.0, 1.0);
                }
            }
        }
        ds.samples.push_back({std::move(image), label});
    }
    return ds;
}

std::vector<std::uint8_t> encode_pnm(const Tensor& image) {
    const Shape& s = image.shape();
    std::size_t channels = 1, height = 0, width = 0;
    if (s.size() == 2) {
        height = s[0];
        width = s[1];
    } else if (s.size() == 3 && (s[0] == 1 || s[0] == 3)) {
        channels = s[0];
        height = s[1];
        width = s[2];
    } else {
        throw ShapeError("encode_pnm: expected a 1- or 3-channel image, got " + shape_string(s));
    }
    const std::string header =
        (channels == 1 ? "P5\n" : "P6\n") + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const std::size_t plane = height * width;
    auto quantize = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < channels; ++c) out.push_back(quantize(image[c * plane + p]));
    }
    return out;
}

void write_image(const Tensor& image, const std::filesystem::path& path) { write_bytes(path, encode_pnm(image)); }

void write_loss_curve(std::span<const double> losses, const std::filesystem::path& path) {
    std::string text;
    char line[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu,%.17g\n", i + 1, losses[i]);
        text += line;
    }
    write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace gradleak::io
