#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gradleak/sample.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak::io {

struct Dataset {
    std::string name;
    std::vector<Sample> samples;
    Shape image_shape;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return samples.size(); }
};

/// Big-endian IDX: images magic 0x00000803 with dims (n, rows, cols), labels
/// magic 0x00000801 with dim (n). Bytes are scaled to [0,1]. Errors are
/// FormatError carrying the byte offset.
Dataset parse_mnist(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);
Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels);

/// CIFAR-10 binary batches: 3073-byte records of one label byte followed by
/// 3x32x32 channel-planar pixels.
Dataset parse_cifar10(std::span<const std::vector<std::uint8_t>> batches);
Dataset load_cifar10(std::span<const std::filesystem::path> batches);

/// Deterministic labelled gratings: sample i has label i % classes, and
/// orientation, frequency and phase derived from the label and `seed`.
Dataset synth_dataset(const Shape& image_shape, std::size_t classes, std::size_t count, std::uint64_t seed);

/// Binary PGM (P5) for one channel, PPM (P6) for three. Pixels are clamped to
/// [0,1] and rounded to 8 bits.
std::vector<std::uint8_t> encode_pnm(const Tensor& image);
void write_image(const Tensor& image, const std::filesystem::path& path);

/// One "iteration,loss" line per entry, 1-based, no header.
void write_loss_curve(std::span<const double> losses, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace gradleak::io
