// SPDX-License-Identifier: Apache-2.0
//
// Datasets: IDX and CIFAR-10 binary loaders, a synthetic crater generator,
// stratified 50/50 splitting and seeded minibatch plans.
//
// IDX (big-endian): u32 magic, one u32 per dimension, raw u8 payload.
//   images: magic 0x00000803, dims [N, H, W]  -> Tensor [N, 1, H, W]
//   labels: magic 0x00000801, dims [N]
// CIFAR-10 binary: records of 1 label byte + 3072 pixel bytes (1024 R, then
// 1024 G, then 1024 B, each 32x32 row-major) -> Tensor [N, 3, 32, 32].
// Pixel bytes are scaled by 1/255.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "randomout/tensor.hpp"

namespace randomout {

struct Dataset {
  std::string name;
  Tensor images;  // [N, C, H, W], values in [0, 1]
  std::vector<int> labels;
  std::size_t num_classes = 2;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const { return images.shape().without_batch(); }
  /// Gathers rows in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Throws InvalidArgument unless labels are in range and pixels in [0,1].
  void validate() const;
};

Tensor parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Writes single-channel images (pixels quantized to bytes) and labels.
void write_idx(const Dataset& ds, const std::filesystem::path& images,
               const std::filesystem::path& labels);

/// Keeps at most `max_per_class` records of each label, in file order.
Dataset parse_cifar10_binary(std::span<const std::uint8_t> bytes, std::size_t max_per_class);
Dataset load_cifar10_binary(const std::filesystem::path& path, std::size_t max_per_class);

/// 15x15 grayscale ring (label 1) vs blob (label 0) images. Positives come
/// first, then negatives. Image i is drawn from its own stream, so the
/// dataset is a pure function of (n_pos, n_neg, seed).
Dataset synth_craters(std::size_t n_pos, std::size_t n_neg, std::uint64_t seed);

/// Stratified seeded split: each class is shuffled and halved; classes with
/// an odd count alternate which half receives the extra example.
std::pair<Dataset, Dataset> split_50_50(const Dataset& ds, std::uint64_t seed);

/// Per-epoch shuffled minibatches. A trailing batch of a single example is
/// merged into the previous batch so every batch has at least 2 examples
/// whenever the dataset does.
class BatchPlan {
 public:
  BatchPlan(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> permutation(std::size_t epoch) const;
  std::vector<std::vector<std::size_t>> batches(std::size_t epoch) const;
  std::size_t batches_per_epoch() const;

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace randomout
