// SPDX-License-Identifier: Apache-2.0
#include "randomout/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>

#include "randomout/error.hpp"
#include "randomout/init.hpp"

namespace randomout {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;
constexpr std::size_t kCraterSide = 15;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                        std::string_view what) {
  if (offset + 4 > bytes.size()) {
    throw FormatError("truncated " + std::string(what) + " header at byte offset " +
                          std::to_string(offset) + ": need 4 bytes, have " +
                          std::to_string(bytes.size() - std::min(offset, bytes.size())),
                      offset);
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void check_magic(std::uint32_t got, std::uint32_t want) {
  if (got != want) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX magic 0x%08x at byte offset 0 (expected 0x%08x)", got,
                  want);
    throw FormatError(buf, 0);
  }
}

void check_payload(std::span<const std::uint8_t> bytes, std::size_t header, std::size_t expected) {
  const std::size_t actual = bytes.size() - header;
  if (actual != expected) {
    throw FormatError("IDX payload at byte offset " + std::to_string(header) + ": expected " +
                          std::to_string(expected) + " bytes, got " + std::to_string(actual),
                      header + std::min(actual, expected));
  }
}

void put_be32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  os.write(b, 4);
}

std::size_t infer_num_classes(const std::vector<int>& labels) {
  int mx = 1;
  for (int y : labels) mx = std::max(mx, y);
  return static_cast<std::size_t>(mx) + 1;
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const Shape sample = sample_shape();
  const std::size_t stride = sample.numel();
  std::vector<double> data;
  data.reserve(indices.size() * stride);
  std::vector<int> ys;
  ys.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("subset index " + std::to_string(i) + " out of range");
    auto row = images.data().subspan(i * stride, stride);
    data.insert(data.end(), row.begin(), row.end());
    ys.push_back(labels[i]);
  }
  if (indices.empty()) throw InvalidArgument("subset must select at least one example");
  return Dataset{name, Tensor(sample.with_batch(indices.size()), std::move(data)), std::move(ys),
                 num_classes};
}

void Dataset::validate() const {
  if (images.shape().rank() != 4 || images.shape()[0] != labels.size()) {
    throw InvalidArgument("dataset images " + images.shape().to_string() + " do not match " +
                          std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw InvalidArgument("label " + std::to_string(labels[i]) + " at index " +
                            std::to_string(i) + " outside [0," + std::to_string(num_classes) + ")");
    }
  }
  for (double x : images.data()) {
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("dataset pixel outside [0,1]");
  }
}

Tensor parse_idx_images(std::span<const std::uint8_t> bytes) {
  check_magic(read_be32(bytes, 0, "IDX"), kIdxImagesMagic);
  const std::size_t n = read_be32(bytes, 4, "IDX");
  const std::size_t h = read_be32(bytes, 8, "IDX");
  const std::size_t w = read_be32(bytes, 12, "IDX");
  if (n == 0 || h == 0 || w == 0) throw FormatError("IDX image dimensions must be non-zero", 4);
  if (h * w > bytes.size() || n > bytes.size() / (h * w)) {
    throw FormatError("IDX dimensions " + std::to_string(n) + "x" + std::to_string(h) + "x" +
                          std::to_string(w) + " exceed the " + std::to_string(bytes.size()) +
                          "-byte file",
                      4);
  }
  check_payload(bytes, 16, n * h * w);
  std::vector<double> data(n * h * w);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = bytes[16 + i] / 255.0;
  return Tensor(Shape{n, 1, h, w}, std::move(data));
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  check_magic(read_be32(bytes, 0, "IDX"), kIdxLabelsMagic);
  const std::size_t n = read_be32(bytes, 4, "IDX");
  check_payload(bytes, 8, n);
  return std::vector<int>(bytes.begin() + 8, bytes.end());
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  Tensor x = parse_idx_images(read_file_bytes(images));
  std::vector<int> y = parse_idx_labels(read_file_bytes(labels));
  if (x.shape()[0] != y.size()) {
    throw FormatError("IDX label count " + std::to_string(y.size()) + " does not match image count " +
                          std::to_string(x.shape()[0]),
                      4);
  }
  Dataset ds{"idx:" + images.filename().string(), std::move(x), std::move(y), 2};
  ds.num_classes = infer_num_classes(ds.labels);
  return ds;
}

void write_idx(const Dataset& ds, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  const Shape& s = ds.images.shape();
  if (s[1] != 1) throw InvalidArgument("IDX export supports single-channel images only");
  std::ofstream xi(images, std::ios::binary);
  std::ofstream yi(labels, std::ios::binary);
  if (!xi || !yi) throw IoError("cannot write IDX files next to " + images.string());
  put_be32(xi, kIdxImagesMagic);
  put_be32(xi, static_cast<std::uint32_t>(s[0]));
  put_be32(xi, static_cast<std::uint32_t>(s[2]));
  put_be32(xi, static_cast<std::uint32_t>(s[3]));
  for (double v : ds.images.data()) {
    xi.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  put_be32(yi, kIdxLabelsMagic);
  put_be32(yi, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) yi.put(static_cast<char>(static_cast<std::uint8_t>(y)));
  if (!xi || !yi) throw IoError("failed writing IDX files");
}

Dataset parse_cifar10_binary(std::span<const std::uint8_t> bytes, std::size_t max_per_class) {
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    throw FormatError("CIFAR-10 file size " + std::to_string(bytes.size()) +
                          " is not a positive multiple of " + std::to_string(kCifarRecord),
                      bytes.size() - bytes.size() % kCifarRecord);
  }
  const std::size_t records = bytes.size() / kCifarRecord;
  std::vector<std::size_t> taken(10, 0);
  std::vector<double> data;
  std::vector<int> labels;
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t off = r * kCifarRecord;
    const int label = bytes[off];
    if (label > 9) {
      throw FormatError("CIFAR-10 label " + std::to_string(label) + " at byte offset " +
                            std::to_string(off),
                        off);
    }
    if (taken[static_cast<std::size_t>(label)] >= max_per_class) continue;
    ++taken[static_cast<std::size_t>(label)];
    labels.push_back(label);
    for (std::size_t i = 0; i < kCifarPixels; ++i) data.push_back(bytes[off + 1 + i] / 255.0);
  }
  if (labels.empty()) throw FormatError("CIFAR-10 selection is empty (max_per_class = 0?)", 0);
  const std::size_t n = labels.size();
  return Dataset{"cifar10", Tensor(Shape{n, 3, kCifarSide, kCifarSide}, std::move(data)),
                 std::move(labels), 10};
}

Dataset load_cifar10_binary(const std::filesystem::path& path, std::size_t max_per_class) {
  return parse_cifar10_binary(read_file_bytes(path), max_per_class);
}

namespace {

// Noisy background with a random level and a weak linear illumination ramp.
void draw_background(std::span<double> img, RngStream& rng) {
  const double level = rng.uniform(0.15, 0.35);
  const double ramp = rng.uniform(-0.01, 0.01);
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double dx = std::cos(angle) * ramp;
  const double dy = std::sin(angle) * ramp;
  for (std::size_t i = 0; i < kCraterSide; ++i) {
    for (std::size_t j = 0; j < kCraterSide; ++j) {
      const double c = static_cast<double>(kCraterSide - 1) / 2.0;
      img[i * kCraterSide + j] = level + dy * (static_cast<double>(i) - c) +
                                 dx * (static_cast<double>(j) - c) + 0.06 * rng.normal();
    }
  }
}

void draw_ring(std::span<double> img, RngStream& rng) {
  const double cy = rng.uniform(5.5, 8.5);
  const double cx = rng.uniform(5.5, 8.5);
  const double radius = rng.uniform(2.5, 5.0);
  const double width = rng.uniform(0.6, 1.0);
  const double amp = rng.uniform(0.25, 0.6);
  for (std::size_t i = 0; i < kCraterSide; ++i) {
    for (std::size_t j = 0; j < kCraterSide; ++j) {
      const double d = std::hypot(static_cast<double>(i) - cy, static_cast<double>(j) - cx);
      const double t = (d - radius) / width;
      img[i * kCraterSide + j] += amp * std::exp(-0.5 * t * t);
    }
  }
}

void draw_blobs(std::span<double> img, RngStream& rng) {
  const std::size_t count = 1 + rng.index(3);
  for (std::size_t b = 0; b < count; ++b) {
    const double cy = rng.uniform(2.0, 12.0);
    const double cx = rng.uniform(2.0, 12.0);
    const double sigma = rng.uniform(1.0, 2.5);
    const double amp = rng.uniform(0.25, 0.6);
    for (std::size_t i = 0; i < kCraterSide; ++i) {
      for (std::size_t j = 0; j < kCraterSide; ++j) {
        const double dy = static_cast<double>(i) - cy;
        const double dx = static_cast<double>(j) - cx;
        img[i * kCraterSide + j] += amp * std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
      }
    }
  }
}

}  // namespace

Dataset synth_craters(std::size_t n_pos, std::size_t n_neg, std::uint64_t seed) {
  if (n_pos < 1 || n_neg < 1) throw InvalidArgument("synth_craters needs at least one example per class");
  const std::size_t n = n_pos + n_neg;
  const std::size_t pixels = kCraterSide * kCraterSide;
  Tensor images(Shape{n, 1, kCraterSide, kCraterSide});
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng = derive_stream(seed, StreamPurpose::data_gen, i);
    auto img = images.data().subspan(i * pixels, pixels);
    draw_background(img, rng);
    if (i < n_pos) {
      draw_ring(img, rng);
      labels[i] = 1;
    } else {
      draw_blobs(img, rng);
      labels[i] = 0;
    }
    for (double& v : img) v = std::clamp(v, 0.0, 1.0);
  }
  return Dataset{"synth_craters", std::move(images), std::move(labels), 2};
}

std::pair<Dataset, Dataset> split_50_50(const Dataset& ds, std::uint64_t seed) {
  if (ds.size() < 2) throw InvalidArgument("split_50_50 needs at least 2 examples");
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  RngStream rng = derive_stream(seed, StreamPurpose::data_split, 0);
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  bool extra_to_train = true;
  for (auto& members : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[rng.index(i)]);
    }
    std::size_t half = members.size() / 2;
    if (members.size() % 2 == 1) {
      if (extra_to_train) ++half;
      extra_to_train = !extra_to_train;
    }
    train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(half));
    test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(half), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  Dataset a = ds.subset(train);
  Dataset b = ds.subset(test);
  a.name = ds.name + "/train";
  b.name = ds.name + "/test";
  return {std::move(a), std::move(b)};
}

BatchPlan::BatchPlan(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : n_(dataset_size), batch_size_(batch_size), seed_(seed) {
  if (dataset_size == 0) throw InvalidArgument("batch plan over an empty dataset");
  if (batch_size == 0) throw InvalidArgument("batch size must be >= 1");
}

std::vector<std::size_t> BatchPlan::permutation(std::size_t epoch) const {
  std::vector<std::size_t> p(n_);
  for (std::size_t i = 0; i < n_; ++i) p[i] = i;
  RngStream rng = derive_stream(seed_, StreamPurpose::data_order, epoch);
  for (std::size_t i = n_; i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
  return p;
}

std::size_t BatchPlan::batches_per_epoch() const {
  std::size_t count = (n_ + batch_size_ - 1) / batch_size_;
  if (count > 1 && n_ % batch_size_ == 1) --count;
  return count;
}

std::vector<std::vector<std::size_t>> BatchPlan::batches(std::size_t epoch) const {
  const std::vector<std::size_t> p = permutation(epoch);
  const std::size_t count = batches_per_epoch();
  std::vector<std::vector<std::size_t>> out(count);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t begin = b * batch_size_;
    const std::size_t end = (b + 1 == count) ? n_ : begin + batch_size_;
    out[b].assign(p.begin() + static_cast<std::ptrdiff_t>(begin),
                  p.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace randomout
