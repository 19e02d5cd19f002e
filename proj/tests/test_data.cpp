// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "randomout/data.hpp"
#include "randomout/error.hpp"
#include "support/oracles.hpp"

using namespace randomout;

namespace {

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t h, std::uint32_t w,
                                     const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> b;
  oracle::put_be32(b, 0x00000803);
  oracle::put_be32(b, n);
  oracle::put_be32(b, h);
  oracle::put_be32(b, w);
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> b;
  oracle::put_be32(b, 0x00000801);
  oracle::put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

std::vector<std::uint8_t> cifar_record(std::uint8_t label, std::uint8_t base) {
  std::vector<std::uint8_t> r{label};
  for (std::size_t i = 0; i < 3072; ++i) r.push_back(static_cast<std::uint8_t>((base + i) % 256));
  return r;
}

std::size_t position_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.position();
  }
  FAIL("expected FormatError");
  return 0;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("ro_data_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                           static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("IDX images parse to [N,1,H,W] scaled by 1/255") {
  const auto bytes = idx_images(2, 2, 3, {0, 51, 102, 153, 204, 255, 1, 2, 3, 4, 5, 6});
  const Tensor t = parse_idx_images(bytes);
  REQUIRE(t.shape() == Shape{2, 1, 2, 3});
  CHECK(t.at(0, 0, 0, 1) == 51.0 / 255.0);
  CHECK(t.at(0, 0, 1, 2) == 1.0);
  CHECK(t.at(1, 0, 1, 0) == 4.0 / 255.0);
}

TEST_CASE("IDX labels parse") {
  CHECK(parse_idx_labels(idx_labels({3, 0, 9})) == std::vector<int>{3, 0, 9});
}

TEST_CASE("malformed IDX files are rejected with byte offsets") {
  auto bad_magic = idx_images(1, 1, 1, {0});
  bad_magic[3] = 0x01;
  CHECK(position_of([&] { parse_idx_images(bad_magic); }) == 0);
  CHECK(position_of([&] { parse_idx_labels(idx_images(1, 1, 1, {0})); }) == 0);

  const auto short_payload = idx_images(2, 2, 2, {1, 2, 3, 4, 5});
  CHECK(position_of([&] { parse_idx_images(short_payload); }) == 16 + 5);

  std::vector<std::uint8_t> truncated_header{0, 0, 8, 3, 0, 0};
  CHECK(position_of([&] { parse_idx_images(truncated_header); }) == 4);

  const auto long_labels = [] {
    auto b = idx_labels({1, 2});
    b.push_back(7);
    return b;
  }();
  CHECK(position_of([&] { parse_idx_labels(long_labels); }) == 8 + 2);

  const auto huge = idx_images(0xFFFFFFFF, 0xFFFFFFFF, 0xFFFFFFFF, {});
  CHECK_THROWS_AS(parse_idx_images(huge), FormatError);

  try {
    parse_idx_images(bad_magic);
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset 0") != std::string::npos);
  }
}

TEST_CASE("IDX files load and count mismatches are rejected") {
  TempDir dir;
  write_bytes(dir.path / "x", idx_images(3, 1, 2, {0, 255, 10, 20, 30, 40}));
  write_bytes(dir.path / "y", idx_labels({0, 2, 1}));
  const Dataset ds = load_idx(dir.path / "x", dir.path / "y");
  CHECK(ds.size() == 3);
  CHECK(ds.num_classes == 3);
  CHECK(ds.images.shape() == Shape{3, 1, 1, 2});
  write_bytes(dir.path / "y2", idx_labels({0, 1}));
  CHECK_THROWS_AS(load_idx(dir.path / "x", dir.path / "y2"), FormatError);
  CHECK_THROWS_AS(load_idx(dir.path / "missing", dir.path / "y"), IoError);
}

TEST_CASE("IDX write then load round-trips byte-quantized data") {
  TempDir dir;
  const Dataset ds = synth_craters(5, 4, 3);
  write_idx(ds, dir.path / "img", dir.path / "lbl");
  const Dataset back = load_idx(dir.path / "img", dir.path / "lbl");
  CHECK(back.labels == ds.labels);
  REQUIRE(back.images.shape() == ds.images.shape());
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    CHECK(std::abs(back.images[i] - ds.images[i]) <= 0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("CIFAR-10 binary records") {
  std::vector<std::uint8_t> bytes;
  for (auto [label, base] : {std::pair{6, 0}, std::pair{9, 100}, std::pair{6, 7}}) {
    const auto r = cifar_record(static_cast<std::uint8_t>(label), static_cast<std::uint8_t>(base));
    bytes.insert(bytes.end(), r.begin(), r.end());
  }
  const Dataset ds = parse_cifar10_binary(bytes, 100);
  REQUIRE(ds.images.shape() == Shape{3, 3, 32, 32});
  CHECK(ds.labels == std::vector<int>{6, 9, 6});
  CHECK(ds.num_classes == 10);
  // Channel-major planes: R at 0..1023, G at 1024.., B at 2048..
  CHECK(ds.images.at(0, 0, 0, 5) == 5.0 / 255.0);
  CHECK(ds.images.at(0, 1, 0, 0) == static_cast<double>(1024 % 256) / 255.0);
  CHECK(ds.images.at(1, 2, 31, 31) == static_cast<double>((100 + 3071) % 256) / 255.0);

  const Dataset capped = parse_cifar10_binary(bytes, 1);
  CHECK(capped.labels == std::vector<int>{6, 9});
  CHECK(capped.images.at(1, 0, 0, 0) == 100.0 / 255.0);
}

TEST_CASE("malformed CIFAR-10 files are rejected with byte offsets") {
  auto r = cifar_record(1, 0);
  auto two = r;
  two.insert(two.end(), r.begin(), r.begin() + 100);
  CHECK(position_of([&] { parse_cifar10_binary(two, 10); }) == 3073);
  auto bad_label = r;
  auto second = cifar_record(10, 0);
  bad_label.insert(bad_label.end(), second.begin(), second.end());
  CHECK(position_of([&] { parse_cifar10_binary(bad_label, 10); }) == 3073);
  CHECK_THROWS_AS(parse_cifar10_binary(std::vector<std::uint8_t>{}, 10), FormatError);
}

TEST_CASE("synthetic craters are deterministic and labelled positives first") {
  const Dataset a = synth_craters(20, 30, 11);
  const Dataset b = synth_craters(20, 30, 11);
  const Dataset c = synth_craters(20, 30, 12);
  CHECK(a.images == b.images);
  CHECK_FALSE(a.images == c.images);
  CHECK(a.images.shape() == Shape{50, 1, 15, 15});
  CHECK(std::count(a.labels.begin(), a.labels.begin() + 20, 1) == 20);
  CHECK(std::count(a.labels.begin() + 20, a.labels.end(), 0) == 30);
  CHECK_NOTHROW(a.validate());
  // Prefix stability: image i depends only on (i, seed).
  const Dataset longer = synth_craters(25, 30, 11);
  for (std::size_t i = 0; i < 20 * 225; ++i) REQUIRE(longer.images[i] == a.images[i]);
}

TEST_CASE("stratified 50/50 split") {
  const Dataset ds = synth_craters(11, 7, 5);
  const auto [train, test] = split_50_50(ds, 9);
  CHECK(train.size() + test.size() == 18);
  const auto count1 = [](const Dataset& d) { return std::count(d.labels.begin(), d.labels.end(), 1); };
  // Odd classes alternate which half takes the extra example.
  // Class 0 (7 examples) comes first and gives its extra one to train;
  // class 1 (11 examples) then gives its extra one to test.
  CHECK(train.size() - count1(train) == 4);
  CHECK(test.size() - count1(test) == 3);
  CHECK(count1(train) == 5);
  CHECK(count1(test) == 6);
  // Disjoint: every image row appears exactly once across both halves.
  std::multiset<std::vector<double>> rows;
  for (const Dataset* d : {&train, &test})
    for (std::size_t i = 0; i < d->size(); ++i) {
      auto r = d->images.data().subspan(i * 225, 225);
      rows.insert(std::vector<double>(r.begin(), r.end()));
    }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = ds.images.data().subspan(i * 225, 225);
    CHECK(rows.count(std::vector<double>(r.begin(), r.end())) == 1);
  }
  const auto again = split_50_50(ds, 9);
  CHECK(again.first.images == train.images);
}

TEST_CASE("batch plan") {
  SUBCASE("permutations cover every index and vary by epoch") {
    BatchPlan plan(10, 3, 1);
    auto p0 = plan.permutation(0);
    auto p1 = plan.permutation(1);
    CHECK(p0 != p1);
    std::sort(p0.begin(), p0.end());
    std::vector<std::size_t> id(10);
    std::iota(id.begin(), id.end(), 0);
    CHECK(p0 == id);
    CHECK(plan.permutation(0) == BatchPlan(10, 3, 1).permutation(0));
  }
  SUBCASE("a trailing singleton merges into the previous batch") {
    BatchPlan plan(10, 3, 1);
    const auto bs = plan.batches(0);
    REQUIRE(bs.size() == 3);
    CHECK(bs[2].size() == 4);
    CHECK(plan.batches_per_epoch() == 3);
  }
  SUBCASE("even division") {
    BatchPlan plan(500, 50, 0);
    CHECK(plan.batches_per_epoch() == 10);
    for (const auto& b : plan.batches(2)) CHECK(b.size() == 50);
  }
}
