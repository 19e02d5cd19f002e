// SPDX-License-Identifier: Apache-2.0
//
// Per-batch telemetry and its CSV form:
//
//   epoch,batch,train_loss,train_acc,test_acc,mean_cgn,below_thresh,resets,diverged
//
// One row per minibatch. test_acc is filled on the last row of each epoch
// and left empty elsewhere. Reals use the shortest representation that
// parses back to the same double, so write/read is lossless.
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace randomout {

struct MetricsRecord {
  int epoch = 0;
  int batch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> test_acc;
  double mean_cgn = 0.0;
  int below_thresh = 0;
  int resets = 0;
  bool diverged = false;

  bool operator==(const MetricsRecord& o) const;
};

inline constexpr const char* kMetricsHeader =
    "epoch,batch,train_loss,train_acc,test_acc,mean_cgn,below_thresh,resets,diverged";

/// Shortest round-trip decimal form of `x` ("nan", "inf", "-inf" for non-finite).
std::string format_real(double x);

void write_metrics(std::ostream& os, const std::vector<MetricsRecord>& records);
void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);
/// Throws FormatError carrying the 1-based line number of the first bad line.
std::vector<MetricsRecord> read_metrics(std::istream& is);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

}  // namespace randomout
