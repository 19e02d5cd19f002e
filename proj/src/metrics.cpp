// SPDX-License-Identifier: Apache-2.0
#include "randomout/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "randomout/error.hpp"

namespace randomout {

namespace {

bool same_real(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

template <typename T>
T parse_field(std::string_view s, std::size_t line, std::string_view name) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("metrics line " + std::to_string(line) + ": bad " + std::string(name) +
                          " value '" + std::string(s) + "'",
                      line);
  }
  return value;
}

}  // namespace

bool MetricsRecord::operator==(const MetricsRecord& o) const {
  const bool test_same = test_acc.has_value() == o.test_acc.has_value() &&
                         (!test_acc || same_real(*test_acc, *o.test_acc));
  return epoch == o.epoch && batch == o.batch && same_real(train_loss, o.train_loss) &&
         same_real(train_acc, o.train_acc) && test_same && same_real(mean_cgn, o.mean_cgn) &&
         below_thresh == o.below_thresh && resets == o.resets && diverged == o.diverged;
}

std::string format_real(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

void write_metrics(std::ostream& os, const std::vector<MetricsRecord>& records) {
  os << kMetricsHeader << '\n';
  for (const MetricsRecord& r : records) {
    os << r.epoch << ',' << r.batch << ',' << format_real(r.train_loss) << ','
       << format_real(r.train_acc) << ',' << (r.test_acc ? format_real(*r.test_acc) : "") << ','
       << format_real(r.mean_cgn) << ',' << r.below_thresh << ',' << r.resets << ','
       << (r.diverged ? 1 : 0) << '\n';
  }
}

void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  write_metrics(os, records);
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<MetricsRecord> read_metrics(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw FormatError("metrics line 1: missing or unexpected header", 1);
  }
  std::vector<MetricsRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest = line;
    while (true) {
      const auto comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != 9) {
      throw FormatError("metrics line " + std::to_string(line_no) + ": expected 9 fields, got " +
                            std::to_string(f.size()),
                        line_no);
    }
    MetricsRecord r;
    r.epoch = parse_field<int>(f[0], line_no, "epoch");
    r.batch = parse_field<int>(f[1], line_no, "batch");
    r.train_loss = parse_field<double>(f[2], line_no, "train_loss");
    r.train_acc = parse_field<double>(f[3], line_no, "train_acc");
    if (!f[4].empty()) r.test_acc = parse_field<double>(f[4], line_no, "test_acc");
    r.mean_cgn = parse_field<double>(f[5], line_no, "mean_cgn");
    r.below_thresh = parse_field<int>(f[6], line_no, "below_thresh");
    r.resets = parse_field<int>(f[7], line_no, "resets");
    const int d = parse_field<int>(f[8], line_no, "diverged");
    if (d != 0 && d != 1) {
      throw FormatError("metrics line " + std::to_string(line_no) + ": diverged must be 0 or 1",
                        line_no);
    }
    r.diverged = d == 1;
    out.push_back(r);
  }
  return out;
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_metrics(is);
}

}  // namespace randomout
