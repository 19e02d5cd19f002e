// SPDX-License-Identifier: Apache-2.0
// Exercises the shared library through its C header only.
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "randomout.h"

namespace {

struct Str {
  char* p = nullptr;
  ~Str() { ro_string_free(p); }
  std::string s() const { return p ? p : ""; }
};

const char* kSmall =
    R"({"epochs": 2, "batch_size": 20, "model": {"width": 2},
        "dataset": {"kind": "synth", "n_pos": 40, "n_neg": 40}})";

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::strlen(ro_version()) > 0);
  CHECK(std::string(ro_status_name(RO_OK)) == "ok");
  CHECK(std::string(ro_status_name(RO_ERR_FORMAT)) == "malformed input");
}

TEST_CASE("config canonicalization and errors") {
  Str canon, hash, canon2, hash2;
  REQUIRE(ro_config_canonicalize(R"({"seed": 3, "epochs": 5})", &canon.p, &hash.p) == RO_OK);
  REQUIRE(ro_config_canonicalize(R"({"epochs":5,"seed":3})", &canon2.p, &hash2.p) == RO_OK);
  CHECK(canon.s() == canon2.s());
  CHECK(hash.s() == hash2.s());
  CHECK(hash.s().size() == 16);

  Str c3, h3;
  CHECK(ro_config_canonicalize(R"({"bogus": 1})", &c3.p, &h3.p) == RO_ERR_CONFIG);
  CHECK(std::string(ro_last_error()).find("bogus") != std::string::npos);
  CHECK(ro_config_canonicalize(nullptr, &c3.p, &h3.p) == RO_ERR_INVALID_ARGUMENT);
}

TEST_CASE("datasets through handles") {
  ro_dataset* ds = nullptr;
  REQUIRE(ro_dataset_synth(3, 2, 1, &ds) == RO_OK);
  size_t dims[4];
  REQUIRE(ro_dataset_shape(ds, dims) == RO_OK);
  CHECK(dims[0] == 5);
  CHECK(dims[1] == 1);
  CHECK(dims[2] == 15);
  CHECK(dims[3] == 15);
  std::vector<int> labels(5);
  REQUIRE(ro_dataset_labels(ds, labels.data(), labels.size()) == RO_OK);
  CHECK(labels == std::vector<int>{1, 1, 1, 0, 0});
  CHECK(ro_dataset_labels(ds, labels.data(), 2) == RO_ERR_INVALID_ARGUMENT);

  const auto dir = std::filesystem::temp_directory_path() / "ro_capi_idx";
  std::filesystem::create_directories(dir);
  const std::string img = (dir / "img").string(), lbl = (dir / "lbl").string();
  REQUIRE(ro_dataset_write_idx(ds, img.c_str(), lbl.c_str()) == RO_OK);
  ro_dataset* back = nullptr;
  REQUIRE(ro_dataset_load_idx(img.c_str(), lbl.c_str(), &back) == RO_OK);
  std::vector<int> back_labels(5);
  REQUIRE(ro_dataset_labels(back, back_labels.data(), 5) == RO_OK);
  CHECK(back_labels == labels);
  ro_dataset_free(back);

  // Corrupt the magic: positional format error.
  {
    std::fstream f(img, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put('\x01');
  }
  ro_dataset* bad = nullptr;
  CHECK(ro_dataset_load_idx(img.c_str(), lbl.c_str(), &bad) == RO_ERR_FORMAT);
  CHECK(ro_last_error_position() == 0);
  CHECK(std::string(ro_last_error()).find("magic") != std::string::npos);
  CHECK(ro_dataset_load_idx((dir / "missing").c_str(), lbl.c_str(), &bad) == RO_ERR_IO);
  std::filesystem::remove_all(dir);
  ro_dataset_free(ds);
}

TEST_CASE("models through handles") {
  ro_model* m = nullptr;
  REQUIRE(ro_model_create("cratercnn", 3, 0, 1, 15, 15, 2, 0, &m) == RO_OK);
  size_t filters = 0, params = 0;
  REQUIRE(ro_model_filter_count(m, &filters) == RO_OK);
  REQUIRE(ro_model_param_count(m, &params) == RO_OK);
  CHECK(filters == 6);
  CHECK(params == (3 * 16 + 3) + (3 * 3 * 16 + 3) + (3 * 81 * 2 + 2));
  std::vector<double> x(2 * 225, 0.5), logits(4);
  REQUIRE(ro_model_forward(m, x.data(), 2, logits.data()) == RO_OK);
  CHECK(logits[0] == logits[2]);
  ro_model_free(m);

  ro_model* mi = nullptr;
  REQUIRE(ro_model_create("mini-inception", 2, 1, 3, 32, 32, 10, 0, &mi) == RO_OK);
  REQUIRE(ro_model_filter_count(mi, &filters) == RO_OK);
  CHECK(filters == 14);
  ro_model_free(mi);

  CHECK(ro_model_create("resnet", 2, 0, 1, 15, 15, 2, 0, &m) == RO_ERR_CONFIG);
  CHECK(ro_model_create("cratercnn", 2, 0, 1, 3, 3, 2, 0, &m) == RO_ERR_SHAPE);
}

namespace {
int g_log_lines = 0;
void count_lines(const char*, void*) { ++g_log_lines; }
}  // namespace

TEST_CASE("training run through handles") {
  ro_set_log_callback(count_lines, nullptr);
  ro_run* r = nullptr;
  REQUIRE(ro_run_train(kSmall, nullptr, &r) == RO_OK);
  ro_set_log_callback(nullptr, nullptr);
  CHECK(g_log_lines == 2);  // one line per epoch
  double acc = -1.0;
  int diverged = -1;
  size_t records = 0, resets = 99;
  REQUIRE(ro_run_final_test_acc(r, &acc) == RO_OK);
  REQUIRE(ro_run_diverged(r, &diverged) == RO_OK);
  REQUIRE(ro_run_record_count(r, &records) == RO_OK);
  REQUIRE(ro_run_reset_count(r, &resets) == RO_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(diverged == 0);
  CHECK(records == 2 * 2);
  CHECK(resets == 0);
  Str csv, hash;
  REQUIRE(ro_run_metrics_csv(r, &csv.p) == RO_OK);
  REQUIRE(ro_run_hash(r, &hash.p) == RO_OK);
  CHECK(csv.s().rfind("epoch,batch,train_loss,train_acc,test_acc,mean_cgn,below_thresh,resets,diverged\n", 0) == 0);

  ro_run* again = nullptr;
  REQUIRE(ro_run_train(kSmall, nullptr, &again) == RO_OK);
  Str csv2;
  REQUIRE(ro_run_metrics_csv(again, &csv2.p) == RO_OK);
  CHECK(csv.s() == csv2.s());
  ro_run_free(again);
  ro_run_free(r);

  ro_run* bad = nullptr;
  CHECK(ro_run_train(R"({"randomout": {}, "model": {"batchnorm": true}})", nullptr, &bad) ==
        RO_ERR_CONFIG);
}

TEST_CASE("sweeps through handles") {
  const uint64_t seeds[] = {0, 1};
  Str summary;
  REQUIRE(ro_sweep_seeds(kSmall, seeds, 2, "base,randomout", R"({"tau": 1e-8})", 1, nullptr,
                         &summary.p) == RO_OK);
  CHECK(summary.s().find("\"randomout\"") != std::string::npos);
  Str s2;
  CHECK(ro_sweep_seeds(kSmall, seeds, 2, "base,nonsense", nullptr, 1, nullptr, &s2.p) == RO_ERR_CONFIG);

  const double taus[] = {1e-8};
  const double ps[] = {0.0, 1.0};
  Str grid, heat;
  REQUIRE(ro_grid_search(kSmall, taus, 1, ps, 2, seeds, 2, 1, nullptr, &grid.p, &heat.p) == RO_OK);
  CHECK(heat.s().rfind("tau,0,1\n1e-08,0,", 0) == 0);

  const size_t widths[] = {1, 2};
  Str ws, table;
  REQUIRE(ro_width_sweep(kSmall, widths, 2, seeds, 2, nullptr, 1, nullptr, &ws.p, &table.p) == RO_OK);
  CHECK(table.s().find("width") != std::string::npos);
}
