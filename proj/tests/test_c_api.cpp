/* Copyright 2026 The odnl-lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// Exercises the shared library through its C interface only.
#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "doctest.h"
#include "odnl/odnl.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("odnl_capi_" + std::to_string(getpid()));
  fs::create_directories(dir);
  return dir / name;
}

odnl_config* small_config() {
  odnl_config* cfg = nullptr;
  REQUIRE(odnl_config_create(&cfg) == ODNL_OK);
  const char* settings[][2] = {{"train.epochs", "5"},      {"train.hidden", "8"},
                               {"train.train_batch", "32"}, {"train.aux_batch", "32"},
                               {"train.lr_decay_epochs", ""}, {"train.regularizer", "odnl"}};
  for (const auto& kv : settings) REQUIRE(odnl_config_set(cfg, kv[0], kv[1]) == ODNL_OK);
  return cfg;
}

}  // namespace

TEST_CASE("status names and last error") {
  CHECK(std::string(odnl_status_name(ODNL_OK)) == "ok");
  CHECK(std::string(odnl_status_name(ODNL_ERR_CONFIG)) == "configuration error");
  odnl_config* cfg = nullptr;
  REQUIRE(odnl_config_create(&cfg) == ODNL_OK);
  CHECK(odnl_config_set(cfg, "data.unknown", "1") == ODNL_ERR_CONFIG);
  CHECK(std::string(odnl_last_error()).find("data.unknown") != std::string::npos);
  CHECK(odnl_config_set(nullptr, "data.k", "3") == ODNL_ERR_INPUT);
  CHECK(odnl_config_create(nullptr) == ODNL_ERR_INPUT);
  CHECK(odnl_config_load("/nonexistent/odnl.ini", &cfg) != ODNL_OK);
  odnl_config_free(cfg);
  odnl_config_free(nullptr);
}

TEST_CASE("config get reports the needed size") {
  odnl_config* cfg = nullptr;
  REQUIRE(odnl_config_create(&cfg) == ODNL_OK);
  REQUIRE(odnl_config_set(cfg, "noise.type", "circular") == ODNL_OK);
  size_t needed = 0;
  CHECK(odnl_config_get(cfg, "noise.type", nullptr, 0, &needed) == ODNL_OK);
  CHECK(needed == std::strlen("circular") + 1);
  char small[4] = {};
  CHECK(odnl_config_get(cfg, "noise.type", small, sizeof small, &needed) == ODNL_ERR_INPUT);
  CHECK(needed == std::strlen("circular") + 1);
  std::vector<char> buf(needed);
  CHECK(odnl_config_get(cfg, "noise.type", buf.data(), buf.size(), &needed) == ODNL_OK);
  CHECK(std::string(buf.data()) == "circular");
  CHECK(odnl_config_dump(cfg, nullptr, 0, &needed) == ODNL_OK);
  buf.resize(needed);
  CHECK(odnl_config_dump(cfg, buf.data(), buf.size(), &needed) == ODNL_OK);
  CHECK(std::string(buf.data()).find("# noise.type=circular") != std::string::npos);
  odnl_config_free(cfg);
}

TEST_CASE("datasets round-trip through CSV") {
  odnl_config* cfg = small_config();
  odnl_dataset* data = nullptr;
  REQUIRE(odnl_generate_blobs(cfg, 40, 3, &data) == ODNL_OK);
  size_t rows = 0, dim = 0;
  int k = 0;
  REQUIRE(odnl_dataset_shape(data, &rows, &dim, &k) == ODNL_OK);
  CHECK(rows == 40);
  CHECK(dim == 2);
  CHECK(k == 4);
  const auto path = scratch("blobs.csv").string();
  REQUIRE(odnl_dataset_save(data, cfg, path.c_str()) == ODNL_OK);
  odnl_dataset* loaded = nullptr;
  REQUIRE(odnl_dataset_load(path.c_str(), &loaded) == ODNL_OK);
  std::vector<double> a(rows * dim), b(rows * dim);
  std::vector<int> la(rows), lb(rows);
  REQUIRE(odnl_dataset_export(data, a.data(), la.data(), nullptr) == ODNL_OK);
  REQUIRE(odnl_dataset_export(loaded, b.data(), lb.data(), nullptr) == ODNL_OK);
  CHECK(a == b);
  CHECK(la == lb);
  CHECK(odnl_dataset_load("/nonexistent/x.csv", &loaded) == ODNL_ERR_IO);
  odnl_dataset_free(loaded);
  odnl_dataset_free(data);
  odnl_config_free(cfg);
}

TEST_CASE("corruption and transition matrix") {
  odnl_config* cfg = small_config();
  odnl_dataset* data = nullptr;
  odnl_dataset* noisy = nullptr;
  REQUIRE(odnl_generate_blobs(cfg, 4000, 1, &data) == ODNL_OK);
  REQUIRE(odnl_corrupt(data, "symmetric", 0.4, 2, nullptr, nullptr, &noisy) == ODNL_OK);
  double t[16];
  REQUIRE(odnl_transition_matrix(noisy, t, 16) == ODNL_OK);
  for (int i = 0; i < 4; ++i) {
    CHECK(t[i * 4 + i] == doctest::Approx(0.6).epsilon(0.1));
    double row = 0.0;
    for (int j = 0; j < 4; ++j) row += t[i * 4 + j];
    CHECK(row == doctest::Approx(1.0));
  }
  CHECK(odnl_transition_matrix(noisy, t, 3) == ODNL_ERR_INPUT);
  odnl_dataset* bad = nullptr;
  CHECK(odnl_corrupt(data, "instance", 0.2, 2, nullptr, nullptr, &bad) == ODNL_ERR_INPUT);
  CHECK(odnl_corrupt(data, "sideways", 0.2, 2, nullptr, nullptr, &bad) == ODNL_ERR_CONFIG);
  CHECK(bad == nullptr);
  odnl_dataset_free(noisy);
  odnl_dataset_free(data);
  odnl_config_free(cfg);
}

TEST_CASE("train, predict, save and evaluate") {
  odnl_config* cfg = small_config();
  odnl_dataset* train = nullptr;
  odnl_pool* pool = nullptr;
  odnl_pool* far = nullptr;
  REQUIRE(odnl_generate_blobs(cfg, 200, 1, &train) == ODNL_OK);
  REQUIRE(odnl_generate_openset_pool(cfg, "ring", 100, 2, &pool) == ODNL_OK);
  REQUIRE(odnl_generate_openset_pool(cfg, "uniform", 100, 3, &far) == ODNL_OK);
  odnl_network* net = nullptr;
  const auto metrics = scratch("metrics.csv").string();
  REQUIRE(odnl_train(cfg, train, pool, train, 4, metrics.c_str(), &net) == ODNL_OK);
  CHECK(fs::exists(metrics));

  size_t in_dim = 0, k = 0, p = 0;
  REQUIRE(odnl_network_shape(net, &in_dim, &k, &p) == ODNL_OK);
  CHECK(in_dim == 2);
  CHECK(k == 4);
  CHECK(p == 2 * 8 + 8 + 8 * 4 + 4);
  const double x[2] = {6.0, 0.0};
  double probs[4];
  REQUIRE(odnl_network_predict(net, x, 2, probs, 4) == ODNL_OK);
  CHECK(probs[0] + probs[1] + probs[2] + probs[3] == doctest::Approx(1.0));
  CHECK(odnl_network_predict(net, x, 3, probs, 4) == ODNL_ERR_INPUT);

  const auto model = scratch("params.txt").string();
  REQUIRE(odnl_network_save(net, model.c_str()) == ODNL_OK);
  odnl_network* reloaded = nullptr;
  REQUIRE(odnl_network_load(model.c_str(), &reloaded) == ODNL_OK);
  double again[4];
  REQUIRE(odnl_network_predict(reloaded, x, 2, again, 4) == ODNL_OK);
  for (int i = 0; i < 4; ++i) CHECK(again[i] == probs[i]);

  double acc = 0.0;
  REQUIRE(odnl_accuracy(net, train, &acc) == ODNL_OK);
  CHECK(acc > 0.6);

  const odnl_pool* pools[] = {far};
  const char* names[] = {"uniform"};
  double mean[3];
  const auto ood = scratch("ood.csv").string();
  REQUIRE(odnl_eval_ood(net, train, pools, names, 1, cfg, ood.c_str(), mean) == ODNL_OK);
  CHECK(mean[1] >= 0.0);
  CHECK(mean[1] <= 1.0);

  double sharp = -1.0;
  REQUIRE(odnl_landscape(net, train, 3, 0.1, 5, cfg, scratch("land.csv").string().c_str(), &sharp) ==
          ODNL_OK);
  CHECK(sharp >= 0.0);
  CHECK(odnl_landscape(net, train, 4, 0.1, 5, cfg, nullptr, &sharp) == ODNL_ERR_CONFIG);

  odnl_network_free(reloaded);
  odnl_network_free(net);
  odnl_pool_free(far);
  odnl_pool_free(pool);
  odnl_dataset_free(train);
  odnl_config_free(cfg);
}

TEST_CASE("raw OOD metrics") {
  const double in[] = {0.9, 0.7, 0.4};
  const double out[] = {0.8, 0.3};
  double m[3];
  REQUIRE(odnl_ood_metrics(in, 3, out, 2, m) == ODNL_OK);
  CHECK(m[0] == doctest::Approx(0.5));
  CHECK(m[1] == doctest::Approx(4.0 / 6.0));
  CHECK(m[2] == doctest::Approx(0.75));
  CHECK(odnl_ood_metrics(in, 0, out, 2, m) == ODNL_ERR_INPUT);
}

TEST_CASE("pool mixing") {
  odnl_config* cfg = small_config();
  odnl_pool* open = nullptr;
  odnl_pool* closed = nullptr;
  odnl_pool* mixed = nullptr;
  REQUIRE(odnl_generate_openset_pool(cfg, "ring", 100, 1, &open) == ODNL_OK);
  REQUIRE(odnl_generate_closedset_pool(cfg, 100, 2, &closed) == ODNL_OK);
  REQUIRE(odnl_mix_pools(open, closed, 0.5, 3, &mixed) == ODNL_OK);
  size_t rows = 0, dim = 0;
  REQUIRE(odnl_pool_shape(mixed, &rows, &dim) == ODNL_OK);
  CHECK(rows == 100);
  CHECK(dim == 2);
  CHECK(odnl_mix_pools(open, closed, 1.5, 3, &mixed) == ODNL_ERR_CONFIG);
  CHECK(odnl_generate_openset_pool(cfg, "square", 10, 1, &open) == ODNL_ERR_CONFIG);
  odnl_pool_free(mixed);
  odnl_pool_free(closed);
  odnl_pool_free(open);
  odnl_config_free(cfg);
}
