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

#include "odnl/odnl.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <functional>
#include <new>
#include <sstream>
#include <string>

#include "odnl/analyzer.hpp"
#include "odnl/data.hpp"
#include "odnl/error.hpp"
#include "odnl/harness.hpp"
#include "odnl/netcore.hpp"
#include "odnl/noisegen.hpp"
#include "odnl/oodeval.hpp"
#include "odnl/training.hpp"

struct odnl_config {
  odnl::ExperimentConfig value;
};
struct odnl_dataset {
  odnl::LabeledDataset value;
};
struct odnl_pool {
  odnl::AuxiliaryPool value;
};
struct odnl_network {
  odnl::NetworkParams value;
};

namespace {

thread_local std::string g_last_error;

odnl_status status_for(odnl::ErrorKind kind) {
  switch (kind) {
    case odnl::ErrorKind::Input: return ODNL_ERR_INPUT;
    case odnl::ErrorKind::Config: return ODNL_ERR_CONFIG;
    case odnl::ErrorKind::Numeric: return ODNL_ERR_NUMERIC;
    case odnl::ErrorKind::Io: return ODNL_ERR_IO;
  }
  return ODNL_ERR_INTERNAL;
}

odnl_status guarded(const std::function<void()>& body) {
  try {
    body();
    g_last_error.clear();
    return ODNL_OK;
  } catch (const odnl::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return ODNL_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ODNL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ODNL_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ODNL_ERR_INTERNAL;
  }
}

template <class T>
const T& need(const T* p, const char* what) {
  if (!p) throw odnl::InputError(std::string(what) + " is null");
  return *p;
}

template <class T>
T** need_out(T** p) {
  if (!p) throw odnl::InputError("output pointer is null");
  return p;
}

std::string need_str(const char* s, const char* what) {
  if (!s) throw odnl::InputError(std::string(what) + " is null");
  return s;
}

void copy_string(const std::string& value, char* buf, size_t capacity, size_t* needed) {
  if (needed) *needed = value.size() + 1;
  if (buf && capacity > value.size()) {
    std::memcpy(buf, value.c_str(), value.size() + 1);
  } else if (buf || !needed) {
    throw odnl::InputError("buffer too small: need " + std::to_string(value.size() + 1) + " bytes");
  }
}

std::vector<std::string> header_of(const odnl_config* config) {
  return config ? config->value.header_lines() : std::vector<std::string>{};
}

void write_text(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw odnl::IoError("cannot open '" + path + "' for writing");
  body(out);
  if (!out) throw odnl::IoError("failed writing '" + path + "'");
}

odnl::TrainConfig train_config(const odnl_config* config, uint64_t seed) {
  odnl::TrainConfig tc = need(config, "config").value.train;
  tc.seed = seed;
  return tc;
}

}  // namespace

extern "C" {

const char* odnl_last_error(void) { return g_last_error.c_str(); }

const char* odnl_status_name(odnl_status status) {
  switch (status) {
    case ODNL_OK: return "ok";
    case ODNL_ERR_INPUT: return "input error";
    case ODNL_ERR_CONFIG: return "configuration error";
    case ODNL_ERR_NUMERIC: return "numeric error";
    case ODNL_ERR_IO: return "i/o error";
    case ODNL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

odnl_status odnl_config_create(odnl_config** out) {
  return guarded([&] { *need_out(out) = new odnl_config{}; });
}

odnl_status odnl_config_load(const char* path, odnl_config** out) {
  return guarded([&] {
    auto cfg = odnl::load_experiment_config(need_str(path, "path"));
    *need_out(out) = new odnl_config{std::move(cfg)};
  });
}

void odnl_config_free(odnl_config* config) { delete config; }

odnl_status odnl_config_set(odnl_config* config, const char* key, const char* value) {
  return guarded([&] {
    if (!config) throw odnl::InputError("config is null");
    config->value.set(need_str(key, "key"), need_str(value, "value"));
  });
}

odnl_status odnl_config_get(const odnl_config* config, const char* key, char* buf, size_t capacity,
                            size_t* needed) {
  return guarded([&] {
    copy_string(need(config, "config").value.get(need_str(key, "key")), buf, capacity, needed);
  });
}

odnl_status odnl_config_dump(const odnl_config* config, char* buf, size_t capacity, size_t* needed) {
  return guarded([&] {
    std::string text;
    for (const auto& line : need(config, "config").value.header_lines()) text += line + "\n";
    copy_string(text, buf, capacity, needed);
  });
}

odnl_status odnl_generate_blobs(const odnl_config* config, int n, uint64_t seed, odnl_dataset** out) {
  return guarded([&] {
    auto data = odnl::generate_blobs(need(config, "config").value.blobs, n, seed);
    *need_out(out) = new odnl_dataset{std::move(data)};
  });
}

odnl_status odnl_generate_openset_pool(const odnl_config* config, const char* kind, int m, uint64_t seed,
                                       odnl_pool** out) {
  return guarded([&] {
    auto pool = odnl::generate_openset_pool(odnl::parse_open_set_kind(need_str(kind, "kind")), m, seed,
                                            need(config, "config").value.blobs);
    *need_out(out) = new odnl_pool{std::move(pool)};
  });
}

odnl_status odnl_generate_closedset_pool(const odnl_config* config, int m, uint64_t seed, odnl_pool** out) {
  return guarded([&] {
    auto pool = odnl::generate_closedset_pool(m, need(config, "config").value.blobs, seed);
    *need_out(out) = new odnl_pool{std::move(pool)};
  });
}

odnl_status odnl_dataset_load(const char* path, odnl_dataset** out) {
  return guarded([&] {
    auto data = odnl::load_dataset_csv(need_str(path, "path"));
    *need_out(out) = new odnl_dataset{std::move(data)};
  });
}

odnl_status odnl_dataset_save(const odnl_dataset* data, const odnl_config* config, const char* path) {
  return guarded([&] {
    odnl::save_dataset_csv(need_str(path, "path"), need(data, "dataset").value, header_of(config));
  });
}

void odnl_dataset_free(odnl_dataset* data) { delete data; }

odnl_status odnl_dataset_shape(const odnl_dataset* data, size_t* rows, size_t* dim, int* num_classes) {
  return guarded([&] {
    const auto& d = need(data, "dataset").value;
    if (rows) *rows = d.size();
    if (dim) *dim = d.dim();
    if (num_classes) *num_classes = d.num_classes;
  });
}

odnl_status odnl_dataset_export(const odnl_dataset* data, double* features, int* observed_labels,
                                int* true_labels) {
  return guarded([&] {
    const auto& d = need(data, "dataset").value;
    const auto dim = static_cast<std::size_t>(d.dim());
    for (std::size_t i = 0; i < d.size(); ++i) {
      for (std::size_t f = 0; f < dim; ++f) {
        if (features) features[i * dim + f] = d.features(i, f);
      }
      if (observed_labels) observed_labels[i] = d.observed_labels[i];
      if (true_labels) true_labels[i] = d.true_labels[i];
    }
  });
}

odnl_status odnl_pool_load(const char* path, odnl_pool** out) {
  return guarded([&] {
    auto pool = odnl::load_pool_csv(need_str(path, "path"));
    *need_out(out) = new odnl_pool{std::move(pool)};
  });
}

odnl_status odnl_pool_save(const odnl_pool* pool, const odnl_config* config, const char* path) {
  return guarded([&] {
    odnl::save_pool_csv(need_str(path, "path"), need(pool, "pool").value, header_of(config));
  });
}

void odnl_pool_free(odnl_pool* pool) { delete pool; }

odnl_status odnl_pool_shape(const odnl_pool* pool, size_t* rows, size_t* dim) {
  return guarded([&] {
    const auto& p = need(pool, "pool").value;
    if (rows) *rows = p.size();
    if (dim) *dim = p.dim();
  });
}

odnl_status odnl_mix_pools(const odnl_pool* open_pool, const odnl_pool* closed_pool, double alpha,
                           uint64_t seed, odnl_pool** out) {
  return guarded([&] {
    auto mixed = odnl::mix_auxiliary(need(open_pool, "open pool").value, need(closed_pool, "closed pool").value,
                                     alpha, odnl::Rng(seed, "aux_mix"));
    *need_out(out) = new odnl_pool{std::move(mixed)};
  });
}

odnl_status odnl_corrupt(const odnl_dataset* data, const char* type, double rate, uint64_t seed,
                         const odnl_pool* open_source, const odnl_network* weak_model, odnl_dataset** out) {
  return guarded([&] {
    const auto& d = need(data, "dataset").value;
    const std::string kind = need_str(type, "type");
    const odnl::Rng rng(seed, "label_noise");
    odnl::LabeledDataset result;
    if (kind == "symmetric") {
      result = odnl::corrupt_symmetric(d, rate, rng);
    } else if (kind == "circular") {
      result = odnl::corrupt_circular(d, rate, rng);
    } else if (kind == "instance") {
      result = odnl::corrupt_instance_dependent(d, rate, need(weak_model, "weak model").value);
    } else if (kind == "open") {
      result = odnl::inject_open_set(d, rate, need(open_source, "open-set source pool").value, rng);
    } else {
      throw odnl::ConfigError("unknown corruption type '" + kind + "'");
    }
    *need_out(out) = new odnl_dataset{std::move(result)};
  });
}

odnl_status odnl_transition_matrix(const odnl_dataset* data, double* out, size_t capacity) {
  return guarded([&] {
    const auto t = odnl::empirical_transition_matrix(need(data, "dataset").value);
    const auto k = static_cast<size_t>(t.num_classes());
    if (!out || capacity < k * k) throw odnl::InputError("output needs " + std::to_string(k * k) + " doubles");
    for (size_t r = 0; r < k; ++r) {
      for (size_t c = 0; c < k; ++c) out[r * k + c] = t.values(r, c);
    }
  });
}

odnl_status odnl_network_load(const char* path, odnl_network** out) {
  return guarded([&] {
    const std::string p = need_str(path, "path");
    std::ifstream in(p, std::ios::binary);
    if (!in) throw odnl::IoError("cannot open '" + p + "'");
    auto params = odnl::read_params(in);
    *need_out(out) = new odnl_network{std::move(params)};
  });
}

odnl_status odnl_network_save(const odnl_network* net, const char* path) {
  return guarded([&] {
    const auto& params = need(net, "network").value;
    write_text(need_str(path, "path"), [&](std::ostream& out) { odnl::write_params(out, params); });
  });
}

void odnl_network_free(odnl_network* net) { delete net; }

odnl_status odnl_network_shape(const odnl_network* net, size_t* input_dim, size_t* output_dim,
                               size_t* parameters) {
  return guarded([&] {
    const auto& p = need(net, "network").value;
    if (input_dim) *input_dim = static_cast<size_t>(p.input_dim());
    if (output_dim) *output_dim = static_cast<size_t>(p.output_dim());
    if (parameters) *parameters = static_cast<size_t>(p.parameter_count());
  });
}

odnl_status odnl_network_predict(const odnl_network* net, const double* x, size_t dim, double* probs,
                                 size_t k) {
  return guarded([&] {
    const auto& p = need(net, "network").value;
    if (!x || !probs) throw odnl::InputError("input or output buffer is null");
    if (k != static_cast<size_t>(p.output_dim())) throw odnl::InputError("output buffer size mismatch");
    const odnl::Vector input = Eigen::Map<const odnl::Vector>(x, static_cast<Eigen::Index>(dim));
    const odnl::Vector out = odnl::forward(p, input).probs();
    for (size_t j = 0; j < k; ++j) probs[j] = out[static_cast<Eigen::Index>(j)];
  });
}

odnl_status odnl_train(const odnl_config* config, const odnl_dataset* train, const odnl_pool* pool,
                       const odnl_dataset* test, uint64_t seed, const char* metrics_path, odnl_network** out) {
  return guarded([&] {
    need_out(out);
    odnl::TrainInputs in;
    in.train = &need(train, "training dataset").value;
    in.pool = pool ? &pool->value : nullptr;
    in.test = test ? &test->value : nullptr;
    auto result = odnl::train(train_config(config, seed), in);
    if (metrics_path) {
      write_text(metrics_path,
                 [&](std::ostream& os) { odnl::write_metrics_csv(os, result.metrics, header_of(config)); });
    }
    *out = new odnl_network{std::move(result.params)};
  });
}

odnl_status odnl_tune_eta(const odnl_config* config, const odnl_dataset* train, const odnl_pool* pool,
                          uint64_t seed, const char* report_path, double* best_eta) {
  return guarded([&] {
    const auto& cfg = need(config, "config").value;
    const auto tuning = odnl::tune_eta(train_config(config, seed), need(train, "training dataset").value,
                                       pool ? &pool->value : nullptr, cfg.validation_fraction,
                                       cfg.eta_candidates);
    if (report_path) {
      write_text(report_path, [&](std::ostream& os) {
        for (const auto& line : cfg.header_lines()) os << line << '\n';
        os << "eta,final_val_acc,best_val_acc,last_val_acc,late_drop\n";
        for (const auto& c : tuning.candidates) {
          os << odnl::format_double(c.eta) << ',' << odnl::format_double(c.final_val_acc) << ','
             << odnl::format_double(c.best_val_acc) << ',' << odnl::format_double(c.last_val_acc) << ','
             << odnl::format_double(c.late_drop) << '\n';
        }
      });
    }
    if (best_eta) *best_eta = tuning.best_eta;
  });
}

odnl_status odnl_accuracy(const odnl_network* net, const odnl_dataset* data, double* accuracy) {
  return guarded([&] {
    const auto& d = need(data, "dataset").value;
    const double acc = odnl::accuracy(need(net, "network").value, d.features, d.true_labels);
    if (accuracy) *accuracy = acc;
  });
}

odnl_status odnl_analyze_noise(const odnl_network* net, const odnl_dataset* data, const odnl_pool* aux,
                               size_t samples, double sigma, uint64_t seed, const char* report_path,
                               int* all_passed) {
  return guarded([&] {
    const auto& d = need(data, "dataset").value;
    odnl::NoiseAnalysisOptions options;
    if (samples > 0) {
      options.odnl_mc_samples = samples;
      options.sln_cov_samples = samples;
      options.sln_mean_samples = std::max<size_t>(samples / 10, 100);
    }
    options.sigma = sigma;
    const auto report = odnl::analyze_noise(need(net, "network").value, d.features, d.observed_labels,
                                            need(aux, "auxiliary pool").value.features, options,
                                            odnl::Rng(seed, "analyze_noise"));
    if (report_path) write_text(report_path, [&](std::ostream& os) { os << report.to_json() << '\n'; });
    if (all_passed) *all_passed = report.all_passed() ? 1 : 0;
  });
}

odnl_status odnl_landscape(const odnl_network* net, const odnl_dataset* data, int resolution, double radius,
                           uint64_t seed, const odnl_config* config, const char* csv_path, double* sharpness) {
  return guarded([&] {
    const auto slice = odnl::landscape_slice(need(net, "network").value, need(data, "dataset").value,
                                             resolution, radius, odnl::Rng(seed, "landscape"));
    if (csv_path) {
      write_text(csv_path, [&](std::ostream& os) { odnl::write_landscape_csv(os, slice, header_of(config)); });
    }
    if (sharpness) *sharpness = slice.sharpness;
  });
}

odnl_status odnl_ood_metrics(const double* in_scores, size_t n_in, const double* out_scores, size_t n_out,
                             double* metrics) {
  return guarded([&] {
    if ((!in_scores && n_in) || (!out_scores && n_out) || !metrics) {
      throw odnl::InputError("score or metrics buffer is null");
    }
    odnl::ScoreSet scores;
    scores.in_scores.assign(in_scores, in_scores + n_in);
    scores.out_scores.assign(out_scores, out_scores + n_out);
    const auto m = odnl::ood_metrics(scores);
    metrics[0] = m.fpr95;
    metrics[1] = m.auroc;
    metrics[2] = m.aupr;
  });
}

odnl_status odnl_eval_ood(const odnl_network* net, const odnl_dataset* in_data, const odnl_pool* const* pools,
                          const char* const* pool_names, size_t pool_count, const odnl_config* config,
                          const char* csv_path, double* mean_metrics) {
  return guarded([&] {
    const auto& params = need(net, "network").value;
    const auto& in = need(in_data, "in-distribution dataset").value;
    if (pool_count == 0 || !pools) throw odnl::InputError("no OOD pools given");
    std::vector<odnl::PoolMetrics> rows;
    for (size_t i = 0; i < pool_count; ++i) {
      const std::string name = pool_names && pool_names[i] ? pool_names[i] : "pool" + std::to_string(i);
      rows.push_back({name, odnl::evaluate_detector(params, in.features, need(pools[i], "pool").value.features)});
    }
    if (csv_path) {
      write_text(csv_path, [&](std::ostream& os) { odnl::write_ood_csv(os, rows, header_of(config)); });
    }
    if (mean_metrics) {
      const auto m = odnl::average_metrics(rows);
      mean_metrics[0] = m.fpr95;
      mean_metrics[1] = m.auroc;
      mean_metrics[2] = m.aupr;
    }
  });
}

odnl_status odnl_run_experiment(const odnl_config* config) {
  return guarded([&] { odnl::run_experiment(need(config, "config").value); });
}

odnl_status odnl_sweep_size(const odnl_config* config, const int* sizes, size_t count) {
  return guarded([&] {
    if (!sizes && count) throw odnl::InputError("sizes is null");
    odnl::run_size_sweep(need(config, "config").value, std::vector<int>(sizes, sizes + count));
  });
}

odnl_status odnl_sweep_alpha(const odnl_config* config, const double* alphas, size_t count) {
  return guarded([&] {
    if (!alphas && count) throw odnl::InputError("alphas is null");
    odnl::run_alpha_sweep(need(config, "config").value, std::vector<double>(alphas, alphas + count));
  });
}

odnl_status odnl_report(const char* directory, const char* csv_path) {
  return guarded([&] {
    const auto result = odnl::recompute_summary(need_str(directory, "directory"));
    write_text(need_str(csv_path, "csv path"),
               [&](std::ostream& os) { odnl::write_summary_csv(os, result.summary); });
  });
}

}  // extern "C"
