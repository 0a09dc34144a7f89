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

#include "odnl/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "odnl/error.hpp"

namespace odnl {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& text, std::size_t line_no) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw InputError("line " + std::to_string(line_no) + ": cannot parse number '" + text + "'");
  }
  return value;
}

int parse_int(const std::string& text, std::size_t line_no) {
  int value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw InputError("line " + std::to_string(line_no) + ": cannot parse integer '" + text + "'");
  }
  return value;
}

// Reads header + rows, skipping comments. Returns false at EOF.
bool next_data_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    return true;
  }
  return false;
}

int feature_column_count(const std::vector<std::string>& header) {
  int d = 0;
  while (d < static_cast<int>(header.size()) && header[d] == "f" + std::to_string(d)) ++d;
  return d;
}

void write_comments(std::ostream& out, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << c << '\n';
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& rows) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = rows[r];
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(src));
    out.observed_labels.push_back(observed_labels[src]);
    out.true_labels.push_back(true_labels[src]);
    out.open_set_mask.push_back(open_set_mask[src]);
  }
  return out;
}

void LabeledDataset::validate() const {
  const auto n = size();
  if (static_cast<std::size_t>(features.rows()) != n || true_labels.size() != n ||
      open_set_mask.size() != n) {
    throw InputError("dataset columns have inconsistent lengths");
  }
  if (num_classes < 1) throw InputError("dataset needs at least one class");
  for (std::size_t i = 0; i < n; ++i) {
    if (observed_labels[i] < 0 || observed_labels[i] >= num_classes) {
      throw InputError("observed label out of range at row " + std::to_string(i));
    }
    if (open_set_mask[i]) {
      if (true_labels[i] != kOpenSetLabel) {
        throw InputError("open-set row " + std::to_string(i) + " must carry true label -1");
      }
    } else if (true_labels[i] < 0 || true_labels[i] >= num_classes) {
      throw InputError("true label out of range at row " + std::to_string(i));
    }
  }
  if (!features.allFinite()) throw InputError("dataset features must be finite");
}

AuxiliaryPool AuxiliaryPool::subset(const std::vector<std::size_t>& rows) const {
  AuxiliaryPool out;
  out.mix_alpha = mix_alpha;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  if (fixed_labels) out.fixed_labels.emplace();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(rows[r]));
    if (fixed_labels) out.fixed_labels->push_back((*fixed_labels)[rows[r]]);
  }
  return out;
}

TransitionMatrix TransitionMatrix::identity(int k) {
  return {Matrix::Identity(k, k)};
}

void TransitionMatrix::validate() const {
  if (values.rows() != values.cols() || values.rows() == 0) {
    throw ConfigError("transition matrix must be square and non-empty");
  }
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if ((values.row(i).array() < 0.0).any() || !values.row(i).allFinite()) {
      throw ConfigError("transition matrix row " + std::to_string(i) + " has invalid entries");
    }
    if (std::abs(values.row(i).sum() - 1.0) > 1e-9) {
      throw ConfigError("transition matrix row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

void write_dataset_csv(std::ostream& out, const LabeledDataset& data,
                       const std::vector<std::string>& comments) {
  write_comments(out, comments);
  for (int f = 0; f < data.dim(); ++f) out << 'f' << f << ',';
  out << "observed_label,true_label,open_set\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int f = 0; f < data.dim(); ++f) {
      out << format_double(data.features(static_cast<Eigen::Index>(i), f)) << ',';
    }
    out << data.observed_labels[i] << ',' << data.true_labels[i] << ','
        << (data.open_set_mask[i] ? 1 : 0) << '\n';
  }
}

void save_dataset_csv(const std::string& path, const LabeledDataset& data,
                      const std::vector<std::string>& comments) {
  auto out = open_for_write(path);
  write_dataset_csv(out, data, comments);
  if (!out) throw IoError("failed writing '" + path + "'");
}

LabeledDataset read_dataset_csv(std::istream& in, int num_classes) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_data_line(in, line, line_no)) throw InputError("dataset CSV is empty");
  const auto header = split_csv(line);
  const int d = feature_column_count(header);
  if (header.size() != static_cast<std::size_t>(d) + 3 || header[d] != "observed_label" ||
      header[d + 1] != "true_label" || header[d + 2] != "open_set") {
    throw InputError("dataset CSV header must be f0..f{d-1},observed_label,true_label,open_set");
  }
  std::vector<double> values;
  LabeledDataset data;
  while (next_data_line(in, line, line_no)) {
    const auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw InputError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields");
    }
    for (int f = 0; f < d; ++f) values.push_back(parse_double(fields[f], line_no));
    data.observed_labels.push_back(parse_int(fields[d], line_no));
    data.true_labels.push_back(parse_int(fields[d + 1], line_no));
    data.open_set_mask.push_back(parse_int(fields[d + 2], line_no) != 0);
  }
  data.features = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(data.size()), d);
  if (num_classes <= 0) {
    int top = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      top = std::max({top, data.observed_labels[i], data.true_labels[i]});
    }
    num_classes = top + 1;
  }
  data.num_classes = num_classes;
  data.validate();
  return data;
}

LabeledDataset load_dataset_csv(const std::string& path, int num_classes) {
  auto in = open_for_read(path);
  return read_dataset_csv(in, num_classes);
}

void write_pool_csv(std::ostream& out, const AuxiliaryPool& pool,
                    const std::vector<std::string>& comments) {
  write_comments(out, comments);
  out << "# mix_alpha=" << format_double(pool.mix_alpha) << '\n';
  for (int f = 0; f < pool.dim(); ++f) {
    if (f > 0) out << ',';
    out << 'f' << f;
  }
  if (pool.fixed_labels) out << ",fixed_label";
  out << '\n';
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (int f = 0; f < pool.dim(); ++f) {
      if (f > 0) out << ',';
      out << format_double(pool.features(static_cast<Eigen::Index>(i), f));
    }
    if (pool.fixed_labels) out << ',' << (*pool.fixed_labels)[i];
    out << '\n';
  }
}

void save_pool_csv(const std::string& path, const AuxiliaryPool& pool,
                   const std::vector<std::string>& comments) {
  auto out = open_for_write(path);
  write_pool_csv(out, pool, comments);
  if (!out) throw IoError("failed writing '" + path + "'");
}

AuxiliaryPool read_pool_csv(std::istream& in) {
  AuxiliaryPool pool;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("# mix_alpha=", 0) == 0) {
      pool.mix_alpha = parse_double(line.substr(12), line_no);
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    header = split_csv(line);
    have_header = true;
    break;
  }
  if (!have_header) throw InputError("pool CSV is empty");
  const int d = feature_column_count(header);
  const bool labelled = header.size() == static_cast<std::size_t>(d) + 1 && header[d] == "fixed_label";
  if (!labelled && header.size() != static_cast<std::size_t>(d)) {
    throw InputError("pool CSV header must be f0..f{d-1}[,fixed_label]");
  }
  if (labelled) pool.fixed_labels.emplace();
  std::vector<double> values;
  std::size_t rows = 0;
  while (next_data_line(in, line, line_no)) {
    const auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw InputError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields");
    }
    for (int f = 0; f < d; ++f) values.push_back(parse_double(fields[f], line_no));
    if (labelled) pool.fixed_labels->push_back(parse_int(fields[d], line_no));
    ++rows;
  }
  pool.features = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(rows), d);
  return pool;
}

AuxiliaryPool load_pool_csv(const std::string& path) {
  auto in = open_for_read(path);
  return read_pool_csv(in);
}

}  // namespace odnl
