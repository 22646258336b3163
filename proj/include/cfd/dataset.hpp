#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfd/linalg.hpp"

namespace cfd::data {

using linalg::Matrix;
using linalg::Vector;

// Problems with the schema or the filter configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Problems with dataset content (CLI exit code 3).
struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ColumnKind { numerical, categorical, label, ignore };

ColumnKind parse_column_kind(const std::string& s);
const char* to_string(ColumnKind k);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numerical;
};

struct Schema {
  std::vector<ColumnSpec> columns;
  std::string protected_attribute;
  std::string positive_label;
  // When set, label tokens other than positive/negative are rejected.
  std::optional<std::string> negative_label;
  char delimiter = ',';
  std::uint64_t split_seed = 0;
  std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
  // Appends a constant-1 feature so the first layer can learn offsets while
  // the network itself stays bias-free.
  bool bias_feature = false;

  void validate() const;
  std::size_t label_column() const;
  const ColumnSpec& column(const std::string& name) const;

  // JSON key/value document.
  static Schema from_json_text(const std::string& text);
  static Schema load(const std::filesystem::path& path);
  std::string to_json_text() const;
  std::uint64_t digest() const;
};

// Rows retained after dropping incomplete ones. Tokens are ordered like
// schema.columns.
struct RawDataset {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> source_lines;  // 1-based line in the CSV file
  std::size_t dropped_rows = 0;

  std::size_t size() const { return rows.size(); }
};

RawDataset parse_csv(const std::string& text, const Schema& schema);
RawDataset load_csv(const std::filesystem::path& path, const Schema& schema);

enum class Split : std::uint8_t { train, val, test };
const char* to_string(Split s);

// Deterministic shuffle then contiguous assignment: train gets
// floor(r0*n), val floor(r1*n), test the remainder.
std::vector<Split> split(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed);

// Where one raw column landed in the embedded feature vector.
struct FeatureGroup {
  std::string column;
  ColumnKind kind = ColumnKind::numerical;
  std::size_t offset = 0;
  std::size_t width = 0;
  std::vector<std::string> categories;  // one-hot order, categorical only
  double mean = 0.0;
  double stddev = 1.0;
  bool constant = false;
};

struct Dataset {
  Matrix X;
  Vector y;
  std::vector<std::vector<std::string>> raw_rows;
  std::vector<FeatureGroup> feature_map;
  std::vector<Split> splits;
  std::size_t protected_group = 0;  // index into feature_map
  std::vector<std::string> warnings;

  std::size_t size() const { return y.size(); }
  std::size_t feature_dim() const { return X.cols(); }
  std::vector<std::size_t> indices(Split s) const;
  std::vector<std::size_t> train_indices() const { return indices(Split::train); }
  std::vector<std::size_t> val_indices() const { return indices(Split::val); }
  std::vector<std::size_t> test_indices() const { return indices(Split::test); }

  const FeatureGroup& protected_feature() const { return feature_map.at(protected_group); }
  // Protected group value (one-hot position) of an embedded input.
  std::size_t group_of(std::span<const double> x) const;

  // Digest of the embedded matrix, labels and split tags.
  std::uint64_t digest() const;
};

Dataset preprocess(const RawDataset& raw, const Schema& schema, std::span<const Split> splits);
// Splits with the schema's seed and ratios, then preprocesses.
Dataset prepare(const RawDataset& raw, const Schema& schema);

// Returns a copy with y_i -> 1 - y_i for each index; indices must be train rows.
Dataset flip_labels(const Dataset& d, std::span<const std::size_t> indices);
// Same rule applied to a bare label vector.
Vector flipped_labels(const Dataset& d, std::span<const std::size_t> indices);

}  // namespace cfd::data
