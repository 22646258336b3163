#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfd/dataset.hpp"
#include "cfd/filters.hpp"
#include "cfd/mlp.hpp"
#include "cfd/report.hpp"
#include "cfd/search.hpp"

namespace cfd::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDatasetError = 3 };

struct ModelOptions {
  std::vector<std::size_t> hidden;  // empty: two layers sized from the input width
  int epochs = 0;                   // 0: 100 below 1000 train rows, else 200
  double learning_rate = 0.005;
  int patience = 10;
};

struct DataOptions {
  std::filesystem::path data;
  std::filesystem::path schema;
};

struct AuditOptions {
  DataOptions input;
  ModelOptions model;
  std::string mode = "small";
  std::string score = "combined";
  std::size_t m = 0;
  std::optional<std::size_t> t;
  double lambda = 1e-2;
  bool decay = true;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;  // 0: hardware concurrency
  std::string tests = "all";
  std::string phi = "inference_fair";
  std::string psi = "same_group_and_prediction";
  std::optional<std::string> phi_group;
  std::optional<std::filesystem::path> out;
  std::uint64_t cap = 5000;  // oracle only
  std::size_t test = 0;      // scores only
};

struct CompareOptions {
  std::vector<std::filesystem::path> reports;
  std::vector<std::string> labels;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> csv;
};

struct SynthOptions {
  std::size_t rows = 50;
  std::size_t numeric = 4;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::filesystem::path out_dir = ".";
};

// Default hidden width for an input dimension: 4 up to 8 inputs, 16 up to
// 16, otherwise 32.
std::size_t default_hidden_width(std::size_t input_dim);
mlp::Learner make_learner(const ModelOptions& opts, const data::Dataset& d, std::uint64_t seed);
std::vector<std::size_t> parse_tests(const std::string& spec, const data::Dataset& d);

struct LoadedData {
  data::Schema schema;
  data::Dataset dataset;
  std::size_t dropped_rows = 0;
};
LoadedData load_data(const DataOptions& opts);

report::RunReport audit(const AuditOptions& opts);
report::OracleReport oracle(const AuditOptions& opts);
report::ComparisonReport compare(const CompareOptions& opts);

int cmd_prepare(const DataOptions& opts, const std::optional<std::filesystem::path>& out);
int cmd_audit(const AuditOptions& opts);
int cmd_oracle(const AuditOptions& opts);
int cmd_scores(const AuditOptions& opts);
int cmd_compare(const CompareOptions& opts);
int cmd_synth(const SynthOptions& opts);

// Parses argv (without the program name) and dispatches; returns the exit code.
int run(const std::vector<std::string>& args);

}  // namespace cfd::cli
