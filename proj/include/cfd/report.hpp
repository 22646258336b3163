#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfd/search.hpp"

namespace cfd::report {

using nlohmann::json;

struct Aggregates {
  std::size_t tests = 0;
  std::size_t phi_passed = 0;
  std::size_t cfds_found = 0;
  std::size_t one_shot = 0;
  std::size_t total_retrains = 0;
  std::size_t errors = 0;

  bool operator==(const Aggregates&) const = default;
};

struct TimingAggregates {
  double train_s = 0.0;
  double mean_test_s = 0.0;
  double mean_iter_s = 0.0;
  double mean_scoring_s = 0.0;
};

Aggregates compute_aggregates(const std::vector<search::CfdResult>& results);
TimingAggregates compute_timing(const std::vector<search::CfdResult>& results, double train_s);

// Audit output. Timing lives in "timings" and "timing_aggregates" only, so
// deterministic_view() of two equal-flag runs compares equal.
struct RunReport {
  json config;
  std::vector<search::CfdResult> results;
  Aggregates aggregates;
  TimingAggregates timing;

  json to_json() const;
  // Throws std::runtime_error when stored aggregates disagree with the records.
  static RunReport from_json(const json& j);

  std::uint64_t dataset_hash() const;
  std::vector<std::size_t> test_indices() const;
  std::vector<std::size_t> found_indices() const;
};

json result_to_json(const search::CfdResult& r);
search::CfdResult result_from_json(const json& j);

// Drops timing sections.
json deterministic_view(const json& report);

void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

// Per-test plot data: test_index, phi_passed, found, iterations_used, k_used,
// original_logit, new_logit, n_psi.
void write_results_csv(std::ostream& out, const std::vector<search::CfdResult>& results);

// Ground truth from exhaustive enumeration.
struct OracleCase {
  std::size_t test_index = 0;
  bool phi_passed = false;
  std::size_t n_psi = 0;
  bool exists = false;
  std::vector<std::size_t> flipped;
  std::size_t retrains = 0;
  bool refused = false;
  std::uint64_t candidates = 0;
  double original_logit = 0.0;
  std::string error;
};

struct OracleReport {
  json config;
  std::vector<OracleCase> cases;

  json to_json() const;
  static OracleReport from_json(const json& j);
};

struct Quartiles {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

// Linear interpolation between order statistics; nullopt for empty input.
std::optional<Quartiles> quartiles(std::vector<double> values);

struct MethodSummary {
  std::string label;
  std::vector<std::size_t> found;  // test indices, ascending
  std::optional<Quartiles> logit_quartiles;
};

struct Region {
  std::uint32_t mask = 0;  // bit i = method i found it
  std::size_t count = 0;
};

struct ComparisonReport {
  std::vector<MethodSummary> methods;
  std::vector<Region> regions;  // every nonempty membership mask
  std::size_t union_size = 0;

  std::size_t region(std::uint32_t mask) const;
  std::size_t intersection(std::uint32_t mask) const;
  std::string region_name(std::uint32_t mask) const;
  json to_json() const;
};

// Throws std::runtime_error on dataset-hash or test-list mismatch.
ComparisonReport compare(const std::vector<RunReport>& reports, const std::vector<std::string>& labels);
ComparisonReport compare_sets(const std::vector<std::vector<std::size_t>>& found_sets,
                              const std::vector<std::string>& labels);

// method,test_index,original_logit,iterations_used,k_used per found CFD.
void write_comparison_csv(std::ostream& out, const std::vector<RunReport>& reports,
                          const std::vector<std::string>& labels);

}  // namespace cfd::report
