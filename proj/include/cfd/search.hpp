#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfd/dataset.hpp"
#include "cfd/filters.hpp"
#include "cfd/mlp.hpp"
#include "cfd/scoring.hpp"

namespace cfd::search {

using scoring::Ranking;
using scoring::ScoreMode;

enum class SearchMode {
  small,  // iteration t flips only the t-th ranked label (m = 1)
  large,  // per k: top-k, then seeded k-subsets of the top a*k
};

SearchMode parse_search_mode(const std::string& s);
const char* to_string(SearchMode m);

struct SearchConfig {
  // Flip budget; 0 selects ceil(0.001 * n_train), at least 1.
  std::size_t m = 0;
  // Retrain cap; unset selects the mode default (see iteration_budget).
  std::optional<std::size_t> t_budget;
  SearchMode mode = SearchMode::small;
  ScoreMode score_mode = ScoreMode::combined;
  std::size_t attempts_per_k = 10;
  double lambda = 1e-2;
  bool decay = true;
  std::uint64_t seed = 0;
  // Draws per attempt before giving up on finding an unseen subset.
  std::size_t max_redraws = 100;
  // Small-mode default budget is fraction * n_psi, floored unless round_up.
  double small_t_fraction = 0.1;
  bool small_t_round_up = false;
};

std::size_t default_m(std::size_t n_train);
std::size_t resolve_m(const SearchConfig& cfg, std::size_t n_train);
// Small: max(1, fraction * n_psi); large: attempts_per_k * m.
std::size_t iteration_budget(const SearchConfig& cfg, std::size_t m, std::size_t n_psi);

// C(n, k), saturating at UINT64_MAX.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);
// Smallest a >= 1 with C(a*k, k) > threshold.
std::size_t smallest_a(std::size_t k, std::uint64_t threshold = 10);

struct Trial {
  std::size_t iteration = 0;  // 1-based
  std::vector<std::size_t> flipped;
  std::uint64_t retrain_seed = 0;
  double logit = 0.0;
  bool diverged = false;
};

struct Timings {
  double scoring_s = 0.0;
  std::vector<double> retrain_s;
  double verify_s = 0.0;
  double total_s = 0.0;
};

struct CfdResult {
  std::size_t test_index = 0;
  bool phi_passed = false;
  bool found = false;
  bool verified = false;
  std::vector<std::size_t> flipped;
  std::size_t k_used = 0;
  std::size_t iterations_used = 0;
  std::size_t t_budget = 0;
  double original_logit = 0.0;
  double new_logit = 0.0;
  std::size_t n_psi = 0;
  std::vector<Trial> trials;
  std::vector<std::string> notes;
  std::string error;
  Timings timings;
};

struct VerifyOutcome {
  bool changed = false;
  double new_logit = 0.0;
  bool diverged = false;
};

// Retrains with the learner on labels flipped at `flips` and compares the
// prediction for x with `original_label`.
VerifyOutcome verify_cfd(const data::Dataset& d, std::span<const std::size_t> flips,
                         const mlp::Learner& learner, std::span<const double> x, int original_label);

struct EnumerationCapExceeded : std::runtime_error {
  std::uint64_t count;
  EnumerationCapExceeded(std::uint64_t count, std::uint64_t cap)
      : std::runtime_error("exhaustive enumeration needs " + std::to_string(count) +
                           " retrains, above the cap of " + std::to_string(cap)),
        count(count) {}
};

struct OracleResult {
  bool exists = false;
  std::vector<std::size_t> flipped;
  std::size_t retrains = 0;
  double new_logit = 0.0;
};

// Enumerates flip sets over psi_rows by increasing size, lexicographic
// within a size, and returns the first that changes the prediction.
OracleResult exhaustive_oracle(const data::Dataset& d, const mlp::Learner& learner, std::size_t m,
                               std::span<const double> x, std::span<const std::size_t> psi_rows,
                               int original_label, std::uint64_t cap = 5000);

// Per-test-case inputs shared by both search variants.
struct TestCase {
  std::size_t test_index = 0;
  std::span<const double> x;
  int original_label = 0;
};

CfdResult search_small(const data::Dataset& d, const mlp::Learner& learner, const TestCase& tc,
                       const Ranking& ranking, const SearchConfig& cfg, std::size_t t_budget);
CfdResult search_large(const data::Dataset& d, const mlp::Learner& learner, const TestCase& tc,
                       const Ranking& ranking, const SearchConfig& cfg, std::size_t m,
                       std::size_t t_budget);

struct AuditOutcome {
  mlp::MlpModel model;
  std::size_t m = 0;
  std::vector<CfdResult> results;
  double train_s = 0.0;
};

// Trains once, then per test index: phi, psi, scores, search, verification.
// Per-case failures are recorded in CfdResult::error.
AuditOutcome run_audit(const data::Dataset& d, const mlp::Learner& learner,
                       const data::FilterConfig& filter, const SearchConfig& cfg,
                       std::span<const std::size_t> test_indices, std::size_t jobs = 1);

// Same, reusing an already trained original model.
std::vector<CfdResult> audit_cases(const data::Dataset& d, const mlp::Learner& learner,
                                   const mlp::MlpModel& model, const data::FilterConfig& filter,
                                   const SearchConfig& cfg, std::span<const std::size_t> test_indices,
                                   std::size_t jobs = 1);

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace cfd::search
