#include "cfd/search.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "cfd/rng.hpp"

namespace cfd::search {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Key tags keep seed streams for different purposes apart.
constexpr std::uint64_t kRankingStream = 0x52414e4b;  // "RANK"
constexpr std::uint64_t kSubsetStream = 0x53554253;   // "SUBS"

// Uniform k-subset of pool (sorted), by partial Fisher-Yates.
std::vector<std::size_t> draw_subset(std::span<const std::size_t> pool, std::size_t k, Rng& rng) {
  std::vector<std::size_t> items(pool.begin(), pool.end());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
  items.resize(k);
  std::sort(items.begin(), items.end());
  return items;
}

// Retrains on `flips`, appends the trial and reports whether the label changed.
bool run_trial(const data::Dataset& d, const mlp::Learner& learner, const TestCase& tc,
               std::vector<std::size_t> flips, CfdResult& res) {
  const auto start = Clock::now();
  const VerifyOutcome v = verify_cfd(d, flips, learner, tc.x, tc.original_label);
  res.timings.retrain_s.push_back(seconds_since(start));
  Trial t;
  t.iteration = res.trials.size() + 1;
  t.flipped = std::move(flips);
  t.retrain_seed = learner.config.seed;
  t.logit = v.new_logit;
  t.diverged = v.diverged;
  res.trials.push_back(t);
  res.iterations_used = res.trials.size();
  if (v.diverged) res.notes.push_back("training diverged at iteration " + std::to_string(t.iteration));
  if (v.changed) {
    res.found = true;
    res.flipped = t.flipped;
    res.k_used = t.flipped.size();
    res.new_logit = v.new_logit;
  }
  return v.changed;
}

}  // namespace

SearchMode parse_search_mode(const std::string& s) {
  if (s == "small") return SearchMode::small;
  if (s == "large") return SearchMode::large;
  throw data::ConfigError("unknown search mode '" + s + "'");
}

const char* to_string(SearchMode m) { return m == SearchMode::small ? "small" : "large"; }

std::size_t default_m(std::size_t n_train) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.001 * static_cast<double>(n_train))));
}

std::size_t resolve_m(const SearchConfig& cfg, std::size_t n_train) {
  const std::size_t m = cfg.m == 0 ? default_m(n_train) : cfg.m;
  if (m > n_train) {
    throw data::ConfigError("flip budget m = " + std::to_string(m) + " exceeds the train size " +
                            std::to_string(n_train));
  }
  return m;
}

std::size_t iteration_budget(const SearchConfig& cfg, std::size_t m, std::size_t n_psi) {
  if (cfg.t_budget) {
    if (*cfg.t_budget == 0) throw data::ConfigError("iteration budget t must be >= 1");
    return *cfg.t_budget;
  }
  if (cfg.mode == SearchMode::large) return cfg.attempts_per_k * m;
  const double raw = cfg.small_t_fraction * static_cast<double>(n_psi);
  // Guard against 0.1 * 30 landing just below 3.
  const double t = cfg.small_t_round_up ? std::ceil(raw - 1e-9) : std::floor(raw + 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(t));
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // r * (n - k + i) / i is exact at every step.
    const std::uint64_t num = n - k + i;
    const std::uint64_t g = std::gcd(r, i);
    const std::uint64_t rr = r / g;
    const std::uint64_t ii = i / g;
    const std::uint64_t nn = num / ii;
    if (rr != 0 && nn > UINT64_MAX / rr) return UINT64_MAX;
    r = rr * nn;
  }
  return r;
}

std::size_t smallest_a(std::size_t k, std::uint64_t threshold) {
  if (k == 0) throw std::invalid_argument("smallest_a needs k >= 1");
  for (std::size_t a = 1;; ++a) {
    if (binomial(a * k, k) > threshold) return a;
  }
}

VerifyOutcome verify_cfd(const data::Dataset& d, std::span<const std::size_t> flips,
                         const mlp::Learner& learner, std::span<const double> x, int original_label) {
  const linalg::Vector labels = data::flipped_labels(d, flips);
  VerifyOutcome out;
  try {
    const mlp::MlpModel model = learner.fit(d, labels);
    out.new_logit = mlp::logit(model, x);
    out.changed = (out.new_logit > 0.0 ? 1 : 0) != original_label;
  } catch (const mlp::TrainingError&) {
    out.diverged = true;
  }
  return out;
}

OracleResult exhaustive_oracle(const data::Dataset& d, const mlp::Learner& learner, std::size_t m,
                               std::span<const double> x, std::span<const std::size_t> psi_rows,
                               int original_label, std::uint64_t cap) {
  OracleResult out;
  const std::size_t n = psi_rows.size();
  const std::size_t kmax = std::min(m, n);
  std::uint64_t total = 0;
  for (std::size_t k = 1; k <= kmax; ++k) {
    const std::uint64_t c = binomial(n, k);
    total = (c > UINT64_MAX - total) ? UINT64_MAX : total + c;
  }
  if (total > cap) throw EnumerationCapExceeded(total, cap);

  std::vector<std::size_t> rows(psi_rows.begin(), psi_rows.end());
  std::sort(rows.begin(), rows.end());
  for (std::size_t k = 1; k <= kmax; ++k) {
    std::vector<std::size_t> pos(k);
    for (std::size_t i = 0; i < k; ++i) pos[i] = i;
    while (true) {
      std::vector<std::size_t> flips(k);
      for (std::size_t i = 0; i < k; ++i) flips[i] = rows[pos[i]];
      const VerifyOutcome v = verify_cfd(d, flips, learner, x, original_label);
      ++out.retrains;
      if (v.changed) {
        out.exists = true;
        out.flipped = std::move(flips);
        out.new_logit = v.new_logit;
        return out;
      }
      // Next combination in lexicographic order.
      std::size_t i = k;
      while (i > 0 && pos[i - 1] == n - k + (i - 1)) --i;
      if (i == 0) break;
      ++pos[i - 1];
      for (std::size_t j = i; j < k; ++j) pos[j] = pos[j - 1] + 1;
    }
  }
  return out;
}

CfdResult search_small(const data::Dataset& d, const mlp::Learner& learner, const TestCase& tc,
                       const Ranking& ranking, const SearchConfig& cfg, std::size_t t_budget) {
  (void)cfg;
  CfdResult res;
  res.test_index = tc.test_index;
  res.t_budget = t_budget;
  for (std::size_t t = 1; t <= t_budget; ++t) {
    if (t > ranking.order.size()) {
      res.notes.push_back("ranking has " + std::to_string(ranking.order.size()) +
                          " entries, fewer than the budget " + std::to_string(t_budget));
      break;
    }
    if (run_trial(d, learner, tc, {ranking.order[t - 1]}, res)) break;
  }
  return res;
}

CfdResult search_large(const data::Dataset& d, const mlp::Learner& learner, const TestCase& tc,
                       const Ranking& ranking, const SearchConfig& cfg, std::size_t m,
                       std::size_t t_budget) {
  CfdResult res;
  res.test_index = tc.test_index;
  res.t_budget = t_budget;
  const std::size_t n_psi = ranking.order.size();
  const bool random = ranking.mode == ScoreMode::random;

  for (std::size_t k = 1; k <= m; ++k) {
    if (k > n_psi) {
      res.notes.push_back("k = " + std::to_string(k) + " exceeds n_psi = " + std::to_string(n_psi));
      break;
    }
    std::size_t pool_size = n_psi;
    if (!random) {
      pool_size = smallest_a(k) * k;
      if (pool_size > n_psi) {
        res.notes.push_back("sampling pool for k = " + std::to_string(k) + " truncated from " +
                            std::to_string(pool_size) + " to n_psi = " + std::to_string(n_psi));
        pool_size = n_psi;
      }
    }
    const std::span<const std::size_t> pool(ranking.order.data(), pool_size);
    std::set<std::vector<std::size_t>> seen;

    for (std::size_t attempt = 1; attempt <= cfg.attempts_per_k; ++attempt) {
      if (res.trials.size() >= t_budget) return res;
      std::vector<std::size_t> subset;
      if (attempt == 1 && !random) {
        subset.assign(ranking.order.begin(), ranking.order.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(subset.begin(), subset.end());
      } else {
        Rng rng(derive_seed(cfg.seed, {kSubsetStream, tc.test_index, k, attempt}));
        for (std::size_t draw = 0; draw < cfg.max_redraws; ++draw) {
          auto s = draw_subset(pool, k, rng);
          if (!seen.contains(s)) {
            subset = std::move(s);
            break;
          }
        }
        if (subset.empty()) {
          res.notes.push_back("k = " + std::to_string(k) + " attempt " + std::to_string(attempt) +
                              " skipped: no unseen subset after " + std::to_string(cfg.max_redraws) +
                              " draws");
          continue;
        }
      }
      seen.insert(subset);
      if (run_trial(d, learner, tc, std::move(subset), res)) return res;
    }
  }
  return res;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mu;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

CfdResult audit_one(const data::Dataset& d, const mlp::Learner& learner, const mlp::MlpModel& model,
                    const data::FilterConfig& filter, const SearchConfig& cfg, std::size_t m,
                    std::size_t test_index) {
  const auto start = Clock::now();
  CfdResult res;
  res.test_index = test_index;
  try {
    if (test_index >= d.size()) {
      throw std::out_of_range("test index " + std::to_string(test_index) + " out of range");
    }
    if (d.splits[test_index] != data::Split::test) {
      throw std::invalid_argument("row " + std::to_string(test_index) + " is not in the test split");
    }
    const auto x = d.X.row(test_index);
    res.original_logit = mlp::logit(model, x);
    const int label = res.original_logit > 0.0 ? 1 : 0;
    res.phi_passed = data::phi_passes(filter, model, d, x);
    if (!res.phi_passed) {
      res.timings.total_s = seconds_since(start);
      return res;
    }
    const auto psi = data::psi_mask(filter, d, x, model);
    res.n_psi = psi.count;
    if (psi.count == 0) {
      res.notes.push_back("psi mask is empty; search skipped");
      res.timings.total_s = seconds_since(start);
      return res;
    }

    const auto score_start = Clock::now();
    Ranking ranking;
    if (cfg.score_mode == ScoreMode::random) {
      ranking = scoring::random_ranking(psi.keep, derive_seed(cfg.seed, {kRankingStream, test_index}));
      const auto train = d.train_indices();
      for (auto& pos : ranking.order) pos = train[pos];
    } else {
      const auto table = scoring::score_table(model, d, x, psi.keep, {cfg.lambda, cfg.decay});
      ranking = scoring::rank(table, cfg.score_mode, cfg.seed);
    }
    const double scoring_s = seconds_since(score_start);

    const std::size_t budget = iteration_budget(cfg, m, psi.count);
    const TestCase tc{test_index, x, label};
    CfdResult searched = cfg.mode == SearchMode::small
                             ? search_small(d, learner, tc, ranking, cfg, budget)
                             : search_large(d, learner, tc, ranking, cfg, m, budget);
    searched.phi_passed = true;
    searched.n_psi = psi.count;
    searched.original_logit = res.original_logit;
    searched.timings.scoring_s = scoring_s;
    res = std::move(searched);

    if (res.found) {
      const auto verify_start = Clock::now();
      const VerifyOutcome v = verify_cfd(d, res.flipped, learner, x, label);
      res.timings.verify_s = seconds_since(verify_start);
      res.verified = v.changed && v.new_logit == res.new_logit;
      if (!v.changed) {
        res.found = false;
        res.notes.push_back("verification retrain did not reproduce the label change");
      } else if (!res.verified) {
        res.notes.push_back("verification retrain produced a different logit");
      }
    }
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  res.timings.total_s = seconds_since(start);
  return res;
}

}  // namespace

std::vector<CfdResult> audit_cases(const data::Dataset& d, const mlp::Learner& learner,
                                   const mlp::MlpModel& model, const data::FilterConfig& filter,
                                   const SearchConfig& cfg, std::span<const std::size_t> test_indices,
                                   std::size_t jobs) {
  const std::size_t m = resolve_m(cfg, d.train_indices().size());
  if (cfg.mode == SearchMode::small && m != 1) {
    throw data::ConfigError("small mode flips one label per iteration and requires m = 1");
  }
  std::vector<CfdResult> results(test_indices.size());
  parallel_for(test_indices.size(), jobs, [&](std::size_t i) {
    results[i] = audit_one(d, learner, model, filter, cfg, m, test_indices[i]);
  });
  return results;
}

AuditOutcome run_audit(const data::Dataset& d, const mlp::Learner& learner,
                       const data::FilterConfig& filter, const SearchConfig& cfg,
                       std::span<const std::size_t> test_indices, std::size_t jobs) {
  AuditOutcome out;
  out.m = resolve_m(cfg, d.train_indices().size());
  const auto start = Clock::now();
  out.model = learner.fit(d);
  out.train_s = seconds_since(start);
  out.results = audit_cases(d, learner, out.model, filter, cfg, test_indices, jobs);
  return out;
}

}  // namespace cfd::search
