// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "oracles.hpp"

#include "cfd/cli.hpp"
#include "cfd/filters.hpp"
#include "cfd/linalg.hpp"
#include "cfd/mlp.hpp"
#include "cfd/report.hpp"
#include "cfd/scoring.hpp"
#include "cfd/search.hpp"
#include "cfd/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cfd;
using linalg::Matrix;
using linalg::Vector;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report_line(const std::string& id, const Outcome& o, double secs, double limit_s) {
  const bool in_time = secs < limit_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("criterion %s: %s  %s [%.2fs, limit %.0fs]\n", id.c_str(), pass ? "PASS" : "FAIL", o.detail.c_str(),
              secs, limit_s);
  std::fflush(stdout);
}

void timed(const std::string& id, double limit_s, const std::function<Outcome()>& fn) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report_line(id, o, std::chrono::duration<double>(Clock::now() - start).count(), limit_s);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<std::size_t> argsort_desc(const Vector& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] > v[b]; });
  return idx;
}

// 1. Local linear model equals the forward pass.
Outcome linearization() {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t in = 1 + rng.below(8);
    const std::vector<std::size_t> hidden{1 + rng.below(32), 1 + rng.below(32)};
    const auto model = mlp::init_model({in, hidden}, rng.next_u64());
    const Vector x = oracle::random_vector(in, rng, -3.0, 3.0);
    const double l = oracle::forward_logit(model, x);
    const double err = std::abs(linalg::dot(mlp::linearize(model, x), x) - l) / std::max(1.0, std::abs(l));
    worst = std::max(worst, err);
  }
  return {worst < 1e-6, fmt("max relative error %.3g over 100 models (tol 1e-6)", worst)};
}

// 2. z . y equals the ridge prediction; z matches a dense inverse.
Outcome ridge_identity() {
  Rng rng(202);
  double worst_pred = 0.0, worst_z = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.below(64), p = 1 + rng.below(16);
    const double lambda = std::pow(10.0, rng.uniform(-3.0, 0.0));
    const Matrix x = oracle::random_matrix(n, p, rng);
    const Vector y = oracle::random_vector(n, rng);
    const Vector q = oracle::random_vector(p, rng);
    const Vector z = linalg::influence_weights(x, q, lambda);
    const double pred = linalg::dot(linalg::ridge_solve(x, y, lambda), q);
    worst_pred = std::max(worst_pred, std::abs(linalg::dot(z, y) - pred));
    const Vector zo = oracle::influence_by_inverse(x, q, lambda);
    for (std::size_t i = 0; i < n; ++i) worst_z = std::max(worst_z, std::abs(z[i] - zo[i]));
  }
  return {worst_pred <= 1e-8 && worst_z <= 1e-8,
          fmt("max |z.y - theta.x| %.3g", worst_pred) + fmt(", max |z - z_inv| %.3g (tol 1e-8)", worst_z)};
}

// 3. Top-m |z| set is optimal among all sets of size <= m. Each label in a set
// may move one unit in either direction, as in the cited regression result.
Outcome flip_optimality(std::string& note) {
  Rng rng(303);
  std::size_t violations = 0, literal_violations = 0, compared = 0;
  double lambda = 0.05;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 3 + rng.below(10), p = 1 + rng.below(4);
    const Matrix x = oracle::random_matrix(n, p, rng);
    const Vector q = oracle::random_vector(p, rng);
    Vector y(n);
    for (auto& v : y) v = static_cast<double>(rng.below(2));
    const auto order = argsort_desc(scoring::lr_scores(x, q, lambda));
    bool literal_ok = true;
    for (std::size_t m = 1; m <= 2; ++m) {
      const std::vector<std::size_t> top(order.begin(), order.begin() + static_cast<long>(m));
      const double ours = oracle::best_signed_change(x, y, q, lambda, top);
      const double ours_binary = oracle::binary_flip_change(x, y, q, lambda, top);
      for (const auto& s : oracle::small_subsets(n, m)) {
        ++compared;
        if (ours + 1e-9 < oracle::best_signed_change(x, y, q, lambda, s)) ++violations;
        if (ours_binary + 1e-9 < oracle::binary_flip_change(x, y, q, lambda, s)) literal_ok = false;
      }
    }
    if (!literal_ok) ++literal_violations;
  }
  note = "fixed-direction 0/1 flips: top-m set beaten on " + std::to_string(literal_violations) +
         "/20 instances (sign cancellation for m = 2; see the ledger)";
  return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(compared) +
                               " brute-force comparisons over 20 instances (slack 1e-9)"};
}

// 4. Similarity bounds, symmetry, identity, bit-count oracle, decay fixture.
Outcome similarity_props() {
  Rng rng(404);
  std::size_t bad = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::size_t> widths(1 + rng.below(4));
    for (auto& w : widths) w = 1 + rng.below(64);
    mlp::ActivationPattern a, b;
    for (auto w : widths) {
      std::vector<std::uint8_t> la(w), lb(w);
      for (auto& v : la) v = static_cast<std::uint8_t>(rng.below(2));
      for (auto& v : lb) v = static_cast<std::uint8_t>(rng.below(2));
      a.layers.push_back(la);
      b.layers.push_back(lb);
    }
    for (bool decay : {false, true}) {
      const double s = scoring::similarity(a, b, decay);
      if (s < 0.0 || s > 1.0 || s != scoring::similarity(b, a, decay)) ++bad;
      if (scoring::similarity(a, a, decay) != 1.0) ++bad;
      if ((s == 1.0) != (a == b)) ++bad;
    }
    if (scoring::similarity(a, b, false) != oracle::hamming_similarity(a.layers, b.layers)) ++bad;
  }
  const mlp::ActivationPattern p{{{1, 0}, {0, 1}}}, r{{{0, 1}, {0, 1}}};
  const double fixture = scoring::similarity(p, r, true);
  const bool fixture_ok = std::abs(fixture - 2.0 / 3.0) < 1e-15;
  return {bad == 0 && fixture_ok,
          std::to_string(bad) + " property violations on 1000 pairs; decayed fixture " + fmt("%.15f", fixture)};
}

// Per-fixture tallies for criteria 5 and 8.
struct FixtureTally {
  std::uint64_t seed = 0;
  std::size_t cases = 0, oracle_pos = 0, refused = 0;
  std::size_t found[4] = {0, 0, 0, 0};        // combined, random, lr, activation
  std::size_t false_pos[4] = {0, 0, 0, 0};    // found where the oracle found none
  std::vector<std::size_t> found_sets[4];
  std::vector<search::CfdResult> results[4];
  std::uint64_t dataset_hash = 0;
};

constexpr scoring::ScoreMode kModes[4] = {scoring::ScoreMode::combined, scoring::ScoreMode::random,
                                          scoring::ScoreMode::lr_only, scoring::ScoreMode::activation_only};
constexpr const char* kModeNames[4] = {"combined", "random", "lr", "activation"};

std::vector<FixtureTally> run_fixture_family() {
  std::vector<FixtureTally> out;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    synthetic::FixtureConfig fc;
    fc.rows = 50;
    fc.numeric = 4;
    fc.seed = seed;
    fc.split_seed = seed;
    const data::Dataset d = synthetic::make_dataset(fc);
    if (d.train_indices().size() != 30 || d.feature_dim() != 6) throw std::logic_error("fixture shape drifted");
    const mlp::Learner learner{{6, {4, 4}}, {}};
    const mlp::MlpModel model = learner.fit(d);
    const data::FilterConfig filter{data::PhiMode::always, data::PsiMode::same_group_and_prediction, {}};

    FixtureTally tally;
    tally.seed = seed;
    tally.dataset_hash = d.digest();
    const auto tests = d.test_indices();
    std::vector<bool> truth(tests.size(), false);
    for (std::size_t i = 0; i < tests.size(); ++i) {
      const auto x = d.X.row(tests[i]);
      const auto psi = data::psi_mask(filter, d, x, model);
      ++tally.cases;
      try {
        const auto o = search::exhaustive_oracle(d, learner, 1, x, psi.rows(d.train_indices()),
                                                 mlp::predict(model, x));
        truth[i] = o.exists;
        tally.oracle_pos += o.exists;
      } catch (const search::EnumerationCapExceeded&) {
        ++tally.refused;
      }
    }
    for (int mi = 0; mi < 4; ++mi) {
      search::SearchConfig cfg;
      cfg.m = 1;
      cfg.mode = search::SearchMode::small;
      cfg.score_mode = kModes[mi];
      cfg.small_t_round_up = true;
      cfg.seed = 1000 + seed;
      const auto rs = search::audit_cases(d, learner, model, filter, cfg, tests, 1);
      for (std::size_t i = 0; i < rs.size(); ++i) {
        if (!rs[i].error.empty()) throw std::runtime_error("audit error: " + rs[i].error);
        if (rs[i].found) {
          tally.found_sets[mi].push_back(rs[i].test_index);
          if (truth[i]) ++tally.found[mi];
          else ++tally.false_pos[mi];
        }
      }
      tally.results[mi] = rs;
    }
    out.push_back(std::move(tally));
  }
  return out;
}

double recall(std::size_t found, std::size_t pos) { return pos == 0 ? 1.0 : double(found) / double(pos); }

Outcome oracle_recall(const std::vector<FixtureTally>& fam) {
  std::size_t pos = 0, found = 0, fp = 0;
  bool beats_random = true;
  std::string per;
  for (const auto& f : fam) {
    pos += f.oracle_pos;
    found += f.found[0];
    for (int mi = 0; mi < 4; ++mi) fp += f.false_pos[mi];
    if (recall(f.found[0], f.oracle_pos) < recall(f.found[1], f.oracle_pos)) beats_random = false;
    per += " [seed " + std::to_string(f.seed) + ": oracle " + std::to_string(f.oracle_pos) + "/" +
           std::to_string(f.cases) + ", combined " + std::to_string(f.found[0]) + ", random " +
           std::to_string(f.found[1]) + "]";
  }
  const double agg = recall(found, pos);
  const bool refused = std::any_of(fam.begin(), fam.end(), [](const auto& f) { return f.refused > 0; });
  const bool pass = fp == 0 && beats_random && agg >= 0.8 && !refused && pos > 0;
  return {pass, "false positives " + std::to_string(fp) + ", combined recall " + std::to_string(found) + "/" +
                    std::to_string(pos) + fmt(" = %.3f (need >= 0.8)", agg) +
                    (beats_random ? ", >= random on every fixture" : ", BELOW random on some fixture") + per};
}

Outcome ablation_order(const std::vector<FixtureTally>& fam, bool& violated) {
  std::size_t pos = 0, found[4] = {0, 0, 0, 0};
  for (const auto& f : fam) {
    pos += f.oracle_pos;
    for (int mi = 0; mi < 4; ++mi) found[mi] += f.found[mi];
  }
  violated = found[0] < std::max(found[2], found[3]);
  std::string detail = "aggregate recall combined " + std::to_string(found[0]) + ", lr " + std::to_string(found[2]) +
                       ", activation " + std::to_string(found[3]) + " of " + std::to_string(pos);
  if (violated) {
    // Soft criterion: write a diagnostic comparison report instead of failing.
    const fs::path dir = fs::temp_directory_path() / "cfd_acceptance";
    fs::create_directories(dir);
    report::json diag = report::json::array();
    for (const auto& f : fam) {
      std::vector<std::vector<std::size_t>> sets{f.found_sets[0], f.found_sets[2], f.found_sets[3]};
      auto cmp = report::compare_sets(sets, {"combined", "lr", "activation"}).to_json();
      cmp["fixture_seed"] = f.seed;
      cmp["oracle_positive"] = f.oracle_pos;
      diag.push_back(cmp);
    }
    report::write_json(dir / "ablation_diagnostic.json", diag);
    detail += "; combined below a single family, diagnostic written to " + (dir / "ablation_diagnostic.json").string();
  }
  return {true, detail};
}

// 6. Large-mode retrain accounting on a 2000-row train split.
Outcome large_budget() {
  const std::size_t a1 = search::smallest_a(1), a2 = search::smallest_a(2);
  synthetic::FixtureConfig fc;
  fc.rows = 3334;
  fc.seed = 66;
  fc.split_seed = 66;
  const data::Dataset d = synthetic::make_dataset(fc);
  const std::size_t n_train = d.train_indices().size();
  mlp::Learner learner{{d.feature_dim(), {4, 4}}, {}};
  learner.config.max_epochs = 200;
  const auto model = learner.fit(d);
  const data::FilterConfig filter{data::PhiMode::always, data::PsiMode::same_group, {}};
  search::SearchConfig cfg;
  cfg.m = 2;
  cfg.mode = search::SearchMode::large;
  cfg.seed = 6;
  const auto all_tests = d.test_indices();
  const std::vector<std::size_t> tests(all_tests.begin(), all_tests.begin() + 8);
  const auto rs = search::audit_cases(d, learner, model, filter, cfg, tests, 0);
  std::size_t worst = 0, pool_violations = 0;
  for (const auto& r : rs) {
    if (!r.error.empty()) throw std::runtime_error(r.error);
    worst = std::max(worst, r.iterations_used);
    if (r.trials.size() != r.iterations_used || r.t_budget != 20) ++pool_violations;
    for (const auto& t : r.trials)
      if (t.flipped.size() < 1 || t.flipped.size() > 2) ++pool_violations;
  }
  const bool pass = n_train == 2000 && worst <= 20 && a1 == 11 && a2 == 3 && pool_violations == 0;
  return {pass, "n_train " + std::to_string(n_train) + ", max retrains per test " + std::to_string(worst) +
                    " over " + std::to_string(rs.size()) + " tests (cap 20), a(k=1) = " + std::to_string(a1) +
                    ", a(k=2) = " + std::to_string(a2)};
}

// 7. Identical flags give identical results; --jobs does not matter.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "cfd_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  if (cli::run({"synth", "--rows", "120", "--seed", "77", "--out-dir", dir.string()}) != 0)
    return {false, "synth failed"};
  const std::vector<std::string> data{"--data", (dir / "data.csv").string(), "--schema",
                                      (dir / "schema.json").string()};
  std::size_t runs = 0, mismatches = 0;
  for (const auto& variant : std::vector<std::vector<std::string>>{
           {"--mode", "small", "--score", "combined", "--seed", "7", "--phi", "always"},
           {"--mode", "large", "--m", "2", "--score", "random", "--seed", "7", "--phi", "always"}}) {
    std::vector<report::json> views;
    for (const char* jobs : {"1", "1", "4"}) {
      const fs::path out = dir / ("r" + std::to_string(runs++) + ".json");
      std::vector<std::string> args{"audit"};
      args.insert(args.end(), data.begin(), data.end());
      args.insert(args.end(), variant.begin(), variant.end());
      args.insert(args.end(), {"--jobs", jobs, "--out", out.string()});
      if (cli::run(args) != 0) return {false, "audit run failed"};
      views.push_back(report::deterministic_view(report::read_json(out)));
    }
    for (std::size_t i = 1; i < views.size(); ++i) mismatches += views[i] != views[0];
  }
  return {mismatches == 0, std::to_string(runs) + " audit runs (small/combined, large/random; jobs 1, 1, 4), " +
                               std::to_string(mismatches) + " mismatching reports"};
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  timed("1", 5, linearization);
  timed("2", 5, ridge_identity);
  std::string note3;
  timed("3", 30, [&] { return flip_optimality(note3); });
  std::printf("  note: %s\n", note3.c_str());
  timed("4", 2, similarity_props);

  std::vector<FixtureTally> fam;
  const auto fam_start = Clock::now();
  try {
    fam = run_fixture_family();
  } catch (const std::exception& e) {
    std::printf("fixture family failed: %s\n", e.what());
  }
  const double fam_s = std::chrono::duration<double>(Clock::now() - fam_start).count();
  if (fam.empty()) {
    report_line("5", {false, "fixture family did not run"}, fam_s, 600);
  } else {
    report_line("5", oracle_recall(fam), fam_s, 600);
  }

  timed("6", 600, large_budget);
  timed("7", 300, determinism);

  if (!fam.empty()) {
    bool violated = false;
    const Outcome o = ablation_order(fam, violated);
    std::printf("criterion 8: %s  %s\n", violated ? "SOFT-FAIL (diagnostic emitted)" : "PASS", o.detail.c_str());
  } else {
    std::printf("criterion 8: SOFT-FAIL  fixture family did not run\n");
  }

  const char* salary = std::getenv("CFD_SALARY_DATA");
  const char* salary_schema = std::getenv("CFD_SALARY_SCHEMA");
  if (salary && salary_schema) {
    timed("9", 60, [&] {
      const int rc = cli::run({"audit", "--data", salary, "--schema", salary_schema, "--mode", "small", "--out",
                               (fs::temp_directory_path() / "cfd_salary.json").string()});
      return Outcome{rc == 0, "small-mode audit exit code " + std::to_string(rc)};
    });
  } else {
    std::printf("criterion 9: SKIP  set CFD_SALARY_DATA and CFD_SALARY_SCHEMA to run the real-data smoke test\n");
  }

  std::printf("%d gating criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
