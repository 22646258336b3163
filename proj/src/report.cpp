#include "cfd/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cfd::report {

namespace {

const char* kRunFormat = "cfd-audit-report/1";
const char* kOracleFormat = "cfd-oracle/1";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

Aggregates compute_aggregates(const std::vector<search::CfdResult>& results) {
  Aggregates a;
  a.tests = results.size();
  for (const auto& r : results) {
    if (r.phi_passed) ++a.phi_passed;
    if (r.found) ++a.cfds_found;
    if (r.found && r.iterations_used == 1) ++a.one_shot;
    a.total_retrains += r.iterations_used;
    if (!r.error.empty()) ++a.errors;
  }
  return a;
}

TimingAggregates compute_timing(const std::vector<search::CfdResult>& results, double train_s) {
  TimingAggregates t;
  t.train_s = train_s;
  std::vector<double> tests, iters, scoring;
  for (const auto& r : results) {
    if (!r.phi_passed) continue;
    tests.push_back(r.timings.total_s);
    scoring.push_back(r.timings.scoring_s);
    iters.insert(iters.end(), r.timings.retrain_s.begin(), r.timings.retrain_s.end());
  }
  t.mean_test_s = mean(tests);
  t.mean_iter_s = mean(iters);
  t.mean_scoring_s = mean(scoring);
  return t;
}

json result_to_json(const search::CfdResult& r) {
  json trials = json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"iteration", t.iteration},
                      {"flipped", t.flipped},
                      {"retrain_seed", t.retrain_seed},
                      {"logit", t.logit},
                      {"diverged", t.diverged}});
  }
  return {{"test_index", r.test_index},
          {"phi_passed", r.phi_passed},
          {"found", r.found},
          {"verified", r.verified},
          {"flipped", r.flipped},
          {"k_used", r.k_used},
          {"iterations_used", r.iterations_used},
          {"t_budget", r.t_budget},
          {"original_logit", r.original_logit},
          {"new_logit", r.new_logit},
          {"n_psi", r.n_psi},
          {"trials", trials},
          {"notes", r.notes},
          {"error", r.error}};
}

search::CfdResult result_from_json(const json& j) {
  search::CfdResult r;
  r.test_index = j.at("test_index").get<std::size_t>();
  r.phi_passed = j.at("phi_passed").get<bool>();
  r.found = j.at("found").get<bool>();
  r.verified = j.value("verified", false);
  r.flipped = j.at("flipped").get<std::vector<std::size_t>>();
  r.k_used = j.at("k_used").get<std::size_t>();
  r.iterations_used = j.at("iterations_used").get<std::size_t>();
  r.t_budget = j.value("t_budget", std::size_t{0});
  r.original_logit = j.at("original_logit").get<double>();
  r.new_logit = j.at("new_logit").get<double>();
  r.n_psi = j.at("n_psi").get<std::size_t>();
  for (const auto& t : j.at("trials")) {
    search::Trial tr;
    tr.iteration = t.at("iteration").get<std::size_t>();
    tr.flipped = t.at("flipped").get<std::vector<std::size_t>>();
    tr.retrain_seed = t.at("retrain_seed").get<std::uint64_t>();
    tr.logit = t.at("logit").get<double>();
    tr.diverged = t.value("diverged", false);
    r.trials.push_back(std::move(tr));
  }
  r.notes = j.value("notes", std::vector<std::string>{});
  r.error = j.value("error", std::string{});
  return r;
}

json RunReport::to_json() const {
  json results_j = json::array();
  json timings_j = json::array();
  for (const auto& r : results) {
    results_j.push_back(result_to_json(r));
    timings_j.push_back({{"test_index", r.test_index},
                         {"scoring_s", r.timings.scoring_s},
                         {"retrain_s", r.timings.retrain_s},
                         {"verify_s", r.timings.verify_s},
                         {"total_s", r.timings.total_s}});
  }
  return {{"format", kRunFormat},
          {"config", config},
          {"results", results_j},
          {"aggregates",
           {{"tests", aggregates.tests},
            {"phi_passed", aggregates.phi_passed},
            {"cfds_found", aggregates.cfds_found},
            {"one_shot", aggregates.one_shot},
            {"total_retrains", aggregates.total_retrains},
            {"errors", aggregates.errors}}},
          {"timings", timings_j},
          {"timing_aggregates",
           {{"train_s", timing.train_s},
            {"mean_test_s", timing.mean_test_s},
            {"mean_iter_s", timing.mean_iter_s},
            {"mean_scoring_s", timing.mean_scoring_s}}}};
}

RunReport RunReport::from_json(const json& j) {
  try {
    if (j.value("format", std::string{}) != kRunFormat) {
      throw std::runtime_error("not an audit report (format tag missing or wrong)");
    }
    RunReport rep;
    rep.config = j.at("config");
    for (const auto& r : j.at("results")) rep.results.push_back(result_from_json(r));
    if (j.contains("timings")) {
      for (std::size_t i = 0; i < rep.results.size() && i < j["timings"].size(); ++i) {
        const auto& t = j["timings"][i];
        auto& tm = rep.results[i].timings;
        tm.scoring_s = t.value("scoring_s", 0.0);
        tm.retrain_s = t.value("retrain_s", std::vector<double>{});
        tm.verify_s = t.value("verify_s", 0.0);
        tm.total_s = t.value("total_s", 0.0);
      }
    }
    const auto& a = j.at("aggregates");
    rep.aggregates.tests = a.at("tests").get<std::size_t>();
    rep.aggregates.phi_passed = a.at("phi_passed").get<std::size_t>();
    rep.aggregates.cfds_found = a.at("cfds_found").get<std::size_t>();
    rep.aggregates.one_shot = a.at("one_shot").get<std::size_t>();
    rep.aggregates.total_retrains = a.at("total_retrains").get<std::size_t>();
    rep.aggregates.errors = a.value("errors", std::size_t{0});
    if (!(rep.aggregates == compute_aggregates(rep.results))) {
      throw std::runtime_error("report aggregates do not match the per-test records");
    }
    if (j.contains("timing_aggregates")) {
      const auto& t = j["timing_aggregates"];
      rep.timing.train_s = t.value("train_s", 0.0);
      rep.timing.mean_test_s = t.value("mean_test_s", 0.0);
      rep.timing.mean_iter_s = t.value("mean_iter_s", 0.0);
      rep.timing.mean_scoring_s = t.value("mean_scoring_s", 0.0);
    }
    return rep;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed audit report: ") + e.what());
  }
}

std::uint64_t RunReport::dataset_hash() const {
  return std::stoull(config.at("dataset_hash").get<std::string>(), nullptr, 16);
}

std::vector<std::size_t> RunReport::test_indices() const {
  std::vector<std::size_t> out;
  for (const auto& r : results) out.push_back(r.test_index);
  return out;
}

std::vector<std::size_t> RunReport::found_indices() const {
  std::vector<std::size_t> out;
  for (const auto& r : results) {
    if (r.found) out.push_back(r.test_index);
  }
  std::sort(out.begin(), out.end());
  return out;
}

json deterministic_view(const json& report) {
  json j = report;
  j.erase("timings");
  j.erase("timing_aggregates");
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_results_csv(std::ostream& out, const std::vector<search::CfdResult>& results) {
  out << "test_index,phi_passed,found,iterations_used,k_used,original_logit,new_logit,n_psi\n";
  for (const auto& r : results) {
    out << r.test_index << ',' << int(r.phi_passed) << ',' << int(r.found) << ',' << r.iterations_used
        << ',' << r.k_used << ',' << num(r.original_logit) << ',' << num(r.new_logit) << ',' << r.n_psi
        << '\n';
  }
}

// ---------------------------------------------------------------- oracle

json OracleReport::to_json() const {
  json cases_j = json::array();
  for (const auto& c : cases) {
    cases_j.push_back({{"test_index", c.test_index},
                       {"phi_passed", c.phi_passed},
                       {"n_psi", c.n_psi},
                       {"exists", c.exists},
                       {"flipped", c.flipped},
                       {"retrains", c.retrains},
                       {"refused", c.refused},
                       {"candidates", c.candidates},
                       {"original_logit", c.original_logit},
                       {"error", c.error}});
  }
  return {{"format", kOracleFormat}, {"config", config}, {"cases", cases_j}};
}

OracleReport OracleReport::from_json(const json& j) {
  try {
    if (j.value("format", std::string{}) != kOracleFormat) {
      throw std::runtime_error("not an oracle file (format tag missing or wrong)");
    }
    OracleReport rep;
    rep.config = j.at("config");
    for (const auto& c : j.at("cases")) {
      OracleCase oc;
      oc.test_index = c.at("test_index").get<std::size_t>();
      oc.phi_passed = c.at("phi_passed").get<bool>();
      oc.n_psi = c.at("n_psi").get<std::size_t>();
      oc.exists = c.at("exists").get<bool>();
      oc.flipped = c.at("flipped").get<std::vector<std::size_t>>();
      oc.retrains = c.at("retrains").get<std::size_t>();
      oc.refused = c.value("refused", false);
      oc.candidates = c.value("candidates", std::uint64_t{0});
      oc.original_logit = c.value("original_logit", 0.0);
      oc.error = c.value("error", std::string{});
      rep.cases.push_back(std::move(oc));
    }
    return rep;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed oracle file: ") + e.what());
  }
}

// ---------------------------------------------------------------- comparison

std::optional<Quartiles> quartiles(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return Quartiles{values.front(), at(0.25), at(0.5), at(0.75), values.back()};
}

std::size_t ComparisonReport::region(std::uint32_t mask) const {
  for (const auto& r : regions) {
    if (r.mask == mask) return r.count;
  }
  return 0;
}

std::size_t ComparisonReport::intersection(std::uint32_t mask) const {
  std::size_t n = 0;
  for (const auto& r : regions) {
    if ((r.mask & mask) == mask) n += r.count;
  }
  return n;
}

std::string ComparisonReport::region_name(std::uint32_t mask) const {
  std::string s;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (mask & (1u << i)) {
      if (!s.empty()) s += "&";
      s += methods[i].label;
    }
  }
  return s;
}

json ComparisonReport::to_json() const {
  json methods_j = json::array();
  for (const auto& m : methods) {
    json q = nullptr;
    if (m.logit_quartiles) {
      const auto& v = *m.logit_quartiles;
      q = {{"min", v.min}, {"q1", v.q1}, {"median", v.median}, {"q3", v.q3}, {"max", v.max}};
    }
    methods_j.push_back({{"label", m.label}, {"found", m.found}, {"count", m.found.size()},
                         {"logit_quartiles", q}});
  }
  json regions_j = json::array();
  for (const auto& r : regions) {
    std::vector<std::string> members;
    for (std::size_t i = 0; i < methods.size(); ++i) {
      if (r.mask & (1u << i)) members.push_back(methods[i].label);
    }
    regions_j.push_back({{"members", members}, {"only", region_name(r.mask)}, {"count", r.count}});
  }
  json pairwise = json::array();
  for (std::size_t a = 0; a < methods.size(); ++a) {
    for (std::size_t b = a + 1; b < methods.size(); ++b) {
      pairwise.push_back({{"a", methods[a].label},
                          {"b", methods[b].label},
                          {"intersection", intersection((1u << a) | (1u << b))}});
    }
  }
  json j = {{"format", "cfd-comparison/1"},
            {"methods", methods_j},
            {"regions", regions_j},
            {"pairwise", pairwise},
            {"union", union_size}};
  if (methods.size() == 3) j["three_way"] = intersection(7u);
  return j;
}

ComparisonReport compare_sets(const std::vector<std::vector<std::size_t>>& found_sets,
                              const std::vector<std::string>& labels) {
  if (found_sets.empty() || found_sets.size() > 16) {
    throw std::invalid_argument("compare needs between 1 and 16 methods");
  }
  if (labels.size() != found_sets.size()) throw std::invalid_argument("one label per method is required");
  ComparisonReport rep;
  std::map<std::size_t, std::uint32_t> membership;
  for (std::size_t i = 0; i < found_sets.size(); ++i) {
    MethodSummary m;
    m.label = labels[i];
    std::set<std::size_t> uniq(found_sets[i].begin(), found_sets[i].end());
    m.found.assign(uniq.begin(), uniq.end());
    for (auto t : m.found) membership[t] |= 1u << i;
    rep.methods.push_back(std::move(m));
  }
  rep.union_size = membership.size();
  const std::uint32_t full = (1u << found_sets.size()) - 1;
  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    Region r{mask, 0};
    for (const auto& [t, m] : membership) {
      if (m == mask) ++r.count;
    }
    rep.regions.push_back(r);
  }
  return rep;
}

ComparisonReport compare(const std::vector<RunReport>& reports, const std::vector<std::string>& labels) {
  if (reports.empty()) throw std::invalid_argument("compare needs at least one report");
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].dataset_hash() != reports[0].dataset_hash()) {
      throw std::runtime_error("reports were produced from different datasets (hash mismatch)");
    }
    auto a = reports[0].test_indices();
    auto b = reports[i].test_indices();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) throw std::runtime_error("reports cover different test inputs");
  }
  std::vector<std::vector<std::size_t>> sets;
  for (const auto& r : reports) sets.push_back(r.found_indices());
  ComparisonReport rep = compare_sets(sets, labels);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    std::vector<double> logits;
    for (const auto& r : reports[i].results) {
      if (r.found) logits.push_back(r.original_logit);
    }
    rep.methods[i].logit_quartiles = quartiles(std::move(logits));
  }
  return rep;
}

void write_comparison_csv(std::ostream& out, const std::vector<RunReport>& reports,
                          const std::vector<std::string>& labels) {
  out << "method,test_index,original_logit,iterations_used,k_used\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (const auto& r : reports[i].results) {
      if (!r.found) continue;
      out << labels.at(i) << ',' << r.test_index << ',' << num(r.original_logit) << ','
          << r.iterations_used << ',' << r.k_used << '\n';
    }
  }
}

}  // namespace cfd::report
