#include "cfd/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "cfd/synthetic.hpp"

namespace cfd::cli {

using report::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_color_mt("cfd_audit");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("CFD_AUDIT_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
    return l;
  }();
  return log;
}

std::size_t resolve_jobs(std::size_t jobs) {
  if (jobs > 0) return jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

data::FilterConfig make_filter(const AuditOptions& o) {
  data::FilterConfig f;
  f.phi_mode = data::parse_phi_mode(o.phi);
  f.psi_mode = data::parse_psi_mode(o.psi);
  f.phi_group = o.phi_group;
  if (f.phi_mode == data::PhiMode::group_membership && !f.phi_group) {
    throw data::ConfigError("--phi group_membership needs --phi-group");
  }
  return f;
}

search::SearchConfig make_search(const AuditOptions& o) {
  search::SearchConfig c;
  c.m = o.m;
  c.t_budget = o.t;
  c.mode = search::parse_search_mode(o.mode);
  c.score_mode = scoring::parse_score_mode(o.score);
  c.lambda = o.lambda;
  c.decay = o.decay;
  c.seed = o.seed;
  if (!(c.lambda >= 0.0)) throw data::ConfigError("--lambda must be nonnegative");
  return c;
}

json config_echo(const AuditOptions& o, const LoadedData& ld, const mlp::Learner& learner,
                 std::size_t m, const std::vector<std::size_t>& tests) {
  return {{"schema_hash", hex64(ld.schema.digest())},
          {"dataset_hash", hex64(ld.dataset.digest())},
          {"rows", ld.dataset.size()},
          {"dropped_rows", ld.dropped_rows},
          {"feature_dim", ld.dataset.feature_dim()},
          {"seed", o.seed},
          {"split_seed", ld.schema.split_seed},
          {"m", m},
          {"t", o.t ? json(*o.t) : json(nullptr)},
          {"mode", o.mode},
          {"score_mode", scoring::to_string(scoring::parse_score_mode(o.score))},
          {"lambda", o.lambda},
          {"decay", o.decay},
          {"phi", o.phi},
          {"psi", o.psi},
          {"phi_group", o.phi_group ? json(*o.phi_group) : json(nullptr)},
          {"hidden", learner.arch.hidden},
          {"epochs", learner.config.max_epochs},
          {"learning_rate", learner.config.learning_rate},
          {"patience", learner.config.patience},
          {"tests", tests}};
}

void emit_json(const std::optional<std::filesystem::path>& out, const json& j) {
  if (out) {
    report::write_json(*out, j);
  } else {
    std::cout << j.dump(2) << '\n';
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const data::ConfigError& e) {
    logger()->error("configuration error: {}", e.what());
    return kConfigError;
  } catch (const data::DatasetError& e) {
    logger()->error("dataset error: {}", e.what());
    return kDatasetError;
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return kFailure;
  }
}

}  // namespace

std::size_t default_hidden_width(std::size_t input_dim) {
  if (input_dim <= 8) return 4;
  if (input_dim <= 16) return 16;
  return 32;
}

mlp::Learner make_learner(const ModelOptions& opts, const data::Dataset& d, std::uint64_t seed) {
  mlp::Learner l;
  l.arch.input_dim = d.feature_dim();
  l.arch.hidden = opts.hidden;
  if (l.arch.hidden.empty()) {
    const std::size_t w = default_hidden_width(d.feature_dim());
    l.arch.hidden = {w, w};
  }
  l.config.learning_rate = opts.learning_rate;
  l.config.patience = opts.patience;
  l.config.max_epochs = opts.epochs > 0 ? opts.epochs : (d.train_indices().size() < 1000 ? 100 : 200);
  l.config.seed = seed;
  try {
    l.arch.validate();
    l.config.validate();
  } catch (const std::invalid_argument& e) {
    throw data::ConfigError(e.what());
  }
  return l;
}

std::vector<std::size_t> parse_tests(const std::string& spec, const data::Dataset& d) {
  if (spec == "all") return d.test_indices();
  std::vector<std::size_t> out;
  for (const auto& item : split_list(spec)) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size()) throw data::ConfigError("--tests entry '" + item + "' is not an index");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

LoadedData load_data(const DataOptions& opts) {
  if (opts.schema.empty()) throw data::ConfigError("--schema is required");
  if (opts.data.empty()) throw data::ConfigError("--data is required");
  LoadedData ld;
  ld.schema = data::Schema::load(opts.schema);
  const auto raw = data::load_csv(opts.data, ld.schema);
  ld.dropped_rows = raw.dropped_rows;
  ld.dataset = data::prepare(raw, ld.schema);
  logger()->info("loaded {} rows ({} dropped), {} features", raw.size(), raw.dropped_rows,
                 ld.dataset.feature_dim());
  for (const auto& w : ld.dataset.warnings) logger()->warn("{}", w);
  return ld;
}

report::RunReport audit(const AuditOptions& opts) {
  const auto ld = load_data(opts.input);
  const auto filter = make_filter(opts);
  const auto cfg = make_search(opts);
  const auto learner = make_learner(opts.model, ld.dataset, opts.seed);
  const auto tests = parse_tests(opts.tests, ld.dataset);
  const auto outcome = search::run_audit(ld.dataset, learner, filter, cfg, tests, resolve_jobs(opts.jobs));

  report::RunReport rep;
  rep.config = config_echo(opts, ld, learner, outcome.m, tests);
  rep.results = outcome.results;
  rep.aggregates = report::compute_aggregates(rep.results);
  rep.timing = report::compute_timing(rep.results, outcome.train_s);
  return rep;
}

report::OracleReport oracle(const AuditOptions& opts) {
  const auto ld = load_data(opts.input);
  const auto filter = make_filter(opts);
  const auto learner = make_learner(opts.model, ld.dataset, opts.seed);
  const auto tests = parse_tests(opts.tests, ld.dataset);
  const std::size_t m = opts.m == 0 ? search::default_m(ld.dataset.train_indices().size()) : opts.m;
  const auto& d = ld.dataset;
  const auto model = learner.fit(d);
  const auto train = d.train_indices();

  report::OracleReport rep;
  rep.config = config_echo(opts, ld, learner, m, tests);
  rep.config["cap"] = opts.cap;
  rep.cases.resize(tests.size());
  search::parallel_for(tests.size(), resolve_jobs(opts.jobs), [&](std::size_t i) {
    auto& c = rep.cases[i];
    c.test_index = tests[i];
    try {
      if (c.test_index >= d.size() || d.splits[c.test_index] != data::Split::test) {
        throw std::invalid_argument("row " + std::to_string(c.test_index) + " is not a test row");
      }
      const auto x = d.X.row(c.test_index);
      c.original_logit = mlp::logit(model, x);
      c.phi_passed = data::phi_passes(filter, model, d, x);
      if (!c.phi_passed) return;
      const auto psi = data::psi_mask(filter, d, x, model);
      c.n_psi = psi.count;
      const auto rows = psi.rows(train);
      const auto res = search::exhaustive_oracle(d, learner, m, x, rows, c.original_logit > 0.0 ? 1 : 0,
                                                 opts.cap);
      c.exists = res.exists;
      c.flipped = res.flipped;
      c.retrains = res.retrains;
    } catch (const search::EnumerationCapExceeded& e) {
      c.refused = true;
      c.candidates = e.count;
      c.error = e.what();
    } catch (const std::exception& e) {
      c.error = e.what();
    }
  });
  for (const auto& c : rep.cases) {
    if (c.refused) logger()->error("test {}: refused, {}", c.test_index, c.error);
  }
  return rep;
}

report::ComparisonReport compare(const CompareOptions& opts) {
  if (opts.reports.empty()) throw data::ConfigError("compare needs at least one report");
  std::vector<report::RunReport> reps;
  for (const auto& p : opts.reports) reps.push_back(report::RunReport::from_json(report::read_json(p)));
  std::vector<std::string> labels = opts.labels;
  if (labels.empty()) {
    for (const auto& p : opts.reports) labels.push_back(p.stem().string());
  }
  if (labels.size() != reps.size()) throw data::ConfigError("--labels needs one label per report");
  auto cmp = report::compare(reps, labels);
  if (opts.csv) {
    std::ofstream out(*opts.csv);
    if (!out) throw std::runtime_error("cannot write " + opts.csv->string());
    report::write_comparison_csv(out, reps, labels);
  }
  return cmp;
}

int cmd_prepare(const DataOptions& opts, const std::optional<std::filesystem::path>& out) {
  return guarded([&] {
    const auto ld = load_data(opts);
    const auto& d = ld.dataset;
    if (out) {
      std::ofstream f(*out);
      if (!f) throw std::runtime_error("cannot write " + out->string());
      f << "row,split";
      for (const auto& g : d.feature_map) {
        if (g.kind == data::ColumnKind::numerical) {
          f << ',' << g.column;
        } else {
          for (const auto& c : g.categories) f << ',' << g.column << '=' << c;
        }
      }
      if (ld.schema.bias_feature) f << ",bias";
      f << ",y\n";
      char buf[40];
      for (std::size_t r = 0; r < d.size(); ++r) {
        f << r << ',' << data::to_string(d.splits[r]);
        for (double v : d.X.row(r)) {
          std::snprintf(buf, sizeof buf, "%.17g", v);
          f << ',' << buf;
        }
        f << ',' << static_cast<int>(d.y[r]) << '\n';
      }
    }
    const json summary = {{"rows", d.size()},
                          {"dropped_rows", ld.dropped_rows},
                          {"train", d.train_indices().size()},
                          {"val", d.val_indices().size()},
                          {"test", d.test_indices().size()},
                          {"feature_dim", d.feature_dim()},
                          {"dataset_hash", hex64(d.digest())},
                          {"schema_hash", hex64(ld.schema.digest())},
                          {"warnings", d.warnings}};
    std::cout << summary.dump(2) << '\n';
    return kOk;
  });
}

int cmd_audit(const AuditOptions& opts) {
  return guarded([&] {
    const auto rep = audit(opts);
    emit_json(opts.out, rep.to_json());
    if (opts.out) {
      auto csv_path = *opts.out;
      csv_path.replace_extension(".csv");
      std::ofstream csv(csv_path);
      if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
      report::write_results_csv(csv, rep.results);
    }
    const auto& a = rep.aggregates;
    logger()->info("{} tests, {} passed phi, {} CFDs found ({} one-shot), {} retrains", a.tests, a.phi_passed,
                   a.cfds_found, a.one_shot, a.total_retrains);
    for (const auto& r : rep.results) {
      if (!r.error.empty()) logger()->warn("test {}: {}", r.test_index, r.error);
    }
    return kOk;
  });
}

int cmd_oracle(const AuditOptions& opts) {
  return guarded([&] {
    const auto rep = oracle(opts);
    emit_json(opts.out, rep.to_json());
    std::size_t exists = 0;
    for (const auto& c : rep.cases) exists += c.exists ? 1 : 0;
    logger()->info("{} tests, {} with a CFD within the budget", rep.cases.size(), exists);
    return kOk;
  });
}

int cmd_scores(const AuditOptions& opts) {
  return guarded([&] {
    const auto ld = load_data(opts.input);
    const auto& d = ld.dataset;
    if (opts.test >= d.size()) {
      throw data::ConfigError("test index " + std::to_string(opts.test) + " out of range (" +
                              std::to_string(d.size()) + " rows)");
    }
    const auto filter = make_filter(opts);
    const auto learner = make_learner(opts.model, d, opts.seed);
    const auto model = learner.fit(d);
    const auto x = d.X.row(opts.test);
    const auto psi = data::psi_mask(filter, d, x, model);
    const auto table = scoring::score_table(model, d, x, psi.keep, {opts.lambda, opts.decay});
    if (opts.out) {
      std::ofstream f(*opts.out);
      if (!f) throw std::runtime_error("cannot write " + opts.out->string());
      scoring::write_score_csv(f, table);
    } else {
      scoring::write_score_csv(std::cout, table);
    }
    return kOk;
  });
}

int cmd_compare(const CompareOptions& opts) {
  return guarded([&] {
    const auto cmp = compare(opts);
    emit_json(opts.out, cmp.to_json());
    return kOk;
  });
}

int cmd_synth(const SynthOptions& opts) {
  return guarded([&] {
    synthetic::FixtureConfig cfg;
    cfg.rows = opts.rows;
    cfg.numeric = opts.numeric;
    cfg.seed = opts.seed;
    cfg.split_seed = opts.split_seed;
    const auto fx = synthetic::make_fixture(cfg);
    std::filesystem::create_directories(opts.out_dir);
    std::ofstream(opts.out_dir / "data.csv") << fx.csv;
    std::ofstream(opts.out_dir / "schema.json") << fx.schema.to_json_text() << '\n';
    logger()->info("wrote {} and {}", (opts.out_dir / "data.csv").string(),
                   (opts.out_dir / "schema.json").string());
    return kOk;
  });
}

namespace {

void add_data_flags(CLI::App* app, DataOptions& o) {
  app->add_option("--data", o.data, "Dataset CSV")->required();
  app->add_option("--schema", o.schema, "Schema JSON")->required();
}

void add_model_flags(CLI::App* app, ModelOptions& o) {
  app->add_option("--hidden", o.hidden, "Hidden layer widths, e.g. 16,16")->delimiter(',');
  app->add_option("--epochs", o.epochs, "Maximum epochs (default 100, or 200 from 1000 train rows)");
  app->add_option("--lr", o.learning_rate, "Adam learning rate");
  app->add_option("--patience", o.patience, "Early-stopping patience");
}

void add_audit_flags(CLI::App* app, AuditOptions& o) {
  add_data_flags(app, o.input);
  add_model_flags(app, o.model);
  app->add_option("--m", o.m, "Flip budget (default ceil(0.001 * n_train))");
  app->add_option("--lambda", o.lambda, "Ridge regularization");
  app->add_option("--seed", o.seed, "Master seed");
  app->add_option("--jobs", o.jobs, "Worker threads (default: all cores)");
  app->add_option("--tests", o.tests, "Test row indices (comma list) or 'all'");
  app->add_option("--phi", o.phi, "inference_fair | group_membership | always");
  app->add_option("--phi-group", o.phi_group, "Protected group token for group_membership");
  app->add_option("--psi", o.psi, "same_group_and_prediction | same_group | all");
  app->add_flag("!--no-decay", o.decay, "Undecayed activation similarity");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Counterfactual-dataset search for label-bias audits"};
  app.require_subcommand(1);

  DataOptions prep;
  std::optional<std::filesystem::path> prep_out;
  auto* prepare = app.add_subcommand("prepare", "Load, split and preprocess a dataset");
  add_data_flags(prepare, prep);
  prepare->add_option("--out", prep_out, "Write the embedded matrix as CSV");

  AuditOptions aud;
  auto* audit_cmd = app.add_subcommand("audit", "Search for counterfactual datasets");
  add_audit_flags(audit_cmd, aud);
  audit_cmd->add_option("--mode", aud.mode, "small | large");
  audit_cmd->add_option("--score", aud.score, "combined | lr | activation | l2 | random");
  audit_cmd->add_option("--t", aud.t, "Retrain budget per test input");
  audit_cmd->add_option("--out", aud.out, "Report JSON (a .csv companion is written next to it)");

  AuditOptions orc;
  orc.m = 1;
  auto* oracle_cmd = app.add_subcommand("oracle", "Exhaustive ground truth for small instances");
  add_audit_flags(oracle_cmd, orc);
  oracle_cmd->add_option("--cap", orc.cap, "Maximum retrains per test input");
  oracle_cmd->add_option("--out", orc.out, "Golden JSON");

  AuditOptions sc;
  auto* scores_cmd = app.add_subcommand("scores", "Score table for one test row");
  add_audit_flags(scores_cmd, sc);
  scores_cmd->add_option("--test", sc.test, "Test row index")->required();
  scores_cmd->add_option("--out", sc.out, "CSV path (default stdout)");

  CompareOptions cmp;
  auto* compare_cmd = app.add_subcommand("compare", "Overlap and logit quartiles across reports");
  compare_cmd->add_option("reports", cmp.reports, "Audit report JSON files")->required();
  compare_cmd->add_option("--labels", cmp.labels, "Method labels")->delimiter(',');
  compare_cmd->add_option("--out", cmp.out, "Comparison JSON (default stdout)");
  compare_cmd->add_option("--csv", cmp.csv, "Plot data CSV");

  SynthOptions syn;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic fixture dataset and schema");
  synth_cmd->add_option("--rows", syn.rows, "Row count");
  synth_cmd->add_option("--numeric", syn.numeric, "Numerical feature count");
  synth_cmd->add_option("--seed", syn.seed, "Generator seed");
  synth_cmd->add_option("--split-seed", syn.split_seed, "Split seed stored in the schema");
  synth_cmd->add_option("--out-dir", syn.out_dir, "Output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  if (prepare->parsed()) return cmd_prepare(prep, prep_out);
  if (audit_cmd->parsed()) return cmd_audit(aud);
  if (oracle_cmd->parsed()) return cmd_oracle(orc);
  if (scores_cmd->parsed()) return cmd_scores(sc);
  if (compare_cmd->parsed()) return cmd_compare(cmp);
  if (synth_cmd->parsed()) return cmd_synth(syn);
  return kConfigError;
}

}  // namespace cfd::cli
