#include "cfd/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "cfd/rng.hpp"

namespace cfd::synthetic {

namespace {

double gaussian(Rng& rng) {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u = 1.0 - rng.uniform();
  const double v = rng.uniform();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

}  // namespace

Fixture make_fixture(const FixtureConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<double> w(cfg.numeric);
  for (auto& v : w) v = gaussian(rng);

  Fixture f;
  for (std::size_t j = 0; j < cfg.numeric; ++j) {
    f.schema.columns.push_back({"x" + std::to_string(j), data::ColumnKind::numerical});
  }
  f.schema.columns.push_back({"group", data::ColumnKind::categorical});
  f.schema.columns.push_back({"label", data::ColumnKind::label});
  f.schema.protected_attribute = "group";
  f.schema.positive_label = "pos";
  f.schema.negative_label = "neg";
  f.schema.split_seed = cfg.split_seed;

  for (std::size_t j = 0; j < cfg.numeric; ++j) f.csv += "x" + std::to_string(j) + ",";
  f.csv += "group,label\n";
  char buf[32];
  for (std::size_t r = 0; r < cfg.rows; ++r) {
    std::vector<double> x(cfg.numeric);
    for (auto& v : x) v = gaussian(rng);
    const bool group_a = rng.uniform() < 0.5;
    double score = (group_a ? cfg.group_shift : -cfg.group_shift) + cfg.noise * gaussian(rng);
    for (std::size_t j = 0; j < cfg.numeric; ++j) score += w[j] * x[j];
    if (cfg.numeric >= 2) score += 0.5 * x[0] * x[1];
    for (double v : x) {
      std::snprintf(buf, sizeof buf, "%.6f,", v);
      f.csv += buf;
    }
    f.csv += group_a ? "A," : "B,";
    f.csv += score > 0.0 ? "pos\n" : "neg\n";
  }
  return f;
}

data::Dataset make_dataset(const FixtureConfig& cfg) {
  const Fixture f = make_fixture(cfg);
  return data::prepare(data::parse_csv(f.csv, f.schema), f.schema);
}

}  // namespace cfd::synthetic
