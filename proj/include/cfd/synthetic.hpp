#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "cfd/dataset.hpp"

namespace cfd::synthetic {

// Tabular binary-classification fixture: `numeric` Gaussian columns x0..,
// a two-valued protected column "group" and a "label" column with tokens
// "pos"/"neg". Labels follow a noisy, mildly nonlinear rule with a group
// offset, so some test inputs sit near the decision boundary.
struct FixtureConfig {
  std::size_t rows = 50;
  std::size_t numeric = 4;
  std::uint64_t seed = 0;
  double noise = 0.5;
  double group_shift = 0.4;
  std::uint64_t split_seed = 0;
};

struct Fixture {
  std::string csv;
  data::Schema schema;
};

Fixture make_fixture(const FixtureConfig& cfg);

// Loads and prepares a fixture in memory.
data::Dataset make_dataset(const FixtureConfig& cfg);

}  // namespace cfd::synthetic
