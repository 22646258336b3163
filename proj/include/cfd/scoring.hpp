#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cfd/dataset.hpp"
#include "cfd/mlp.hpp"

namespace cfd::scoring {

using linalg::Matrix;
using linalg::Vector;

enum class ScoreMode { combined, lr_only, activation_only, l2, random };

ScoreMode parse_score_mode(const std::string& s);
const char* to_string(ScoreMode m);

// Best-first train-row indices, all psi-included.
struct Ranking {
  std::vector<std::size_t> order;
  ScoreMode mode = ScoreMode::combined;
};

struct ScoreRow {
  std::size_t train_index = 0;
  double z_score = 0.0;    // |z_i|
  double sim_score = 0.0;  // activation similarity in [0, 1]
  double l2_score = 0.0;   // Euclidean distance, lower is closer
  double combined = 0.0;   // NaN unless psi_included
  bool psi_included = false;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
};

// Ridge-surrogate influence magnitudes |z_i|, one per row of x_train.
Vector lr_scores(const Matrix& x_train, std::span<const double> x, double lambda);
// Over d's train rows in ascending index order.
Vector lr_scores(const data::Dataset& d, std::span<const double> x, double lambda);

// Activation-pattern similarity. Undecayed: 1 - normalized Hamming distance.
// Decayed: the last hidden layer has weight 1, each earlier layer half the next.
double similarity(const mlp::ActivationPattern& a, const mlp::ActivationPattern& b, bool decay);

Vector activation_scores(const mlp::MlpModel& model, const data::Dataset& d, std::span<const double> x,
                         bool decay);

Vector l2_scores(const data::Dataset& d, std::span<const double> x);

// Min-max normalize both families over psi rows (constant family -> 0.5),
// average, sort descending with ascending-position tie-break. Returned
// indices are positions into the score vectors.
Ranking combine(std::span<const double> z_scores, std::span<const double> sim_scores,
                std::span<const std::uint8_t> psi);
// Combined values aligned with the inputs; NaN outside psi.
Vector combined_scores(std::span<const double> z_scores, std::span<const double> sim_scores,
                       std::span<const std::uint8_t> psi);

// Single-family ranking over psi rows.
Ranking rank_by(std::span<const double> scores, std::span<const std::uint8_t> psi, bool descending,
                ScoreMode mode);

// Seeded uniform permutation of psi rows.
Ranking random_ranking(std::span<const std::uint8_t> psi, std::uint64_t seed);

struct ScoreInputs {
  double lambda = 1e-2;
  bool decay = true;
};

// All score families for one test input over d's train rows.
ScoreTable score_table(const mlp::MlpModel& model, const data::Dataset& d, std::span<const double> x,
                       std::span<const std::uint8_t> psi, const ScoreInputs& in);

// Ranking from a score table; indices are dataset row indices.
Ranking rank(const ScoreTable& table, ScoreMode mode, std::uint64_t seed);

void write_score_csv(std::ostream& out, const ScoreTable& table);

}  // namespace cfd::scoring
