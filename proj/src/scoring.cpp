#include "cfd/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "cfd/rng.hpp"

namespace cfd::scoring {

ScoreMode parse_score_mode(const std::string& s) {
  if (s == "combined") return ScoreMode::combined;
  if (s == "lr" || s == "lr_only") return ScoreMode::lr_only;
  if (s == "activation" || s == "activation_only") return ScoreMode::activation_only;
  if (s == "l2") return ScoreMode::l2;
  if (s == "random") return ScoreMode::random;
  throw data::ConfigError("unknown score mode '" + s + "'");
}

const char* to_string(ScoreMode m) {
  switch (m) {
    case ScoreMode::combined: return "combined";
    case ScoreMode::lr_only: return "lr";
    case ScoreMode::activation_only: return "activation";
    case ScoreMode::l2: return "l2";
    case ScoreMode::random: return "random";
  }
  return "?";
}

Vector lr_scores(const Matrix& x_train, std::span<const double> x, double lambda) {
  Vector z = linalg::influence_weights(x_train, x, lambda);
  for (double& v : z) v = std::abs(v);
  return z;
}

Vector lr_scores(const data::Dataset& d, std::span<const double> x, double lambda) {
  const auto train = d.train_indices();
  if (train.empty()) throw data::DatasetError("train split is empty");
  return lr_scores(d.X.select_rows(train), x, lambda);
}

double similarity(const mlp::ActivationPattern& a, const mlp::ActivationPattern& b, bool decay) {
  if (a.layers.size() != b.layers.size()) throw linalg::ShapeError("activation patterns differ in depth");
  const std::size_t depth = a.layers.size();
  if (!decay) {
    std::size_t mismatched = 0, d = 0;
    for (std::size_t l = 0; l < depth; ++l) {
      if (a.layers[l].size() != b.layers[l].size()) {
        throw linalg::ShapeError("activation patterns differ in layer width");
      }
      d += a.layers[l].size();
      for (std::size_t k = 0; k < a.layers[l].size(); ++k) mismatched += a.layers[l][k] != b.layers[l][k];
    }
    return d > 0 ? 1.0 - static_cast<double>(mismatched) / static_cast<double>(d) : 1.0;
  }
  double matched = 0.0;
  double total = 0.0;
  for (std::size_t l = 0; l < depth; ++l) {
    if (a.layers[l].size() != b.layers[l].size()) {
      throw linalg::ShapeError("activation patterns differ in layer width");
    }
    const double w = std::ldexp(1.0, -static_cast<int>(depth - 1 - l));
    for (std::size_t k = 0; k < a.layers[l].size(); ++k) {
      total += w;
      if (a.layers[l][k] == b.layers[l][k]) matched += w;
    }
  }
  return total > 0.0 ? matched / total : 1.0;
}

Vector activation_scores(const mlp::MlpModel& model, const data::Dataset& d, std::span<const double> x,
                         bool decay) {
  const auto ref = mlp::activation_pattern(model, x);
  const auto train = d.train_indices();
  Vector out(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    out[i] = similarity(ref, mlp::activation_pattern(model, d.X.row(train[i])), decay);
  }
  return out;
}

Vector l2_scores(const data::Dataset& d, std::span<const double> x) {
  if (x.size() != d.feature_dim()) throw linalg::ShapeError("input does not match feature dimension");
  const auto train = d.train_indices();
  Vector out(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto r = d.X.row(train[i]);
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += (r[j] - x[j]) * (r[j] - x[j]);
    out[i] = std::sqrt(s);
  }
  return out;
}

namespace {

void check_aligned(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw linalg::ShapeError("score vectors and psi mask are not aligned");
}

Vector minmax_over(std::span<const double> v, std::span<const std::uint8_t> psi) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!psi[i]) continue;
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  Vector out(v.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!psi[i]) continue;
    out[i] = hi > lo ? (v[i] - lo) / (hi - lo) : 0.5;
  }
  return out;
}

Ranking sorted_by(std::span<const double> key, std::span<const std::uint8_t> psi, bool descending,
                  ScoreMode mode) {
  Ranking r;
  r.mode = mode;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (psi[i]) r.order.push_back(i);
  }
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? key[a] > key[b] : key[a] < key[b];
  });
  return r;
}

}  // namespace

Vector combined_scores(std::span<const double> z_scores, std::span<const double> sim_scores,
                       std::span<const std::uint8_t> psi) {
  check_aligned(z_scores.size(), sim_scores.size(), psi.size());
  const Vector zn = minmax_over(z_scores, psi);
  const Vector sn = minmax_over(sim_scores, psi);
  Vector out(z_scores.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (psi[i]) out[i] = 0.5 * (zn[i] + sn[i]);
  }
  return out;
}

Ranking combine(std::span<const double> z_scores, std::span<const double> sim_scores,
                std::span<const std::uint8_t> psi) {
  const Vector c = combined_scores(z_scores, sim_scores, psi);
  return sorted_by(c, psi, true, ScoreMode::combined);
}

Ranking rank_by(std::span<const double> scores, std::span<const std::uint8_t> psi, bool descending,
                ScoreMode mode) {
  if (scores.size() != psi.size()) throw linalg::ShapeError("scores and psi mask are not aligned");
  return sorted_by(scores, psi, descending, mode);
}

Ranking random_ranking(std::span<const std::uint8_t> psi, std::uint64_t seed) {
  Ranking r;
  r.mode = ScoreMode::random;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if (psi[i]) r.order.push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(r.order);
  return r;
}

ScoreTable score_table(const mlp::MlpModel& model, const data::Dataset& d, std::span<const double> x,
                       std::span<const std::uint8_t> psi, const ScoreInputs& in) {
  const auto train = d.train_indices();
  if (psi.size() != train.size()) throw linalg::ShapeError("psi mask does not match train split");
  const Vector z = lr_scores(d, x, in.lambda);
  const Vector sim = activation_scores(model, d, x, in.decay);
  const Vector l2 = l2_scores(d, x);
  const Vector comb = combined_scores(z, sim, psi);
  ScoreTable t;
  t.rows.resize(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    t.rows[i] = {train[i], z[i], sim[i], l2[i], comb[i], psi[i] != 0};
  }
  return t;
}

Ranking rank(const ScoreTable& table, ScoreMode mode, std::uint64_t seed) {
  const std::size_t n = table.rows.size();
  Vector z(n), sim(n), l2(n);
  std::vector<std::uint8_t> psi(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = table.rows[i].z_score;
    sim[i] = table.rows[i].sim_score;
    l2[i] = table.rows[i].l2_score;
    psi[i] = table.rows[i].psi_included ? 1 : 0;
  }
  Ranking r;
  switch (mode) {
    case ScoreMode::combined: r = combine(z, sim, psi); break;
    case ScoreMode::lr_only: r = rank_by(z, psi, true, mode); break;
    case ScoreMode::activation_only: r = rank_by(sim, psi, true, mode); break;
    case ScoreMode::l2: r = rank_by(l2, psi, false, mode); break;
    case ScoreMode::random: r = random_ranking(psi, seed); break;
  }
  for (auto& pos : r.order) pos = table.rows[pos].train_index;
  return r;
}

void write_score_csv(std::ostream& out, const ScoreTable& table) {
  out << "train_index,z,sim,l2,combined,psi_included\n";
  char buf[64];
  const auto num = [&](double v) -> const char* {
    if (std::isnan(v)) return "";
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (const auto& r : table.rows) {
    out << r.train_index << ',' << num(r.z_score) << ',';
    out << num(r.sim_score) << ',';
    out << num(r.l2_score) << ',';
    out << num(r.combined) << ',' << (r.psi_included ? 1 : 0) << '\n';
  }
}

}  // namespace cfd::scoring
