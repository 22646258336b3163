#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "cfd/mlp.hpp"
#include "cfd/rng.hpp"
#include "cfd/synthetic.hpp"

using namespace cfd;
using namespace cfd::mlp;

namespace {

MlpModel from_weights(std::size_t in, std::vector<std::size_t> hidden, std::vector<Matrix> w) {
  MlpModel m;
  m.arch = {in, std::move(hidden)};
  m.weights = std::move(w);
  return m;
}

}  // namespace

TEST_CASE("init shapes follow the architecture") {
  const MlpModel m = init_model({2, {4, 4}}, 1);
  REQUIRE(m.weights.size() == 3);
  CHECK(m.weights[0].rows() == 4);
  CHECK(m.weights[0].cols() == 2);
  CHECK(m.weights[1].rows() == 4);
  CHECK(m.weights[1].cols() == 4);
  CHECK(m.weights[2].rows() == 1);
  CHECK(m.weights[2].cols() == 4);
  const double bound = 1.0 / std::sqrt(2.0);
  for (double v : m.weights[0].data()) CHECK(std::abs(v) <= bound);
}

TEST_CASE("init is seeded") {
  CHECK(init_model({3, {5}}, 9).weights == init_model({3, {5}}, 9).weights);
  CHECK(init_model({3, {5}}, 9).weights != init_model({3, {5}}, 10).weights);
}

TEST_CASE("zero logit predicts 0") {
  MlpModel m = init_model({2, {3}}, 0);
  for (auto& w : m.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
  const Vector x{1.0, -2.0};
  CHECK(logit(m, x) == 0.0);
  CHECK(predict(m, x) == 0);
}

TEST_CASE("single-layer model is a dot product") {
  const MlpModel m = from_weights(2, {}, {Matrix{{1, -1}}});
  const Vector x{2, 1};
  CHECK(logit(m, x) == 1.0);
  CHECK(predict(m, x) == 1);
  CHECK(linearize(m, x) == Vector{1, -1});
}

TEST_CASE("all-zero input activates nothing") {
  const MlpModel m = init_model({3, {4, 4}}, 5);
  const auto p = activation_pattern(m, Vector{0, 0, 0});
  for (const auto& l : p.layers)
    for (auto b : l) CHECK(b == 0);
  CHECK(p.neurons() == 8);
}

TEST_CASE("one active neuron per layer gives a product of three weights") {
  // Layer 1: only neuron 2 fires; layer 2: only neuron 3 fires (1-based).
  const Matrix w0{{-1.0, -0.5}, {0.7, 1.3}, {-2.0, -0.1}, {-0.4, -0.9}};
  const Matrix w1{{0.5, -1.1, 0.2, 0.3}, {0.1, -0.6, -0.2, 0.4}, {-0.3, 0.8, 0.9, 0.1},
                  {0.2, -0.2, 0.4, -0.5}};
  const Matrix w2{{0.25, -0.75, 1.5, 0.6}};
  const MlpModel m = from_weights(2, {4, 4}, {w0, w1, w2});
  const Vector x{1.0, 2.0};

  const auto p = activation_pattern(m, x);
  CHECK(p.layers[0] == std::vector<std::uint8_t>{0, 1, 0, 0});
  CHECK(p.layers[1] == std::vector<std::uint8_t>{0, 0, 1, 0});

  const Vector theta = linearize(m, x);
  for (std::size_t j = 0; j < 2; ++j) CHECK(theta[j] == doctest::Approx(w0(1, j) * w1(2, 1) * w2(0, 2)));
  CHECK(linalg::dot(theta, x) == doctest::Approx(logit(m, x)));

  const auto eff = effective_weights(m, p);
  REQUIRE(eff.size() == 3);
  CHECK(eff[0](0, 0) == 0.0);
  CHECK(eff[0](1, 0) == w0(1, 0));
  CHECK(eff[1](2, 1) == w1(2, 1));
  CHECK(eff[1](2, 0) == 0.0);
  CHECK(eff[2](0, 2) == w2(0, 2));
  CHECK(eff[2](0, 1) == 0.0);
}

TEST_CASE("pattern is invariant to positive scaling of the input") {
  Rng rng(21);
  const MlpModel m = init_model({5, {6, 6}}, 2);
  for (int t = 0; t < 50; ++t) {
    const Vector x = oracle::random_vector(5, rng);
    const double c = rng.uniform(0.01, 100.0);
    Vector cx = x;
    for (double& v : cx) v *= c;
    CHECK(activation_pattern(m, x) == activation_pattern(m, cx));
  }
}

TEST_CASE("linearization reproduces the forward pass on random models") {
  Rng rng(99);
  for (int t = 0; t < 100; ++t) {
    const std::size_t in = 1 + rng.below(8);
    std::vector<std::size_t> hidden(1 + rng.below(3));
    for (auto& h : hidden) h = 1 + rng.below(10);
    const MlpModel m = init_model({in, hidden}, rng.next_u64());
    const Vector x = oracle::random_vector(in, rng, -3.0, 3.0);
    const double expected = oracle::forward_logit(m, x);
    CHECK(std::abs(logit(m, x) - expected) <= 1e-10 * std::max(1.0, std::abs(expected)));
    CHECK(std::abs(linalg::dot(linearize(m, x), x) - expected) <= 1e-10 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(4);
  const MlpModel m = init_model({2, {3}}, 17);
  const Matrix X = oracle::random_matrix(12, 2, rng, -2.0, 2.0);
  Vector y(12);
  for (std::size_t i = 0; i < 12; ++i) y[i] = static_cast<double>(rng.below(2));
  std::vector<std::size_t> rows(12);
  for (std::size_t i = 0; i < 12; ++i) rows[i] = i;

  const LossGradient g = loss_and_gradient(m, X, y, rows);
  CHECK(g.loss == doctest::Approx(mean_loss(m, X, y, rows)));
  const double h = 1e-5;
  for (std::size_t l = 0; l < m.weights.size(); ++l)
    for (std::size_t k = 0; k < m.weights[l].data().size(); ++k) {
      MlpModel plus = m, minus = m;
      plus.weights[l].data()[k] += h;
      minus.weights[l].data()[k] -= h;
      const double fd = (mean_loss(plus, X, y, rows) - mean_loss(minus, X, y, rows)) / (2 * h);
      CHECK(std::abs(fd - g.grads[l].data()[k]) < 1e-4);
    }
}

TEST_CASE("early stopping waits out its patience") {
  EarlyStopping es(10, 1e-12);
  CHECK_FALSE(es.observe(1, 1.0));
  CHECK(es.improved());
  int stopped_at = 0;
  for (int e = 2; e <= 50; ++e)
    if (es.observe(e, 1.0 + e)) {
      stopped_at = e;
      break;
    }
  CHECK(stopped_at == 11);
  CHECK(es.best_epoch() == 1);
  CHECK(es.best_loss() == 1.0);

  // Sub-threshold improvements do not reset the counter.
  EarlyStopping tiny(2, 1e-3);
  tiny.observe(1, 1.0);
  CHECK_FALSE(tiny.observe(2, 1.0 - 1e-6));
  CHECK(tiny.observe(3, 1.0 - 2e-6));
}

TEST_CASE("training separates a linearly separable set") {
  Rng rng(5);
  const std::size_t n = 40;
  Matrix X(n, 2);
  Vector y(n);
  // Bias-free nets need a separating hyperplane through the origin; keep a margin.
  for (std::size_t i = 0; i < n;) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    if (std::abs(a + b) < 0.2) continue;
    X(i, 0) = a;
    X(i, 1) = b;
    y[i] = (a + b > 0) ? 1.0 : 0.0;
    ++i;
  }
  std::vector<std::size_t> train_rows, val_rows;
  for (std::size_t i = 0; i < n; ++i) (i < 30 ? train_rows : val_rows).push_back(i);

  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 300;
  cfg.patience = 50;
  const MlpModel m = train(init_model({2, {8}}, 3), X, y, train_rows, val_rows, cfg);
  std::size_t correct = 0;
  for (auto r : train_rows) correct += (predict(m, X.row(r)) == static_cast<int>(y[r]));
  CHECK(static_cast<double>(correct) / static_cast<double>(train_rows.size()) >= 0.95);
  CHECK(m.meta.epochs_run >= 1);
  CHECK(m.meta.best_epoch <= m.meta.epochs_run);
  CHECK(m.meta.best_val_loss == doctest::Approx(mean_loss(m, X, y, val_rows)));
}

TEST_CASE("training is bit-for-bit deterministic") {
  const data::Dataset d = synthetic::make_dataset({});
  const Learner learner{{d.feature_dim(), {4, 4}}, {}};
  const MlpModel a = learner.fit(d);
  const MlpModel b = learner.fit(d);
  CHECK(a.weights == b.weights);
  CHECK(a.meta.epochs_run == b.meta.epochs_run);

  // Different labels give a different model.
  Vector flipped = d.y;
  flipped[d.train_indices()[0]] = 1.0 - flipped[d.train_indices()[0]];
  CHECK(learner.fit(d, flipped).weights != a.weights);
}

TEST_CASE("checkpoint round-trip is exact") {
  const data::Dataset d = synthetic::make_dataset({});
  const MlpModel m = Learner{{d.feature_dim(), {4, 4}}, {}}.fit(d);
  const MlpModel back = model_from_json_text(to_json_text(m));
  CHECK(back.weights == m.weights);
  CHECK(back.arch == m.arch);
  CHECK(back.seed == m.seed);
  for (std::size_t r = 0; r < d.size(); ++r) CHECK(logit(back, d.X.row(r)) == logit(m, d.X.row(r)));

  const auto path = std::filesystem::temp_directory_path() / "cfd_test_model.json";
  save_model(m, path);
  CHECK(load_model(path).weights == m.weights);
  std::filesystem::remove(path);
}

TEST_CASE("architecture and config validation") {
  CHECK_THROWS(init_model({0, {4}}, 0));
  CHECK_THROWS(init_model({2, {0}}, 0));
  TrainConfig cfg;
  cfg.learning_rate = -1.0;
  CHECK_THROWS(cfg.validate());
}
