#include "cfd/mlp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "cfd/rng.hpp"

namespace cfd::mlp {

using nlohmann::json;

namespace {

std::vector<std::size_t> layer_widths(const Architecture& arch) {
  std::vector<std::size_t> w{arch.input_dim};
  w.insert(w.end(), arch.hidden.begin(), arch.hidden.end());
  w.push_back(1);
  return w;
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_input(const MlpModel& m, std::span<const double> x) {
  if (x.size() != m.arch.input_dim) {
    throw linalg::ShapeError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                             std::to_string(m.arch.input_dim));
  }
}

// Pre-activations of every layer for one input; the last entry holds the logit.
std::vector<Vector> forward(const MlpModel& m, std::span<const double> x) {
  check_input(m, x);
  std::vector<Vector> pre;
  pre.reserve(m.weights.size());
  Vector h(x.begin(), x.end());
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    Vector z = linalg::matvec(m.weights[l], h);
    if (l + 1 < m.weights.size()) {
      h.resize(z.size());
      for (std::size_t k = 0; k < z.size(); ++k) h[k] = z[k] > 0.0 ? z[k] : 0.0;
    }
    pre.push_back(std::move(z));
  }
  return pre;
}

// Batched forward pass. hidden[l] is the input to weights[l] (n x width),
// pre[l] its output before ReLU.
struct Batch {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
};

Batch forward_batch(const MlpModel& m, const Matrix& X, std::span<const std::size_t> rows) {
  Batch b;
  b.inputs.push_back(X.select_rows(rows));
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const Matrix& in = b.inputs.back();
    const Matrix& w = m.weights[l];
    Matrix z(in.rows(), w.rows());
    for (std::size_t r = 0; r < in.rows(); ++r) {
      auto xr = in.row(r);
      auto zr = z.row(r);
      for (std::size_t o = 0; o < w.rows(); ++o) {
        auto wr = w.row(o);
        double s = 0.0;
        for (std::size_t i = 0; i < wr.size(); ++i) s += wr[i] * xr[i];
        zr[o] = s;
      }
    }
    if (l + 1 < m.weights.size()) {
      Matrix h = z;
      for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
      b.inputs.push_back(std::move(h));
    }
    b.pre.push_back(std::move(z));
  }
  return b;
}

double batch_loss(const Matrix& logits, std::span<const double> y, std::span<const std::size_t> rows) {
  double s = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double z = logits(r, 0);
    s += softplus(z) - y[rows[r]] * z;
  }
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

}  // namespace

// ---------------------------------------------------------------- types

void Architecture::validate() const {
  if (input_dim == 0) throw std::invalid_argument("architecture input_dim must be >= 1");
  for (auto w : hidden) {
    if (w == 0) throw std::invalid_argument("hidden layer widths must be >= 1");
  }
}

std::size_t Architecture::hidden_neurons() const {
  std::size_t n = 0;
  for (auto w : hidden) n += w;
  return n;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
}

void MlpModel::validate() const {
  arch.validate();
  const auto widths = layer_widths(arch);
  if (weights.size() + 1 != widths.size()) throw linalg::ShapeError("weight count does not match architecture");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != widths[l + 1] || weights[l].cols() != widths[l]) {
      throw linalg::ShapeError("weights[" + std::to_string(l) + "] has the wrong shape");
    }
    linalg::require_finite(weights[l].data(), "weights");
  }
}

std::size_t ActivationPattern::neurons() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.size();
  return n;
}

// ---------------------------------------------------------------- inference

MlpModel init_model(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  MlpModel m;
  m.arch = arch;
  m.seed = seed;
  Rng rng(seed);
  const auto widths = layer_widths(arch);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Matrix w(widths[l + 1], widths[l]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    m.weights.push_back(std::move(w));
  }
  return m;
}

double logit(const MlpModel& model, std::span<const double> x) { return forward(model, x).back()[0]; }

int predict(const MlpModel& model, std::span<const double> x) { return logit(model, x) > 0.0 ? 1 : 0; }

ActivationPattern activation_pattern(const MlpModel& model, std::span<const double> x) {
  const auto pre = forward(model, x);
  ActivationPattern p;
  for (std::size_t l = 0; l + 1 < pre.size(); ++l) {
    std::vector<std::uint8_t> bits(pre[l].size());
    for (std::size_t k = 0; k < bits.size(); ++k) bits[k] = pre[l][k] > 0.0 ? 1 : 0;
    p.layers.push_back(std::move(bits));
  }
  return p;
}

std::vector<Matrix> effective_weights(const MlpModel& model, const ActivationPattern& pattern) {
  if (pattern.layers.size() != model.arch.hidden.size()) {
    throw linalg::ShapeError("activation pattern does not match architecture");
  }
  std::vector<Matrix> out;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Matrix w = model.weights[l];
    // Columns index layer l (inactive sources), rows layer l+1 (inactive targets).
    for (std::size_t r = 0; r < w.rows(); ++r) {
      for (std::size_t c = 0; c < w.cols(); ++c) {
        const bool src = l == 0 || pattern.layers[l - 1][c];
        const bool dst = l + 1 == model.weights.size() || pattern.layers[l][r];
        if (!(src && dst)) w(r, c) = 0.0;
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

Vector linearize(const MlpModel& model, std::span<const double> x) {
  const auto eff = effective_weights(model, activation_pattern(model, x));
  // Product from the output side keeps every intermediate a single row.
  Matrix acc = eff.back();
  for (std::size_t l = eff.size() - 1; l-- > 0;) acc = linalg::matmul(acc, eff[l]);
  return acc.data();
}

// ---------------------------------------------------------------- training

LossGradient loss_and_gradient(const MlpModel& model, const Matrix& X, std::span<const double> y,
                               std::span<const std::size_t> rows) {
  const Batch b = forward_batch(model, X, rows);
  const std::size_t n = rows.size();
  const std::size_t depth = model.weights.size();
  LossGradient out;
  out.loss = batch_loss(b.pre.back(), y, rows);
  out.grads.resize(depth);

  // dL/dz for the output layer.
  Matrix delta(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    delta(r, 0) = (sigmoid(b.pre.back()(r, 0)) - y[rows[r]]) / static_cast<double>(n);
  }
  for (std::size_t l = depth; l-- > 0;) {
    const Matrix& in = b.inputs[l];
    const Matrix& w = model.weights[l];
    Matrix g(w.rows(), w.cols());
    for (std::size_t r = 0; r < n; ++r) {
      auto dr = delta.row(r);
      auto ir = in.row(r);
      for (std::size_t o = 0; o < w.rows(); ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        auto gr = g.row(o);
        for (std::size_t i = 0; i < w.cols(); ++i) gr[i] += d * ir[i];
      }
    }
    out.grads[l] = std::move(g);
    if (l == 0) break;
    Matrix prev(n, w.cols());
    const Matrix& pre = b.pre[l - 1];
    for (std::size_t r = 0; r < n; ++r) {
      auto dr = delta.row(r);
      auto pr = prev.row(r);
      for (std::size_t o = 0; o < w.rows(); ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        auto wr = w.row(o);
        for (std::size_t i = 0; i < w.cols(); ++i) pr[i] += d * wr[i];
      }
      for (std::size_t i = 0; i < w.cols(); ++i) {
        if (!(pre(r, i) > 0.0)) pr[i] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return out;
}

double mean_loss(const MlpModel& model, const Matrix& X, std::span<const double> y,
                 std::span<const std::size_t> rows) {
  const Batch b = forward_batch(model, X, rows);
  return batch_loss(b.pre.back(), y, rows);
}

bool EarlyStopping::observe(int epoch, double val_loss) {
  improved_ = !has_best_ || val_loss < best_loss_ - min_improvement_;
  if (improved_) {
    has_best_ = true;
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    since_best_ = 0;
    return false;
  }
  return ++since_best_ >= patience_;
}

MlpModel train(const MlpModel& init, const Matrix& X, std::span<const double> y,
               std::span<const std::size_t> train_rows, std::span<const std::size_t> val_rows,
               const TrainConfig& cfg) {
  cfg.validate();
  init.validate();
  if (train_rows.empty() || val_rows.empty()) {
    throw std::invalid_argument("training needs nonempty train and validation splits");
  }
  if (X.cols() != init.arch.input_dim) {
    throw linalg::ShapeError("dataset has " + std::to_string(X.cols()) + " features, model expects " +
                             std::to_string(init.arch.input_dim));
  }

  MlpModel model = init;
  MlpModel best = init;
  std::vector<Matrix> m1, m2;
  for (const auto& w : model.weights) {
    m1.emplace_back(w.rows(), w.cols());
    m2.emplace_back(w.rows(), w.cols());
  }
  EarlyStopping stopper(cfg.patience, cfg.min_improvement);
  TrainMeta meta;
  double b1t = 1.0, b2t = 1.0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const LossGradient lg = loss_and_gradient(model, X, y, train_rows);
    if (!std::isfinite(lg.loss)) {
      throw TrainingError("training loss became non-finite at epoch " + std::to_string(epoch), epoch);
    }
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
      auto& w = model.weights[l].data();
      auto& a = m1[l].data();
      auto& v = m2[l].data();
      const auto& g = lg.grads[l].data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        a[i] = cfg.beta1 * a[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double ahat = a[i] / (1.0 - b1t);
        const double vhat = v[i] / (1.0 - b2t);
        w[i] -= cfg.learning_rate * ahat / (std::sqrt(vhat) + cfg.epsilon);
      }
    }
    const double val = mean_loss(model, X, y, val_rows);
    if (!std::isfinite(val)) {
      throw TrainingError("validation loss became non-finite at epoch " + std::to_string(epoch), epoch);
    }
    meta.val_history.push_back(val);
    meta.epochs_run = epoch;
    const bool stop = stopper.observe(epoch, val);
    if (stopper.improved()) best.weights = model.weights;
    if (stop) break;
  }
  meta.best_epoch = stopper.best_epoch();
  meta.best_val_loss = stopper.best_loss();
  best.meta = std::move(meta);
  return best;
}

MlpModel train(const MlpModel& init, const data::Dataset& d, const TrainConfig& cfg) {
  return train(init, d.X, d.y, d.train_indices(), d.val_indices(), cfg);
}

MlpModel Learner::fit(const data::Dataset& d, std::span<const double> labels) const {
  if (labels.size() != d.size()) throw linalg::ShapeError("label vector does not match dataset");
  return train(init_model(arch, config.seed), d.X, labels, d.train_indices(), d.val_indices(), config);
}

// ---------------------------------------------------------------- checkpoints

std::string to_json_text(const MlpModel& model) {
  json j;
  j["input_dim"] = model.arch.input_dim;
  j["hidden"] = model.arch.hidden;
  j["seed"] = model.seed;
  j["weights"] = json::array();
  for (const auto& w : model.weights) {
    j["weights"].push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"data", w.data()}});
  }
  j["meta"] = {{"epochs_run", model.meta.epochs_run},
               {"best_epoch", model.meta.best_epoch},
               {"best_val_loss", model.meta.best_val_loss},
               {"val_history", model.meta.val_history}};
  return j.dump(1);
}

MlpModel model_from_json_text(const std::string& text) {
  try {
    const json j = json::parse(text);
    MlpModel m;
    m.arch.input_dim = j.at("input_dim").get<std::size_t>();
    m.arch.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& w : j.at("weights")) {
      m.weights.emplace_back(w.at("rows").get<std::size_t>(), w.at("cols").get<std::size_t>(),
                             w.at("data").get<std::vector<double>>());
    }
    if (j.contains("meta")) {
      const auto& mj = j["meta"];
      m.meta.epochs_run = mj.value("epochs_run", 0);
      m.meta.best_epoch = mj.value("best_epoch", 0);
      m.meta.best_val_loss = mj.value("best_val_loss", 0.0);
      m.meta.val_history = mj.value("val_history", std::vector<double>{});
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed model checkpoint: ") + e.what());
  }
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model checkpoint " + path.string());
  out << to_json_text(model) << '\n';
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json_text(ss.str());
}

}  // namespace cfd::mlp
