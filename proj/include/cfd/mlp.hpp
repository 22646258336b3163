#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfd/dataset.hpp"
#include "cfd/linalg.hpp"

namespace cfd::mlp {

using linalg::Matrix;
using linalg::Vector;

struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;

  void validate() const;
  std::size_t hidden_neurons() const;
  bool operator==(const Architecture&) const = default;
};

struct TrainConfig {
  double learning_rate = 0.005;
  int max_epochs = 100;
  int patience = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Improvement smaller than this does not reset patience.
  double min_improvement = 1e-12;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainMeta {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<double> val_history;
};

// Bias-free feedforward ReLU network with a single logit output.
// weights[l] maps layer l to layer l+1 and has shape (width[l+1], width[l]).
struct MlpModel {
  Architecture arch;
  std::vector<Matrix> weights;
  std::uint64_t seed = 0;
  TrainMeta meta;

  void validate() const;
};

// One binary vector per hidden layer; 1 = active.
struct ActivationPattern {
  std::vector<std::vector<std::uint8_t>> layers;

  std::size_t neurons() const;
  bool operator==(const ActivationPattern&) const = default;
};

struct TrainingError : std::runtime_error {
  int epoch;
  TrainingError(const std::string& what, int epoch) : std::runtime_error(what), epoch(epoch) {}
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from `seed`.
MlpModel init_model(const Architecture& arch, std::uint64_t seed);

double logit(const MlpModel& model, std::span<const double> x);
// 1 iff logit > 0; a zero logit predicts 0.
int predict(const MlpModel& model, std::span<const double> x);
ActivationPattern activation_pattern(const MlpModel& model, std::span<const double> x);

// Exact local linear model: θᵀx == logit(x) for the region containing x.
Vector linearize(const MlpModel& model, std::span<const double> x);
// The masked per-layer matrices whose product gives θ.
std::vector<Matrix> effective_weights(const MlpModel& model, const ActivationPattern& pattern);

// Mean binary cross-entropy of sigmoid(logit) over `rows`, and its gradient
// with respect to every weight matrix.
struct LossGradient {
  double loss = 0.0;
  std::vector<Matrix> grads;
};
LossGradient loss_and_gradient(const MlpModel& model, const Matrix& X, std::span<const double> y,
                               std::span<const std::size_t> rows);
double mean_loss(const MlpModel& model, const Matrix& X, std::span<const double> y,
                 std::span<const std::size_t> rows);

// Patience counter over a stream of validation losses.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_improvement)
      : patience_(patience), min_improvement_(min_improvement) {}

  // Records the loss of `epoch`; returns true when training should stop.
  bool observe(int epoch, double val_loss);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  double min_improvement_;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
  bool has_best_ = false;
  bool improved_ = false;
  int since_best_ = 0;
};

// Full-batch Adam from `init`; returns the weights of the best validation epoch.
MlpModel train(const MlpModel& init, const Matrix& X, std::span<const double> y,
               std::span<const std::size_t> train_rows, std::span<const std::size_t> val_rows,
               const TrainConfig& cfg);
MlpModel train(const MlpModel& init, const data::Dataset& d, const TrainConfig& cfg);

// The deterministic learning procedure: fixed architecture, init seed and
// hyperparameters. Only the labels vary between calls.
struct Learner {
  Architecture arch;
  TrainConfig config;

  MlpModel fit(const data::Dataset& d, std::span<const double> labels) const;
  MlpModel fit(const data::Dataset& d) const { return fit(d, d.y); }
};

std::string to_json_text(const MlpModel& model);
MlpModel model_from_json_text(const std::string& text);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace cfd::mlp
