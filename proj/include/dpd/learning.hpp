#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dpd/affordance.hpp"

namespace dpd {

enum class Activation : std::uint8_t { Identity = 0, Relu = 1, Logistic = 2 };

// Dense feedforward regressor. Layer k maps sizes[k] -> sizes[k + 1] with
// weights[k] of shape (sizes[k + 1], sizes[k]).
struct MlpModel {
  std::vector<int> sizes;
  std::vector<Activation> activations;  // one per layer
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  NormalizationSpec spec = NormalizationSpec::defaults();

  // Zero parameters; hidden rectifier layers, logistic output.
  static MlpModel zeros(std::vector<int> sizes);
  // Scaled He-normal weights, zero biases.
  static MlpModel random(std::vector<int> sizes, std::uint64_t seed, double init_scale = 1.0);

  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;
  void validate() const;
  bool operator==(const MlpModel& other) const;
};

inline std::vector<int> default_layer_sizes(int input = 64 * 48) { return {input, 256, 64, 13}; }

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

Eigen::VectorXd forward(const MlpModel& model, std::span<const float> input);
// Column-per-sample batch forward pass.
Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs);

// Euclidean loss: 0.5 * sum of squared differences.
double loss(std::span<const double> pred, std::span<const double> target);

// Mean Euclidean loss over the batch columns and its gradient with respect to
// every parameter.
double loss_and_gradients(const MlpModel& model, const Eigen::MatrixXd& inputs,
                          const Eigen::MatrixXd& targets, MlpGradients& grads);

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 64;
  std::int64_t iterations = 1000;
  std::uint64_t seed = 0;
  double init_scale = 1.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::vector<int> layer_sizes;  // empty: default_layer_sizes(input size)

  void validate() const;
};

struct Optimizer {
  std::vector<Eigen::MatrixXd> weight_velocity;
  std::vector<Eigen::VectorXd> bias_velocity;
};

// One SGD step on the batch mean loss. Returns the loss before the update.
double train_step(MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const TrainConfig& config, Optimizer* optimizer = nullptr);

// Samples as columns: inputs are rasters (float to halve memory), targets the
// 13 normalized indicators.
struct TrainingSet {
  Eigen::MatrixXf inputs;
  Eigen::MatrixXd targets;
  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_curve;  // one entry per iteration
};

using TrainProgress = std::function<void(std::int64_t iteration, double loss)>;

TrainResult train(const TrainingSet& data, const NormalizationSpec& spec, const TrainConfig& config,
                  const TrainProgress& progress = {});

void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace dpd
