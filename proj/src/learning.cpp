#include "dpd/learning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "dpd/errors.hpp"

namespace dpd {

namespace {

constexpr char kModelMagic[8] = {'D', 'P', 'D', 'M', 'L', 'P', '\0', '\0'};
constexpr std::uint32_t kModelVersion = 1;

// Kept strictly inside (0, 1) so saturated units never report exactly 0 or 1.
constexpr double kLogisticLow = std::numeric_limits<double>::min();
constexpr double kLogisticHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;

void apply(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::Logistic:
      z = z.unaryExpr([](double v) {
        return std::clamp(1.0 / (1.0 + std::exp(-v)), kLogisticLow, kLogisticHigh);
      });
      break;
  }
}

// Multiplies `grad` (dL/da) in place by da/dz, given the activation output a.
void backprop_activation(Activation act, const Eigen::MatrixXd& a, Eigen::MatrixXd& grad) {
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      grad = grad.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
      break;
    case Activation::Logistic:
      grad = grad.cwiseProduct(a.cwiseProduct((1.0 - a.array()).matrix()));
      break;
  }
}

void check_input(const MlpModel& model, Eigen::Index rows) {
  if (rows != model.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "model expects " + std::to_string(model.input_size()) +
                                              " inputs, got " + std::to_string(rows));
  }
}

}  // namespace

MlpModel MlpModel::zeros(std::vector<int> sizes) {
  if (sizes.size() < 2) throw Error(ErrorCode::ConfigError, "a model needs at least two layer sizes");
  MlpModel m;
  m.sizes = std::move(sizes);
  for (std::size_t k = 0; k + 1 < m.sizes.size(); ++k) {
    if (m.sizes[k] <= 0 || m.sizes[k + 1] <= 0) {
      throw Error(ErrorCode::ConfigError, "layer sizes must be positive");
    }
    m.weights.push_back(Eigen::MatrixXd::Zero(m.sizes[k + 1], m.sizes[k]));
    m.biases.push_back(Eigen::VectorXd::Zero(m.sizes[k + 1]));
    m.activations.push_back(k + 2 == m.sizes.size() ? Activation::Logistic : Activation::Relu);
  }
  return m;
}

MlpModel MlpModel::random(std::vector<int> sizes, std::uint64_t seed, double init_scale) {
  MlpModel m = zeros(std::move(sizes));
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    std::normal_distribution<double> dist(0.0, init_scale * std::sqrt(2.0 / m.sizes[k]));
    auto& w = m.weights[k];
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
  }
  return m;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    n += static_cast<std::size_t>(weights[k].size() + biases[k].size());
  }
  return n;
}

void MlpModel::validate() const {
  if (sizes.size() < 2 || weights.size() + 1 != sizes.size() || biases.size() != weights.size() ||
      activations.size() != weights.size()) {
    throw Error(ErrorCode::ShapeMismatch, "model layer lists are inconsistent");
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k].rows() != sizes[k + 1] || weights[k].cols() != sizes[k] ||
        biases[k].size() != sizes[k + 1]) {
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(k) + " has wrong dimensions");
    }
    if (!weights[k].allFinite() || !biases[k].allFinite()) {
      throw Error(ErrorCode::NonFiniteLoss, "layer " + std::to_string(k) + " has non-finite parameters");
    }
  }
}

bool MlpModel::operator==(const MlpModel& o) const {
  if (sizes != o.sizes || activations != o.activations || !(spec == o.spec)) return false;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] != o.weights[k] || biases[k] != o.biases[k]) return false;
  }
  return true;
}

Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  check_input(model, inputs.rows());
  Eigen::MatrixXd a = inputs;
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    Eigen::MatrixXd z = model.weights[k] * a;
    z.colwise() += model.biases[k];
    apply(model.activations[k], z);
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd forward(const MlpModel& model, std::span<const float> input) {
  check_input(model, static_cast<Eigen::Index>(input.size()));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(input.size()), 1);
  for (std::size_t i = 0; i < input.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = input[i];
  return forward_batch(model, x).col(0);
}

double loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw Error(ErrorCode::ShapeMismatch, "loss operands differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return 0.5 * sum;
}

double loss_and_gradients(const MlpModel& model, const Eigen::MatrixXd& inputs,
                          const Eigen::MatrixXd& targets, MlpGradients& grads) {
  check_input(model, inputs.rows());
  if (targets.rows() != model.output_size() || targets.cols() != inputs.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "targets do not match the model output or batch size");
  }
  const auto n_layers = model.weights.size();
  const double batch = static_cast<double>(inputs.cols());

  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(n_layers + 1);
  acts.push_back(inputs);
  for (std::size_t k = 0; k < n_layers; ++k) {
    Eigen::MatrixXd z = model.weights[k] * acts.back();
    z.colwise() += model.biases[k];
    apply(model.activations[k], z);
    acts.push_back(std::move(z));
  }
  const Eigen::MatrixXd diff = acts.back() - targets;
  const double value = 0.5 * diff.squaredNorm() / batch;

  grads.weights.resize(n_layers);
  grads.biases.resize(n_layers);
  Eigen::MatrixXd delta = diff / batch;
  for (std::size_t k = n_layers; k-- > 0;) {
    backprop_activation(model.activations[k], acts[k + 1], delta);
    grads.weights[k].noalias() = delta * acts[k].transpose();
    grads.biases[k] = delta.rowwise().sum();
    if (k > 0) delta = model.weights[k].transpose() * delta;
  }
  return value;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || batch_size < 1 || iterations < 0 || !(init_scale > 0.0) ||
      !(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0)) {
    throw Error(ErrorCode::ConfigError,
                "training needs lr >= 0, batch >= 1, iterations >= 0, momentum in [0, 1)");
  }
}

double train_step(MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const TrainConfig& config, Optimizer* optimizer) {
  if (inputs.cols() == 0) throw Error(ErrorCode::EmptyDataset, "training batch is empty");
  MlpGradients g;
  const double value = loss_and_gradients(model, inputs, targets, g);
  if (!std::isfinite(value)) throw Error(ErrorCode::NonFiniteLoss, "batch loss is not finite");
  const double lr = config.learning_rate;
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    if (config.weight_decay > 0.0) g.weights[k] += config.weight_decay * model.weights[k];
    if (optimizer && config.momentum > 0.0) {
      auto& vw = optimizer->weight_velocity;
      auto& vb = optimizer->bias_velocity;
      if (vw.size() != model.weights.size()) {
        vw.clear();
        vb.clear();
        for (std::size_t j = 0; j < model.weights.size(); ++j) {
          vw.push_back(Eigen::MatrixXd::Zero(model.weights[j].rows(), model.weights[j].cols()));
          vb.push_back(Eigen::VectorXd::Zero(model.biases[j].size()));
        }
      }
      vw[k] = config.momentum * vw[k] - lr * g.weights[k];
      vb[k] = config.momentum * vb[k] - lr * g.biases[k];
      model.weights[k] += vw[k];
      model.biases[k] += vb[k];
    } else {
      model.weights[k] -= lr * g.weights[k];
      model.biases[k] -= lr * g.biases[k];
    }
  }
  return value;
}

TrainResult train(const TrainingSet& data, const NormalizationSpec& spec, const TrainConfig& config,
                  const TrainProgress& progress) {
  config.validate();
  if (data.size() == 0) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  if (data.targets.cols() != data.inputs.cols() || data.targets.rows() != static_cast<Eigen::Index>(kIndicatorCount)) {
    throw Error(ErrorCode::ShapeMismatch, "training inputs and targets disagree");
  }
  auto sizes = config.layer_sizes.empty() ? default_layer_sizes(static_cast<int>(data.inputs.rows()))
                                          : config.layer_sizes;
  TrainResult result{MlpModel::random(sizes, config.seed, config.init_scale), {}};
  result.model.spec = spec;
  check_input(result.model, data.inputs.rows());

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(data.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::size_t cursor = order.size();
  const auto batch = static_cast<Eigen::Index>(std::min<std::size_t>(config.batch_size, data.size()));

  Eigen::MatrixXd x(data.inputs.rows(), batch);
  Eigen::MatrixXd t(data.targets.rows(), batch);
  Optimizer opt;
  result.loss_curve.reserve(static_cast<std::size_t>(config.iterations));
  for (std::int64_t it = 0; it < config.iterations; ++it) {
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Eigen::Index col = order[cursor++];
      x.col(b) = data.inputs.col(col).cast<double>();
      t.col(b) = data.targets.col(col);
    }
    const double value = train_step(result.model, x, t, config, &opt);
    result.loss_curve.push_back(value);
    if (progress) progress(it, value);
  }
  return result;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  model.validate();
  detail::ByteWriter w;
  w.put_bytes(kModelMagic, sizeof kModelMagic);
  w.put<std::uint32_t>(kModelVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.sizes.size()));
  for (int s : model.sizes) w.put<std::uint32_t>(static_cast<std::uint32_t>(s));
  for (auto a : model.activations) w.put<std::uint8_t>(static_cast<std::uint8_t>(a));
  detail::write_spec(w, model.spec);
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    // Row-major so the file layout does not depend on Eigen's storage order.
    const auto& m = model.weights[k];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) w.put<double>(m(i, j));
    }
    for (Eigen::Index i = 0; i < model.biases[k].size(); ++i) w.put<double>(model.biases[k](i));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open model " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::ByteReader r(bytes.data(), bytes.size());
  char magic[8];
  r.get_bytes(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kModelMagic))) {
    throw Error(ErrorCode::CorruptRecord, path.string() + " is not a model checkpoint");
  }
  if (const auto v = r.get<std::uint32_t>(); v != kModelVersion) {
    throw Error(ErrorCode::SpecMismatch, "unsupported model version " + std::to_string(v));
  }
  const auto n = r.get<std::uint32_t>();
  if (n < 2 || n > 64) throw Error(ErrorCode::CorruptRecord, "implausible layer count in " + path.string());
  std::vector<int> sizes(n);
  for (auto& s : sizes) s = static_cast<int>(r.get<std::uint32_t>());
  MlpModel m = MlpModel::zeros(sizes);
  for (auto& a : m.activations) {
    const auto id = r.get<std::uint8_t>();
    if (id > 2) throw Error(ErrorCode::CorruptRecord, "unknown activation id " + std::to_string(id));
    a = static_cast<Activation>(id);
  }
  m.spec = detail::read_spec(r);
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    auto& w = m.weights[k];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = r.get<double>();
    }
    for (Eigen::Index i = 0; i < m.biases[k].size(); ++i) m.biases[k](i) = r.get<double>();
  }
  if (r.remaining() != 0) throw Error(ErrorCode::CorruptRecord, "trailing bytes in " + path.string());
  m.validate();
  return m;
}

}  // namespace dpd
