#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "dpd/learning.hpp"
#include "test_support.hpp"

using namespace dpd;

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Mean Euclidean loss over sample columns, from forward passes only.
double mean_loss(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t) {
  double sum = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXf col = x.col(j).cast<float>();
    const Eigen::VectorXd y = forward(m, std::span<const float>(col.data(), static_cast<std::size_t>(col.size())));
    for (Eigen::Index i = 0; i < y.size(); ++i) sum += 0.5 * (y(i) - t(i, j)) * (y(i) - t(i, j));
  }
  return sum / static_cast<double>(x.cols());
}

Eigen::MatrixXd random_inputs(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Eigen::MatrixXd x(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) x(i, j) = static_cast<double>(u(rng));
  return x;
}

Eigen::MatrixXd random_targets(int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  Eigen::MatrixXd t(13, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < 13; ++i) t(i, j) = u(rng);
  return t;
}

TrainingSet make_set(int rows, int n, std::uint64_t seed) {
  TrainingSet s;
  s.inputs = random_inputs(rows, n, seed).cast<float>();
  s.targets = random_targets(n, seed + 1);
  return s;
}

}  // namespace

TEST(Forward, ZeroNetworkOutputsOneHalf) {
  const auto m = MlpModel::zeros({20, 6, 13});
  std::vector<float> x(20, 0.8f);
  const auto y = forward(m, x);
  ASSERT_EQ(y.size(), 13);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_EQ(y(i), 0.5);
}

TEST(Forward, ZeroInputMatchesScaledInput) {
  auto m = MlpModel::random({20, 6, 13}, 1);
  std::vector<float> x(20, 0.8f), zero(20, 0.0f), scaled(20);
  for (std::size_t i = 0; i < x.size(); ++i) scaled[i] = x[i] * 0.0f;
  EXPECT_EQ(forward(m, scaled), forward(m, zero));
}

TEST(Forward, ToyNetworkHandEvaluation) {
  auto m = MlpModel::zeros({1, 1, 1});
  m.weights[0](0, 0) = 1.0;
  m.weights[1](0, 0) = 1.0;
  const std::vector<float> x{2.0f};
  const auto y = forward(m, x);
  EXPECT_NEAR(y(0), logistic(2.0), 1e-15);
  EXPECT_NEAR(y(0), 0.8808, 1e-4);
  const std::vector<float> neg{-2.0f};
  EXPECT_EQ(forward(m, neg)(0), 0.5);  // rectifier blocks the negative input
}

TEST(Forward, ShapeMismatch) {
  const auto m = MlpModel::zeros({20, 6, 13});
  std::vector<float> x(19, 0.0f);
  EXPECT_EQ(test::error_code_of([&] { forward(m, x); }), ErrorCode::ShapeMismatch);
}

TEST(Forward, OutputsStayInsideTheOpenUnitInterval) {
  const auto m = MlpModel::random({50, 16, 13}, 3, 3.0);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (int t = 0; t < 500; ++t) {
    std::vector<float> x(50);
    for (auto& v : x) v = u(rng);
    const auto y = forward(m, x);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      EXPECT_GT(y(i), 0.0);
      EXPECT_LT(y(i), 1.0);
    }
  }
}

TEST(Forward, BatchMatchesSingleSamples) {
  const auto m = MlpModel::random({30, 10, 13}, 4);
  const auto x = random_inputs(30, 7, 2);
  const auto y = forward_batch(m, x);
  for (int j = 0; j < 7; ++j) {
    const Eigen::VectorXf col = x.col(j).cast<float>();
    const auto single = forward(m, std::span<const float>(col.data(), 30));
    for (int i = 0; i < 13; ++i) EXPECT_NEAR(y(i, j), single(i), 1e-12);
  }
}

TEST(Loss, Examples) {
  std::vector<double> a(13, 0.3), b(13, 0.3);
  EXPECT_EQ(loss(a, b), 0.0);
  a[0] = 0.4;
  EXPECT_NEAR(loss(a, b), 0.005, 1e-15);
  EXPECT_EQ(loss(a, b), loss(b, a));
  EXPECT_THROW(loss(std::vector<double>(12), b), Error);
}

TEST(Backprop, GradientMatchesCentralDifferences) {
  auto m = MlpModel::random({3072, 8, 13}, 21);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& b : m.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = g(rng);
  const auto x = random_inputs(3072, 5, 6);
  const auto t = random_targets(5, 7);
  MlpGradients grads;
  loss_and_gradients(m, x, t, grads);

  const double eps = 1e-6;
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + eps;
    const double up = mean_loss(m, x, t);
    param = saved - eps;
    const double down = mean_loss(m, x, t);
    param = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  };
  for (std::size_t k = 0; k < m.layer_count(); ++k) {
    for (Eigen::Index r = 0; r < m.weights[k].rows(); ++r) {
      for (Eigen::Index c = 0; c < m.weights[k].cols(); ++c) check(m.weights[k](r, c), grads.weights[k](r, c));
      check(m.biases[k](r), grads.biases[k](r));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(TrainStep, ZeroLearningRateLeavesParametersUnchanged) {
  auto m = MlpModel::random({40, 8, 13}, 2);
  const auto before = m;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  train_step(m, random_inputs(40, 4, 1), random_targets(4, 2), cfg);
  EXPECT_TRUE(m == before);
}

TEST(TrainStep, SmallStepDescends) {
  auto m = MlpModel::random({40, 8, 13}, 2);
  const auto x = random_inputs(40, 1, 3);
  const auto t = random_targets(1, 4);
  TrainConfig cfg;
  cfg.learning_rate = 1e-4;
  const double before = train_step(m, x, t, cfg);
  EXPECT_LE(mean_loss(m, x, t), before);
  EXPECT_NEAR(before, mean_loss(MlpModel::random({40, 8, 13}, 2), x, t), 1e-12);
}

TEST(TrainStep, NonFiniteLossAndEmptyBatch) {
  auto m = MlpModel::random({10, 4, 13}, 2);
  TrainConfig cfg;
  Eigen::MatrixXd x = random_inputs(10, 2, 1);
  x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(test::error_code_of([&] { train_step(m, x, random_targets(2, 1), cfg); }),
            ErrorCode::NonFiniteLoss);
  EXPECT_EQ(test::error_code_of([&] { train_step(m, Eigen::MatrixXd(10, 0), Eigen::MatrixXd(13, 0), cfg); }),
            ErrorCode::EmptyDataset);
}

TEST(Train, MemorizesIdenticalPairs) {
  TrainingSet s;
  const auto one = make_set(16, 1, 3);
  s.inputs = one.inputs.replicate(1, 32);
  s.targets = one.targets.replicate(1, 32);
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.batch_size = 8;
  cfg.iterations = 3000;
  cfg.layer_sizes = {16, 8, 13};
  const auto r = train(s, NormalizationSpec::defaults(), cfg);
  ASSERT_EQ(r.loss_curve.size(), 3000u);
  EXPECT_LT(r.loss_curve.back(), 1e-4 * r.loss_curve.front());
  for (std::size_t i = 300; i < r.loss_curve.size(); ++i) {
    ASSERT_LE(r.loss_curve[i], r.loss_curve[i - 1] + 1e-15) << "iteration " << i;
  }
}

TEST(Train, DeterministicPerSeed) {
  const auto s = make_set(24, 100, 9);
  TrainConfig cfg;
  cfg.iterations = 200;
  cfg.batch_size = 16;
  cfg.layer_sizes = {24, 12, 13};
  cfg.seed = 4;
  const auto a = train(s, NormalizationSpec::defaults(), cfg);
  const auto b = train(s, NormalizationSpec::defaults(), cfg);
  EXPECT_TRUE(a.model == b.model);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  cfg.seed = 5;
  EXPECT_FALSE(train(s, NormalizationSpec::defaults(), cfg).model == a.model);
}

TEST(Train, EmptyDatasetIsAnError) {
  TrainingSet s;
  s.inputs.resize(10, 0);
  s.targets.resize(13, 0);
  EXPECT_EQ(test::error_code_of([&] { train(s, NormalizationSpec::defaults(), TrainConfig{}); }),
            ErrorCode::EmptyDataset);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  test::TempDir dir("ckpt");
  auto m = MlpModel::random({30, 10, 13}, 12);
  m.spec = NormalizationSpec::defaults(3.8, 55.0);
  save_model(m, dir / "m.bin");
  const auto back = load_model(dir / "m.bin");
  EXPECT_TRUE(back == m);
  EXPECT_EQ(back.spec, m.spec);

  {
    std::ofstream out(dir / "junk.bin", std::ios::binary);
    out << "not a model";
  }
  EXPECT_EQ(test::error_code_of([&] { load_model(dir / "junk.bin"); }), ErrorCode::CorruptRecord);
  EXPECT_EQ(test::error_code_of([&] { load_model(dir / "missing.bin"); }), ErrorCode::IoFailure);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
}
