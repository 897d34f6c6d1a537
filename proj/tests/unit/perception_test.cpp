#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "dpd/perception.hpp"
#include "dpd/runner.hpp"
#include "test_support.hpp"

using namespace dpd;
using I = Indicator;

namespace {

WorldState busy_world() {
  WorldState w;
  w.track = std::make_shared<const TrackGeometry>(make_straight_track(3000.0, 3));
  w.cars.push_back(make_car(*w.track, 0, 100.0, 0.3, 15.0, true));
  w.cars.push_back(make_car(*w.track, 1, 115.0, 0.0, 10.0));
  w.cars.push_back(make_car(*w.track, 2, 145.0, 4.0, 10.0));
  w.cars.push_back(make_car(*w.track, 3, 125.0, -4.0, 10.0));
  return w;
}

AffordanceVector truth_vector() {
  AffordanceVector a;
  a.set(I::Angle, 0.01);
  a.set(I::ToMarkingLL, 6.0);
  a.set(I::ToMarkingML, 2.0);
  a.set(I::ToMarkingMR, 2.0);
  a.set(I::ToMarkingRR, 6.0);
  a.set(I::DistMM, 20.0);
  a.set(I::DistLL, 45.0);
  return a;
}

}  // namespace

TEST(Oracle, EqualsGroundTruth) {
  const auto w = busy_world();
  const auto est = perceive_oracle(w, 0);
  EXPECT_EQ(est.source, EstimateSource::Oracle);
  EXPECT_EQ(est.value, compute_affordance(w, 0));
}

TEST(Noisy, ZeroProfileEqualsOracle) {
  const auto w = busy_world();
  const auto est = perceive_noisy(w, 0, NoiseProfile{});
  EXPECT_EQ(est.source, EstimateSource::Noisy);
  EXPECT_EQ(est.value, compute_affordance(w, 0));
}

TEST(Noisy, LaneNoiseMaeMatchesGaussianMeanAbsoluteDeviation) {
  NoiseProfile p;
  p.sigma_lane = 0.2;
  p.seed = 3;
  const auto spec = NormalizationSpec::defaults();
  const auto truth = truth_vector();
  double sum = 0.0;
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    sum += std::abs(add_noise(truth, p, t, spec).value[I::ToMarkingML] - 2.0);
  }
  const double expected = 0.2 * std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(sum / n, expected, 0.03 * expected);
  EXPECT_NEAR(expected, 0.1596, 1e-4);
}

TEST(Noisy, DistanceNoiseUsesTheRangeBand) {
  NoiseProfile p;
  p.sigma_near = 1.0;
  p.sigma_far = 4.0;
  const auto spec = NormalizationSpec::defaults();
  const auto truth = truth_vector();
  double near = 0.0, far = 0.0;
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    const auto e = add_noise(truth, p, t, spec).value;
    near += std::abs(e[I::DistMM] - 20.0);
    far += std::abs(e[I::DistLL] - 45.0);
  }
  const double k = std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(near / n, 1.0 * k, 0.03 * k);
  EXPECT_NEAR(far / n, 4.0 * k, 0.03 * 4.0 * k);
}

TEST(Noisy, FullMissRateDropsEveryFarCar) {
  NoiseProfile p;
  p.miss_rate_far = 1.0;
  const auto spec = NormalizationSpec::defaults();
  for (int t = 0; t < 100; ++t) {
    const auto e = add_noise(truth_vector(), p, t, spec).value;
    EXPECT_FALSE(e.is_active(I::DistLL));
    EXPECT_TRUE(e.is_active(I::DistMM));
  }
}

TEST(Noisy, FalsePositivesAreUniformInTheFarBand) {
  NoiseProfile p;
  p.false_positive_rate = 0.3;
  const auto spec = NormalizationSpec::defaults();
  int hits = 0;
  const int n = 20000;
  for (int t = 0; t < n; ++t) {
    const auto e = add_noise(truth_vector(), p, t, spec).value;
    if (e.is_active(I::DistRR)) {
      ++hits;
      EXPECT_GE(e[I::DistRR], 30.0);
      EXPECT_LE(e[I::DistRR], 60.0);
    }
    // The on-marking system is inactive, so its indicators stay inactive.
    EXPECT_FALSE(e.is_active(I::DistL));
  }
  EXPECT_NEAR(hits / static_cast<double>(n), 0.3, 0.02);
}

TEST(Noisy, DeterministicPerSeedAndTick) {
  NoiseProfile p;
  p.sigma_lane = 0.3;
  p.sigma_near = 2.0;
  p.seed = 11;
  const auto spec = NormalizationSpec::defaults();
  EXPECT_EQ(add_noise(truth_vector(), p, 42, spec).value, add_noise(truth_vector(), p, 42, spec).value);
  EXPECT_NE(add_noise(truth_vector(), p, 42, spec).value, add_noise(truth_vector(), p, 43, spec).value);
  NoiseProfile q = p;
  q.seed = 12;
  EXPECT_NE(add_noise(truth_vector(), p, 42, spec).value, add_noise(truth_vector(), q, 42, spec).value);
}

TEST(Noisy, ValuesStayInsideTheirRanges) {
  NoiseProfile p;
  p.sigma_lane = 5.0;
  p.sigma_angle = 1.0;
  p.sigma_near = 50.0;
  p.sigma_far = 50.0;
  const auto spec = NormalizationSpec::defaults();
  for (int t = 0; t < 2000; ++t) {
    const auto e = add_noise(truth_vector(), p, t, spec).value;
    EXPECT_NO_THROW(normalize(e, spec));
  }
}

TEST(Noisy, ProfileValidation) {
  NoiseProfile p;
  p.sigma_lane = -1.0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.miss_rate_far = 1.5;
  EXPECT_THROW(p.validate(), Error);
}

TEST(Learned, ZeroModelDecodesAtTheMidpoint) {
  // Logistic output of a zero network is 0.5 on every indicator.
  const auto model = MlpModel::zeros({64 * 48, 8, 13});
  const Raster raster(64, 48, 0.3f);
  const auto spec = NormalizationSpec::defaults();
  const auto est = perceive_learned(raster, model, spec);
  EXPECT_EQ(est.source, EstimateSource::Learned);
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const auto& r = spec.ranges[k];
    EXPECT_TRUE(est.value.active[k]);
    EXPECT_NEAR(est.value.value[k], 0.5 * (r.lo + r.sentinel), 1e-12);
  }
}

TEST(Learned, ShapeMismatchAndDeterminism) {
  const auto model = MlpModel::random({64 * 48, 16, 13}, 5);
  const auto spec = NormalizationSpec::defaults();
  EXPECT_EQ(test::error_code_of([&] { perceive_learned(Raster(32, 24), model, spec); }),
            ErrorCode::ShapeMismatch);
  Raster raster(64, 48);
  for (std::size_t i = 0; i < raster.pixels.size(); ++i) raster.pixels[i] = static_cast<float>(i % 7) / 7.0f;
  EXPECT_EQ(perceive_learned(raster, model, spec).value, perceive_learned(raster, model, spec).value);
}

TEST(Noisy, ClosedLoopToleratesFalsePositives) {
  auto sc = load_scenario(test::data_path("scenarios/highway_2lane.scn"));
  sc.perceiver = EstimateSource::Noisy;
  sc.noise.false_positive_rate = 0.05;
  sc.noise.seed = 1;
  sc.finalize();
  DriveOptions opt;
  opt.duration = 120.0;
  DriveResult r;
  ASSERT_NO_THROW(r = run_drive(sc, 1, opt));
  EXPECT_EQ(r.log.size(), 1200u);
}

TEST(Oracle, ClosedLoopHasZeroMae) {
  auto sc = load_scenario(test::data_path("scenarios/highway_3lane.scn"));
  DriveOptions opt;
  opt.duration = 60.0;
  opt.keep_pairs = true;
  const auto r = run_drive(sc, 0, opt);
  ASSERT_FALSE(r.pairs.empty());
  for (const auto& [estimate, truth] : r.pairs) EXPECT_EQ(estimate, truth);
}
