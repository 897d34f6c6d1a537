#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

#include "dpd/affordance.hpp"
#include "dpd/learning.hpp"
#include "dpd/rendering.hpp"

namespace dpd {

enum class EstimateSource { Oracle, Noisy, Learned };

std::string_view to_string(EstimateSource source);
std::optional<EstimateSource> parse_estimate_source(std::string_view text);

struct AffordanceEstimate {
  AffordanceVector value;
  EstimateSource source = EstimateSource::Oracle;
};

struct NoiseProfile {
  double sigma_lane = 0.0;   // m, every toMarking indicator
  double sigma_angle = 0.0;  // rad
  double sigma_near = 0.0;   // m, dist indicators with a truth gap below near_range
  double sigma_far = 0.0;    // m, beyond near_range
  double near_range = 30.0;
  double miss_rate_far = 0.0;
  double false_positive_rate = 0.0;
  double fp_min = 30.0;      // false positives are uniform in [fp_min, max_range]
  std::uint64_t seed = 0;

  void validate() const;
};

AffordanceEstimate perceive_oracle(const WorldState& world, int ego_id,
                                   const AffordanceConfig& config = {});

// Corrupts a ground-truth vector. Draws depend only on (profile.seed, tick).
AffordanceEstimate add_noise(const AffordanceVector& truth, const NoiseProfile& profile,
                             std::int64_t tick, const NormalizationSpec& ranges);

AffordanceEstimate perceive_noisy(const WorldState& world, int ego_id, const NoiseProfile& profile,
                                  const AffordanceConfig& config = {});

AffordanceEstimate perceive_learned(const Raster& raster, const MlpModel& model,
                                    const NormalizationSpec& spec);

class Perceiver {
 public:
  virtual ~Perceiver() = default;
  virtual AffordanceEstimate perceive(const WorldState& world, int ego_id) = 0;
  virtual EstimateSource source() const = 0;
};

class OraclePerceiver : public Perceiver {
 public:
  explicit OraclePerceiver(AffordanceConfig config = {}) : config_(config) {}
  AffordanceEstimate perceive(const WorldState& world, int ego_id) override;
  EstimateSource source() const override { return EstimateSource::Oracle; }

 private:
  AffordanceConfig config_;
};

class NoisyPerceiver : public Perceiver {
 public:
  NoisyPerceiver(NoiseProfile profile, AffordanceConfig config = {});
  AffordanceEstimate perceive(const WorldState& world, int ego_id) override;
  EstimateSource source() const override { return EstimateSource::Noisy; }

 private:
  NoiseProfile profile_;
  AffordanceConfig config_;
};

class LearnedPerceiver : public Perceiver {
 public:
  LearnedPerceiver(MlpModel model, CameraModel camera = {}, RenderStyle style = {});
  AffordanceEstimate perceive(const WorldState& world, int ego_id) override;
  EstimateSource source() const override { return EstimateSource::Learned; }

 private:
  MlpModel model_;
  CameraModel camera_;
  RenderStyle style_;
};

}  // namespace dpd
