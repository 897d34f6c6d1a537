#include "dpd/perception.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dpd/errors.hpp"

namespace dpd {

std::string_view to_string(EstimateSource source) {
  switch (source) {
    case EstimateSource::Oracle: return "oracle";
    case EstimateSource::Noisy: return "noisy";
    case EstimateSource::Learned: return "learned";
  }
  return "oracle";
}

std::optional<EstimateSource> parse_estimate_source(std::string_view text) {
  for (auto s : {EstimateSource::Oracle, EstimateSource::Noisy, EstimateSource::Learned}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

void NoiseProfile::validate() const {
  const bool ok = sigma_lane >= 0.0 && sigma_angle >= 0.0 && sigma_near >= 0.0 && sigma_far >= 0.0 &&
                  miss_rate_far >= 0.0 && miss_rate_far <= 1.0 && false_positive_rate >= 0.0 &&
                  false_positive_rate <= 1.0 && near_range > 0.0 && fp_min >= 0.0;
  if (!ok) throw Error(ErrorCode::ConfigError, "noise sigmas must be >= 0 and rates within [0, 1]");
}

AffordanceEstimate perceive_oracle(const WorldState& world, int ego_id, const AffordanceConfig& config) {
  return {compute_affordance(world, ego_id, config), EstimateSource::Oracle};
}

AffordanceEstimate add_noise(const AffordanceVector& truth, const NoiseProfile& p, std::int64_t tick,
                             const NormalizationSpec& ranges) {
  std::seed_seq seq{static_cast<std::uint32_t>(p.seed), static_cast<std::uint32_t>(p.seed >> 32),
                    static_cast<std::uint32_t>(tick), static_cast<std::uint32_t>(static_cast<std::uint64_t>(tick) >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  AffordanceVector out = truth;
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const Indicator ind = indicator_at(k);
    // Fixed draw count per indicator keeps every stream aligned across frames.
    const double z = gauss(rng);
    const double u_miss = unit(rng);
    const double u_fp = unit(rng);
    const double u_fp_value = unit(rng);
    const auto& r = ranges.ranges[k];

    if (!is_distance(ind)) {
      if (!truth.active[k]) continue;
      const double sigma = ind == Indicator::Angle ? p.sigma_angle : p.sigma_lane;
      out.value[k] = std::clamp(truth.value[k] + sigma * z, r.lo, r.hi);
      continue;
    }
    const bool system_active = in_lane_system(ind) ? truth.in_lane_active() : truth.on_marking_active();
    if (!system_active) continue;
    const double max_range = r.hi;
    if (truth.active[k]) {
      const double gap = truth.value[k];
      if (gap >= p.near_range && u_miss < p.miss_rate_far) {
        out.deactivate(ind);
        continue;
      }
      const double sigma = gap < p.near_range ? p.sigma_near : p.sigma_far;
      out.value[k] = std::clamp(gap + sigma * z, 1e-3, max_range);
    } else if (u_fp < p.false_positive_rate) {
      out.set(ind, p.fp_min + (max_range - p.fp_min) * u_fp_value);
    }
  }
  return {out, EstimateSource::Noisy};
}

AffordanceEstimate perceive_noisy(const WorldState& world, int ego_id, const NoiseProfile& profile,
                                  const AffordanceConfig& config) {
  const auto truth = compute_affordance(world, ego_id, config);
  const auto ranges = NormalizationSpec::defaults(world.track->lane_width(), config.max_range);
  auto est = add_noise(truth, profile, world.tick, ranges);
  return est;
}

AffordanceEstimate perceive_learned(const Raster& raster, const MlpModel& model,
                                    const NormalizationSpec& spec) {
  if (static_cast<int>(raster.pixels.size()) != model.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "raster has " + std::to_string(raster.pixels.size()) +
                                              " pixels, model expects " +
                                              std::to_string(model.input_size()));
  }
  const Eigen::VectorXd y = forward(model, raster.pixels);
  return {denormalize(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), spec),
          EstimateSource::Learned};
}

AffordanceEstimate OraclePerceiver::perceive(const WorldState& world, int ego_id) {
  return perceive_oracle(world, ego_id, config_);
}

NoisyPerceiver::NoisyPerceiver(NoiseProfile profile, AffordanceConfig config)
    : profile_(profile), config_(config) {
  profile_.validate();
}

AffordanceEstimate NoisyPerceiver::perceive(const WorldState& world, int ego_id) {
  return perceive_noisy(world, ego_id, profile_, config_);
}

LearnedPerceiver::LearnedPerceiver(MlpModel model, CameraModel camera, RenderStyle style)
    : model_(std::move(model)), camera_(camera), style_(style) {
  model_.validate();
  if (camera_.width * camera_.height_px != model_.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "camera raster size does not match the model input");
  }
}

AffordanceEstimate LearnedPerceiver::perceive(const WorldState& world, int ego_id) {
  return perceive_learned(render_ego_view(world, ego_id, camera_, style_), model_, model_.spec);
}

}  // namespace dpd
