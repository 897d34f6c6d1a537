#include "dpd/rendering.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dpd/errors.hpp"

namespace dpd {

void CameraModel::validate() const {
  if (!(focal > 0.0) || !(height > 0.0) || width <= 0 || height_px <= 0 || !(cu >= 0.0) ||
      !(cu < width) || !(cv >= 0.0) || !(cv < height_px)) {
    throw Error(ErrorCode::ConfigError,
                "camera needs focal > 0, height > 0 and a principal point inside the image");
  }
}

GroundPoint project_to_ground(PixelPoint pixel, const CameraModel& cam) {
  if (!(pixel.v > cam.cv)) {
    std::ostringstream os;
    os << "pixel row " << pixel.v << " is at or above the horizon row " << cam.cv;
    throw Error(ErrorCode::AboveHorizon, os.str());
  }
  const double y = cam.focal * cam.height / (pixel.v - cam.cv);
  return {(pixel.u - cam.cu) * y / cam.focal, y};
}

PixelPoint project_to_image(GroundPoint g, const CameraModel& cam) {
  if (!(g.y > 0.0)) throw Error(ErrorCode::PreconditionViolated, "ground point must lie ahead");
  return {cam.cu + cam.focal * g.x / g.y, cam.cv + cam.focal * cam.height / g.y};
}

GroundPoint to_camera_frame(const Pose& ego, Vec2 world) {
  const Vec2 d = world - ego.position;
  const Vec2 fwd{std::cos(ego.heading), std::sin(ego.heading)};
  return {-cross(fwd, d), dot(fwd, d)};
}

std::vector<CarBox> car_boxes(const WorldState& world, int ego_id, const CameraModel& cam,
                              const RenderStyle& style) {
  const CarState& ego = world.car(ego_id);
  std::vector<CarBox> boxes;
  for (const auto& car : world.cars) {
    if (car.id == ego.id) continue;
    const Vec2 heading{std::cos(car.pose.heading), std::sin(car.pose.heading)};
    const Vec2 rear = car.pose.position - (car.length / 2.0) * heading;
    const GroundPoint g = to_camera_frame(ego.pose, rear);
    if (g.y < 1.0 || g.y > style.max_depth) continue;
    CarBox b;
    b.car_id = car.id;
    b.depth = g.y;
    b.u_min = cam.cu + cam.focal * (g.x - car.width / 2.0) / g.y;
    b.u_max = cam.cu + cam.focal * (g.x + car.width / 2.0) / g.y;
    b.v_min = cam.cv + cam.focal * (cam.height - style.car_height) / g.y;
    b.v_max = cam.cv + cam.focal * cam.height / g.y;
    if (b.u_max < 0.0 || b.u_min > cam.width || b.v_min > cam.height_px) continue;
    boxes.push_back(b);
  }
  std::sort(boxes.begin(), boxes.end(), [](const CarBox& a, const CarBox& b) {
    return a.depth != b.depth ? a.depth > b.depth : a.car_id < b.car_id;
  });
  return boxes;
}

Raster render_ego_view(const WorldState& world, int ego_id, const CameraModel& cam,
                       const RenderStyle& style) {
  cam.validate();
  if (style.supersample < 1 || style.supersample > 16) {
    throw Error(ErrorCode::ConfigError, "render supersample must lie in [1, 16]");
  }
  const TrackGeometry& track = *world.track;
  const CarState& ego = world.car(ego_id);
  Raster img(cam.width, cam.height_px, style.background);
  const Vec2 fwd{std::cos(ego.pose.heading), std::sin(ego.pose.heading)};
  const Vec2 left{-fwd.y, fwd.x};

  // Each pixel averages an s x s grid of ground samples, so edges that fall
  // inside a pixel shift its intensity.
  const int s = style.supersample;
  const float weight = 1.0f / static_cast<float>(s * s);
  auto ground_value = [&](double u, double v) -> float {
    if (v <= cam.cv) return style.background;
    const double y = cam.focal * cam.height / (v - cam.cv);
    if (y > style.max_depth) return style.background;
    // Stripes are at least one pixel wide so distant markings never break up;
    // the slack keeps a stripe centered on a pixel boundary from vanishing.
    const double half_stripe = std::max(style.marking_width, y / cam.focal) / 2.0 + 1e-9;
    const double x = (u - cam.cu) * y / cam.focal;
    const Vec2 p = ego.pose.position + y * fwd - x * left;
    const LaneFrame f = track.project({p, ego.pose.heading});
    if (std::abs(f.lateral) > track.half_width(f.station) + half_stripe) return style.background;
    for (double m : track.marking_laterals(f.station)) {
      if (std::abs(f.lateral - m) <= half_stripe) return style.marking;
    }
    return style.road;
  };
  for (int row = 0; row < cam.height_px; ++row) {
    if (row + 1 <= cam.cv) continue;
    for (int col = 0; col < cam.width; ++col) {
      float sum = 0.0f;
      for (int i = 0; i < s; ++i) {
        const double v = row + (i + 0.5) / s;
        for (int j = 0; j < s; ++j) sum += ground_value(col + (j + 0.5) / s, v);
      }
      img.at(col, row) = sum * weight;
    }
  }

  for (const auto& b : car_boxes(world, ego_id, cam, style)) {
    // Blend by pixel coverage; boxes thinner than a pixel are widened to one.
    double u0 = b.u_min, u1 = b.u_max, v0 = b.v_min, v1 = b.v_max;
    if (u1 - u0 < 1.0) u0 = (u0 + u1) / 2.0 - 0.5, u1 = u0 + 1.0;
    if (v1 - v0 < 1.0) v0 = v1 - 1.0;
    const int c0 = std::max(0, static_cast<int>(std::floor(u0)));
    const int c1 = std::min(cam.width - 1, static_cast<int>(std::ceil(u1)) - 1);
    const int r0 = std::max(0, static_cast<int>(std::floor(v0)));
    const int r1 = std::min(cam.height_px - 1, static_cast<int>(std::ceil(v1)) - 1);
    for (int r = r0; r <= r1; ++r) {
      const double cover_v = std::min<double>(r + 1, v1) - std::max<double>(r, v0);
      for (int c = c0; c <= c1; ++c) {
        const double cover = cover_v * (std::min<double>(c + 1, u1) - std::max<double>(c, u0));
        float& px = img.at(c, r);
        px += static_cast<float>(cover) * (style.car - px);
      }
    }
  }
  return img;
}

AreaCars area_cars_from_boxes(const std::vector<CarBox>& boxes, const CameraModel& cam,
                              const AreaPartition& partition) {
  AreaCars out;
  for (const auto& b : boxes) {
    if (!(b.v_max > cam.cv)) continue;
    const GroundPoint g = project_to_ground({(b.u_min + b.u_max) / 2.0, b.v_max}, cam);
    if (!(g.y > 0.0 && g.y <= partition.max_y)) continue;
    const auto area = area_of(g.x, partition);
    if (!area) continue;
    auto& slot = out[static_cast<std::size_t>(*area)];
    if (!slot || g.y < slot->y) slot = CarXY{g.x, g.y};
  }
  return out;
}

}  // namespace dpd
