#pragma once

#include <cstddef>
#include <vector>

#include "dpd/affordance.hpp"
#include "dpd/simulation.hpp"

namespace dpd {

// Forward-looking pinhole camera at the ego's center, zero pitch. Image
// coordinates are continuous; pixel (col, row) covers [col, col+1) x [row, row+1).
struct CameraModel {
  double height = 1.5;  // m above ground
  double focal = 40.0;  // px
  double cu = 32.0;
  double cv = 14.0;     // horizon row
  int width = 64;
  int height_px = 48;

  void validate() const;
  bool operator==(const CameraModel&) const = default;
};

struct RenderStyle {
  float background = 0.0f;
  float road = 0.3f;
  float marking = 1.0f;
  float car = 0.7f;
  double marking_width = 0.15;  // m
  double car_height = 1.5;      // m
  double max_depth = 80.0;      // m, nothing is drawn beyond this
  int supersample = 3;          // samples per pixel along each axis
};

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // row-major, intensities in [0, 1]

  Raster() = default;
  Raster(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  float at(int col, int row) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  float& at(int col, int row) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  bool operator==(const Raster&) const = default;
};

// Ground point in the camera frame: x right-positive, y forward.
struct GroundPoint {
  double x = 0.0;
  double y = 0.0;
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

GroundPoint project_to_ground(PixelPoint pixel, const CameraModel& cam);
PixelPoint project_to_image(GroundPoint ground, const CameraModel& cam);

// Position of a world point relative to the ego camera.
GroundPoint to_camera_frame(const Pose& ego, Vec2 world);

Raster render_ego_view(const WorldState& world, int ego_id, const CameraModel& cam = {},
                       const RenderStyle& style = {});

// Image-space box of a traffic car's rear face.
struct CarBox {
  int car_id = 0;
  double u_min = 0.0, u_max = 0.0;
  double v_min = 0.0, v_max = 0.0;  // v_max is the lower edge (ground contact)
  double depth = 0.0;
};

// Rear-face boxes of all visible traffic cars, farthest first.
std::vector<CarBox> car_boxes(const WorldState& world, int ego_id, const CameraModel& cam = {},
                              const RenderStyle& style = {});

// Projection baseline for the closest-car-per-area task: each box's lower
// edge midpoint is back-projected onto the ground plane.
AreaCars area_cars_from_boxes(const std::vector<CarBox>& boxes, const CameraModel& cam,
                              const AreaPartition& partition = {});

}  // namespace dpd
