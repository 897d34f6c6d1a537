#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dpd {

// Default traffic/ego car footprint (meters).
inline constexpr double kDefaultCarLength = 4.5;
inline constexpr double kDefaultCarWidth = 1.8;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

struct Pose {
  Vec2 position;
  double heading = 0.0;  // radians, counterclockwise from +x
};

enum class SegmentKind { Straight, Arc };

struct Segment {
  SegmentKind kind = SegmentKind::Straight;
  double length = 0.0;     // meters, > 0
  double curvature = 0.0;  // 1/m, positive bends left; 0 for straights
};

struct LaneSection {
  double start_station = 0.0;
  int lane_count = 1;
};

// Lane-relative pose of a car.
//
// `lateral` is positive to the LEFT of the direction of travel. `angle` is
// the road tangent heading minus the car heading, wrapped to [-pi, pi]: it is
// positive when the road turns counterclockwise away from the car's nose,
// i.e. when the car must steer left to realign. This is the orientation the
// steering law consumes directly.
struct LaneFrame {
  double station = 0.0;
  double lateral = 0.0;
  double angle = 0.0;
  std::optional<int> lane_index;  // 0 = leftmost; empty when off-road
  double curvature = 0.0;
};

double wrap_angle(double a);

// Piecewise straight/arc centerline with a symmetric lane layout around it.
// Immutable after construction.
class TrackGeometry {
 public:
  TrackGeometry(std::vector<Segment> segments, bool closed, std::vector<LaneSection> lanes,
                double lane_width, std::string name = {});

  const std::string& name() const { return name_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<LaneSection>& lane_profile() const { return lanes_; }
  bool closed() const { return closed_; }
  double lane_width() const { return lane_width_; }
  double total_length() const { return total_length_; }
  int max_lane_count() const;

  int lane_count(double station) const;
  double half_width(double station) const;
  double curvature_at(double station) const;

  // Station normalized into [0, total_length) (closed) or clamped (open).
  double wrap_station(double station) const;

  Pose centerline_pose(double station) const;
  Pose frame_to_pose(double station, double lateral, double angle = 0.0) const;

  // Nearest-point projection with the OffTrack / AmbiguousProjection checks.
  LaneFrame pose_to_lane_frame(const Pose& pose) const;
  // Nearest-point projection with no bound checks; used by the simulator and
  // renderer where leaving the road is an observation, not a failure.
  LaneFrame project(const Pose& pose) const;

  double lane_center_lateral(double station, int lane_index) const;
  std::vector<double> marking_laterals(double station) const;
  std::optional<int> lane_index_at(double station, double lateral) const;

  // Forward distance along the travel direction. Wraps on closed tracks; on
  // open tracks a target behind the origin is +infinity (never ahead).
  double forward_gap(double from_station, double to_station) const;

 private:
  struct Candidate {
    double station;
    double lateral;
    double distance;
    double tangent;
    double overshoot;  // along-tangent excess beyond an open track end
    Vec2 point;
  };

  Candidate nearest(const Pose& pose) const;
  Candidate project_on_segment(std::size_t i, Vec2 p) const;
  std::size_t segment_at(double station) const;

  std::vector<Segment> segments_;
  std::vector<double> starts_;  // station of each segment start
  std::vector<Pose> start_poses_;
  std::vector<LaneSection> lanes_;
  bool closed_ = false;
  double lane_width_ = 0.0;
  double total_length_ = 0.0;
  std::string name_;
};

// Track definition files: see data/tracks/README.md for the schema.
TrackGeometry parse_track(std::string_view text, std::string_view source = "<string>");
TrackGeometry load_track(const std::filesystem::path& path);

// Closed stadium: straight, 180 deg left turn, straight, 180 deg left turn.
TrackGeometry make_oval_track(double straight_length, double radius, int lanes,
                              double lane_width = 4.0, std::string name = "oval");
TrackGeometry make_straight_track(double length, int lanes, double lane_width = 4.0,
                                  std::string name = "straight");

}  // namespace dpd
