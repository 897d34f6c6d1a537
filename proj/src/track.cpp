#include "dpd/track.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "dpd/errors.hpp"

namespace dpd {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kTieTolerance = 1e-9;
constexpr double kClosureTolerance = 1e-6;

Vec2 unit(double heading) { return {std::cos(heading), std::sin(heading)}; }

Pose advance(const Pose& start, const Segment& seg, double t) {
  if (seg.kind == SegmentKind::Straight) {
    return {start.position + t * unit(start.heading), start.heading};
  }
  const double k = seg.curvature;
  const double h = start.heading + k * t;
  const Vec2 delta{(std::sin(h) - std::sin(start.heading)) / k,
                   (std::cos(start.heading) - std::cos(h)) / k};
  return {start.position + delta, h};
}

double wrap_positive(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidTrack, what); }

}  // namespace

double wrap_angle(double a) {
  if (a >= -std::numbers::pi && a <= std::numbers::pi) return a;
  return std::remainder(a, kTwoPi);
}

TrackGeometry::TrackGeometry(std::vector<Segment> segments, bool closed,
                             std::vector<LaneSection> lanes, double lane_width, std::string name)
    : segments_(std::move(segments)),
      lanes_(std::move(lanes)),
      closed_(closed),
      lane_width_(lane_width),
      name_(std::move(name)) {
  if (segments_.empty()) invalid("track has no segments");
  if (!(lane_width_ > 2.0 * kDefaultCarWidth) || !std::isfinite(lane_width_)) {
    std::ostringstream os;
    os << "lane_width " << lane_width_ << " must exceed twice the car width ("
       << 2.0 * kDefaultCarWidth << ")";
    invalid(os.str());
  }

  Pose pose{};
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& s = segments_[i];
    if (!(s.length > 0.0) || !std::isfinite(s.length)) {
      invalid("segment " + std::to_string(i) + " has non-positive length");
    }
    if (s.kind == SegmentKind::Straight && s.curvature != 0.0) {
      invalid("straight segment " + std::to_string(i) + " has nonzero curvature");
    }
    if (s.kind == SegmentKind::Arc && (s.curvature == 0.0 || !std::isfinite(s.curvature))) {
      invalid("arc segment " + std::to_string(i) + " needs a finite nonzero curvature");
    }
    starts_.push_back(total_length_);
    start_poses_.push_back(pose);
    pose = advance(pose, s, s.length);
    total_length_ += s.length;
  }

  if (lanes_.empty()) invalid("lane profile is empty");
  if (lanes_.front().start_station != 0.0) invalid("lane profile must start at station 0");
  for (std::size_t i = 0; i < lanes_.size(); ++i) {
    const LaneSection& l = lanes_[i];
    if (l.lane_count < 1 || l.lane_count > 3) {
      invalid("lane_count must be 1..3 (section " + std::to_string(i) + ")");
    }
    if (i > 0 && !(l.start_station > lanes_[i - 1].start_station)) {
      invalid("lane sections must have increasing start stations");
    }
    if (l.start_station >= total_length_) invalid("lane section starts beyond track end");
    const bool at_boundary = std::any_of(starts_.begin(), starts_.end(), [&](double s0) {
      return std::abs(s0 - l.start_station) < 1e-6;
    });
    if (!at_boundary) {
      invalid("lane count changes must coincide with a segment boundary (station " +
              std::to_string(l.start_station) + ")");
    }
  }

  const double limit = 2.0 * max_lane_count() * lane_width_ / 2.0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& s = segments_[i];
    if (s.kind == SegmentKind::Arc && 1.0 / std::abs(s.curvature) <= limit) {
      invalid("arc segment " + std::to_string(i) + " radius must exceed " +
              std::to_string(limit) + " m (twice the road half-width)");
    }
  }

  if (closed_) {
    const double gap = std::hypot(pose.position.x, pose.position.y);
    const double turn = std::abs(wrap_angle(pose.heading));
    if (gap > kClosureTolerance || turn > kClosureTolerance) {
      std::ostringstream os;
      os << "closed track does not close: end position off by " << gap
         << " m, heading off by " << turn << " rad";
      invalid(os.str());
    }
  }
}

int TrackGeometry::max_lane_count() const {
  int n = 0;
  for (const auto& l : lanes_) n = std::max(n, l.lane_count);
  return n;
}

double TrackGeometry::wrap_station(double station) const {
  if (!closed_) return std::clamp(station, 0.0, total_length_);
  double s = std::fmod(station, total_length_);
  if (s < 0.0) s += total_length_;
  if (s >= total_length_) s = 0.0;
  return s;
}

int TrackGeometry::lane_count(double station) const {
  const double s = wrap_station(station);
  int n = lanes_.front().lane_count;
  for (const auto& l : lanes_) {
    if (l.start_station <= s) n = l.lane_count;
  }
  return n;
}

double TrackGeometry::half_width(double station) const {
  return lane_count(station) * lane_width_ / 2.0;
}

std::size_t TrackGeometry::segment_at(double station) const {
  const double s = wrap_station(station);
  auto it = std::upper_bound(starts_.begin(), starts_.end(), s);
  return static_cast<std::size_t>(std::distance(starts_.begin(), it)) - 1;
}

double TrackGeometry::curvature_at(double station) const {
  return segments_[segment_at(station)].curvature;
}

Pose TrackGeometry::centerline_pose(double station) const {
  const double s = wrap_station(station);
  const std::size_t i = segment_at(s);
  const double t = std::min(s - starts_[i], segments_[i].length);
  return advance(start_poses_[i], segments_[i], t);
}

Pose TrackGeometry::frame_to_pose(double station, double lateral, double angle) const {
  const Pose c = centerline_pose(station);
  const Vec2 left{-std::sin(c.heading), std::cos(c.heading)};
  return {c.position + lateral * left, wrap_angle(c.heading - angle)};
}

TrackGeometry::Candidate TrackGeometry::project_on_segment(std::size_t i, Vec2 p) const {
  const Segment& seg = segments_[i];
  const Pose& p0 = start_poses_[i];
  double t = 0.0;
  bool at_arc_center = false;
  if (seg.kind == SegmentKind::Straight) {
    t = std::clamp(dot(p - p0.position, unit(p0.heading)), 0.0, seg.length);
  } else {
    const double k = seg.curvature;
    const Vec2 left{-std::sin(p0.heading), std::cos(p0.heading)};
    const Vec2 center = p0.position + (1.0 / k) * left;
    const Vec2 r = p - center;
    const Vec2 r0 = p0.position - center;
    at_arc_center = std::hypot(r.x, r.y) <= kTieTolerance;
    const double phi = std::atan2(r.y, r.x);
    const double phi0 = std::atan2(r0.y, r0.x);
    const double delta = wrap_positive(k > 0.0 ? phi - phi0 : phi0 - phi);
    const double span = std::abs(k) * seg.length;
    if (delta <= span) {
      t = std::min(delta / std::abs(k), seg.length);
    } else {
      t = (delta - span < kTwoPi - delta) ? seg.length : 0.0;
    }
  }

  const Pose q = advance(p0, seg, t);
  const Vec2 tangent = unit(q.heading);
  const Vec2 d = p - q.position;
  Candidate c{};
  c.station = starts_[i] + t;
  c.lateral = cross(tangent, d);
  c.distance = std::hypot(d.x, d.y);
  c.tangent = q.heading;
  c.point = q.position;
  c.overshoot = 0.0;
  if (!closed_) {
    const double along = dot(tangent, d);
    if (i == 0 && t == 0.0 && along < 0.0) c.overshoot = -along;
    if (i + 1 == segments_.size() && t == seg.length && along > 0.0) c.overshoot = along;
  }
  if (closed_ && c.station >= total_length_) c.station -= total_length_;
  // Every point of the arc is equally near its center.
  if (at_arc_center) c.overshoot = std::numeric_limits<double>::quiet_NaN();
  return c;
}

TrackGeometry::Candidate TrackGeometry::nearest(const Pose& pose) const {
  Candidate best{};
  best.distance = std::numeric_limits<double>::infinity();
  bool ambiguous = false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Candidate c = project_on_segment(i, pose.position);
    if (c.distance < best.distance - kTieTolerance) {
      best = c;
      ambiguous = false;
    } else if (std::abs(c.distance - best.distance) <= kTieTolerance) {
      const Vec2 sep = c.point - best.point;
      if (std::hypot(sep.x, sep.y) > 1e-6) ambiguous = true;
      if (c.station < best.station) best = c;
    }
  }
  // Signal ambiguity through a NaN overshoot; callers that check bounds
  // translate it into an error.
  if (ambiguous) best.overshoot = std::numeric_limits<double>::quiet_NaN();
  return best;
}

LaneFrame TrackGeometry::project(const Pose& pose) const {
  const Candidate c = nearest(pose);
  LaneFrame f;
  f.station = c.station;
  f.lateral = c.lateral;
  f.angle = wrap_angle(c.tangent - pose.heading);
  f.curvature = curvature_at(c.station);
  f.lane_index = lane_index_at(c.station, c.lateral);
  return f;
}

LaneFrame TrackGeometry::pose_to_lane_frame(const Pose& pose) const {
  const Candidate c = nearest(pose);
  if (std::isnan(c.overshoot)) {
    throw Error(ErrorCode::AmbiguousProjection,
                "pose is equidistant from two distinct centerline points");
  }
  if (c.overshoot > kTieTolerance || (!closed_ && c.station >= total_length_)) {
    throw Error(ErrorCode::OffTrack, "pose lies beyond the end of an open track");
  }
  const double bound = 2.0 * half_width(c.station);
  if (std::abs(c.lateral) > bound) {
    std::ostringstream os;
    os << "lateral offset " << c.lateral << " m exceeds bound " << bound << " m";
    throw Error(ErrorCode::OffTrack, os.str());
  }
  LaneFrame f;
  f.station = c.station;
  f.lateral = c.lateral;
  f.angle = wrap_angle(c.tangent - pose.heading);
  f.curvature = curvature_at(c.station);
  f.lane_index = lane_index_at(c.station, c.lateral);
  return f;
}

double TrackGeometry::lane_center_lateral(double station, int lane_index) const {
  const int n = lane_count(station);
  if (lane_index < 0 || lane_index >= n) {
    throw Error(ErrorCode::InvalidLane, "lane " + std::to_string(lane_index) +
                                            " does not exist (lane_count " + std::to_string(n) +
                                            ")");
  }
  return ((n - 1) / 2.0 - lane_index) * lane_width_;
}

std::vector<double> TrackGeometry::marking_laterals(double station) const {
  const int n = lane_count(station);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  const double left = n * lane_width_ / 2.0;
  for (int j = 0; j <= n; ++j) out.push_back(left - j * lane_width_);
  return out;
}

std::optional<int> TrackGeometry::lane_index_at(double station, double lateral) const {
  const int n = lane_count(station);
  const double hw = n * lane_width_ / 2.0;
  if (!(std::abs(lateral) <= hw)) return std::nullopt;
  const int idx = static_cast<int>(std::floor((hw - lateral) / lane_width_));
  return std::clamp(idx, 0, n - 1);
}

double TrackGeometry::forward_gap(double from_station, double to_station) const {
  const double d = to_station - from_station;
  if (closed_) return d < 0.0 ? d + total_length_ : d;
  return d < 0.0 ? std::numeric_limits<double>::infinity() : d;
}

TrackGeometry make_oval_track(double straight_length, double radius, int lanes, double lane_width,
                              std::string name) {
  const double k = 1.0 / radius;
  const double arc = std::numbers::pi * radius;
  std::vector<Segment> segs{{SegmentKind::Straight, straight_length, 0.0},
                            {SegmentKind::Arc, arc, k},
                            {SegmentKind::Straight, straight_length, 0.0},
                            {SegmentKind::Arc, arc, k}};
  return TrackGeometry(std::move(segs), true, {{0.0, lanes}}, lane_width, std::move(name));
}

TrackGeometry make_straight_track(double length, int lanes, double lane_width, std::string name) {
  return TrackGeometry({{SegmentKind::Straight, length, 0.0}}, false, {{0.0, lanes}}, lane_width,
                       std::move(name));
}

}  // namespace dpd
