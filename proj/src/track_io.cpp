#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dpd/errors.hpp"
#include "dpd/track.hpp"
#include "text_lines.hpp"

namespace dpd {

using detail::parse_fail;
using detail::to_bool;
using detail::to_double;
using detail::to_int;

TrackGeometry parse_track(std::string_view text, std::string_view source) {
  std::string name;
  bool closed = false;
  int closed_line = 0;
  double lane_width = 4.0;
  std::vector<Segment> segments;
  std::vector<LaneSection> lanes;
  std::vector<int> lane_lines;
  double station = 0.0;
  std::vector<double> boundaries{0.0};

  for (const auto& line : detail::tokenize_lines(text)) {
    const auto& t = line.tokens;
    const int n = line.number;
    if (t.size() >= 2 && t[1] == "=") {
      if (t.size() != 3) parse_fail(source, n, "expected 'key = value'");
      if (t[0] == "name") {
        name = t[2];
      } else if (t[0] == "closed") {
        closed = to_bool(source, n, t[2]);
        closed_line = n;
      } else if (t[0] == "lane_width") {
        lane_width = to_double(source, n, t[2]);
        if (!(lane_width > 2.0 * kDefaultCarWidth)) {
          parse_fail(source, n, "lane_width must exceed twice the car width (3.6 m)");
        }
      } else {
        parse_fail(source, n, "unknown key '" + t[0] + "'");
      }
      continue;
    }

    const std::string& kind = t[0];
    Segment seg;
    if (kind == "straight") {
      if (t.size() != 2) parse_fail(source, n, "usage: straight <length_m>");
      seg = {SegmentKind::Straight, to_double(source, n, t[1]), 0.0};
    } else if (kind == "arc") {
      if (t.size() != 3) parse_fail(source, n, "usage: arc <length_m> <curvature_per_m>");
      seg = {SegmentKind::Arc, to_double(source, n, t[1]), to_double(source, n, t[2])};
      if (seg.curvature == 0.0) parse_fail(source, n, "arc curvature must be nonzero");
    } else if (kind == "turn") {
      if (t.size() != 3) parse_fail(source, n, "usage: turn <radius_m> <angle_deg>");
      const double radius = to_double(source, n, t[1]);
      const double deg = to_double(source, n, t[2]);
      if (!(radius > 0.0)) parse_fail(source, n, "turn radius must be positive");
      if (deg == 0.0) parse_fail(source, n, "turn angle must be nonzero");
      const double rad = deg * std::numbers::pi / 180.0;
      seg = {SegmentKind::Arc, radius * std::abs(rad), (deg > 0.0 ? 1.0 : -1.0) / radius};
    } else if (kind == "lanes") {
      if (t.size() != 3) parse_fail(source, n, "usage: lanes <start_station_m> <count>");
      const double s0 = to_double(source, n, t[1]);
      const long long count = to_int(source, n, t[2]);
      if (count < 1 || count > 3) parse_fail(source, n, "lane count must be 1, 2 or 3");
      lanes.push_back({s0, static_cast<int>(count)});
      lane_lines.push_back(n);
      continue;
    } else {
      parse_fail(source, n, "unknown directive '" + kind + "'");
    }
    if (!(seg.length > 0.0) || !std::isfinite(seg.length)) {
      parse_fail(source, n, "segment length must be positive");
    }
    segments.push_back(seg);
    station += seg.length;
    boundaries.push_back(station);
  }

  if (segments.empty()) parse_fail(source, 0, "track defines no segments");
  if (lanes.empty()) parse_fail(source, 0, "track defines no 'lanes' section");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    bool ok = false;
    for (double b : boundaries) ok = ok || std::abs(b - lanes[i].start_station) < 1e-6;
    if (!ok || lanes[i].start_station >= station) {
      parse_fail(source, lane_lines[i], "lane section must start at a segment boundary");
    }
    if (i == 0 && lanes[i].start_station != 0.0) {
      parse_fail(source, lane_lines[i], "first lane section must start at station 0");
    }
    if (i > 0 && !(lanes[i].start_station > lanes[i - 1].start_station)) {
      parse_fail(source, lane_lines[i], "lane sections must be listed in increasing station");
    }
  }

  try {
    return TrackGeometry(std::move(segments), closed, std::move(lanes), lane_width, name);
  } catch (const Error& e) {
    std::ostringstream os;
    os << source << ":" << closed_line << ": " << e.what();
    throw Error(ErrorCode::InvalidTrack, os.str());
  }
}

TrackGeometry load_track(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open track file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_track(ss.str(), path.string());
}

}  // namespace dpd
