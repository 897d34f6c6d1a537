#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dpd/errors.hpp"
#include "dpd/track.hpp"

using namespace dpd;

namespace {

constexpr double kPi = std::numbers::pi;

TrackGeometry circle_track(double radius, int lanes) {
  return TrackGeometry({{SegmentKind::Arc, 2.0 * kPi * radius, 1.0 / radius}}, true,
                       {{0.0, lanes}}, 4.0, "circle");
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no dpd::Error thrown";
  return ErrorCode::PreconditionViolated;
}

}  // namespace

TEST(Track, CenterlinePoseProjectsToZeroLateralAndAngle) {
  const auto track = make_straight_track(1000.0, 3);
  const Pose p = track.frame_to_pose(100.0, 0.0);
  const LaneFrame f = track.pose_to_lane_frame(p);
  EXPECT_NEAR(f.station, 100.0, 1e-9);
  EXPECT_NEAR(f.lateral, 0.0, 1e-12);
  EXPECT_NEAR(f.angle, 0.0, 1e-12);
  EXPECT_EQ(f.lane_index, 1);
}

TEST(Track, LeftOffsetIsPositiveLateral) {
  const auto track = make_straight_track(1000.0, 3);
  const LaneFrame f = track.pose_to_lane_frame({{100.0, 1.5}, 0.0});
  EXPECT_NEAR(f.lateral, 1.5, 1e-12);
  EXPECT_NEAR(f.station, 100.0, 1e-12);
}

TEST(Track, LaneCenterLateralExamples) {
  const auto three = make_straight_track(100.0, 3);
  EXPECT_DOUBLE_EQ(three.lane_center_lateral(10.0, 0), 4.0);
  EXPECT_DOUBLE_EQ(three.lane_center_lateral(10.0, 1), 0.0);
  EXPECT_DOUBLE_EQ(three.lane_center_lateral(10.0, 2), -4.0);
  const auto two = make_straight_track(100.0, 2);
  EXPECT_DOUBLE_EQ(two.lane_center_lateral(10.0, 0), 2.0);
  EXPECT_DOUBLE_EQ(two.lane_center_lateral(10.0, 1), -2.0);
  EXPECT_EQ(code_of([&] { three.lane_center_lateral(10.0, 3); }), ErrorCode::InvalidLane);
  EXPECT_EQ(code_of([&] { three.lane_center_lateral(10.0, -1); }), ErrorCode::InvalidLane);
}

TEST(Track, MarkingLateralsAreEvenlySpaced) {
  for (int n = 1; n <= 3; ++n) {
    const auto track = make_straight_track(100.0, n);
    const auto m = track.marking_laterals(50.0);
    ASSERT_EQ(m.size(), static_cast<std::size_t>(n + 1));
    EXPECT_DOUBLE_EQ(m.front(), n * 2.0);
    EXPECT_DOUBLE_EQ(m.back(), -n * 2.0);
    for (std::size_t j = 1; j < m.size(); ++j) EXPECT_NEAR(m[j - 1] - m[j], 4.0, 1e-12);
  }
}

TEST(Track, LaneIndexAtBoundaries) {
  const auto track = make_straight_track(100.0, 3);
  EXPECT_EQ(track.lane_index_at(0.0, 5.9), 0);
  EXPECT_EQ(track.lane_index_at(0.0, 0.0), 1);
  EXPECT_EQ(track.lane_index_at(0.0, -5.9), 2);
  EXPECT_FALSE(track.lane_index_at(0.0, 6.1).has_value());
  EXPECT_FALSE(track.lane_index_at(0.0, -6.1).has_value());
}

TEST(Track, ForwardGapWrapsOnClosedTrack) {
  const auto oval = make_oval_track(600.0, 150.0, 2);
  const double L = oval.total_length();
  EXPECT_NEAR(L, 1200.0 + 2.0 * kPi * 150.0, 1e-9);
  EXPECT_NEAR(oval.forward_gap(L - 10.0, 5.0), 15.0, 1e-9);
  EXPECT_NEAR(oval.forward_gap(5.0, 20.0), 15.0, 1e-12);
  const auto open = make_straight_track(100.0, 1);
  EXPECT_TRUE(std::isinf(open.forward_gap(50.0, 10.0)));
}

TEST(Track, CircleMatchesAnalyticGeometry) {
  const double R = 80.0;
  const auto track = circle_track(R, 3);
  const Pose start = track.centerline_pose(0.0);
  const Vec2 center = start.position + R * Vec2{-std::sin(start.heading), std::cos(start.heading)};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> s_dist(0.0, track.total_length());
  std::uniform_real_distribution<double> l_dist(-5.5, 5.5);
  for (int i = 0; i < 2000; ++i) {
    const double s = s_dist(rng);
    const double l = l_dist(rng);
    const double theta = start.heading + s / R;
    // Counterclockwise circle: the left normal points at the center.
    const Vec2 on_circle = center + R * Vec2{std::sin(theta), -std::cos(theta)};
    const Vec2 expected = on_circle + l * Vec2{-std::sin(theta), std::cos(theta)};
    const Pose p = track.frame_to_pose(s, l);
    EXPECT_NEAR(p.position.x, expected.x, 1e-8);
    EXPECT_NEAR(p.position.y, expected.y, 1e-8);
    EXPECT_NEAR(wrap_angle(p.heading - theta), 0.0, 1e-9);

    const LaneFrame f = track.pose_to_lane_frame({expected, theta});
    EXPECT_NEAR(f.lateral, l, 1e-8);
    EXPECT_NEAR(std::remainder(f.station - s, track.total_length()), 0.0, 1e-7);
    EXPECT_NEAR(f.angle, 0.0, 1e-9);
    EXPECT_NEAR(f.curvature, 1.0 / R, 1e-15);
  }
}

TEST(Track, CircleCenterIsAmbiguous) {
  const double R = 80.0;
  const auto track = circle_track(R, 1);
  const Pose start = track.centerline_pose(0.0);
  const Vec2 center = start.position + R * Vec2{-std::sin(start.heading), std::cos(start.heading)};
  // Far off the road as well, but ambiguity is reported first.
  EXPECT_EQ(code_of([&] { track.pose_to_lane_frame({center, 0.0}); }),
            ErrorCode::AmbiguousProjection);

  const auto oval = make_oval_track(600.0, 150.0, 1);
  const Pose s0 = oval.centerline_pose(0.0);
  const Vec2 mid = s0.position + 300.0 * Vec2{std::cos(s0.heading), std::sin(s0.heading)} +
                   150.0 * Vec2{-std::sin(s0.heading), std::cos(s0.heading)};
  EXPECT_EQ(code_of([&] { oval.pose_to_lane_frame({mid, 0.0}); }), ErrorCode::AmbiguousProjection);
}

TEST(Track, OffTrackErrors) {
  const auto track = make_straight_track(100.0, 1);
  EXPECT_EQ(code_of([&] { track.pose_to_lane_frame({{50.0, 4.5}, 0.0}); }), ErrorCode::OffTrack);
  EXPECT_EQ(code_of([&] { track.pose_to_lane_frame({{-3.0, 0.0}, 0.0}); }), ErrorCode::OffTrack);
  EXPECT_EQ(code_of([&] { track.pose_to_lane_frame({{103.0, 0.0}, 0.0}); }), ErrorCode::OffTrack);
  // Within twice the half width is still a valid (off-road) projection.
  const LaneFrame f = track.pose_to_lane_frame({{50.0, 3.0}, 0.0});
  EXPECT_FALSE(f.lane_index.has_value());
}

TEST(Track, AngleSignMatchesRoadMinusCar) {
  const auto track = make_straight_track(100.0, 1);
  const LaneFrame f = track.pose_to_lane_frame({{50.0, 0.0}, -0.1});
  EXPECT_NEAR(f.angle, 0.1, 1e-12);
  const Pose back = track.frame_to_pose(50.0, 0.0, 0.1);
  EXPECT_NEAR(back.heading, -0.1, 1e-12);
}

TEST(Track, RoundTripProperty) {
  const auto track = make_oval_track(600.0, 150.0, 3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> s_dist(0.0, track.total_length());
  std::uniform_real_distribution<double> l_dist(-6.0, 6.0);
  std::uniform_real_distribution<double> a_dist(-1.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double s = s_dist(rng);
    const double l = l_dist(rng);
    const double a = a_dist(rng);
    const LaneFrame f = track.pose_to_lane_frame(track.frame_to_pose(s, l, a));
    const double ds = std::remainder(f.station - s, track.total_length());
    worst = std::max({worst, std::abs(ds), std::abs(f.lateral - l), std::abs(f.angle - a)});
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Track, ClosedTrackIsContinuousAtWrap) {
  const auto track = make_oval_track(600.0, 150.0, 2);
  const Pose a = track.centerline_pose(track.total_length() - 1e-7);
  const Pose b = track.centerline_pose(0.0);
  EXPECT_LT(std::hypot(a.position.x - b.position.x, a.position.y - b.position.y), 1e-6);
  EXPECT_NEAR(wrap_angle(a.heading - b.heading), 0.0, 1e-8);
}

TEST(Track, SegmentJoinsAreContinuous) {
  const auto track = make_oval_track(600.0, 150.0, 2);
  double s = 0.0;
  for (const auto& seg : track.segments()) {
    s += seg.length;
    const Pose a = track.centerline_pose(s - 1e-7);
    const Pose b = track.centerline_pose(s + 1e-7);
    EXPECT_LT(std::hypot(a.position.x - b.position.x, a.position.y - b.position.y), 1e-6);
  }
}

TEST(Track, LaneCountChangesAlongStation) {
  const TrackGeometry track({{SegmentKind::Straight, 100.0, 0.0}, {SegmentKind::Straight, 100.0, 0.0}},
                            false, {{0.0, 3}, {100.0, 2}}, 4.0);
  EXPECT_EQ(track.lane_count(50.0), 3);
  EXPECT_EQ(track.lane_count(150.0), 2);
  EXPECT_EQ(track.max_lane_count(), 3);
  EXPECT_DOUBLE_EQ(track.half_width(150.0), 4.0);
  EXPECT_EQ(track.marking_laterals(150.0).size(), 3u);
}

TEST(TrackParse, ParsesOvalFile) {
  const auto track = parse_track(R"(# comment
name = test
closed = true
lane_width = 4
lanes 0 2
straight 600
turn 150 180
straight 600
turn 150 180
)");
  EXPECT_EQ(track.name(), "test");
  EXPECT_TRUE(track.closed());
  EXPECT_EQ(track.max_lane_count(), 2);
  EXPECT_NEAR(track.total_length(), 1200.0 + 300.0 * kPi, 1e-9);
}

TEST(TrackParse, ErrorsCarryLineNumbers) {
  try {
    parse_track("closed = false\nlanes 0 1\nstraight -5\n", "t.track");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("t.track:3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([] { parse_track("lanes 0 4\nstraight 10\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_track("lanes 0 1\nwiggle 10\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_track("straight 10\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_track("lane_width = 3\nlanes 0 1\nstraight 10\n"); }),
            ErrorCode::ParseError);
}

TEST(TrackParse, ClosedTrackThatDoesNotCloseIsInvalid) {
  EXPECT_EQ(code_of([] { parse_track("closed = true\nlanes 0 1\nstraight 100\nturn 50 90\n"); }),
            ErrorCode::InvalidTrack);
}

TEST(TrackParse, ShippedTracksLoad) {
  for (const char* name : {"oval_1lane", "oval_2lane", "oval_3lane", "rect_3lane"}) {
    const auto path = std::filesystem::path(DPD_DATA_DIR) / "tracks" / (std::string(name) + ".track");
    const auto track = load_track(path);
    EXPECT_TRUE(track.closed()) << name;
    EXPECT_GT(track.total_length(), 2000.0) << name;
  }
  EXPECT_EQ(code_of([] { load_track("/nonexistent/x.track"); }), ErrorCode::IoFailure);
}
