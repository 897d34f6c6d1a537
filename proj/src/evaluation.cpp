#include "dpd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "dpd/errors.hpp"
#include "text_lines.hpp"

namespace dpd {

MaeReport mae_per_indicator(const std::vector<AffordancePair>& pairs, const NormalizationSpec& spec,
                            const MaeOptions& options, std::string estimator) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no frames to evaluate");
  MaeReport report;
  report.estimator = std::move(estimator);
  std::array<double, kIndicatorCount> sum{};
  for (const auto& [est, truth] : pairs) {
    for (std::size_t k = 0; k < kIndicatorCount; ++k) {
      if (!truth.active[k]) continue;
      const double t = truth.value[k];
      if (is_distance(indicator_at(k)) && !(t >= options.dist_min && t <= options.dist_max)) continue;
      double err = 0.0;
      if (est.active[k]) {
        err = std::abs(est.value[k] - t);
      } else if (options.disagreement == DisagreementRule::Penalize) {
        err = std::abs(spec.ranges[k].sentinel - t);
      } else {
        continue;
      }
      sum[k] += err;
      ++report.count[k];
    }
  }
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    report.mae[k] = report.count[k] ? sum[k] / static_cast<double>(report.count[k]) : 0.0;
  }
  return report;
}

AreaMaeReport area_task_mae(const std::vector<AreaPair>& pairs, bool penalize_fp,
                            const AreaPartition& partition) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no frames to evaluate");
  AreaMaeReport report;
  const CarXY absent{0.0, partition.no_car_y};
  for (const auto& [est, truth] : pairs) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (!truth[a] && !penalize_fp) continue;
      const CarXY t = truth[a].value_or(absent);
      const CarXY e = est[a].value_or(absent);
      auto& acc = report.per_area[a];
      acc.y += std::abs(e.y - t.y);
      acc.x += std::abs(e.x - t.x);
      acc.d += std::hypot(e.x - t.x, e.y - t.y);
      ++acc.count;
    }
  }
  for (auto& acc : report.per_area) {
    report.pooled.y += acc.y;
    report.pooled.x += acc.x;
    report.pooled.d += acc.d;
    report.pooled.count += acc.count;
    if (acc.count) {
      const auto n = static_cast<double>(acc.count);
      acc.y /= n;
      acc.x /= n;
      acc.d /= n;
    }
  }
  if (report.pooled.count) {
    const auto n = static_cast<double>(report.pooled.count);
    report.pooled.y /= n;
    report.pooled.x /= n;
    report.pooled.d /= n;
  }
  return report;
}

namespace {

int change_direction(const std::string& mode) {
  if (mode == "change_left") return +1;
  if (mode == "change_right") return -1;
  return 0;
}

}  // namespace

ClosedLoopReport closed_loop_metrics(const std::vector<TrajectoryRow>& log,
                                     const ClosedLoopOptions& options) {
  ClosedLoopReport r;
  if (log.empty()) return r;
  std::size_t off_road = 0;
  double abs_dc = 0.0;

  // Active lane change: direction, objective lane, completion time.
  int dir = 0;
  int objective = -1;
  std::optional<double> completed_at;
  int watch_dir = 0;

  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& row = log[i];
    r.collisions += static_cast<std::size_t>(row.collision_events);
    if (row.lane_index < 0 || std::abs(row.lateral) + row.car_width / 2.0 > row.road_half_width) ++off_road;
    abs_dc += std::abs(row.dist_center);

    const int row_dir = change_direction(row.mode);
    if (row_dir != 0) {
      if (dir == row_dir && row.target_lane != objective && row.lane_index == objective) {
        // Back-to-back changes: the previous one finished on this tick.
        ++r.lane_changes_completed;
      }
      if (dir != row_dir) completed_at.reset();
      dir = row_dir;
      objective = row.target_lane;
      watch_dir = 0;
    } else if (dir != 0) {
      if (row.lane_index == objective) {
        ++r.lane_changes_completed;
        completed_at = row.time;
        watch_dir = dir;
      }
      dir = 0;
    }
    const bool watching = row_dir != 0 || (watch_dir != 0 && completed_at &&
                                           row.time - *completed_at <= options.overshoot_window);
    const int d = row_dir != 0 ? row_dir : watch_dir;
    if (watching && d != 0) {
      r.max_overshoot = std::max(r.max_overshoot, d * (row.lateral - row.target_center));
    }
  }
  const auto n = static_cast<double>(log.size());
  r.off_road_fraction = static_cast<double>(off_road) / n;
  r.mean_abs_dist_center = abs_dc / n;
  const double dt = log.size() > 1 ? (log.back().time - log.front().time) / (n - 1.0) : 0.0;
  r.duration = log.back().time - log.front().time + dt;
  return r;
}

void write_mae_text(std::ostream& os, const MaeReport& report) {
  fmt::print(os, "MAE per indicator{} (angle in rad, others in m)\n",
             report.estimator.empty() ? "" : " [" + report.estimator + "]");
  fmt::print(os, "{:<14} {:>12} {:>10}\n", "indicator", "mae", "frames");
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const auto name = indicator_name(indicator_at(k));
    if (report.count[k]) {
      fmt::print(os, "{:<14} {:>12.6f} {:>10}\n", name, report.mae[k], report.count[k]);
    } else {
      fmt::print(os, "{:<14} {:>12} {:>10}\n", name, "-", 0);
    }
  }
}

void write_mae_csv(std::ostream& os, const MaeReport& report) {
  os << "metric";
  for (std::size_t k = 0; k < kIndicatorCount; ++k) os << ',' << indicator_name(indicator_at(k));
  os << "\nmae";
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    os << ',';
    if (report.count[k]) fmt::print(os, "{:.17g}", report.mae[k]);
  }
  os << "\nframes";
  for (std::size_t k = 0; k < kIndicatorCount; ++k) os << ',' << report.count[k];
  os << '\n';
}

namespace {

constexpr std::array<std::string_view, 3> kAreaNames{"left", "central", "right"};

}  // namespace

void write_area_text(std::ostream& os, const AreaMaeReport& pen, const AreaMaeReport& unpen) {
  fmt::print(os, "{:<10} {:>9} {:>9} {:>9} | {:>9} {:>9} {:>9}\n", "area", "y(fp)", "x(fp)",
             "d(fp)", "y", "x", "d");
  auto row = [&](std::string_view name, const AreaErrors& a, const AreaErrors& b) {
    fmt::print(os, "{:<10} {:>9.4f} {:>9.4f} {:>9.4f} | {:>9.4f} {:>9.4f} {:>9.4f}\n", name, a.y,
               a.x, a.d, b.y, b.x, b.d);
  };
  for (std::size_t a = 0; a < 3; ++a) row(kAreaNames[a], pen.per_area[a], unpen.per_area[a]);
  row("pooled", pen.pooled, unpen.pooled);
}

void write_area_csv(std::ostream& os, const AreaMaeReport& pen, const AreaMaeReport& unpen) {
  os << "area,y_fp,x_fp,d_fp,frames_fp,y,x,d,frames\n";
  auto row = [&](std::string_view name, const AreaErrors& a, const AreaErrors& b) {
    fmt::print(os, "{},{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g},{}\n", name, a.y, a.x,
               a.d, a.count, b.y, b.x, b.d, b.count);
  };
  for (std::size_t a = 0; a < 3; ++a) row(kAreaNames[a], pen.per_area[a], unpen.per_area[a]);
  row("pooled", pen.pooled, unpen.pooled);
}

void write_closed_loop_text(std::ostream& os, const ClosedLoopReport& r) {
  fmt::print(os, "{:<24} {}\n", "collisions", r.collisions);
  fmt::print(os, "{:<24} {:.6f}\n", "off_road_fraction", r.off_road_fraction);
  fmt::print(os, "{:<24} {:.6f}\n", "mean_abs_dist_center_m", r.mean_abs_dist_center);
  fmt::print(os, "{:<24} {}\n", "lane_changes_completed", r.lane_changes_completed);
  fmt::print(os, "{:<24} {:.6f}\n", "max_overshoot_m", r.max_overshoot);
  fmt::print(os, "{:<24} {:.3f}\n", "duration_s", r.duration);
}

void write_closed_loop_csv(std::ostream& os, const ClosedLoopReport& r) {
  os << "collisions,off_road_fraction,mean_abs_dist_center,lane_changes_completed,max_overshoot,duration\n";
  fmt::print(os, "{},{:.17g},{:.17g},{},{:.17g},{:.17g}\n", r.collisions, r.off_road_fraction,
             r.mean_abs_dist_center, r.lane_changes_completed, r.max_overshoot, r.duration);
}

namespace {

constexpr std::string_view kTrajectoryHeader =
    "tick,time,x,y,heading,station,lateral,angle,speed,steer,accel,mode,lane_index,target_lane,"
    "target_center,dist_center,road_half_width,car_width,collision_events";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double cell_double(const std::string& s, std::size_t line) {
  return detail::to_double("<csv>", static_cast<int>(line), s);
}

long long cell_int(const std::string& s, std::size_t line) {
  const double v = cell_double(s, line);
  if (v != std::floor(v)) throw Error(ErrorCode::ParseError, fmt::format("line {}: '{}' is not an integer", line, s));
  return static_cast<long long>(v);
}

template <typename Fn>
void for_each_data_line(std::istream& is, std::string_view header, std::size_t columns, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  if (!std::getline(is, line)) throw Error(ErrorCode::ParseError, "missing CSV header");
  ++number;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (!header.empty() && line != header) {
    throw Error(ErrorCode::ParseError, "unexpected CSV header: " + line);
  }
  while (std::getline(is, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != columns) {
      throw Error(ErrorCode::ParseError, fmt::format("line {}: expected {} columns, found {}", number,
                                                     columns, cells.size()));
    }
    fn(cells, number);
  }
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& log) {
  os << kTrajectoryHeader << '\n';
  for (const auto& r : log) {
    fmt::print(os,
               "{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},"
               "{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{}\n",
               r.tick, r.time, r.x, r.y, r.heading, r.station, r.lateral, r.angle, r.speed, r.steer,
               r.accel, r.mode, r.lane_index, r.target_lane, r.target_center, r.dist_center,
               r.road_half_width, r.car_width, r.collision_events);
  }
}

std::vector<TrajectoryRow> read_trajectory_csv(std::istream& is) {
  std::vector<TrajectoryRow> log;
  for_each_data_line(is, kTrajectoryHeader, 19, [&](const std::vector<std::string>& c, std::size_t n) {
    TrajectoryRow r;
    r.tick = cell_int(c[0], n);
    r.time = cell_double(c[1], n);
    r.x = cell_double(c[2], n);
    r.y = cell_double(c[3], n);
    r.heading = cell_double(c[4], n);
    r.station = cell_double(c[5], n);
    r.lateral = cell_double(c[6], n);
    r.angle = cell_double(c[7], n);
    r.speed = cell_double(c[8], n);
    r.steer = cell_double(c[9], n);
    r.accel = cell_double(c[10], n);
    r.mode = c[11];
    r.lane_index = static_cast<int>(cell_int(c[12], n));
    r.target_lane = static_cast<int>(cell_int(c[13], n));
    r.target_center = cell_double(c[14], n);
    r.dist_center = cell_double(c[15], n);
    r.road_half_width = cell_double(c[16], n);
    r.car_width = cell_double(c[17], n);
    r.collision_events = static_cast<int>(cell_int(c[18], n));
    log.push_back(std::move(r));
  });
  return log;
}

namespace {

void write_vector_cells(std::ostream& os, const AffordanceVector& a) {
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    os << ',';
    if (a.active[k]) fmt::print(os, "{:.17g}", a.value[k]);
  }
}

AffordanceVector read_vector_cells(const std::vector<std::string>& c, std::size_t first, std::size_t line) {
  AffordanceVector a;
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const auto& cell = c[first + k];
    if (!cell.empty()) a.set(indicator_at(k), cell_double(cell, line));
  }
  return a;
}

std::string pairs_header() {
  std::string h = "frame";
  for (const char* prefix : {"est_", "truth_"}) {
    for (std::size_t k = 0; k < kIndicatorCount; ++k) {
      h += ',';
      h += prefix;
      h += indicator_name(indicator_at(k));
    }
  }
  return h;
}

}  // namespace

void write_pairs_csv(std::ostream& os, const std::vector<AffordancePair>& pairs) {
  os << pairs_header() << '\n';
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    os << i;
    write_vector_cells(os, pairs[i].first);
    write_vector_cells(os, pairs[i].second);
    os << '\n';
  }
}

std::vector<AffordancePair> read_pairs_csv(std::istream& is) {
  std::vector<AffordancePair> pairs;
  for_each_data_line(is, pairs_header(), 1 + 2 * kIndicatorCount,
                     [&](const std::vector<std::string>& c, std::size_t n) {
                       pairs.emplace_back(read_vector_cells(c, 1, n),
                                          read_vector_cells(c, 1 + kIndicatorCount, n));
                     });
  return pairs;
}

namespace {

constexpr std::string_view kAreaPairsHeader =
    "frame,est_left_x,est_left_y,est_central_x,est_central_y,est_right_x,est_right_y,"
    "truth_left_x,truth_left_y,truth_central_x,truth_central_y,truth_right_x,truth_right_y";

void write_area_cells(std::ostream& os, const AreaCars& cars) {
  for (const auto& c : cars) {
    if (c) {
      fmt::print(os, ",{:.17g},{:.17g}", c->x, c->y);
    } else {
      os << ",,";
    }
  }
}

AreaCars read_area_cells(const std::vector<std::string>& c, std::size_t first, std::size_t line) {
  AreaCars cars;
  for (std::size_t a = 0; a < 3; ++a) {
    const auto& xs = c[first + 2 * a];
    const auto& ys = c[first + 2 * a + 1];
    if (xs.empty() != ys.empty()) {
      throw Error(ErrorCode::ParseError, fmt::format("line {}: half-empty area cell", line));
    }
    if (!xs.empty()) cars[a] = CarXY{cell_double(xs, line), cell_double(ys, line)};
  }
  return cars;
}

}  // namespace

void write_area_pairs_csv(std::ostream& os, const std::vector<AreaPair>& pairs) {
  os << kAreaPairsHeader << '\n';
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    os << i;
    write_area_cells(os, pairs[i].first);
    write_area_cells(os, pairs[i].second);
    os << '\n';
  }
}

std::vector<AreaPair> read_area_pairs_csv(std::istream& is) {
  std::vector<AreaPair> pairs;
  for_each_data_line(is, kAreaPairsHeader, 13, [&](const std::vector<std::string>& c, std::size_t n) {
    pairs.emplace_back(read_area_cells(c, 1, n), read_area_cells(c, 7, n));
  });
  return pairs;
}

}  // namespace dpd
