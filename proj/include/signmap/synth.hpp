#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Geometry>

#include "signmap/align.hpp"
#include "signmap/camera.hpp"
#include "signmap/errors.hpp"
#include "signmap/geo.hpp"
#include "signmap/metrics.hpp"
#include "signmap/parallel.hpp"
#include "signmap/pipeline.hpp"
#include "signmap/triangulate.hpp"

namespace signmap {

struct ScenarioSpec {
  std::uint64_t seed = 1;
  // Vehicle path in local metric coordinates (x east, y north). Corners are
  // rounded with `turn_radius`.
  std::vector<Vec2> waypoints = {{0.0, 0.0}, {150.0, 0.0}, {150.0, 110.0},
                                 {40.0, 110.0}, {40.0, 230.0}};
  double turn_radius = 10.0;
  double speed = 8.0;        // m/s
  double frame_rate = 10.0;  // Hz
  double camera_height = 1.65;

  int n_signs = 10;
  double lateral_min = 3.0;  // m, to the right of the path
  double lateral_max = 8.0;
  double height_min = 1.5;  // m above ground
  double height_max = 3.5;
  double min_depth = 2.0;  // detection range along the optical axis
  double max_depth = 40.0;

  double pixel_noise_sigma = 0.0;  // px
  double gps_noise_sigma = 0.0;    // m, isotropic in the Mercator frame

  // Monocular ego-motion stand-in: the ground-truth path seen through an
  // unknown similarity, with random-walk drift in log-scale and yaw.
  double slam_scale = 0.25;
  double scale_drift_sigma = 0.0;  // per frame, log-scale
  double yaw_drift_sigma = 0.0;    // per frame, radians

  Calibration calibration = presets::kitti_seq00_02();
  double base_lat = 49.0;
  double base_lon = 8.43;
};

struct Journey {
  MercatorRef ref{0.0};
  Vec3 origin = Vec3::Zero();              // absolute Mercator of the local origin
  std::vector<FramePose> gt_poses;         // absolute Mercator frame
  std::vector<FramePose> estimated_poses;  // arbitrary similarity frame
  std::vector<GpsFix> gps;                 // noisy
  std::vector<SignGroundTruth> signs;      // absolute Mercator frame
  std::vector<SignObservation> detections; // distorted, noisy pixels
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct PathSample {
  Vec2 position;
  double heading;  // radians, counter-clockwise from +x
};

// Polyline with circular fillets at the interior waypoints.
class FilletPath {
 public:
  FilletPath(const std::vector<Vec2>& waypoints, double radius) {
    if (waypoints.size() < 2) throw InvalidArgument("path needs at least 2 waypoints");
    Vec2 cursor = waypoints.front();
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
      const Vec2 corner = waypoints[i];
      if (i + 1 == waypoints.size()) {
        add_line(cursor, corner);
        break;
      }
      const Vec2 d_in = (corner - waypoints[i - 1]).normalized();
      const Vec2 d_out = (waypoints[i + 1] - corner).normalized();
      const double turn = std::atan2(d_in.x() * d_out.y() - d_in.y() * d_out.x(), d_in.dot(d_out));
      if (std::abs(turn) < 1e-9) continue;
      const double max_tangent = 0.5 * std::min((corner - waypoints[i - 1]).norm(),
                                                (waypoints[i + 1] - corner).norm());
      const double r = std::min(radius, max_tangent / std::tan(0.5 * std::abs(turn)));
      const double tangent = r * std::tan(0.5 * std::abs(turn));
      const Vec2 arc_start = corner - tangent * d_in;
      add_line(cursor, arc_start);
      const double side = turn > 0.0 ? 1.0 : -1.0;  // left turn: centre on the left
      const Vec2 normal(-d_in.y() * side, d_in.x() * side);
      Segment arc;
      arc.is_arc = true;
      arc.center = arc_start + r * normal;
      arc.radius = r;
      arc.start_angle = std::atan2(arc_start.y() - arc.center.y(), arc_start.x() - arc.center.x());
      arc.sweep = turn;
      arc.length = r * std::abs(turn);
      push(arc);
      cursor = corner + tangent * d_out;
    }
  }

  double length() const { return total_; }

  PathSample at(double s) const {
    s = std::clamp(s, 0.0, total_);
    for (const auto& seg : segments_) {
      if (s <= seg.offset + seg.length || &seg == &segments_.back()) {
        const double local = s - seg.offset;
        if (!seg.is_arc) {
          const Vec2 dir = (seg.end - seg.start).normalized();
          return {seg.start + local * dir, std::atan2(dir.y(), dir.x())};
        }
        const double sign = seg.sweep > 0.0 ? 1.0 : -1.0;
        const double a = seg.start_angle + sign * local / seg.radius;
        return {seg.center + seg.radius * Vec2(std::cos(a), std::sin(a)),
                a + sign * 0.5 * std::numbers::pi};
      }
    }
    return {segments_.back().end, 0.0};
  }

 private:
  struct Segment {
    bool is_arc = false;
    Vec2 start, end, center;
    double radius = 0.0, start_angle = 0.0, sweep = 0.0;
    double length = 0.0, offset = 0.0;
  };

  void add_line(const Vec2& a, const Vec2& b) {
    const double len = (b - a).norm();
    if (len <= 1e-12) return;
    Segment s;
    s.start = a;
    s.end = b;
    s.length = len;
    push(s);
  }

  void push(Segment s) {
    s.offset = total_;
    total_ += s.length;
    segments_.push_back(s);
  }

  std::vector<Segment> segments_;
  double total_ = 0.0;
};

// Camera looking along the heading: x right, y down, z forward.
inline Mat3 camera_rotation(double heading) {
  const double c = std::cos(heading), s = std::sin(heading);
  Mat3 r;
  r.col(0) = Vec3(s, -c, 0.0);
  r.col(1) = Vec3(0.0, 0.0, -1.0);
  r.col(2) = Vec3(c, s, 0.0);
  return r;
}

inline Mat3 yaw_rotation(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

}  // namespace detail

inline constexpr std::string_view kSignClasses[] = {
    "speed_limit", "stop", "yield", "no_entry", "pedestrian_crossing", "priority_road"};

// Ground truth, noisy GPS, drifting ego-motion and distorted detections for a
// single drive. Deterministic in spec.seed.
inline Journey generate_journey(const ScenarioSpec& spec) {
  if (spec.pixel_noise_sigma < 0.0 || spec.gps_noise_sigma < 0.0 ||
      spec.scale_drift_sigma < 0.0 || spec.yaw_drift_sigma < 0.0) {
    throw InvalidArgument("noise levels must be non-negative");
  }
  if (spec.n_signs < 0) throw InvalidArgument("n_signs must be non-negative");
  if (!(spec.speed > 0.0 && spec.frame_rate > 0.0)) {
    throw InvalidArgument("speed and frame rate must be positive");
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const detail::FilletPath path(spec.waypoints, spec.turn_radius);
  const double spacing = spec.speed / spec.frame_rate;
  const auto n_frames = std::size_t(std::floor(path.length() / spacing)) + 1;

  Journey j;
  j.ref = MercatorRef(spec.base_lat);
  j.origin.head<2>() = to_mercator({spec.base_lat, spec.base_lon, 0.0}, j.ref);

  // Ground-truth poses in the local frame first.
  std::vector<FramePose> local_poses;
  for (std::size_t k = 0; k < n_frames; ++k) {
    const auto sample = path.at(double(k) * spacing);
    local_poses.push_back({FrameId(k), detail::camera_rotation(sample.heading),
                           Vec3(sample.position.x(), sample.position.y(), spec.camera_height)});
  }

  // Signs along the right-hand side, ahead of the first frames.
  std::vector<std::pair<double, Vec3>> placed;
  for (int i = 0; i < spec.n_signs; ++i) {
    const double lo = std::min(spec.max_depth, 0.5 * path.length());
    const double s = lo + uniform(rng) * (path.length() - lo);
    const auto sample = path.at(s);
    const double lateral = spec.lateral_min + uniform(rng) * (spec.lateral_max - spec.lateral_min);
    const double height = spec.height_min + uniform(rng) * (spec.height_max - spec.height_min);
    const Vec2 right(std::sin(sample.heading), -std::cos(sample.heading));
    const Vec2 xy = sample.position + lateral * right;
    placed.emplace_back(s, Vec3(xy.x(), xy.y(), height));
  }
  std::sort(placed.begin(), placed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < placed.size(); ++i) {
    labels.emplace_back(kSignClasses[std::size_t(uniform(rng) * std::size(kSignClasses)) %
                                     std::size(kSignClasses)]);
    j.signs.push_back({SignId(i + 1), labels.back(), j.origin + placed[i].second, {}});
  }

  // Detections: visible, in range, inside the image after distortion.
  const auto& calib = spec.calibration;
  const double max_radius = calib.distortion.working_radius();
  for (const auto& pose : local_poses) {
    for (std::size_t i = 0; i < placed.size(); ++i) {
      const Vec3 q = pose.world_to_camera(placed[i].second);
      if (q.z() < spec.min_depth || q.z() > spec.max_depth) continue;
      if (NormalizedPoint{q.x() / q.z(), q.y() / q.z()}.radius() > max_radius) continue;
      PixelPoint px = calib.project_distorted(q);
      px.u += spec.pixel_noise_sigma * normal(rng);
      px.v += spec.pixel_noise_sigma * normal(rng);
      if (!calib.intrinsics.contains(px)) continue;
      j.detections.push_back({SignId(i + 1), pose.frame_id, px, labels[i]});
    }
  }
  if (j.detections.empty()) throw EmptyScene("no sign is visible from the path");

  // GPS fixes at the camera centre.
  for (const auto& pose : local_poses) {
    Vec3 noisy = pose.position;
    for (int d = 0; d < 3; ++d) noisy(d) += spec.gps_noise_sigma * normal(rng);
    const Vec3 abs = j.origin + noisy;
    j.gps.push_back({pose.frame_id, from_mercator(abs.head<2>(), j.ref, abs.z())});
  }

  // Estimated ego-motion: rigidly integrated increments with drift, then an
  // arbitrary similarity.
  Eigen::Quaterniond qrand(normal(rng), normal(rng), normal(rng), normal(rng));
  qrand.normalize();
  const Mat3 frame_rot = qrand.toRotationMatrix();
  const Vec3 frame_offset(10.0 * normal(rng), 10.0 * normal(rng), 10.0 * normal(rng));
  double log_scale = 0.0, yaw = 0.0;
  Vec3 integrated = Vec3::Zero();
  for (std::size_t k = 0; k < local_poses.size(); ++k) {
    if (k > 0) {
      log_scale += spec.scale_drift_sigma * normal(rng);
      yaw += spec.yaw_drift_sigma * normal(rng);
      integrated += std::exp(log_scale) * (detail::yaw_rotation(yaw) *
                                           (local_poses[k].position - local_poses[k - 1].position));
    }
    const Mat3 rot = frame_rot * detail::yaw_rotation(yaw) * local_poses[k].rotation;
    j.estimated_poses.push_back({local_poses[k].frame_id, rot,
                                 spec.slam_scale * (frame_rot * integrated) + frame_offset});
  }

  for (const auto& p : local_poses) {
    j.gt_poses.push_back({p.frame_id, p.rotation, j.origin + p.position});
  }
  return j;
}

// Score of one journey under one calibration: mean relative error divided by
// the number of triangulated signs.
struct JourneyScore {
  std::optional<double> score;
  std::size_t failed_signs = 0;
  std::size_t triangulated = 0;
};

inline JourneyScore score_journey(const Journey& journey, const Calibration& calibration,
                                  const PipelineOptions& options) {
  JourneyScore out;
  PipelineOptions opts = options;
  opts.lat0 = journey.ref.lat0();
  const auto run = run_pipeline(journey.estimated_poses, journey.gps, journey.detections,
                                calibration, opts);
  const auto ok = successes(run.results);
  out.triangulated = ok.size();
  out.failed_signs = run.results.size() - ok.size();
  if (ok.empty()) return out;
  try {
    const auto errs = sign_errors(ok, journey.signs, journey.gt_poses);
    out.score = errs.rel_normalized();
    out.failed_signs += ok.size() - errs.matched;
  } catch (const NoMatches&) {
    out.failed_signs += ok.size();
  }
  return out;
}

enum class SweepMode { kOneAtATime, kTwoAtATime, kFocalPrincipalVsDistortion };
enum class ParamGroup { kFocal, kPrincipal, kDistortion, kLambda1, kLambda2 };
enum class Aggregate { kMin, kMean, kMedian };

inline std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::kFocal: return "focal";
    case ParamGroup::kPrincipal: return "principal";
    case ParamGroup::kDistortion: return "distortion";
    case ParamGroup::kLambda1: return "lambda1";
    case ParamGroup::kLambda2: return "lambda2";
  }
  return "?";
}

inline ParamGroup parse_group(std::string_view s) {
  for (auto g : {ParamGroup::kFocal, ParamGroup::kPrincipal, ParamGroup::kDistortion,
                 ParamGroup::kLambda1, ParamGroup::kLambda2}) {
    if (to_string(g) == s) return g;
  }
  throw InvalidArgument("unknown parameter group '" + std::string(s) + "'");
}

inline std::string_view to_string(SweepMode m) {
  switch (m) {
    case SweepMode::kOneAtATime: return "oat";
    case SweepMode::kTwoAtATime: return "tat";
    case SweepMode::kFocalPrincipalVsDistortion: return "fpp";
  }
  return "?";
}

inline SweepMode parse_sweep_mode(std::string_view s) {
  for (auto m : {SweepMode::kOneAtATime, SweepMode::kTwoAtATime,
                 SweepMode::kFocalPrincipalVsDistortion}) {
    if (to_string(m) == s) return m;
  }
  throw InvalidArgument("unknown sweep mode '" + std::string(s) + "'");
}

inline std::string_view to_string(Aggregate a) {
  switch (a) {
    case Aggregate::kMin: return "min";
    case Aggregate::kMean: return "mean";
    case Aggregate::kMedian: return "median";
  }
  return "?";
}

inline Aggregate parse_aggregate(std::string_view s) {
  for (auto a : {Aggregate::kMin, Aggregate::kMean, Aggregate::kMedian}) {
    if (to_string(a) == s) return a;
  }
  throw InvalidArgument("unknown aggregate '" + std::string(s) + "'");
}

inline std::vector<double> default_sweep_range() {
  std::vector<double> r;
  for (int p = -15; p <= 15; p += 3) r.push_back(p);
  return r;
}

struct SweepSpec {
  SweepMode mode = SweepMode::kOneAtATime;
  std::vector<ParamGroup> groups = {ParamGroup::kFocal, ParamGroup::kPrincipal,
                                    ParamGroup::kDistortion};
  std::vector<double> range = default_sweep_range();
  int repeats = 10;
  Aggregate aggregate = Aggregate::kMin;
  PipelineOptions pipeline{.mode = TriangulationMode::kFull};
  unsigned threads = 1;
};

inline void add_group_error(Perturbation& p, ParamGroup g, double pct) {
  switch (g) {
    case ParamGroup::kFocal: p.focal_pct += pct; break;
    case ParamGroup::kPrincipal: p.principal_pct += pct; break;
    case ParamGroup::kDistortion:
      p.lambda1_pct += pct;
      p.lambda2_pct += pct;
      break;
    case ParamGroup::kLambda1: p.lambda1_pct += pct; break;
    case ParamGroup::kLambda2: p.lambda2_pct += pct; break;
  }
}

struct SweepCell {
  double pct1 = 0.0;
  double pct2 = 0.0;
  Perturbation perturbation;
  std::optional<double> score;  // empty when every repeat failed
  std::size_t failed_signs = 0; // summed over repeats
  std::size_t repeats = 0;      // repeats that produced a score
};

struct SweepGrid {
  std::string group1;
  std::string group2;  // empty for one-at-a-time grids
  std::vector<SweepCell> cells;
};

// Journey for repeat r. The same journeys are shared by every cell, so a
// cell's value depends on nothing but its own perturbation.
inline std::uint64_t repeat_seed(std::uint64_t master, int repeat) {
  return detail::splitmix64(master ^ detail::splitmix64(std::uint64_t(repeat) + 1));
}

inline std::vector<SweepGrid> sweep_layout(const SweepSpec& sweep) {
  std::vector<SweepGrid> grids;
  switch (sweep.mode) {
    case SweepMode::kOneAtATime:
      for (auto g : sweep.groups) {
        SweepGrid grid{std::string(to_string(g)), "", {}};
        for (double pct : sweep.range) {
          SweepCell c;
          c.pct1 = pct;
          add_group_error(c.perturbation, g, pct);
          grid.cells.push_back(c);
        }
        grids.push_back(grid);
      }
      break;
    case SweepMode::kTwoAtATime: {
      if (sweep.groups.size() != 2) {
        throw InvalidArgument("two-at-a-time sweeps need exactly 2 groups");
      }
      SweepGrid grid{std::string(to_string(sweep.groups[0])),
                     std::string(to_string(sweep.groups[1])), {}};
      for (double a : sweep.range) {
        for (double b : sweep.range) {
          SweepCell c;
          c.pct1 = a;
          c.pct2 = b;
          add_group_error(c.perturbation, sweep.groups[0], a);
          add_group_error(c.perturbation, sweep.groups[1], b);
          grid.cells.push_back(c);
        }
      }
      grids.push_back(grid);
      break;
    }
    case SweepMode::kFocalPrincipalVsDistortion: {
      SweepGrid grid{"focal+principal", "distortion", {}};
      for (double a : sweep.range) {
        for (double b : sweep.range) {
          SweepCell c;
          c.pct1 = a;
          c.pct2 = b;
          add_group_error(c.perturbation, ParamGroup::kFocal, a);
          add_group_error(c.perturbation, ParamGroup::kPrincipal, a);
          add_group_error(c.perturbation, ParamGroup::kDistortion, b);
          grid.cells.push_back(c);
        }
      }
      grids.push_back(grid);
      break;
    }
  }
  return grids;
}

inline std::optional<double> aggregate_scores(std::vector<double> values, Aggregate how) {
  if (values.empty()) return std::nullopt;
  switch (how) {
    case Aggregate::kMin:
      return *std::min_element(values.begin(), values.end());
    case Aggregate::kMean: {
      double s = 0.0;
      for (double v : values) s += v;
      return s / double(values.size());
    }
    case Aggregate::kMedian: {
      std::sort(values.begin(), values.end());
      const std::size_t n = values.size();
      return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    }
  }
  return std::nullopt;
}

// Evaluates one perturbation over every repeat journey.
inline SweepCell evaluate_cell(SweepCell cell, std::span<const Journey> journeys,
                               const ScenarioSpec& scenario, const SweepSpec& sweep) {
  std::vector<double> values;
  std::optional<Calibration> calib;
  try {
    calib = perturb(scenario.calibration, cell.perturbation);
  } catch (const InvalidPerturbation&) {
  }
  for (const auto& journey : journeys) {
    if (!calib) {
      cell.failed_signs += std::size_t(scenario.n_signs);
      continue;
    }
    const auto s = score_journey(journey, *calib, sweep.pipeline);
    cell.failed_signs += s.failed_signs;
    if (s.score) values.push_back(*s.score);
  }
  cell.repeats = values.size();
  cell.score = aggregate_scores(std::move(values), sweep.aggregate);
  return cell;
}

inline std::vector<Journey> sweep_journeys(const ScenarioSpec& scenario, int repeats) {
  if (repeats < 1) throw InvalidArgument("repeats must be >= 1");
  std::vector<Journey> journeys;
  for (int r = 0; r < repeats; ++r) {
    ScenarioSpec s = scenario;
    s.seed = repeat_seed(scenario.seed, r);
    journeys.push_back(generate_journey(s));
  }
  return journeys;
}

inline std::vector<SweepGrid> run_sweep(const ScenarioSpec& scenario, const SweepSpec& sweep) {
  auto grids = sweep_layout(sweep);
  const auto journeys = sweep_journeys(scenario, sweep.repeats);
  std::vector<SweepCell*> cells;
  for (auto& g : grids) {
    for (auto& c : g.cells) cells.push_back(&c);
  }
  parallel_for(cells.size(), sweep.threads, [&](std::size_t i) {
    *cells[i] = evaluate_cell(*cells[i], journeys, scenario, sweep);
  });
  return grids;
}

}  // namespace signmap
