#pragma once

#include <charconv>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "signmap/cli/commands.hpp"

namespace signmap::cli {

namespace detail {

inline double parse_number(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InvalidArgument("not a number: '" + s + "'");
  }
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

// "x,y;x,y;..."
inline std::vector<Vec2> parse_waypoints(const std::string& s) {
  std::vector<Vec2> out;
  for (const auto& pair : split(s, ';')) {
    const auto xy = split(pair, ',');
    if (xy.size() != 2) throw InvalidArgument("waypoint '" + pair + "' is not 'x,y'");
    out.emplace_back(parse_number(xy[0]), parse_number(xy[1]));
  }
  return out;
}

// "start:stop:step" or "a,b,c"
inline std::vector<double> parse_range(const std::string& s) {
  std::vector<double> out;
  if (s.find(':') != std::string::npos) {
    const auto parts = split(s, ':');
    if (parts.size() != 3) throw InvalidArgument("range must be start:stop:step");
    const double a = parse_number(parts[0]), b = parse_number(parts[1]),
                 step = parse_number(parts[2]);
    if (!(step > 0.0) || b < a) throw InvalidArgument("range needs step > 0 and stop >= start");
    for (int i = 0;; ++i) {
      const double v = a + i * step;
      if (v > b + 1e-9 * step) break;
      out.push_back(v);
    }
    return out;
  }
  for (const auto& p : split(s, ',')) out.push_back(parse_number(p));
  return out;
}

struct ScenarioFlags {
  std::uint64_t seed = 1;
  int n_signs = 10;
  double pixel_noise = 0.0;
  double gps_noise = 0.0;
  double scale_drift = 0.0;
  double yaw_drift = 0.0;
  double speed = 8.0;
  double frame_rate = 10.0;
  double turn_radius = 10.0;
  std::string waypoints;
  std::string preset = "kitti00";
  std::string calibration;

  void attach(CLI::App& app) {
    app.add_option("--seed", seed, "Scenario seed");
    app.add_option("--n-signs", n_signs, "Number of signs")->check(CLI::NonNegativeNumber);
    app.add_option("--pixel-noise", pixel_noise, "Pixel noise sigma (px)");
    app.add_option("--gps-noise", gps_noise, "GPS noise sigma (m)");
    app.add_option("--scale-drift", scale_drift, "Ego-motion log-scale drift per frame");
    app.add_option("--yaw-drift", yaw_drift, "Ego-motion yaw drift per frame (rad)");
    app.add_option("--speed", speed, "Vehicle speed (m/s)");
    app.add_option("--frame-rate", frame_rate, "Frame rate (Hz)");
    app.add_option("--turn-radius", turn_radius, "Corner radius (m)");
    app.add_option("--waypoints", waypoints, "Path as 'x,y;x,y;...' in meters");
    app.add_option("--preset", preset, "Ground-truth calibration preset")
        ->check(CLI::IsMember({"kitti00", "kitti04"}));
    app.add_option("--calibration", calibration, "Ground-truth calibration JSON (overrides preset)");
  }

  ScenarioSpec build() const {
    ScenarioSpec s;
    s.seed = seed;
    s.n_signs = n_signs;
    s.pixel_noise_sigma = pixel_noise;
    s.gps_noise_sigma = gps_noise;
    s.scale_drift_sigma = scale_drift;
    s.yaw_drift_sigma = yaw_drift;
    s.speed = speed;
    s.frame_rate = frame_rate;
    s.turn_radius = turn_radius;
    if (!waypoints.empty()) s.waypoints = parse_waypoints(waypoints);
    s.calibration = preset == "kitti04" ? presets::kitti_seq04_10() : presets::kitti_seq00_02();
    if (!calibration.empty()) s.calibration = io::read_calibration(calibration);
    return s;
  }
};

struct PipelineFlags {
  std::string mode = "short";
  std::string align_dims = "3d";
  std::optional<double> lat0;
  int turn_window = 25;
  double short_min_spread = 0.1;
  int ba_max_iterations = 100;
  double ba_gradient_tol = 1e-10;
  unsigned threads = 1;

  void attach(CLI::App& app, const std::string& default_mode) {
    mode = default_mode;
    app.add_option("--mode", mode, "Triangulation mode")->check(CLI::IsMember({"full", "short"}));
    app.add_option("--align-dims", align_dims, "Align with 3D (altitude) or 2D GPS")
        ->check(CLI::IsMember({"2d", "3d"}));
    app.add_option("--lat0", lat0, "Mercator reference latitude (default: first GPS fix)");
    app.add_option("--turn-window", turn_window, "Short-mode padding in frames")
        ->check(CLI::PositiveNumber);
    app.add_option("--short-min-spread", short_min_spread,
                   "Minimum path spread ratio for a short-mode alignment window")
        ->check(CLI::PositiveNumber);
    app.add_option("--ba-max-iterations", ba_max_iterations, "Refinement iteration cap")
        ->check(CLI::PositiveNumber);
    app.add_option("--ba-gradient-tol", ba_gradient_tol, "Refinement gradient tolerance")
        ->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  }

  PipelineOptions build() const {
    PipelineOptions o;
    o.mode = parse_mode(mode);
    o.align_dims = parse_align_dims(align_dims);
    o.lat0 = lat0;
    o.triangulation.short_padding = turn_window;
    o.triangulation.short_min_spread = short_min_spread;
    o.triangulation.ba.max_iterations = ba_max_iterations;
    o.triangulation.ba.gradient_tolerance = ba_gradient_tol;
    o.threads = threads;
    return o;
  }
};

}  // namespace detail

// Parses the command line and dispatches. Options may also come from an INI
// or TOML file given with --config; command-line flags take precedence.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cerr) {
  CLI::App app{"Traffic sign triangulation from monocular detections, GPS and camera poses"};
  app.set_config("--config", "", "Configuration file (flags override its values)");
  app.require_subcommand(1);

  // triangulate
  TriangulateConfig tri;
  detail::PipelineFlags tri_flags;
  std::string tri_poses, tri_gps, tri_det, tri_calib, tri_out = "map.json";
  auto* tri_cmd = app.add_subcommand("triangulate", "Triangulate signs into a map");
  tri_cmd->add_option("--poses", tri_poses, "Pose CSV")->required();
  tri_cmd->add_option("--gps", tri_gps, "GPS CSV")->required();
  tri_cmd->add_option("--detections", tri_det, "Detections CSV")->required();
  tri_cmd->add_option("--calibration", tri_calib, "Calibration JSON")->required();
  tri_cmd->add_option("--out", tri_out, "Output map JSON");
  tri_flags.attach(*tri_cmd, "short");

  // evaluate
  std::vector<std::string> ev_maps;
  std::string ev_gt, ev_gt_poses, ev_poses, ev_out = "report.json";
  auto* ev_cmd = app.add_subcommand("evaluate", "Score a map against ground truth");
  ev_cmd->add_option("--map", ev_maps, "Map JSON (repeatable, e.g. one per mode)")->required();
  ev_cmd->add_option("--gt-signs", ev_gt, "Ground-truth signs CSV")->required();
  ev_cmd->add_option("--gt-poses", ev_gt_poses, "Ground-truth poses CSV (relative errors, ATE)");
  ev_cmd->add_option("--poses", ev_poses, "Estimated poses CSV (ATE)");
  ev_cmd->add_option("--out", ev_out, "Output report JSON");

  // simulate
  detail::ScenarioFlags sim_flags;
  std::string sim_out;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic journey bundle");
  sim_flags.attach(*sim_cmd);
  sim_cmd->add_option("--out-dir", sim_out, "Output directory")->required();

  // sweep
  detail::ScenarioFlags sw_flags;
  detail::PipelineFlags sw_pipe;
  std::string sw_mode = "oat", sw_range = "-15:15:3", sw_aggregate = "min", sw_out;
  std::vector<std::string> sw_groups = {"focal", "principal", "distortion"};
  int sw_repeats = 10;
  auto* sw_cmd = app.add_subcommand("sweep", "Calibration-error sensitivity sweep");
  sw_flags.attach(*sw_cmd);
  sw_pipe.attach(*sw_cmd, "full");
  sw_cmd->add_option("--sweep-mode", sw_mode, "oat, tat or fpp")
      ->check(CLI::IsMember({"oat", "tat", "fpp"}));
  sw_cmd->add_option("--groups", sw_groups, "Parameter groups")
      ->delimiter(',')
      ->check(CLI::IsMember({"focal", "principal", "distortion", "lambda1", "lambda2"}));
  sw_cmd->add_option("--range", sw_range, "Percent errors: start:stop:step or a,b,c");
  sw_cmd->add_option("--repeats", sw_repeats, "Runs per cell")->check(CLI::PositiveNumber);
  sw_cmd->add_option("--aggregate", sw_aggregate, "min, mean or median")
      ->check(CLI::IsMember({"min", "mean", "median"}));
  sw_cmd->add_option("--out-dir", sw_out, "Output directory")->required();

  // turns
  TurnsConfig turns;
  std::string turns_gps, turns_out = "turns.json";
  auto* turns_cmd = app.add_subcommand("turns", "Extract turn sub-sequences from GPS");
  turns_cmd->add_option("--gps", turns_gps, "GPS CSV")->required();
  turns_cmd->add_option("--epsilon", turns.epsilon, "RDP tolerance (m)")->check(CLI::PositiveNumber);
  turns_cmd->add_option("--window", turns.window, "Half window in frames")
      ->check(CLI::Range(2, 1 << 30));
  turns_cmd->add_option("--lat0", turns.lat0, "Mercator reference latitude");
  turns_cmd->add_option("--out", turns_out, "Output JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, std::cout, log);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, std::cout, log);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, std::cout, log);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cout, log);
    return kExitValidation;
  }

  return guarded(log, [&]() -> int {
    if (*tri_cmd) {
      tri.poses = tri_poses;
      tri.gps = tri_gps;
      tri.detections = tri_det;
      tri.calibration = tri_calib;
      tri.out = tri_out;
      tri.pipeline = tri_flags.build();
      return cmd_triangulate(tri, log);
    }
    if (*ev_cmd) {
      EvaluateConfig ev;
      for (const auto& m : ev_maps) ev.maps.emplace_back(m);
      ev.gt_signs = ev_gt;
      if (!ev_gt_poses.empty()) ev.gt_poses = ev_gt_poses;
      if (!ev_poses.empty()) ev.poses = ev_poses;
      ev.out = ev_out;
      return cmd_evaluate(ev, log);
    }
    if (*sim_cmd) {
      return cmd_simulate({sim_flags.build(), sim_out}, log);
    }
    if (*sw_cmd) {
      SweepConfig sw;
      sw.scenario = sw_flags.build();
      sw.sweep.mode = parse_sweep_mode(sw_mode);
      sw.sweep.groups.clear();
      for (const auto& g : sw_groups) sw.sweep.groups.push_back(parse_group(g));
      sw.sweep.range = detail::parse_range(sw_range);
      sw.sweep.repeats = sw_repeats;
      sw.sweep.aggregate = parse_aggregate(sw_aggregate);
      sw.sweep.pipeline = sw_pipe.build();
      sw.sweep.threads = sw.sweep.pipeline.threads;
      sw.sweep.pipeline.threads = 1;
      sw.out_dir = sw_out;
      return cmd_sweep(sw, log);
    }
    turns.gps = turns_gps;
    turns.out = turns_out;
    return cmd_turns(turns, log);
  });
}

}  // namespace signmap::cli
