#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "signmap/align.hpp"
#include "signmap/camera.hpp"
#include "signmap/errors.hpp"
#include "signmap/io.hpp"
#include "signmap/metrics.hpp"
#include "signmap/pipeline.hpp"
#include "signmap/synth.hpp"
#include "signmap/triangulate.hpp"

namespace signmap::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitValidation = 2,
  kExitNoOutput = 3,
};

// Maps library errors onto exit codes and reports them.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FrameMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NoTurns& e) {
    err << "no turns: " << e.what() << "\n";
    return kExitNoOutput;
  } catch (const NoMatches& e) {
    err << "no matches: " << e.what() << "\n";
    return kExitNoOutput;
  } catch (const EmptyScene& e) {
    err << "empty scene: " << e.what() << "\n";
    return kExitNoOutput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

// ---- triangulate ---------------------------------------------------------

struct TriangulateConfig {
  fs::path poses, gps, detections, calibration, out;
  PipelineOptions pipeline;
};

inline int cmd_triangulate(const TriangulateConfig& cfg, std::ostream& log = std::cerr) {
  return guarded(log, [&] {
    const auto calibration = io::read_calibration(cfg.calibration);
    auto poses = io::read_poses(cfg.poses);
    auto gps = io::read_gps(cfg.gps);
    const auto detections = io::read_detections(cfg.detections);
    io::check_detections_in_image(detections, calibration.intrinsics, cfg.detections.string());

    const auto run = run_pipeline(std::move(poses), std::move(gps), detections, calibration,
                                  cfg.pipeline);
    io::write_map(cfg.out, run.results);

    std::size_t ok = 0;
    for (const auto& r : run.results) {
      if (const auto* f = std::get_if<TriangulationFailure>(&r)) {
        log << "sign " << f->sign_id << ": " << to_string(f->reason) << " (" << f->message
            << ")\n";
      } else {
        ++ok;
      }
    }
    log << "triangulated " << ok << " of " << run.results.size() << " signs ("
        << to_string(cfg.pipeline.mode) << " mode)\n";
    return ok > 0 ? kExitOk : kExitNoOutput;
  });
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateConfig {
  std::vector<fs::path> maps;
  fs::path gt_signs;
  std::optional<fs::path> gt_poses;
  std::optional<fs::path> poses;  // estimated, for ATE
  fs::path out;
};

inline json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json mode_errors_json(const ModeErrors& e, std::size_t failed) {
  json per = json::array();
  for (const auto& s : e.per_sign) {
    per.push_back({{"sign_id", s.sign_id},
                   {"gt_id", s.gt_id},
                   {"abs_error", s.abs_error},
                   {"rel_error", optional_json(s.rel_error)}});
  }
  return {{"rel_mean", optional_json(e.rel_mean)},
          {"rel_over_m", optional_json(e.rel_normalized())},
          {"abs_mean", e.abs_mean},
          {"m", e.m},
          {"matched", e.matched},
          {"failed", failed},
          {"per_sign", per}};
}

// Report with per-mode errors, the e_f / e_s / m table row, and trajectory
// errors when poses are supplied.
inline json evaluate_report(const std::vector<io::MapFile>& maps,
                            std::span<const SignGroundTruth> gt,
                            std::span<const FramePose> gt_poses,
                            std::span<const FramePose> est_poses) {
  std::map<std::string, std::vector<TriangulatedSign>> by_mode;
  std::map<std::string, std::size_t> failed;
  for (const auto& m : maps) {
    for (const auto& s : m.signs) by_mode[std::string(to_string(s.mode))].push_back(s);
    for (const auto& f : m.failures) ++failed[std::string(to_string(f.mode))];
  }
  for (const auto& [mode, n] : failed) by_mode.try_emplace(mode);

  ErrorReport report;
  json signs = json::object();
  for (const auto& [mode, results] : by_mode) {
    if (results.empty()) throw NoMatches("no triangulated signs in " + mode + " mode");
    const auto errs = sign_errors(results, gt, gt_poses);
    signs[mode] = mode_errors_json(errs, failed[mode]);
    (mode == "full" ? report.full : report.short_) = errs;
  }

  const ModeErrors* primary = report.short_ ? &*report.short_ : report.full ? &*report.full : nullptr;
  json table = {
      {"e_f", report.full ? optional_json(report.full->rel_mean) : json(nullptr)},
      {"e_s", report.short_ ? optional_json(report.short_->rel_mean) : json(nullptr)},
      {"e_f_over_m", report.full ? optional_json(report.full->rel_normalized()) : json(nullptr)},
      {"e_s_over_m", report.short_ ? optional_json(report.short_->rel_normalized()) : json(nullptr)},
      {"m", primary ? json(primary->m) : json(nullptr)},
      {"rel", primary ? optional_json(primary->rel_mean) : json(nullptr)},
      {"abs", primary ? json(primary->abs_mean) : json(nullptr)}};

  json out = {{"signs", signs}, {"table", table}, {"ate", nullptr}};
  if (!est_poses.empty() && !gt_poses.empty()) {
    const auto five = ate_5(est_poses, gt_poses);
    out["ate"] = {{"full", ate_full(est_poses, gt_poses)},
                  {"five_mean", five.mean},
                  {"five_std", five.std},
                  {"five_windows", five.windows},
                  {"five_skipped", five.skipped}};
  }
  return out;
}

inline int cmd_evaluate(const EvaluateConfig& cfg, std::ostream& log = std::cerr) {
  return guarded(log, [&] {
    if (cfg.maps.empty()) throw InvalidArgument("evaluate needs at least one --map");
    std::vector<io::MapFile> maps;
    for (const auto& m : cfg.maps) maps.push_back(io::read_map(m));
    const auto gt = io::read_gt_signs(cfg.gt_signs);
    std::vector<FramePose> gt_poses, est_poses;
    if (cfg.gt_poses) gt_poses = io::read_poses(*cfg.gt_poses);
    if (cfg.poses) {
      if (!cfg.gt_poses) throw InvalidArgument("--poses needs --gt-poses for ATE");
      est_poses = io::read_poses(*cfg.poses);
      check_pose_gps_frames(est_poses, [&] {
        std::vector<GpsFix> ids;
        for (const auto& p : gt_poses) ids.push_back({p.frame_id, {}});
        return ids;
      }());
    }
    const json report = evaluate_report(maps, gt, gt_poses, est_poses);
    io::atomic_write(cfg.out, report.dump(2) + "\n");
    log << "wrote " << cfg.out.string() << "\n";
    return kExitOk;
  });
}

// ---- simulate ------------------------------------------------------------

inline json scenario_json(const ScenarioSpec& s) {
  json wp = json::array();
  for (const auto& w : s.waypoints) wp.push_back({w.x(), w.y()});
  return {{"seed", s.seed},
          {"waypoints", wp},
          {"turn_radius", s.turn_radius},
          {"speed", s.speed},
          {"frame_rate", s.frame_rate},
          {"camera_height", s.camera_height},
          {"n_signs", s.n_signs},
          {"lateral_range", {s.lateral_min, s.lateral_max}},
          {"height_range", {s.height_min, s.height_max}},
          {"depth_range", {s.min_depth, s.max_depth}},
          {"pixel_noise_sigma", s.pixel_noise_sigma},
          {"gps_noise_sigma", s.gps_noise_sigma},
          {"slam_scale", s.slam_scale},
          {"scale_drift_sigma", s.scale_drift_sigma},
          {"yaw_drift_sigma", s.yaw_drift_sigma},
          {"calibration", io::calibration_to_json(s.calibration)},
          {"base_lat", s.base_lat},
          {"base_lon", s.base_lon},
          {"lat0", s.base_lat}};
}

struct SimulateConfig {
  ScenarioSpec scenario;
  fs::path out_dir;
};

// Files written by `simulate`, relative to the output directory.
struct BundleLayout {
  static constexpr const char* kPoses = "poses.csv";
  static constexpr const char* kGps = "gps.csv";
  static constexpr const char* kDetections = "detections.csv";
  static constexpr const char* kCalibration = "calibration.json";
  static constexpr const char* kGtSigns = "gt_signs.csv";
  static constexpr const char* kGtPoses = "gt_poses.csv";
  static constexpr const char* kScenario = "scenario.json";
  static constexpr const char* kConfig = "pipeline.ini";
};

inline int cmd_simulate(const SimulateConfig& cfg, std::ostream& log = std::cerr) {
  return guarded(log, [&] {
    const Journey j = generate_journey(cfg.scenario);
    const fs::path dir = cfg.out_dir;
    fs::create_directories(dir);
    io::write_poses(dir / BundleLayout::kPoses, j.estimated_poses);
    io::write_gps(dir / BundleLayout::kGps, j.gps);
    io::write_detections(dir / BundleLayout::kDetections, j.detections);
    io::write_calibration(dir / BundleLayout::kCalibration, cfg.scenario.calibration);
    io::write_gt_signs(dir / BundleLayout::kGtSigns, j.signs);
    io::write_poses(dir / BundleLayout::kGtPoses, j.gt_poses);
    io::atomic_write(dir / BundleLayout::kScenario, scenario_json(cfg.scenario).dump(2) + "\n");

    // Ready-made config for `signmap --config pipeline.ini triangulate`.
    const fs::path abs = fs::absolute(dir);
    std::ostringstream ini;
    ini << "[triangulate]\n"
        << "poses = \"" << (abs / BundleLayout::kPoses).string() << "\"\n"
        << "gps = \"" << (abs / BundleLayout::kGps).string() << "\"\n"
        << "detections = \"" << (abs / BundleLayout::kDetections).string() << "\"\n"
        << "calibration = \"" << (abs / BundleLayout::kCalibration).string() << "\"\n"
        << "lat0 = " << io::format_double(j.ref.lat0()) << "\n";
    io::atomic_write(dir / BundleLayout::kConfig, ini.str());

    log << "simulated " << j.gt_poses.size() << " frames, " << j.signs.size() << " signs, "
        << j.detections.size() << " detections -> " << dir.string() << "\n";
    return kExitOk;
  });
}

// ---- sweep ---------------------------------------------------------------

struct SweepConfig {
  ScenarioSpec scenario;
  SweepSpec sweep;
  fs::path out_dir;
};

inline std::string sweep_csv(const SweepGrid& grid) {
  std::string s = "group1_pct,group2_pct,score,failed_signs,repeats\n";
  for (const auto& c : grid.cells) {
    s += io::format_double(c.pct1) + "," + io::format_double(c.pct2) + "," +
         (c.score ? io::format_double(*c.score) : std::string("nan")) + "," +
         std::to_string(c.failed_signs) + "," + std::to_string(c.repeats) + "\n";
  }
  return s;
}

inline std::string sweep_file_name(const SweepGrid& grid) {
  std::string name = "sweep_" + grid.group1;
  if (!grid.group2.empty()) name += "_" + grid.group2;
  for (auto& ch : name) {
    if (ch == '+') ch = '-';
  }
  return name + ".csv";
}

// Observations about the grid shape, reported rather than asserted.
inline json sweep_annotations(const std::vector<SweepGrid>& grids) {
  json notes = json::array();
  for (const auto& g : grids) {
    if (!g.group2.empty() || g.cells.empty()) continue;
    const SweepCell* lo = &g.cells.front();
    const SweepCell* hi = &g.cells.back();
    const SweepCell* zero = nullptr;
    for (const auto& c : g.cells) {
      if (c.pct1 == 0.0) zero = &c;
    }
    json n = {{"group", g.group1}};
    if (lo->score && hi->score) {
      n["under_vs_over"] = *lo->score > *hi->score   ? "underestimating is worse"
                           : *lo->score < *hi->score ? "overestimating is worse"
                                                     : "symmetric";
    }
    if (zero && zero->score && lo->score && hi->score) {
      n["ground_truth_best_of_extremes"] =
          *zero->score <= *lo->score && *zero->score <= *hi->score;
    }
    notes.push_back(n);
  }
  return notes;
}

inline json sweep_spec_json(const SweepSpec& s) {
  json groups = json::array();
  for (auto g : s.groups) groups.push_back(to_string(g));
  return {{"mode", to_string(s.mode)},
          {"groups", groups},
          {"range", s.range},
          {"repeats", s.repeats},
          {"aggregate", to_string(s.aggregate)},
          {"triangulation_mode", to_string(s.pipeline.mode)},
          {"align_dims", to_string(s.pipeline.align_dims)},
          {"score", "mean relative error / triangulated signs"}};
}

inline int cmd_sweep(const SweepConfig& cfg, std::ostream& log = std::cerr) {
  return guarded(log, [&] {
    const auto grids = run_sweep(cfg.scenario, cfg.sweep);
    fs::create_directories(cfg.out_dir);
    json files = json::array();
    bool any_score = false;
    for (const auto& g : grids) {
      const auto name = sweep_file_name(g);
      io::atomic_write(cfg.out_dir / name, sweep_csv(g));
      files.push_back({{"file", name}, {"group1", g.group1},
                       {"group2", g.group2.empty() ? json(nullptr) : json(g.group2)}});
      for (const auto& c : g.cells) any_score = any_score || c.score.has_value();
    }
    const json manifest = {{"scenario", scenario_json(cfg.scenario)},
                           {"sweep", sweep_spec_json(cfg.sweep)},
                           {"grids", files},
                           {"annotations", sweep_annotations(grids)}};
    io::atomic_write(cfg.out_dir / "manifest.json", manifest.dump(2) + "\n");
    log << "wrote " << grids.size() << " grid(s) to " << cfg.out_dir.string() << "\n";
    return any_score ? kExitOk : kExitNoOutput;
  });
}

// ---- turns ---------------------------------------------------------------

struct TurnsConfig {
  fs::path gps;
  fs::path out;
  double epsilon = 2.0;
  int window = 25;
  std::optional<double> lat0;
};

inline json turns_json(const std::vector<FrameRange>& ranges) {
  json segs = json::array();
  for (const auto& r : ranges) {
    segs.push_back({{"first_frame", r.first}, {"last_frame", r.last}, {"apices", r.apices}});
  }
  return {{"segments", segs}};
}

inline int cmd_turns(const TurnsConfig& cfg, std::ostream& log = std::cerr) {
  return guarded(log, [&] {
    const auto gps = io::read_gps(cfg.gps);
    const GeoFrame frame = make_geo_frame(gps, cfg.lat0);
    std::vector<FrameId> ids;
    std::vector<Vec2> xy;
    for (const auto& g : gps) {
      ids.push_back(g.frame_id);
      xy.push_back(to_mercator(g.geo, frame.ref) - frame.origin.head<2>());
    }
    const auto ranges = extract_turn_segments(ids, xy, cfg.epsilon, cfg.window);
    io::atomic_write(cfg.out, turns_json(ranges).dump(2) + "\n");
    log << "found " << ranges.size() << " turn segment(s)\n";
    return kExitOk;
  });
}

}  // namespace signmap::cli
