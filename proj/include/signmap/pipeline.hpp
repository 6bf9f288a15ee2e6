#pragma once

#include <algorithm>
#include <iterator>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "signmap/align.hpp"
#include "signmap/camera.hpp"
#include "signmap/errors.hpp"
#include "signmap/geo.hpp"
#include "signmap/triangulate.hpp"

namespace signmap {

// How GPS enters the alignment: with altitude as z, or flattened to z = 0.
enum class AlignDims { k2d, k3d };

inline AlignDims parse_align_dims(std::string_view s) {
  if (s == "2d") return AlignDims::k2d;
  if (s == "3d") return AlignDims::k3d;
  throw InvalidArgument("align dims must be '2d' or '3d'");
}

inline std::string_view to_string(AlignDims d) { return d == AlignDims::k2d ? "2d" : "3d"; }

struct GpsFix {
  FrameId frame_id = 0;
  GeoPoint geo;
};

// Reference latitude defaults to the first fix; the local origin is that
// fix's Mercator position at zero height.
inline GeoFrame make_geo_frame(std::span<const GpsFix> gps, std::optional<double> lat0 = {}) {
  if (gps.empty()) throw InvalidArgument("GPS track is empty");
  GeoFrame frame{MercatorRef(lat0.value_or(gps.front().geo.lat)), Vec3::Zero()};
  frame.origin.head<2>() = to_mercator(gps.front().geo, frame.ref);
  return frame;
}

namespace detail {

inline std::string summarize_ids(const std::vector<FrameId>& ids) {
  std::ostringstream os;
  const std::size_t shown = std::min<std::size_t>(ids.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) os << (i ? ", " : "") << ids[i];
  if (ids.size() > shown) os << ", ... (" << ids.size() << " total)";
  return os.str();
}

}  // namespace detail

// Poses and GPS must cover exactly the same frames.
inline void check_pose_gps_frames(std::span<const FramePose> poses, std::span<const GpsFix> gps) {
  std::set<FrameId> pose_ids, gps_ids;
  for (const auto& p : poses) pose_ids.insert(p.frame_id);
  for (const auto& g : gps) gps_ids.insert(g.frame_id);
  std::vector<FrameId> only_pose, only_gps;
  std::set_difference(pose_ids.begin(), pose_ids.end(), gps_ids.begin(), gps_ids.end(),
                      std::back_inserter(only_pose));
  std::set_difference(gps_ids.begin(), gps_ids.end(), pose_ids.begin(), pose_ids.end(),
                      std::back_inserter(only_gps));
  if (!only_pose.empty() || !only_gps.empty()) {
    std::string msg = "pose and GPS frames differ:";
    if (!only_pose.empty()) msg += " frames only in poses: " + detail::summarize_ids(only_pose) + ";";
    if (!only_gps.empty()) msg += " frames only in GPS: " + detail::summarize_ids(only_gps) + ";";
    throw FrameMismatch(msg);
  }
}

inline void check_detection_frames(std::span<const SignObservation> detections,
                                   std::span<const FramePose> poses) {
  std::set<FrameId> pose_ids;
  for (const auto& p : poses) pose_ids.insert(p.frame_id);
  std::set<FrameId> missing;
  for (const auto& d : detections) {
    if (!pose_ids.count(d.frame_id)) missing.insert(d.frame_id);
  }
  if (!missing.empty()) {
    throw FrameMismatch("detections reference frames with no pose: " +
                        detail::summarize_ids({missing.begin(), missing.end()}));
  }
}

// Pairs poses with GPS (both sorted by frame id) in the local metric frame.
inline Trajectory make_trajectory(std::vector<FramePose> poses, std::vector<GpsFix> gps,
                                  const GeoFrame& frame, AlignDims dims) {
  check_pose_gps_frames(poses, gps);
  auto by_frame = [](const auto& a, const auto& b) { return a.frame_id < b.frame_id; };
  std::sort(poses.begin(), poses.end(), by_frame);
  std::sort(gps.begin(), gps.end(), by_frame);
  std::vector<Vec3> local;
  local.reserve(gps.size());
  for (const auto& g : gps) {
    Vec3 p;
    p.head<2>() = to_mercator(g.geo, frame.ref);
    p.z() = dims == AlignDims::k3d ? g.geo.alt : 0.0;
    local.push_back(frame.to_local(p));
  }
  return Trajectory(std::move(poses), std::move(local));
}

struct PipelineOptions {
  TriangulationMode mode = TriangulationMode::kShort;
  AlignDims align_dims = AlignDims::k3d;
  std::optional<double> lat0;
  TriangulationOptions triangulation;
  unsigned threads = 1;
};

struct PipelineOutput {
  GeoFrame frame;
  std::vector<TrackResult> results;  // ordered by sign id
};

// Ingested journey -> per-sign triangulation results.
inline PipelineOutput run_pipeline(std::vector<FramePose> poses, std::vector<GpsFix> gps,
                                   std::span<const SignObservation> detections,
                                   const Calibration& calibration,
                                   const PipelineOptions& options) {
  check_pose_gps_frames(poses, gps);
  check_detection_frames(detections, poses);
  std::sort(gps.begin(), gps.end(),
            [](const auto& a, const auto& b) { return a.frame_id < b.frame_id; });
  const GeoFrame frame = make_geo_frame(gps, options.lat0);
  Triangulator tri(make_trajectory(std::move(poses), std::move(gps), frame, options.align_dims),
                   calibration, frame, options.triangulation);
  const auto tracks = group_tracks(detections);
  return {frame, tri.triangulate_all(tracks, options.mode, options.threads)};
}

}  // namespace signmap
