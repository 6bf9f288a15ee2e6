#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "signmap/camera.hpp"
#include "signmap/errors.hpp"

namespace signmap {

using FrameId = std::int64_t;

// Camera pose stored world-from-camera: `rotation` maps camera-frame vectors
// into the world frame and `position` is the camera center in the world.
struct FramePose {
  FrameId frame_id = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();

  // R_{j,0} p + t'_{j,0}
  Vec3 world_to_camera(const Vec3& p) const {
    return rotation.transpose() * (p - position);
  }
  Vec3 camera_to_world(const Vec3& p) const {
    return rotation * p + position;
  }

  bool has_valid_rotation(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Mat3::Identity())
                   .cwiseAbs()
                   .maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

// Estimated camera poses co-indexed with GPS positions in a metric frame.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::vector<FramePose> poses, std::vector<Vec3> gps)
      : poses_(std::move(poses)), gps_(std::move(gps)) {
    if (poses_.size() != gps_.size()) {
      throw InvalidArgument("trajectory poses and GPS differ in length");
    }
    for (std::size_t i = 0; i < poses_.size(); ++i) {
      if (i > 0 && poses_[i].frame_id <= poses_[i - 1].frame_id) {
        throw InvalidArgument("trajectory frame ids must be strictly increasing");
      }
      if (!poses_[i].has_valid_rotation()) {
        throw InvalidArgument("pose " + std::to_string(poses_[i].frame_id) +
                              " has a non-orthonormal rotation");
      }
    }
  }

  std::size_t size() const { return poses_.size(); }
  const std::vector<FramePose>& poses() const { return poses_; }
  const std::vector<Vec3>& gps() const { return gps_; }

  std::optional<std::size_t> index_of(FrameId id) const {
    auto it = std::lower_bound(
        poses_.begin(), poses_.end(), id,
        [](const FramePose& p, FrameId f) { return p.frame_id < f; });
    if (it == poses_.end() || it->frame_id != id) return std::nullopt;
    return std::size_t(it - poses_.begin());
  }

  std::vector<Vec3> positions() const {
    std::vector<Vec3> out;
    out.reserve(poses_.size());
    for (const auto& p : poses_) out.push_back(p.position);
    return out;
  }

 private:
  std::vector<FramePose> poses_;
  std::vector<Vec3> gps_;
};

// p -> s R p + t
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  // Mean squared alignment error achieved by the fit (zero when constructed
  // by hand).
  double mse = 0.0;

  Vec3 apply(const Vec3& p) const {
    return scale * (rotation * p) + translation;
  }

  SimilarityTransform inverse() const {
    SimilarityTransform inv;
    inv.scale = 1.0 / scale;
    inv.rotation = rotation.transpose();
    inv.translation = -inv.scale * (inv.rotation * translation);
    return inv;
  }
};

struct UmeyamaOptions {
  // When false, a collinear source is accepted: the residual is still the
  // minimum but the rotation about the common line is arbitrary. Trajectory
  // metrics only need the residual.
  bool require_unique_rotation = true;
  // Minimum ratio between the second and first principal spreads of the
  // source for the rotation to count as determined.
  double collinearity_tolerance = 1e-6;
};

inline double similarity_mse(std::span<const Vec3> source,
                             std::span<const Vec3> target,
                             const SimilarityTransform& tf) {
  double sum = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    sum += (target[i] - tf.apply(source[i])).squaredNorm();
  }
  return sum / double(source.size());
}

// Closed-form least-squares similarity mapping source onto target.
inline SimilarityTransform umeyama_fit(std::span<const Vec3> source,
                                       std::span<const Vec3> target,
                                       const UmeyamaOptions& opts = {}) {
  const std::size_t n = source.size();
  if (n != target.size()) {
    throw InvalidArgument("umeyama_fit: source and target differ in length");
  }
  if (n < 3) throw InvalidArgument("umeyama_fit: need at least 3 points");

  Vec3 mu_src = Vec3::Zero();
  Vec3 mu_dst = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_src += source[i];
    mu_dst += target[i];
  }
  mu_src /= double(n);
  mu_dst /= double(n);

  Mat3 src_cov = Mat3::Zero();
  Mat3 cross = Mat3::Zero();
  double var_src = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = source[i] - mu_src;
    const Vec3 b = target[i] - mu_dst;
    src_cov += a * a.transpose();
    cross += b * a.transpose();
    var_src += a.squaredNorm();
  }
  src_cov /= double(n);
  cross /= double(n);
  var_src /= double(n);

  const double extent = 1.0 + mu_src.norm();
  if (!(var_src > (1e-12 * extent) * (1e-12 * extent))) {
    throw DegenerateGeometry("umeyama_fit: source points are coincident");
  }
  if (opts.require_unique_rotation) {
    Eigen::JacobiSVD<Mat3> spread(src_cov);
    const auto sv = spread.singularValues();
    if (std::sqrt(sv(1) / sv(0)) < opts.collinearity_tolerance) {
      throw DegenerateGeometry("umeyama_fit: source points are collinear");
    }
  }

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Vec3 s_diag(1.0, 1.0, 1.0);
  if (u.determinant() * v.determinant() < 0.0) s_diag(2) = -1.0;

  SimilarityTransform tf;
  tf.rotation = u * s_diag.asDiagonal() * v.transpose();
  tf.scale = svd.singularValues().dot(s_diag) / var_src;
  tf.translation = mu_dst - tf.scale * (tf.rotation * mu_src);
  tf.mse = similarity_mse(source, target, tf);
  return tf;
}

// t'_{0,j} = s R t_{0,j} + t, with camera orientations carried into the new
// world frame.
inline std::vector<FramePose> apply_similarity(const SimilarityTransform& tf,
                                               std::span<const FramePose> poses) {
  std::vector<FramePose> out;
  out.reserve(poses.size());
  for (const auto& p : poses) {
    out.push_back({p.frame_id, tf.rotation * p.rotation, tf.apply(p.position)});
  }
  return out;
}

inline double point_segment_distance(const Vec2& p, const Vec2& a,
                                     const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Ramer-Douglas-Peucker. Returns retained indices in ascending order; the
// endpoints are always retained and every dropped point lies within epsilon
// of the retained segment spanning it.
inline std::vector<std::size_t> rdp_simplify(std::span<const Vec2> points,
                                             double epsilon) {
  if (points.size() < 2) {
    throw InvalidArgument("rdp_simplify: need at least 2 points");
  }
  if (!(epsilon > 0.0)) {
    throw InvalidArgument("rdp_simplify: epsilon must be positive");
  }
  std::vector<bool> keep(points.size(), false);
  keep.front() = keep.back() = true;

  std::vector<std::pair<std::size_t, std::size_t>> stack;
  stack.emplace_back(0, points.size() - 1);
  while (!stack.empty()) {
    const auto [first, last] = stack.back();
    stack.pop_back();
    if (last <= first + 1) continue;
    double max_dist = -1.0;
    std::size_t index = first;
    for (std::size_t i = first + 1; i < last; ++i) {
      const double d = point_segment_distance(points[i], points[first], points[last]);
      if (d > max_dist) {
        max_dist = d;
        index = i;
      }
    }
    if (max_dist > epsilon) {
      keep[index] = true;
      stack.emplace_back(index, last);
      stack.emplace_back(first, index);
    }
  }

  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) out.push_back(i);
  }
  return out;
}

struct FrameRange {
  FrameId first = 0;
  FrameId last = 0;
  // Turn apices (RDP-retained interior points) inside the range.
  std::vector<FrameId> apices;

  bool contains(FrameId f) const { return f >= first && f <= last; }
};

// Sub-sequences around vehicle turns, for feeding a self-calibration tool.
// Each interior RDP vertex contributes +-window frames; overlapping ranges
// are merged.
inline std::vector<FrameRange> extract_turn_segments(
    std::span<const FrameId> frame_ids, std::span<const Vec2> gps_xy,
    double epsilon, int window) {
  if (frame_ids.size() != gps_xy.size()) {
    throw InvalidArgument("extract_turn_segments: ids and GPS differ in length");
  }
  if (window < 2) {
    throw InvalidArgument("extract_turn_segments: window must be >= 2");
  }
  const auto kept = rdp_simplify(gps_xy, epsilon);
  if (kept.size() <= 2) {
    throw NoTurns("no turns found in the GPS trajectory");
  }

  const std::ptrdiff_t last_index = std::ptrdiff_t(gps_xy.size()) - 1;
  std::vector<FrameRange> ranges;
  std::ptrdiff_t cur_end = -1;
  for (std::size_t k = 1; k + 1 < kept.size(); ++k) {
    const auto apex = std::ptrdiff_t(kept[k]);
    const auto lo = std::max<std::ptrdiff_t>(0, apex - window);
    const auto hi = std::min<std::ptrdiff_t>(last_index, apex + window);
    if (!ranges.empty() && lo <= cur_end) {
      cur_end = std::max(cur_end, hi);
      ranges.back().last = frame_ids[cur_end];
    } else {
      ranges.push_back({frame_ids[lo], frame_ids[hi], {}});
      cur_end = hi;
    }
    ranges.back().apices.push_back(frame_ids[apex]);
  }
  return ranges;
}

inline std::vector<FrameRange> extract_turn_segments(const Trajectory& traj,
                                                     double epsilon,
                                                     int window) {
  std::vector<FrameId> ids;
  std::vector<Vec2> xy;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    ids.push_back(traj.poses()[i].frame_id);
    xy.push_back(traj.gps()[i].head<2>());
  }
  return extract_turn_segments(ids, xy, epsilon, window);
}

}  // namespace signmap
