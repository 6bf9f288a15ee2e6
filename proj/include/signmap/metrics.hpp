#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "signmap/align.hpp"
#include "signmap/errors.hpp"
#include "signmap/triangulate.hpp"

namespace signmap {

namespace detail {

inline void check_coindexed(std::span<const FramePose> a, std::span<const FramePose> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("trajectories differ in length");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].frame_id != b[i].frame_id) {
      throw InvalidArgument("trajectories are not co-indexed at position " +
                            std::to_string(i));
    }
  }
}

inline double aligned_rmse(std::span<const FramePose> est, std::span<const FramePose> ref) {
  std::vector<Vec3> src, dst;
  for (std::size_t i = 0; i < est.size(); ++i) {
    src.push_back(est[i].position);
    dst.push_back(ref[i].position);
  }
  const auto tf = umeyama_fit(src, dst, {.require_unique_rotation = false});
  return std::sqrt(std::max(tf.mse, 0.0));
}

}  // namespace detail

// RMSE of camera positions after one similarity alignment of the whole
// estimated trajectory onto the reference.
inline double ate_full(std::span<const FramePose> estimated,
                       std::span<const FramePose> reference) {
  detail::check_coindexed(estimated, reference);
  if (estimated.size() < 3) throw InvalidArgument("ate_full: need >= 3 frames");
  return detail::aligned_rmse(estimated, reference);
}

struct WindowedAte {
  double mean = 0.0;
  double std = 0.0;
  std::size_t windows = 0;  // windows scored
  std::size_t skipped = 0;  // degenerate windows
};

// ATE over every run of `window` consecutive frames, each aligned on its own.
// The spread is the population standard deviation over windows.
inline WindowedAte ate_windowed(std::span<const FramePose> estimated,
                                std::span<const FramePose> reference,
                                std::size_t window = 5) {
  detail::check_coindexed(estimated, reference);
  if (window < 3 || estimated.size() < window) {
    throw InvalidArgument("ate_windowed: trajectory shorter than the window");
  }
  std::vector<double> values;
  WindowedAte out;
  for (std::size_t i = 0; i + window <= estimated.size(); ++i) {
    try {
      values.push_back(detail::aligned_rmse(estimated.subspan(i, window),
                                            reference.subspan(i, window)));
    } catch (const DegenerateGeometry&) {
      ++out.skipped;
    }
  }
  if (values.empty()) throw DegenerateGeometry("every ATE window is degenerate");
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / double(values.size());
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / double(values.size()));
  out.windows = values.size();
  return out;
}

inline WindowedAte ate_5(std::span<const FramePose> estimated,
                         std::span<const FramePose> reference) {
  return ate_windowed(estimated, reference, 5);
}

struct SignGroundTruth {
  SignId sign_id = 0;
  std::string class_label;
  Vec3 abs_position = Vec3::Zero();  // absolute Mercator frame
  // Optional per-frame camera-frame positions.
  std::map<FrameId, Vec3> rel_positions;
};

struct SignError {
  SignId sign_id = 0;
  SignId gt_id = 0;
  double abs_error = 0.0;
  std::optional<double> rel_error;
};

struct ModeErrors {
  std::optional<double> rel_mean;  // e_f or e_s
  double abs_mean = 0.0;
  std::size_t m = 0;        // successfully triangulated signs
  std::size_t matched = 0;  // of those, matched to ground truth
  std::vector<SignError> per_sign;

  // Mean relative error divided by the number of triangulated signs.
  std::optional<double> rel_normalized() const {
    if (!rel_mean || m == 0) return std::nullopt;
    return *rel_mean / double(m);
  }
};

struct ErrorReport {
  std::optional<ModeErrors> full;
  std::optional<ModeErrors> short_;
};

inline constexpr double kMatchGate = 5.0;

// Pairs results with ground truth: identical ids first, then greedy nearest
// neighbours within the gate. Returns (result index, gt index) pairs sorted by
// result sign id.
inline std::vector<std::pair<std::size_t, std::size_t>> match_signs(
    std::span<const TriangulatedSign> results, std::span<const SignGroundTruth> gt,
    double gate = kMatchGate) {
  std::map<SignId, std::size_t> gt_by_id;
  for (std::size_t j = 0; j < gt.size(); ++j) gt_by_id.emplace(gt[j].sign_id, j);

  std::vector<bool> res_used(results.size(), false), gt_used(gt.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto it = gt_by_id.find(results[i].sign_id);
    if (it != gt_by_id.end() && !gt_used[it->second]) {
      pairs.emplace_back(i, it->second);
      res_used[i] = gt_used[it->second] = true;
    }
  }

  std::vector<std::tuple<double, SignId, SignId, std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (res_used[i]) continue;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (gt_used[j]) continue;
      const double d = (results[i].abs_position - gt[j].abs_position).norm();
      if (d <= gate) candidates.emplace_back(d, results[i].sign_id, gt[j].sign_id, i, j);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  for (const auto& [d, rid, gid, i, j] : candidates) {
    if (res_used[i] || gt_used[j]) continue;
    pairs.emplace_back(i, j);
    res_used[i] = gt_used[j] = true;
  }
  std::sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
    return results[a.first].sign_id < results[b.first].sign_id;
  });
  return pairs;
}

// Relative error per sign is the mean over its frames of the camera-frame
// position error; ground-truth camera-frame positions come from the sign's
// own table or, failing that, from the ground-truth poses.
inline ModeErrors sign_errors(std::span<const TriangulatedSign> results_in,
                              std::span<const SignGroundTruth> gt_in,
                              std::span<const FramePose> gt_poses = {}) {
  std::vector<TriangulatedSign> results(results_in.begin(), results_in.end());
  std::sort(results.begin(), results.end(),
            [](const auto& a, const auto& b) { return a.sign_id < b.sign_id; });
  std::vector<SignGroundTruth> gt(gt_in.begin(), gt_in.end());
  std::sort(gt.begin(), gt.end(), [](const auto& a, const auto& b) {
    return std::tie(a.sign_id, a.abs_position.x(), a.abs_position.y(), a.abs_position.z()) <
           std::tie(b.sign_id, b.abs_position.x(), b.abs_position.y(), b.abs_position.z());
  });

  std::map<FrameId, const FramePose*> pose_by_frame;
  for (const auto& p : gt_poses) pose_by_frame[p.frame_id] = &p;

  const auto pairs = match_signs(results, gt);
  if (pairs.empty()) throw NoMatches("no triangulated sign matches the ground truth");

  ModeErrors out;
  out.m = results.size();
  out.matched = pairs.size();
  double abs_sum = 0.0, rel_sum = 0.0;
  std::size_t rel_count = 0;
  for (const auto& [i, j] : pairs) {
    const auto& r = results[i];
    const auto& g = gt[j];
    SignError e{r.sign_id, g.sign_id, (r.abs_position - g.abs_position).norm(), {}};
    double frame_sum = 0.0;
    std::size_t frames = 0;
    for (const auto& [f, p_est] : r.rel_positions) {
      std::optional<Vec3> p_gt;
      if (auto it = g.rel_positions.find(f); it != g.rel_positions.end()) {
        p_gt = it->second;
      } else if (auto pit = pose_by_frame.find(f); pit != pose_by_frame.end()) {
        p_gt = pit->second->world_to_camera(g.abs_position);
      }
      if (p_gt) {
        frame_sum += (p_est - *p_gt).norm();
        ++frames;
      }
    }
    if (frames > 0) {
      e.rel_error = frame_sum / double(frames);
      rel_sum += *e.rel_error;
      ++rel_count;
    }
    abs_sum += e.abs_error;
    out.per_sign.push_back(e);
  }
  out.abs_mean = abs_sum / double(pairs.size());
  if (rel_count > 0) out.rel_mean = rel_sum / double(rel_count);
  return out;
}

}  // namespace signmap
