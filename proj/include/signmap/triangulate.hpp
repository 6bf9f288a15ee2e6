#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "signmap/align.hpp"
#include "signmap/camera.hpp"
#include "signmap/errors.hpp"
#include "signmap/geo.hpp"
#include "signmap/parallel.hpp"

namespace signmap {

using SignId = std::int64_t;

struct SignObservation {
  SignId sign_id = 0;
  FrameId frame_id = 0;
  PixelPoint pixel;  // distorted pixel, as detected
  std::string class_label;
};

// All observations of one physical sign, ordered by frame.
class SignTrack {
 public:
  SignTrack(SignId id, std::vector<SignObservation> observations)
      : sign_id_(id), observations_(std::move(observations)) {
    std::sort(observations_.begin(), observations_.end(),
              [](const auto& a, const auto& b) { return a.frame_id < b.frame_id; });
    for (std::size_t i = 0; i < observations_.size(); ++i) {
      if (observations_[i].sign_id != id) {
        throw InvalidArgument("observation belongs to a different sign");
      }
      if (i > 0 && observations_[i].frame_id == observations_[i - 1].frame_id) {
        throw InvalidArgument("sign " + std::to_string(id) +
                              " observed twice in frame " +
                              std::to_string(observations_[i].frame_id));
      }
    }
    if (!observations_.empty()) class_label_ = observations_.front().class_label;
  }

  SignId sign_id() const { return sign_id_; }
  const std::string& class_label() const { return class_label_; }
  const std::vector<SignObservation>& observations() const { return observations_; }
  std::size_t size() const { return observations_.size(); }

  std::vector<FrameId> frames() const {
    std::vector<FrameId> out;
    for (const auto& o : observations_) out.push_back(o.frame_id);
    return out;
  }

 private:
  SignId sign_id_;
  std::string class_label_;
  std::vector<SignObservation> observations_;
};

// Groups detections by sign id; tracks come back ordered by sign id.
inline std::vector<SignTrack> group_tracks(std::span<const SignObservation> detections) {
  std::map<SignId, std::vector<SignObservation>> by_sign;
  for (const auto& d : detections) by_sign[d.sign_id].push_back(d);
  std::vector<SignTrack> tracks;
  for (auto& [id, obs] : by_sign) tracks.emplace_back(id, std::move(obs));
  return tracks;
}

enum class TriangulationMode { kFull, kShort };

inline std::string_view to_string(TriangulationMode m) {
  return m == TriangulationMode::kFull ? "full" : "short";
}

inline TriangulationMode parse_mode(std::string_view s) {
  if (s == "full") return TriangulationMode::kFull;
  if (s == "short") return TriangulationMode::kShort;
  throw InvalidArgument("unknown triangulation mode '" + std::string(s) + "'");
}

// One observation paired with the aligned pose of its frame. The pixel is
// already undistorted and expressed under the rectified K.
struct View {
  FrameId frame_id = 0;
  FramePose pose;
  PixelPoint pixel;
};

// Unit ray direction in the world frame.
inline Vec3 view_ray(const View& v, const CameraIntrinsics& k) {
  const NormalizedPoint n = k.normalize(v.pixel);
  return (v.pose.rotation * Vec3(n.x, n.y, 1.0)).normalized();
}

// Linear least-squares point closest (in summed squared perpendicular
// distance) to every back-projected ray.
inline Vec3 midpoint_triangulate(std::span<const View> views,
                                 const CameraIntrinsics& k) {
  if (views.size() < 2) {
    throw InvalidArgument("midpoint_triangulate: need at least 2 views");
  }
  std::vector<const View*> ordered;
  for (const auto& v : views) ordered.push_back(&v);
  std::sort(ordered.begin(), ordered.end(),
            [](const View* a, const View* b) { return a->frame_id < b->frame_id; });

  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const View* v : ordered) {
    const Vec3 d = view_ray(*v, k);
    const Mat3 proj = Mat3::Identity() - d * d.transpose();
    a += proj;
    b += proj * v->pose.position;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(a);
  const Vec3 ev = eig.eigenvalues();
  if (!(ev(0) > 1e-12 * ev(2))) {
    throw DegenerateRays("rays are parallel; the sign position is unconstrained");
  }
  const Mat3& q = eig.eigenvectors();
  return q * ((q.transpose() * b).array() / ev.array()).matrix();
}

// Sum of squared pixel residuals between the projected sign point and the
// undistorted observations, poses and intrinsics held fixed. Positions are
// handled relative to an anchor so the solver works on small offsets.
class ReprojectionProblem {
 public:
  ReprojectionProblem(std::span<const View> views, const CameraIntrinsics& k,
                      const Vec3& anchor)
      : k_(k), anchor_(anchor) {
    for (const auto& v : views) {
      Term t;
      t.cam_from_world = v.pose.rotation.transpose();
      t.anchor_in_cam = t.cam_from_world * (anchor - v.pose.position);
      t.target = v.pixel;
      terms_.push_back(t);
    }
  }

  std::size_t size() const { return terms_.size(); }
  const Vec3& anchor() const { return anchor_; }

  Vec3 camera_point(std::size_t i, const Vec3& offset) const {
    return terms_[i].anchor_in_cam + terms_[i].cam_from_world * offset;
  }

  Eigen::Vector2d residual(std::size_t i, const Vec3& offset) const {
    const Vec3 q = camera_point(i, offset);
    return {k_.fx() * q.x() / q.z() + k_.cx() - terms_[i].target.u,
            k_.fy() * q.y() / q.z() + k_.cy() - terms_[i].target.v};
  }

  // d residual / d offset
  Eigen::Matrix<double, 2, 3> jacobian(std::size_t i, const Vec3& offset) const {
    const Vec3 q = camera_point(i, offset);
    const double iz = 1.0 / q.z();
    Eigen::Matrix<double, 2, 3> dproj;
    dproj << k_.fx() * iz, 0.0, -k_.fx() * q.x() * iz * iz,
        0.0, k_.fy() * iz, -k_.fy() * q.y() * iz * iz;
    return dproj * terms_[i].cam_from_world;
  }

  double cost_at_offset(const Vec3& offset) const {
    double c = 0.0;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      c += residual(i, offset).squaredNorm();
    }
    return c;
  }

  Vec3 gradient_at_offset(const Vec3& offset) const {
    Vec3 g = Vec3::Zero();
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      g += 2.0 * jacobian(i, offset).transpose() * residual(i, offset);
    }
    return g;
  }

  double cost(const Vec3& p) const { return cost_at_offset(p - anchor_); }
  Vec3 gradient(const Vec3& p) const { return gradient_at_offset(p - anchor_); }

  // Mean pixel distance over observations.
  double mean_error(const Vec3& offset) const {
    double s = 0.0;
    for (std::size_t i = 0; i < terms_.size(); ++i) s += residual(i, offset).norm();
    return s / double(terms_.size());
  }

 private:
  struct Term {
    Mat3 cam_from_world;
    Vec3 anchor_in_cam;
    PixelPoint target;
  };

  CameraIntrinsics k_;
  Vec3 anchor_;
  std::vector<Term> terms_;
};

struct BaOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
  // Relative step size below which further progress is not representable.
  double parameter_tolerance = 1e-14;
  double initial_damping = 1e-3;
};

struct BaResult {
  Vec3 position;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double mean_error_px = 0.0;
  int iterations = 0;
  // Cost after each accepted step, starting with the initial cost.
  std::vector<double> cost_history;
};

// Levenberg-Marquardt refinement of a single sign point.
inline BaResult refine_ba(const Vec3& initial, std::span<const View> views,
                          const CameraIntrinsics& k, const BaOptions& opts = {}) {
  if (views.empty()) throw InvalidArgument("refine_ba: no views");
  const ReprojectionProblem problem(views, k, initial);
  const std::size_t n = problem.size();

  std::vector<int> side(n);
  bool any_front = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = problem.camera_point(i, Vec3::Zero()).z();
    side[i] = z > 0.0 ? 1 : -1;
    any_front = any_front || z > 0.0;
  }
  if (!any_front) {
    throw InvalidArgument("refine_ba: initial point is behind every camera");
  }
  auto keeps_sides = [&](const Vec3& offset) {
    for (std::size_t i = 0; i < n; ++i) {
      const double z = problem.camera_point(i, offset).z();
      if ((z > 0.0 ? 1 : -1) != side[i] || z == 0.0) return false;
    }
    return true;
  };

  BaResult result;
  Vec3 offset = Vec3::Zero();
  double cost = problem.cost_at_offset(offset);
  result.initial_cost = cost;
  result.cost_history.push_back(cost);
  double damping = opts.initial_damping;
  bool converged = false;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    result.iterations = iter + 1;
    Mat3 h = Mat3::Zero();
    Vec3 jtr = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = problem.jacobian(i, offset);
      h += j.transpose() * j;
      jtr += j.transpose() * problem.residual(i, offset);
    }
    if ((2.0 * jtr).cwiseAbs().maxCoeff() <= opts.gradient_tolerance) {
      converged = true;
      break;
    }
    Mat3 damped = h;
    for (int d = 0; d < 3; ++d) damped(d, d) += damping * std::max(h(d, d), 1e-12);
    const Vec3 step = -damped.ldlt().solve(jtr);
    const double scale = (initial + offset).norm() + offset.norm();
    if (step.norm() <= opts.parameter_tolerance * (scale + opts.parameter_tolerance)) {
      converged = true;
      break;
    }
    const Vec3 candidate = offset + step;
    const double new_cost =
        keeps_sides(candidate) ? problem.cost_at_offset(candidate)
                               : std::numeric_limits<double>::infinity();
    if (std::isfinite(new_cost) && new_cost < cost) {
      offset = candidate;
      cost = new_cost;
      result.cost_history.push_back(cost);
      damping = std::max(damping / 10.0, 1e-15);
    } else {
      damping *= 10.0;
    }
  }
  if (!converged) {
    throw NonConvergence("bundle adjustment did not converge in " +
                         std::to_string(opts.max_iterations) + " iterations");
  }
  result.position = initial + offset;
  result.final_cost = cost;
  result.mean_error_px = problem.mean_error(offset);
  return result;
}

// Camera-frame sign position for every view.
inline std::map<FrameId, Vec3> relative_positions(const Vec3& p_abs,
                                                  std::span<const View> views) {
  std::map<FrameId, Vec3> out;
  for (const auto& v : views) out[v.frame_id] = v.pose.world_to_camera(p_abs);
  return out;
}

// Maps the pipeline's local metric frame to absolute Mercator and geographic
// coordinates. Local = Mercator(x, y, alt) - origin.
struct GeoFrame {
  MercatorRef ref;
  Vec3 origin = Vec3::Zero();

  Vec3 to_absolute(const Vec3& local) const { return local + origin; }
  Vec3 to_local(const Vec3& absolute) const { return absolute - origin; }
  GeoPoint to_geo(const Vec3& local) const {
    const Vec3 a = to_absolute(local);
    return from_mercator(a.head<2>(), ref, a.z());
  }
};

enum class FailureReason {
  kInsufficientObservations,
  kMissingPose,
  kDegenerateGeometry,
  kDegenerateRays,
  kNonConvergence,
  kNegativeDepth,
};

inline std::string_view to_string(FailureReason r) {
  switch (r) {
    case FailureReason::kInsufficientObservations: return "InsufficientObservations";
    case FailureReason::kMissingPose: return "MissingPose";
    case FailureReason::kDegenerateGeometry: return "DegenerateGeometry";
    case FailureReason::kDegenerateRays: return "DegenerateRays";
    case FailureReason::kNonConvergence: return "NonConvergence";
    case FailureReason::kNegativeDepth: return "NegativeDepth";
  }
  return "Unknown";
}

struct TriangulatedSign {
  SignId sign_id = 0;
  std::string class_label;
  Vec3 abs_position;  // absolute Mercator frame
  std::map<FrameId, Vec3> rel_positions;
  GeoPoint geo;
  TriangulationMode mode = TriangulationMode::kFull;
  double residual_px = 0.0;
  std::vector<FrameId> frames;
};

struct TriangulationFailure {
  SignId sign_id = 0;
  std::string class_label;
  TriangulationMode mode = TriangulationMode::kFull;
  FailureReason reason = FailureReason::kNegativeDepth;
  std::string message;
  std::vector<FrameId> frames;
};

using TrackResult = std::variant<TriangulatedSign, TriangulationFailure>;

inline SignId result_sign_id(const TrackResult& r) {
  return std::visit([](const auto& v) { return v.sign_id; }, r);
}

inline std::vector<TriangulatedSign> successes(std::span<const TrackResult> results) {
  std::vector<TriangulatedSign> out;
  for (const auto& r : results) {
    if (const auto* s = std::get_if<TriangulatedSign>(&r)) out.push_back(*s);
  }
  return out;
}

struct TriangulationOptions {
  // Frames of padding around a sign's observations in short mode.
  int short_padding = 25;
  // Short-mode windows whose estimated camera path is too close to a line
  // (second/first principal spread below this) are widened until it is not.
  double short_min_spread = 0.1;
  BaOptions ba;
};

// Journey-level triangulation state: the estimated trajectory (GPS in the
// local frame), calibration and, for full mode, the global alignment.
class Triangulator {
 public:
  Triangulator(Trajectory trajectory, Calibration calibration, GeoFrame frame,
               TriangulationOptions options = {})
      : trajectory_(std::move(trajectory)),
        calibration_(std::move(calibration)),
        frame_(std::move(frame)),
        options_(std::move(options)) {
    try {
      const auto src = trajectory_.positions();
      full_alignment_ = umeyama_fit(src, trajectory_.gps());
    } catch (const Error& e) {
      full_alignment_error_ = e.what();
    }
  }

  const Trajectory& trajectory() const { return trajectory_; }
  const Calibration& calibration() const { return calibration_; }
  const GeoFrame& frame() const { return frame_; }
  const std::optional<SimilarityTransform>& full_alignment() const {
    return full_alignment_;
  }

  // Alignment used for a given track in short mode.
  SimilarityTransform short_alignment(const SignTrack& track) const {
    std::vector<std::size_t> obs_idx;
    for (const auto& o : track.observations()) {
      if (auto idx = trajectory_.index_of(o.frame_id)) obs_idx.push_back(*idx);
    }
    if (obs_idx.empty()) throw InvalidArgument("track has no posed frames");
    const std::size_t n = trajectory_.size();
    const auto& poses = trajectory_.poses();
    for (std::size_t pad = std::max(options_.short_padding, 1);; pad *= 2) {
      std::set<std::size_t> window;
      for (std::size_t i : obs_idx) {
        const std::size_t lo = i >= pad ? i - pad : 0;
        const std::size_t hi = std::min(n - 1, i + pad);
        for (std::size_t j = lo; j <= hi; ++j) window.insert(j);
      }
      const bool whole = window.size() == n;
      std::vector<Vec3> src, dst;
      for (std::size_t j : window) {
        src.push_back(poses[j].position);
        dst.push_back(trajectory_.gps()[j]);
      }
      if (src.size() >= 3 && (whole || spread_ratio(src) >= options_.short_min_spread)) {
        return umeyama_fit(src, dst);
      }
      if (whole) throw DegenerateGeometry("trajectory too short for alignment");
    }
  }

  TrackResult triangulate(const SignTrack& track, TriangulationMode mode) const {
    TriangulationFailure failure{track.sign_id(), track.class_label(), mode,
                                 FailureReason::kNegativeDepth, "", track.frames()};
    auto fail = [&](FailureReason r, std::string msg) -> TrackResult {
      failure.reason = r;
      failure.message = std::move(msg);
      return failure;
    };

    if (track.size() < 2) {
      return fail(FailureReason::kInsufficientObservations,
                  "sign observed in fewer than 2 frames");
    }
    for (FrameId f : track.frames()) {
      if (!trajectory_.index_of(f)) {
        return fail(FailureReason::kMissingPose,
                    "no pose for frame " + std::to_string(f));
      }
    }

    SimilarityTransform tf;
    try {
      if (mode == TriangulationMode::kFull) {
        if (!full_alignment_) throw DegenerateGeometry(full_alignment_error_);
        tf = *full_alignment_;
      } else {
        tf = short_alignment(track);
      }
    } catch (const DegenerateGeometry& e) {
      return fail(FailureReason::kDegenerateGeometry, e.what());
    }

    std::vector<View> views;
    try {
      for (const auto& o : track.observations()) {
        const auto& pose = trajectory_.poses()[*trajectory_.index_of(o.frame_id)];
        const FramePose aligned{pose.frame_id, tf.rotation * pose.rotation,
                                tf.apply(pose.position)};
        views.push_back({o.frame_id, aligned, calibration_.undistort_pixel(o.pixel)});
      }
    } catch (const NonConvergence& e) {
      return fail(FailureReason::kNonConvergence, e.what());
    }

    Vec3 initial;
    try {
      initial = midpoint_triangulate(views, calibration_.intrinsics);
    } catch (const DegenerateRays& e) {
      return fail(FailureReason::kDegenerateRays, e.what());
    }
    if (auto bad = first_nonpositive_depth(initial, views)) {
      return fail(FailureReason::kNegativeDepth,
                  "initial estimate behind camera in frame " + std::to_string(*bad));
    }

    BaResult ba;
    try {
      ba = refine_ba(initial, views, calibration_.intrinsics, options_.ba);
    } catch (const NonConvergence& e) {
      return fail(FailureReason::kNonConvergence, e.what());
    }
    if (auto bad = first_nonpositive_depth(ba.position, views)) {
      return fail(FailureReason::kNegativeDepth,
                  "refined position behind camera in frame " + std::to_string(*bad));
    }

    TriangulatedSign out;
    out.sign_id = track.sign_id();
    out.class_label = track.class_label();
    out.abs_position = frame_.to_absolute(ba.position);
    out.rel_positions = relative_positions(ba.position, views);
    out.geo = frame_.to_geo(ba.position);
    out.mode = mode;
    out.residual_px = ba.mean_error_px;
    out.frames = track.frames();
    return out;
  }

  // Results ordered by sign id regardless of scheduling.
  std::vector<TrackResult> triangulate_all(std::span<const SignTrack> tracks,
                                           TriangulationMode mode,
                                           unsigned threads = 1) const {
    std::vector<const SignTrack*> ordered;
    for (const auto& t : tracks) ordered.push_back(&t);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
      return a->sign_id() < b->sign_id();
    });
    std::vector<std::optional<TrackResult>> slots(ordered.size());
    parallel_for(ordered.size(), threads,
                 [&](std::size_t i) { slots[i] = triangulate(*ordered[i], mode); });
    std::vector<TrackResult> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }

 private:
  static double spread_ratio(std::span<const Vec3> pts) {
    Vec3 mu = Vec3::Zero();
    for (const auto& p : pts) mu += p;
    mu /= double(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& p : pts) cov += (p - mu) * (p - mu).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 ev = eig.eigenvalues();
    if (!(ev(2) > 0.0)) return 0.0;
    return std::sqrt(std::max(ev(1), 0.0) / ev(2));
  }

  static std::optional<FrameId> first_nonpositive_depth(const Vec3& p,
                                                        std::span<const View> views) {
    for (const auto& v : views) {
      if (!(v.pose.world_to_camera(p).z() > 0.0)) return v.frame_id;
    }
    return std::nullopt;
  }

  Trajectory trajectory_;
  Calibration calibration_;
  GeoFrame frame_;
  TriangulationOptions options_;
  std::optional<SimilarityTransform> full_alignment_;
  std::string full_alignment_error_;
};

inline TrackResult triangulate_track(const SignTrack& track, const Trajectory& trajectory,
                                     const Calibration& calibration, const GeoFrame& frame,
                                     TriangulationMode mode,
                                     const TriangulationOptions& options = {}) {
  return Triangulator(trajectory, calibration, frame, options).triangulate(track, mode);
}

}  // namespace signmap
