#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "signmap/errors.hpp"

namespace signmap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

// Image-plane coordinates after applying the inverse of K.
struct NormalizedPoint {
  double x = 0.0;
  double y = 0.0;

  double radius() const { return std::hypot(x, y); }
};

// Pinhole intrinsics with zero skew.
class CameraIntrinsics {
 public:
  CameraIntrinsics(double fx, double fy, double cx, double cy, int width,
                   int height)
      : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height) {
    if (!(std::isfinite(fx) && std::isfinite(fy) && fx > 0.0 && fy > 0.0)) {
      throw InvalidArgument("focal lengths must be finite and positive");
    }
    if (width <= 0 || height <= 0) {
      throw InvalidArgument("image size must be positive");
    }
    if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
      throw InvalidArgument("principal point must lie inside the image");
    }
  }

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }

  Mat3 matrix() const {
    Mat3 k;
    k << fx_, 0.0, cx_, 0.0, fy_, cy_, 0.0, 0.0, 1.0;
    return k;
  }

  NormalizedPoint normalize(const PixelPoint& p) const {
    return {(p.u - cx_) / fx_, (p.v - cy_) / fy_};
  }

  PixelPoint denormalize(const NormalizedPoint& p) const {
    return {fx_ * p.x + cx_, fy_ * p.y + cy_};
  }

  bool contains(const PixelPoint& p) const {
    return p.u >= 0.0 && p.u <= width_ && p.v >= 0.0 && p.v <= height_;
  }

  // Largest normalized radius over the four image corners.
  double corner_radius() const {
    const std::array<PixelPoint, 4> corners = {
        PixelPoint{0.0, 0.0}, PixelPoint{double(width_), 0.0},
        PixelPoint{0.0, double(height_)},
        PixelPoint{double(width_), double(height_)}};
    double r = 0.0;
    for (const auto& c : corners) r = std::max(r, normalize(c).radius());
    return r;
  }

  bool operator==(const CameraIntrinsics&) const = default;

 private:
  double fx_, fy_, cx_, cy_;
  int width_, height_;
};

// Two-coefficient polynomial radial distortion,
//   p_d = (1 + l1 r^2 + l2 r^4) p_u,  r = |p_u|.
//
// The coefficients are validated against a working radius: the undistorted
// radius whose image under the radial map is 1.05 times the farthest
// normalized image corner. Over [0, working_radius] the radial map
// r -> r (1 + l1 r^2 + l2 r^4) must be positive and strictly increasing, so
// every observable point has a unique undistorted preimage.
class RadialDistortion {
 public:
  static constexpr double kCornerMargin = 1.05;
  static constexpr int kMonotonicitySamples = 64;

  // Coefficients only; no image extent to validate against. The working
  // radius is then the unit-distorted-radius preimage.
  RadialDistortion(double lambda1, double lambda2)
      : RadialDistortion(lambda1, lambda2, 1.0 / kCornerMargin) {}

  RadialDistortion(double lambda1, double lambda2,
                   const CameraIntrinsics& intrinsics)
      : RadialDistortion(lambda1, lambda2, intrinsics.corner_radius()) {}

  RadialDistortion(double lambda1, double lambda2, double corner_radius)
      : lambda1_(lambda1), lambda2_(lambda2) {
    if (!std::isfinite(lambda1) || !std::isfinite(lambda2)) {
      throw InvalidArgument("distortion coefficients must be finite");
    }
    if (!(corner_radius > 0.0) || !std::isfinite(corner_radius)) {
      throw InvalidArgument("corner radius must be positive");
    }
    distorted_limit_ = kCornerMargin * corner_radius;
    working_radius_ = find_working_radius(distorted_limit_);
  }

  double lambda1() const { return lambda1_; }
  double lambda2() const { return lambda2_; }
  double working_radius() const { return working_radius_; }
  // Distorted-domain radius covered by the working radius.
  double distorted_limit() const { return distorted_limit_; }

  double factor(double r2) const {
    return 1.0 + lambda1_ * r2 + lambda2_ * r2 * r2;
  }
  double radial_map(double r) const { return r * factor(r * r); }
  double radial_map_derivative(double r) const {
    const double r2 = r * r;
    return 1.0 + 3.0 * lambda1_ * r2 + 5.0 * lambda2_ * r2 * r2;
  }

  bool is_identity() const { return lambda1_ == 0.0 && lambda2_ == 0.0; }

  bool operator==(const RadialDistortion& o) const {
    return lambda1_ == o.lambda1_ && lambda2_ == o.lambda2_ &&
           distorted_limit_ == o.distorted_limit_;
  }

 private:
  bool admissible(double r) const {
    return factor(r * r) > 0.0 && radial_map_derivative(r) > 0.0;
  }

  double find_working_radius(double target) const {
    // March outward until the radial map covers the target, then bisect.
    const double step = target / kMonotonicitySamples;
    constexpr int kMaxSteps = kMonotonicitySamples * 32;
    double lo = 0.0;
    double hi = -1.0;
    for (int k = 1; k <= kMaxSteps; ++k) {
      const double r = k * step;
      if (!admissible(r)) {
        throw InvalidArgument(
            "radial distortion is not invertible over the image (lambda1=" +
            std::to_string(lambda1_) + ", lambda2=" +
            std::to_string(lambda2_) + ")");
      }
      if (radial_map(r) >= target) {
        hi = r;
        break;
      }
      lo = r;
    }
    if (hi < 0.0) {
      throw InvalidArgument("radial distortion compresses the image too strongly");
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
      const double mid = 0.5 * (lo + hi);
      (radial_map(mid) >= target ? hi : lo) = mid;
    }
    for (int i = 1; i <= kMonotonicitySamples; ++i) {
      if (!admissible(hi * i / kMonotonicitySamples)) {
        throw InvalidArgument("radial distortion fails the monotonicity check");
      }
    }
    return hi;
  }

  double lambda1_;
  double lambda2_;
  double distorted_limit_ = 0.0;
  double working_radius_ = 0.0;
};

inline NormalizedPoint distort(const NormalizedPoint& p,
                               const RadialDistortion& d) {
  if (d.is_identity()) return p;
  const double s = d.factor(p.x * p.x + p.y * p.y);
  return {s * p.x, s * p.y};
}

struct UndistortOptions {
  int max_iterations = 50;
  double tolerance = 1e-10;
};

// Inverts distort(). Fixed-point iteration first; when it stalls (rates close
// to one near the edge of the monotone regime) the scalar radial equation is
// solved by bracketed Newton instead.
inline NormalizedPoint undistort(const NormalizedPoint& p,
                                 const RadialDistortion& d,
                                 const UndistortOptions& opts = {}) {
  if (d.is_identity()) return p;
  const double rd = p.radius();
  if (rd == 0.0) return p;

  auto residual = [&](const NormalizedPoint& q) {
    const NormalizedPoint back = distort(q, d);
    return std::hypot(back.x - p.x, back.y - p.y);
  };

  NormalizedPoint q = p;
  for (int i = 0; i < opts.max_iterations; ++i) {
    const double s = d.factor(q.x * q.x + q.y * q.y);
    if (!(s > 0.0)) break;
    const NormalizedPoint next{p.x / s, p.y / s};
    const double step = std::hypot(next.x - q.x, next.y - q.y);
    q = next;
    if (step <= 1e-15 * (1.0 + rd)) break;
  }
  if (std::isfinite(q.x) && std::isfinite(q.y) &&
      residual(q) <= opts.tolerance * 1e-3) {
    return q;
  }

  // Bracketed Newton on r * f(r) = rd over [0, working radius].
  double lo = 0.0;
  double hi = d.working_radius();
  if (d.radial_map(hi) < rd) {
    throw NonConvergence("distorted radius " + std::to_string(rd) +
                         " lies outside the invertible working region");
  }
  double r = std::clamp(q.radius(), lo, hi);
  if (!std::isfinite(r)) r = 0.5 * hi;
  bool converged = false;
  for (int i = 0; i < 100; ++i) {
    const double g = d.radial_map(r) - rd;
    if (std::abs(g) <= 1e-16 * (1.0 + rd)) {
      converged = true;
      break;
    }
    (g > 0.0 ? hi : lo) = r;
    const double next = r - g / d.radial_map_derivative(r);
    r = (next > lo && next < hi) ? next : 0.5 * (lo + hi);
    if (hi - lo <= 1e-16 * hi) {
      converged = true;
      break;
    }
  }
  const NormalizedPoint out{p.x * r / rd, p.y * r / rd};
  if (!converged && residual(out) > opts.tolerance) {
    throw NonConvergence("undistortion did not converge");
  }
  if (residual(out) > opts.tolerance) {
    throw NonConvergence("undistortion residual above tolerance");
  }
  return out;
}

// Pinhole projection with perspective division. Throws BehindCamera for
// points at or behind the image plane.
inline PixelPoint project(const Vec3& p_cam, const CameraIntrinsics& k) {
  if (!(p_cam.z() > 0.0)) {
    throw BehindCamera("point has non-positive depth " +
                       std::to_string(p_cam.z()));
  }
  return {k.fx() * p_cam.x() / p_cam.z() + k.cx(),
          k.fy() * p_cam.y() / p_cam.z() + k.cy()};
}

// Intrinsics plus distortion, validated together.
struct Calibration {
  CameraIntrinsics intrinsics;
  RadialDistortion distortion;

  Calibration(const CameraIntrinsics& k, double lambda1, double lambda2)
      : intrinsics(k), distortion(lambda1, lambda2, k) {}
  Calibration(const CameraIntrinsics& k, const RadialDistortion& d)
      : intrinsics(k), distortion(d.lambda1(), d.lambda2(), k) {}

  // Distorted pixel -> pixel under the rectified (unchanged) K.
  PixelPoint undistort_pixel(const PixelPoint& p) const {
    return intrinsics.denormalize(
        undistort(intrinsics.normalize(p), distortion));
  }

  // Camera-frame point -> distorted pixel.
  PixelPoint project_distorted(const Vec3& p_cam) const {
    if (!(p_cam.z() > 0.0)) {
      throw BehindCamera("point has non-positive depth");
    }
    const NormalizedPoint n{p_cam.x() / p_cam.z(), p_cam.y() / p_cam.z()};
    return intrinsics.denormalize(distort(n, distortion));
  }

  bool operator==(const Calibration&) const = default;
};

// Percentage errors per parameter group. Distortion coefficients are scaled
// jointly by default; set the per-coefficient fields for independent sweeps.
struct Perturbation {
  double focal_pct = 0.0;
  double principal_pct = 0.0;
  double lambda1_pct = 0.0;
  double lambda2_pct = 0.0;

  static Perturbation distortion(double pct) {
    return {0.0, 0.0, pct, pct};
  }
};

inline Calibration perturb(const Calibration& calib, const Perturbation& p) {
  for (double pct : {p.focal_pct, p.principal_pct, p.lambda1_pct, p.lambda2_pct}) {
    if (!(pct >= -100.0 && pct <= 100.0)) {
      throw InvalidPerturbation("percentage error outside [-100, 100]");
    }
  }
  const auto& k = calib.intrinsics;
  const double fs = 1.0 + p.focal_pct / 100.0;
  const double cs = 1.0 + p.principal_pct / 100.0;
  try {
    CameraIntrinsics pk(k.fx() * fs, k.fy() * fs, k.cx() * cs, k.cy() * cs,
                        k.width(), k.height());
    return Calibration(pk, calib.distortion.lambda1() * (1.0 + p.lambda1_pct / 100.0),
                       calib.distortion.lambda2() * (1.0 + p.lambda2_pct / 100.0));
  } catch (const InvalidArgument& e) {
    throw InvalidPerturbation(std::string("perturbed calibration invalid: ") +
                              e.what());
  }
}

namespace presets {

// KITTI raw color camera, sequences 00-02 and 04-10.
inline Calibration kitti_seq00_02() {
  return Calibration(CameraIntrinsics(960.115, 954.891, 694.792, 240.355, 1392, 512),
                     -0.363, 0.151);
}

inline Calibration kitti_seq04_10() {
  return Calibration(CameraIntrinsics(959.198, 952.932, 694.438, 241.679, 1392, 512),
                     -0.369, 0.158);
}

}  // namespace presets

}  // namespace signmap
