#include <gtest/gtest.h>

#include <random>

#include "signmap/camera.hpp"
#include "signmap/errors.hpp"

using namespace signmap;

namespace {

const Calibration kKitti = presets::kitti_seq00_02();

}  // namespace

TEST(Distort, CenterIsFixed) {
  const auto d = distort({0.0, 0.0}, RadialDistortion(-0.363, 0.151));
  EXPECT_EQ(d.x, 0.0);
  EXPECT_EQ(d.y, 0.0);
}

TEST(Distort, ZeroCoefficientsAreIdentity) {
  const auto d = distort({0.3, -0.2}, RadialDistortion(0.0, 0.0));
  EXPECT_EQ(d.x, 0.3);
  EXPECT_EQ(d.y, -0.2);
}

TEST(Distort, KnownValue) {
  // 0.5 * (1 - 0.363 * 0.25 + 0.151 * 0.0625)
  const auto d = distort({0.5, 0.0}, RadialDistortion(-0.363, 0.151));
  EXPECT_NEAR(d.x, 0.45934375, 1e-15);
  EXPECT_EQ(d.y, 0.0);
}

TEST(Distort, PreservesDirection) {
  const NormalizedPoint p{0.4, -0.25};
  const auto d = distort(p, kKitti.distortion);
  EXPECT_NEAR(p.x * d.y - p.y * d.x, 0.0, 1e-15);
  EXPECT_GT(p.x * d.x + p.y * d.y, 0.0);
}

TEST(Undistort, CenterIsFixed) {
  const auto u = undistort({0.0, 0.0}, kKitti.distortion);
  EXPECT_EQ(u.x, 0.0);
  EXPECT_EQ(u.y, 0.0);
}

TEST(Undistort, RoundTripSinglePoint) {
  const NormalizedPoint p{0.3, -0.2};
  const auto back = undistort(distort(p, kKitti.distortion), kKitti.distortion);
  EXPECT_NEAR(back.x, p.x, 1e-8);
  EXPECT_NEAR(back.y, p.y, 1e-8);
}

TEST(Undistort, RoundTripGridInsideWorkingRadius) {
  const auto& d = kKitti.distortion;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const NormalizedPoint p{-0.7 + 1.4 * i / 9.0, -0.7 + 1.4 * j / 9.0};
      ASSERT_LE(p.radius(), d.working_radius());
      const auto back = undistort(distort(p, d), d);
      EXPECT_NEAR(back.x, p.x, 1e-8) << i << "," << j;
      EXPECT_NEAR(back.y, p.y, 1e-8) << i << "," << j;
    }
  }
}

TEST(Undistort, RoundTripNearMonotoneBoundary) {
  // r (1 - 0.14 r^2) peaks at 1.029, just past the unit limit, so the map is
  // nearly flat at the working radius and fixed-point iteration stalls there.
  const RadialDistortion d(-0.14, 0.0);
  ASSERT_LT(d.radial_map_derivative(d.working_radius()), 0.3);
  for (double frac : {0.5, 0.9, 0.99, 0.999}) {
    const NormalizedPoint p{frac * d.working_radius() * 0.8, frac * d.working_radius() * 0.6};
    const auto back = undistort(distort(p, d), d);
    EXPECT_NEAR(back.x, p.x, 1e-8) << frac;
    EXPECT_NEAR(back.y, p.y, 1e-8) << frac;
  }
}

TEST(Undistort, OutsideInvertibleRegionThrows) {
  const RadialDistortion d(-0.14, 0.0);
  const double r = 2.0 * d.distorted_limit();
  EXPECT_THROW(undistort({r, 0.0}, d), NonConvergence);
}

TEST(RadialDistortion, WorkingRadiusMapsToDistortedLimit) {
  const auto& d = kKitti.distortion;
  EXPECT_NEAR(d.radial_map(d.working_radius()), d.distorted_limit(), 1e-9);
  EXPECT_NEAR(d.distorted_limit(), 1.05 * kKitti.intrinsics.corner_radius(), 1e-15);
}

TEST(RadialDistortion, RadialMapIncreasingOverWorkingRange) {
  const auto& d = kKitti.distortion;
  double prev = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double r = d.working_radius() * i / 1000.0;
    const double m = d.radial_map(r);
    EXPECT_GT(m, prev);
    prev = m;
  }
}

TEST(RadialDistortion, NonMonotoneCoefficientsRejected) {
  // r(1 - 2 r^2) turns over at r = 0.408, before any image corner.
  EXPECT_THROW(RadialDistortion(-2.0, 0.0, kKitti.intrinsics), InvalidArgument);
  EXPECT_THROW(RadialDistortion(std::nan(""), 0.0), InvalidArgument);
}

TEST(RadialDistortion, DerivativeMatchesFiniteDifference) {
  const auto& d = kKitti.distortion;
  for (double r : {0.1, 0.4, 0.7}) {
    const double h = 1e-6;
    const double fd = (d.radial_map(r + h) - d.radial_map(r - h)) / (2 * h);
    EXPECT_NEAR(d.radial_map_derivative(r), fd, 1e-8);
  }
}

TEST(Project, OpticalAxisHitsPrincipalPoint) {
  const auto px = project({0.0, 0.0, 5.0}, kKitti.intrinsics);
  EXPECT_DOUBLE_EQ(px.u, 694.792);
  EXPECT_DOUBLE_EQ(px.v, 240.355);
}

TEST(Project, KnownValues) {
  const auto a = project({1.0, 0.0, 1.0}, kKitti.intrinsics);
  EXPECT_NEAR(a.u, 1654.907, 1e-9);
  EXPECT_NEAR(a.v, 240.355, 1e-12);

  const auto b = project({0.2, -0.1, 4.0}, presets::kitti_seq04_10().intrinsics);
  EXPECT_NEAR(b.u, 742.3979, 1e-9);
  EXPECT_NEAR(b.v, 217.8557, 1e-9);
}

TEST(Project, BehindCameraThrows) {
  EXPECT_THROW(project({0.0, 0.0, -1.0}, kKitti.intrinsics), BehindCamera);
  EXPECT_THROW(project({1.0, 0.0, 0.0}, kKitti.intrinsics), BehindCamera);
  EXPECT_THROW(kKitti.project_distorted({0.0, 0.0, -1.0}), BehindCamera);
}

TEST(Project, ScaleInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0), z(0.5, 50.0), s(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p(u(rng), u(rng), z(rng));
    const double k = s(rng);
    const auto a = project(p, kKitti.intrinsics);
    const auto b = project(k * p, kKitti.intrinsics);
    EXPECT_NEAR(a.u, b.u, 1e-9);
    EXPECT_NEAR(a.v, b.v, 1e-9);
  }
}

TEST(Calibration, UndistortPixelInvertsProjectDistorted) {
  const Vec3 p(2.0, -0.4, 9.0);
  const auto distorted = kKitti.project_distorted(p);
  const auto rect = kKitti.undistort_pixel(distorted);
  const auto ideal = project(p, kKitti.intrinsics);
  EXPECT_NEAR(rect.u, ideal.u, 1e-6);
  EXPECT_NEAR(rect.v, ideal.v, 1e-6);
}

TEST(CameraIntrinsics, InvalidValuesRejected) {
  EXPECT_THROW(CameraIntrinsics(0.0, 1.0, 1.0, 1.0, 10, 10), InvalidArgument);
  EXPECT_THROW(CameraIntrinsics(1.0, -1.0, 1.0, 1.0, 10, 10), InvalidArgument);
  EXPECT_THROW(CameraIntrinsics(1.0, 1.0, 1.0, 1.0, 0, 10), InvalidArgument);
}

TEST(Perturb, ZeroIsIdentity) {
  EXPECT_EQ(perturb(kKitti, {}), kKitti);
}

TEST(Perturb, FocalPlusTenPercent) {
  const auto c = perturb(kKitti, {10.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(c.intrinsics.fx(), 1056.1265, 1e-9);
  EXPECT_EQ(c.intrinsics.cx(), kKitti.intrinsics.cx());
  EXPECT_EQ(c.distortion.lambda1(), kKitti.distortion.lambda1());
}

TEST(Perturb, DistortionMinusFifteenPercent) {
  const auto c = perturb(kKitti, Perturbation::distortion(-15.0));
  EXPECT_NEAR(c.distortion.lambda1(), -0.30855, 1e-12);
  EXPECT_NEAR(c.distortion.lambda2(), 0.151 * 0.85, 1e-12);
  EXPECT_EQ(c.intrinsics, kKitti.intrinsics);
}

TEST(Perturb, InverseRecoversOriginal) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-15.0, 15.0);
  for (int i = 0; i < 100; ++i) {
    const Perturbation p{u(rng), u(rng), u(rng), u(rng)};
    const auto c = perturb(kKitti, p);
    auto inv = [](double pct) { return 100.0 * (1.0 / (1.0 + pct / 100.0) - 1.0); };
    const auto back =
        perturb(c, {inv(p.focal_pct), inv(p.principal_pct), inv(p.lambda1_pct), inv(p.lambda2_pct)});
    EXPECT_NEAR(back.intrinsics.fx(), kKitti.intrinsics.fx(), 1e-12 * kKitti.intrinsics.fx());
    EXPECT_NEAR(back.intrinsics.cy(), kKitti.intrinsics.cy(), 1e-12 * kKitti.intrinsics.cy());
    EXPECT_NEAR(back.distortion.lambda1(), kKitti.distortion.lambda1(), 1e-12);
    EXPECT_NEAR(back.distortion.lambda2(), kKitti.distortion.lambda2(), 1e-12);
  }
}

TEST(Perturb, OutOfRangeRejected) {
  EXPECT_THROW(perturb(kKitti, {150.0, 0.0, 0.0, 0.0}), InvalidPerturbation);
  EXPECT_THROW(perturb(kKitti, {-100.0, 0.0, 0.0, 0.0}), InvalidPerturbation);
  // Tripling barrel distortion breaks monotonicity inside the image.
  EXPECT_THROW(perturb(kKitti, {0.0, 0.0, 100.0, -100.0}), InvalidPerturbation);
}
