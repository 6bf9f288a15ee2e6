#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "signmap/errors.hpp"
#include "signmap/geo.hpp"

using namespace signmap;

TEST(Mercator, OriginMapsToZero) {
  const auto p = to_mercator({0.0, 0.0, 0.0}, MercatorRef(0.0));
  EXPECT_EQ(p.x(), 0.0);
  EXPECT_NEAR(p.y(), 0.0, 1e-9);
}

TEST(Mercator, OneDegreeOfLongitudeAtEquator) {
  const auto p = to_mercator({0.0, 1.0, 0.0}, MercatorRef(0.0));
  EXPECT_NEAR(p.x(), 111319.49079327358, 1e-6);
}

TEST(Mercator, KnownValueAtReferenceLatitude) {
  const auto p = to_mercator({49.0001, 8.43, 0.0}, MercatorRef(49.0));
  EXPECT_NEAR(p.x(), 615661.083826570, 1e-6);
  EXPECT_NEAR(p.y(), 4116690.605162228, 1e-6);
}

TEST(Mercator, InverseOfQuarterPiLatitude) {
  const MercatorRef ref(0.0);
  const double y = MercatorRef::kEarthRadius * std::log(std::tan(3.0 * std::numbers::pi / 8.0));
  EXPECT_NEAR(from_mercator({0.0, y}, ref).lat, 45.0, 1e-9);
}

TEST(Mercator, RoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lat(-80.0, 80.0), lon(-180.0, 180.0), ref0(-60.0, 60.0);
  for (int i = 0; i < 1000; ++i) {
    const MercatorRef ref(ref0(rng));
    const GeoPoint g{lat(rng), lon(rng), 12.5};
    const auto back = from_mercator(to_mercator(g, ref), ref, g.alt);
    EXPECT_NEAR(back.lat, g.lat, 1e-9);
    EXPECT_NEAR(back.lon, g.lon, 1e-9);
    EXPECT_EQ(back.alt, g.alt);
  }
}

TEST(Mercator, EastingLinearInLongitude) {
  const MercatorRef ref(49.0);
  const double base = to_mercator({49.0, 8.0, 0.0}, ref).x();
  const double step = to_mercator({49.0, 8.001, 0.0}, ref).x() - base;
  for (double lat : {10.0, 49.0, 70.0}) {
    for (double lon : {-120.0, 8.0, 170.0}) {
      const double dx = to_mercator({lat, lon + 0.001, 0.0}, ref).x() -
                        to_mercator({lat, lon, 0.0}, ref).x();
      EXPECT_NEAR(dx, step, 1e-6);
    }
  }
}

TEST(Mercator, NorthingIncreasingInLatitude) {
  const MercatorRef ref(30.0);
  double prev = -1e300;
  for (int i = 0; i <= 1000; ++i) {
    const double y = to_mercator({-89.0 + 178.0 * i / 1000.0, 0.0, 0.0}, ref).y();
    EXPECT_GT(y, prev);
    prev = y;
  }
}

TEST(Mercator, ReferenceLatitudeGuard) {
  EXPECT_THROW(MercatorRef(85.0), InvalidArgument);
  EXPECT_THROW(MercatorRef(-86.0), InvalidArgument);
  EXPECT_NO_THROW(MercatorRef(84.9));
}

TEST(Mercator, PolesAndOutOfRangeRejected) {
  const MercatorRef ref(0.0);
  EXPECT_THROW(to_mercator({90.0, 0.0, 0.0}, ref), InvalidArgument);
  EXPECT_THROW(to_mercator({-90.0, 0.0, 0.0}, ref), InvalidArgument);
  EXPECT_THROW(to_mercator({10.0, 200.0, 0.0}, ref), InvalidArgument);
}
