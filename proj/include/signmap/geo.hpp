#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "signmap/errors.hpp"

namespace signmap {

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
  double alt = 0.0;  // meters

  bool valid() const {
    return std::isfinite(lat) && std::isfinite(lon) && std::isfinite(alt) &&
           lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
  }
};

// Local Mercator frame scaled by cos(lat0), so that planar distances near the
// reference latitude are approximately metric.
class MercatorRef {
 public:
  static constexpr double kEarthRadius = 6378137.0;

  explicit MercatorRef(double lat0) : lat0_(lat0) {
    if (!std::isfinite(lat0) || std::abs(lat0) >= 85.0) {
      throw InvalidArgument("reference latitude must satisfy |lat0| < 85");
    }
    scale_ = std::cos(std::numbers::pi * lat0 / 180.0) * kEarthRadius;
  }

  double lat0() const { return lat0_; }
  // Meters per radian of longitude.
  double scale() const { return scale_; }

 private:
  double lat0_;
  double scale_;
};

inline Eigen::Vector2d to_mercator(const GeoPoint& g, const MercatorRef& ref) {
  if (!g.valid()) throw InvalidArgument("geo point out of range");
  if (std::abs(g.lat) >= 90.0) {
    throw InvalidArgument("Mercator y is unbounded at the poles");
  }
  constexpr double pi = std::numbers::pi;
  return {ref.scale() * (pi * g.lon / 180.0),
          ref.scale() * std::log(std::tan(pi * (90.0 + g.lat) / 360.0))};
}

inline GeoPoint from_mercator(const Eigen::Vector2d& p, const MercatorRef& ref,
                              double alt = 0.0) {
  constexpr double pi = std::numbers::pi;
  GeoPoint g;
  g.lon = p.x() / ref.scale() * 180.0 / pi;
  g.lat = 360.0 / pi * std::atan(std::exp(p.y() / ref.scale())) - 90.0;
  g.alt = alt;
  return g;
}

}  // namespace signmap
