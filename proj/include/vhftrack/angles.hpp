// SPDX-License-Identifier: Apache-2.0
//
// vhftrack -- angle conventions and wrapping helpers.
//
// Internally all angles are radians in the mathematical convention
// (measured counter-clockwise from the +x / easting axis). Files carry
// compass bearings in degrees true (clockwise from north); conversion
// happens at the I/O boundary.

#pragma once

#include <cmath>
#include <numbers>

namespace vhftrack {

inline constexpr double pi = std::numbers::pi;

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a + pi, 2.0 * pi);
    if (a <= 0.0) a += 2.0 * pi;
    return a - pi;
}

inline double deg_to_rad(double deg) { return deg * pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / pi; }

/// Compass bearing (degrees true, clockwise from north) to math azimuth [rad].
inline double bearing_to_azimuth(double bearing_deg) {
    return wrap_angle(deg_to_rad(90.0 - bearing_deg));
}

/// Math azimuth [rad] to compass bearing in [0, 360) degrees true.
inline double azimuth_to_bearing(double azimuth_rad) {
    double b = 90.0 - rad_to_deg(azimuth_rad);
    b = std::fmod(b, 360.0);
    if (b < 0.0) b += 360.0;
    return b;
}

}  // namespace vhftrack
