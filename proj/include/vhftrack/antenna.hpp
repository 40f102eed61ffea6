// SPDX-License-Identifier: Apache-2.0
//
// vhftrack -- analytical Yagi array pattern.
//
// The array factor is modelled as a continuous line source of effective
// length Le with uniform amplitude and Hansen-Woodyard end-fire phasing,
// multiplied by the half-wave dipole element factor:
//
//     g(psi) = [cos((pi/2) sin psi) / cos psi] * sin(w)/w,
//     w = phase_offset + phase_scale * cos psi.
//
// Hansen-Woodyard phasing makes w <= -1.47 rad for every psi, so the sinc
// denominator never vanishes. The pattern is azimuth-only; elevation
// dependence of the link lives entirely in range and the ground-reflection
// height gain.

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "vhftrack/angles.hpp"

namespace vhftrack {

inline constexpr double speed_of_light = 299792458.0;   // [m/s]
inline constexpr double nanotag_carrier_hz = 166.38e6;  // [Hz]

/// Synthesized line-source pattern parameters.
struct YagiPattern {
    double effective_length;  ///< Le [m]
    double wavelength;        ///< lambda0 [m]
    double wavenumber;        ///< k0 = 2 pi / lambda0 [rad/m]
    double phase_offset;      ///< p = beta0 Le / 2 < 0 [rad]
    double phase_scale;       ///< q = k0 Le / 2 > 0 [rad]

    YagiPattern(double le, double lambda0)
        : effective_length(le), wavelength(lambda0) {
        if (!(le > 0.0) || !(lambda0 > 0.0))
            throw std::invalid_argument("YagiPattern: length and wavelength must be positive");
        wavenumber = 2.0 * pi / lambda0;
        phase_scale = wavenumber * le / 2.0;
        // Hansen-Woodyard end-fire condition: beta0 = -(k0 + 2.94/Le)
        phase_offset = -(wavenumber + 2.94 / le) * le / 2.0;
    }

    /// The 9-element PLC-1669 array used on the telemetry towers, fitted by
    /// an effective length of 4.6 m at the 166.38 MHz tag carrier.
    static YagiPattern plc1669() {
        return YagiPattern(4.6, speed_of_light / nanotag_carrier_hz);
    }
};

namespace detail {

// cos((pi/2) sin psi) / cos psi and its psi-derivative share this factor;
// near psi = +-pi/2 both numerator and denominator vanish quadratically and
// the ratio cos(h)/cos^2(psi) tends to pi/4.
inline double dipole_ratio(double cos_psi, double cos_half) {
    if (std::abs(cos_psi) < 1e-4) return 0.25 * pi;
    return cos_half / (cos_psi * cos_psi);
}

}  // namespace detail

/// Field pattern g(psi), psi in [-pi, pi]. Even in psi; the removable
/// singularity of the dipole factor at psi = +-pi/2 evaluates to 0.
inline double field_pattern(const YagiPattern& a, double psi) {
    const double s = std::sin(psi);
    const double c = std::cos(psi);
    const double cos_half = std::cos(0.5 * pi * s);
    const double dipole = detail::dipole_ratio(c, cos_half) * c;
    const double w = a.phase_offset + a.phase_scale * c;
    return dipole * std::sin(w) / w;
}

/// dg/dpsi, analytic (used by the measurement Jacobian).
inline double field_pattern_derivative(const YagiPattern& a, double psi) {
    const double s = std::sin(psi);
    const double c = std::cos(psi);
    const double half = 0.5 * pi * s;
    const double ratio = detail::dipole_ratio(c, std::cos(half));
    const double dipole = ratio * c;
    const double dipole_d = -0.5 * pi * std::sin(half) + s * ratio;
    const double w = a.phase_offset + a.phase_scale * c;
    const double sinc = std::sin(w) / w;
    const double sinc_dw = (w * std::cos(w) - std::sin(w)) / (w * w);
    return dipole_d * sinc + dipole * (-a.phase_scale * s) * sinc_dw;
}

/// Power gain g^2(psi); the absolute gain constant is absorbed downstream.
inline double power_gain(const YagiPattern& a, double psi) {
    const double g = field_pattern(a, psi);
    return g * g;
}

/// Full angle between the two half-power points around boresight [deg],
/// located by bisection to 1e-6 rad.
inline double half_power_beamwidth_deg(const YagiPattern& a) {
    const double peak = power_gain(a, 0.0);
    if (!(peak > 0.0))
        throw std::runtime_error("half_power_beamwidth: no main lobe at boresight");
    const double target = 0.5 * peak;
    const double step = 1e-3;
    for (double psi = step; psi <= pi; psi += step) {
        if (power_gain(a, psi) < target) {
            double lo = psi - step, hi = psi;
            while (hi - lo > 1e-6) {
                const double mid = 0.5 * (lo + hi);
                (power_gain(a, mid) < target ? hi : lo) = mid;
            }
            return rad_to_deg(lo + hi);  // 2 * midpoint
        }
    }
    throw std::runtime_error("half_power_beamwidth: no half-power crossing found");
}

/// 10 log10(g^2(0) / g^2(pi)); +infinity when the back lobe is a null.
inline double front_to_back_db(const YagiPattern& a) {
    const double front = power_gain(a, 0.0);
    const double back = power_gain(a, pi);
    if (back == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(front / back);
}

}  // namespace vhftrack
