// SPDX-License-Identifier: Apache-2.0
//
// vhftrack -- observation model: geometry, two-ray propagation, receiver
// display map and its calibration, and the linearized measurement row.
//
// The noiseless observable is
//
//     xi = |g(psi)| |sin(k0 H_T z / R)| / (k0 R)
//
// (two-ray ground reflection with Gamma = -1, horizontal polarization). The
// received power is Ka xi^2 with Ka the tag EIRP times antenna gain; the
// receiver display map depends only on xi^2 / P0, so Ka cancels and never
// needs to be known. All filtering happens in this normalized power domain.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vhftrack/angles.hpp"
#include "vhftrack/antenna.hpp"
#include "vhftrack/movement.hpp"
#include "vhftrack/rng.hpp"

namespace vhftrack {

/// Thrown when the target sits exactly on a tower's vertical axis and the
/// off-boresight angle is undefined.
struct degenerate_geometry_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One telemetry tower: position in a projected planar grid, antenna height
/// above the ground reference, and one boresight azimuth per Yagi beam.
struct TowerSite {
    std::string id;
    double x = 0.0;       ///< easting [m]
    double y = 0.0;       ///< northing [m]
    double height = 0.0;  ///< antenna height above reference [m]
    std::vector<double> beam_azimuths;  ///< math azimuth [rad]

    double beam_azimuth(int beam_index) const {
        if (beam_index < 0 || static_cast<std::size_t>(beam_index) >= beam_azimuths.size())
            throw std::invalid_argument("tower '" + id + "': beam index out of range");
        return beam_azimuths[beam_index];
    }

    void validate() const {
        if (!(height > 0.0))
            throw std::invalid_argument("tower '" + id + "': antenna height must be positive");
        if (beam_azimuths.empty())
            throw std::invalid_argument("tower '" + id + "': no beams configured");
        for (std::size_t i = 0; i < beam_azimuths.size(); ++i)
            for (std::size_t j = i + 1; j < beam_azimuths.size(); ++j)
                if (std::abs(wrap_angle(beam_azimuths[i] - beam_azimuths[j])) < 1e-9)
                    throw std::invalid_argument("tower '" + id + "': duplicate beam bearing");
    }
};

using TowerLayout = std::vector<TowerSite>;

inline const TowerSite& find_tower(const TowerLayout& towers, const std::string& id) {
    for (const auto& t : towers)
        if (t.id == id) return t;
    throw std::invalid_argument("unknown tower id '" + id + "'");
}

/// Receiver display-map constants. The one-byte display saturates softly at
/// z_max and is noise-floored at z_min; b is the log slope and p0 the noise
/// floor power in the same normalization as xi^2.
struct ReceiverModel {
    double z_min = 0.0;
    double z_max = 255.0;
    double b = 0.0;
    double p0 = 0.0;

    void validate() const {
        if (!(z_min >= 0.0 && z_min < z_max && z_max <= 255.0))
            throw std::invalid_argument("receiver: require 0 <= Z_min < Z_max <= 255");
        if (!(b > 0.0)) throw std::invalid_argument("receiver: b must be positive");
        if (!(p0 > 0.0)) throw std::invalid_argument("receiver: P0 must be positive");
    }
};

/// One reference measurement for receiver calibration.
struct CalibrationSample {
    double xi = 0.0;       ///< noiseless observable at the known geometry
    double display = 0.0;  ///< recorded display value Z
};

/// Range and bearing of a state relative to one tower beam.
struct BeamGeometry {
    double horizontal_range;  ///< r [m]
    double slant_range;       ///< R [m], R^2 = r^2 + (z - H_T)^2
    double off_boresight;     ///< psi in (-pi, pi]
};

inline BeamGeometry beam_geometry(const StateVector& s, const TowerSite& tower,
                                  int beam_index) {
    const double az = tower.beam_azimuth(beam_index);
    const double dx = s.x - tower.x;
    const double dy = s.y - tower.y;
    const double r = std::hypot(dx, dy);
    if (r < 1e-9)
        throw degenerate_geometry_error("target at tower base of '" + tower.id + "'");
    const double dz = s.z() - tower.height;
    return {r, std::hypot(r, dz), wrap_angle(std::atan2(dy, dx) - az)};
}

/// sin argument k0 H_T z / R of the height-gain factor.
inline double height_gain_argument(const YagiPattern& pat, double tower_height,
                                   double altitude, double slant_range) {
    return pat.wavenumber * tower_height * altitude / slant_range;
}

/// Altitude at which the height gain peaks for a given range: lambda0 R / (4 H_T).
inline double height_gain_ceiling(const YagiPattern& pat, double slant_range,
                                  double tower_height) {
    return pat.wavelength * slant_range / (4.0 * tower_height);
}

/// Observable magnitude at explicit geometry (used by the static inversion).
inline double xi_at(const YagiPattern& pat, double psi, double horizontal_range,
                    double altitude, double tower_height) {
    const double dz = altitude - tower_height;
    const double slant = std::hypot(horizontal_range, dz);
    const double arg = height_gain_argument(pat, tower_height, altitude, slant);
    return std::abs(field_pattern(pat, psi) * std::sin(arg)) / (pat.wavenumber * slant);
}

/// Noiseless observable |xi| >= 0 for a state seen by one tower beam.
inline double xi(const StateVector& s, const TowerSite& tower, int beam_index,
                 const YagiPattern& pat) {
    const BeamGeometry geo = beam_geometry(s, tower, beam_index);
    return xi_at(pat, geo.off_boresight, geo.horizontal_range, s.z(), tower.height);
}

/// Signed xi and its position partials; the sign cancels in xi^2 and in
/// 2 xi grad(xi), so carrying it keeps the Jacobian smooth across pattern
/// nulls. d_xz folds in the chain-rule factor d/dxz = 2 xz d/dz.
struct XiGradient {
    double value;
    double d_x;
    double d_y;
    double d_xz;
};

inline XiGradient xi_gradient(const StateVector& s, const TowerSite& tower,
                              int beam_index, const YagiPattern& pat) {
    const double az = tower.beam_azimuth(beam_index);
    const double dx = s.x - tower.x;
    const double dy = s.y - tower.y;
    const double r2 = dx * dx + dy * dy;
    const double r = std::sqrt(r2);
    if (r < 1e-9)
        throw degenerate_geometry_error("target at tower base of '" + tower.id + "'");
    const double z = s.z();
    const double dz = z - tower.height;
    const double slant = std::sqrt(r2 + dz * dz);
    const double psi = wrap_angle(std::atan2(dy, dx) - az);

    const double g = field_pattern(pat, psi);
    const double gd = field_pattern_derivative(pat, psi);
    const double k0 = pat.wavenumber;
    const double arg = k0 * tower.height * z / slant;
    const double sin_a = std::sin(arg);
    const double cos_a = std::cos(arg);
    const double value = g * sin_a / (k0 * slant);

    const double dpsi_dx = -dy / r2;
    const double dpsi_dy = dx / r2;
    const double dslant_dx = dx / slant;
    const double dslant_dy = dy / slant;
    const double dslant_dz = dz / slant;
    const double darg_dx = -arg * dslant_dx / slant;
    const double darg_dy = -arg * dslant_dy / slant;
    const double darg_dz = k0 * tower.height / slant - arg * dslant_dz / slant;

    const double scale = 1.0 / (k0 * slant);
    const double d_x = (gd * dpsi_dx * sin_a + g * cos_a * darg_dx) * scale -
                       value * dslant_dx / slant;
    const double d_y = (gd * dpsi_dy * sin_a + g * cos_a * darg_dy) * scale -
                       value * dslant_dy / slant;
    const double d_z = g * cos_a * darg_dz * scale - value * dslant_dz / slant;
    return {value, d_x, d_y, 2.0 * s.xz * d_z};
}

// ---------------------------------------------------------------------------
// Receiver display map
// ---------------------------------------------------------------------------

/// Display value for a normalized received power (mean power is xi^2 + p0;
/// an instantaneous sample may be anything >= 0).
inline double display_from_power(const ReceiverModel& m, double power) {
    if (power < 0.0) throw std::invalid_argument("display_from_power: power must be >= 0");
    const double a = std::pow(power, 2.0 * m.b);
    const double f = std::pow(m.p0, 2.0 * m.b);
    return m.z_min + (m.z_max - m.z_min) * (a - f) / (a + f);
}

/// Soft-limiter display map: Z(xi), monotone from z_min (xi = 0) toward
/// z_max (xi -> infinity), real-valued before quantization.
inline double display_from_xi(const ReceiverModel& m, double xi_value) {
    if (xi_value < 0.0) throw std::invalid_argument("display_from_xi: xi must be >= 0");
    return display_from_power(m, xi_value * xi_value + m.p0);
}

/// Exact inverse of display_from_xi on [z_min, z_max).
inline double xi2_from_display(const ReceiverModel& m, double display) {
    if (display >= m.z_max)
        throw std::invalid_argument("xi2_from_display: display at saturation is not invertible");
    if (display < m.z_min)
        throw std::invalid_argument("xi2_from_display: display below receiver floor");
    const double ratio = (m.z_max - 2.0 * m.z_min + display) / (m.z_max - display);
    return m.p0 * (std::pow(ratio, 0.5 / m.b) - 1.0);
}

// ---------------------------------------------------------------------------
// Received-power statistics
// ---------------------------------------------------------------------------

/// E[P] = xi^2 + p0.
inline double mean_power(double xi_value, double p0) { return xi_value * xi_value + p0; }

/// Var[P] = 4 xi^2 p0 + 2 p0^2 (noncentral chi-square, 1 dof).
inline double power_variance(double xi_value, double p0) {
    return 4.0 * xi_value * xi_value * p0 + 2.0 * p0 * p0;
}

/// One instantaneous power draw (xi + sqrt(p0) mu)^2, mu ~ N(0,1).
inline double sample_power(double xi_value, double p0, Philox4x32& rng) {
    const double amp = xi_value + std::sqrt(p0) * rng.next_normal();
    return amp * amp;
}

// ---------------------------------------------------------------------------
// Linearized measurement
// ---------------------------------------------------------------------------

/// First-order expansion of the mean received power about a nominal state:
/// predicted = xi^2 + p0 and jacobian = 2 xi (dxi/dx, 0, dxi/dy, 0, dxi/dxz).
/// Velocity columns are exactly zero; power never depends on speed directly.
struct LinearizedObservation {
    RowVector5 jacobian;
    double predicted;
};

inline LinearizedObservation measurement_row(const StateVector& s, const TowerSite& tower,
                                             int beam_index, const YagiPattern& pat,
                                             double p0) {
    const XiGradient g = xi_gradient(s, tower, beam_index, pat);
    RowVector5 h;
    h << 2.0 * g.value * g.d_x, 0.0, 2.0 * g.value * g.d_y, 0.0, 2.0 * g.value * g.d_xz;
    return {h, g.value * g.value + p0};
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// Thermal noise floor k_B T0 B F / Ka in the normalized power domain.
inline double thermal_noise_estimate(double t0_kelvin, double bandwidth_hz,
                                     double noise_figure, double ka_watts) {
    if (!(t0_kelvin > 0.0) || !(bandwidth_hz > 0.0) || !(noise_figure > 0.0) ||
        !(ka_watts > 0.0))
        throw std::invalid_argument("thermal_noise_estimate: arguments must be positive");
    constexpr double boltzmann = 1.380649e-23;  // [J/K]
    return boltzmann * t0_kelvin * bandwidth_hz * noise_figure / ka_watts;
}

/// Least-squares optimal log slope for a fixed noise floor:
/// b = sum(zeta_i L_i) / sum(L_i^2) with zeta_i = atanh((Z_i - Zm)/(ZM - Zm))
/// and L_i = ln(xi_i^2 / p0 + 1).
inline double fit_b_given_p0(std::span<const CalibrationSample> samples, double z_min,
                             double z_max, double p0) {
    if (samples.empty()) throw std::invalid_argument("fit_b_given_p0: no samples");
    if (!(p0 > 0.0)) throw std::invalid_argument("fit_b_given_p0: p0 must be positive");
    double num = 0.0, den = 0.0;
    for (const auto& s : samples) {
        if (s.display >= z_max)
            throw std::invalid_argument("fit_b_given_p0: sample at display ceiling");
        if (s.display < z_min)
            throw std::invalid_argument("fit_b_given_p0: sample below display floor");
        const double zeta = std::atanh((s.display - z_min) / (z_max - z_min));
        const double l = std::log1p(s.xi * s.xi / p0);
        num += zeta * l;
        den += l * l;
    }
    if (!(den > 0.0) || !std::isfinite(num))
        throw std::runtime_error("fit_b_given_p0: degenerate fit");
    return num / den;
}

struct CalibrationResult {
    ReceiverModel model;
    double residual_rms;  ///< RMS of the soft-limiter-domain residual
};

/// Fit (b, p0) to reference samples by scanning p0 over a log grid and
/// refining the best cell with a golden-section search; b comes from the
/// closed-form slope at each candidate p0.
inline CalibrationResult calibrate(std::span<const CalibrationSample> samples,
                                   double z_min, double z_max, double p0_lo = 1e-14,
                                   double p0_hi = 1e-6, int grid_points = 200) {
    if (samples.size() < 3)
        throw std::invalid_argument("calibrate: need at least 3 samples");
    double d_lo = samples[0].display, d_hi = samples[0].display;
    for (const auto& s : samples) {
        d_lo = std::min(d_lo, s.display);
        d_hi = std::max(d_hi, s.display);
    }
    if (d_hi - d_lo < 20.0)
        throw std::invalid_argument("calibrate: samples must span >= 20 display units");

    auto mse = [&](double log_p0) {
        const double p0 = std::pow(10.0, log_p0);
        const double b = fit_b_given_p0(samples, z_min, z_max, p0);
        double acc = 0.0;
        for (const auto& s : samples) {
            const double zeta = std::atanh((s.display - z_min) / (z_max - z_min));
            const double r = zeta - b * std::log1p(s.xi * s.xi / p0);
            acc += r * r;
        }
        if (!std::isfinite(acc)) throw std::runtime_error("calibrate: non-finite residual");
        return acc / static_cast<double>(samples.size());
    };

    const double lo = std::log10(p0_lo), hi = std::log10(p0_hi);
    int best = 0;
    double best_mse = std::numeric_limits<double>::infinity();
    std::vector<double> grid(grid_points);
    for (int i = 0; i < grid_points; ++i) {
        grid[i] = lo + (hi - lo) * i / (grid_points - 1);
        const double e = mse(grid[i]);
        if (e < best_mse) {
            best_mse = e;
            best = i;
        }
    }

    // golden-section refine inside the bracketing cells
    double a = grid[std::max(best - 1, 0)];
    double d = grid[std::min(best + 1, grid_points - 1)];
    constexpr double inv_golden = 0.6180339887498949;
    double c1 = d - inv_golden * (d - a);
    double c2 = a + inv_golden * (d - a);
    double f1 = mse(c1), f2 = mse(c2);
    while (d - a > 1e-6) {
        if (f1 < f2) {
            d = c2; c2 = c1; f2 = f1;
            c1 = d - inv_golden * (d - a);
            f1 = mse(c1);
        } else {
            a = c1; c1 = c2; f1 = f2;
            c2 = a + inv_golden * (d - a);
            f2 = mse(c2);
        }
    }
    const double log_best = 0.5 * (a + d);
    const double p0 = std::pow(10.0, log_best);
    const double b = fit_b_given_p0(samples, z_min, z_max, p0);
    return {ReceiverModel{z_min, z_max, b, p0}, std::sqrt(mse(log_best))};
}

}  // namespace vhftrack
