// SPDX-License-Identifier: Apache-2.0
//
// vhftrack -- end-to-end tracking: static inversion of single readings into
// planar candidates, initialization search scored by display-domain RMS
// error, per-detection EKF loop, gap reinitialization and fusion of
// simultaneous detections.
//
// A single power reading constrains the target to a multitude of (range,
// bearing, altitude) combinations, so tracking is anchored by enumerating
// candidate initial states from the first two readings, running the full
// filter for each and keeping the one whose predicted display trace best
// matches the log.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vhftrack/detection.hpp"
#include "vhftrack/ekf.hpp"
#include "vhftrack/movement.hpp"
#include "vhftrack/observation.hpp"

namespace vhftrack {

struct TrackerConfig {
    double v_max = 0.0;          ///< maximum radial speed [m/s]
    double z0 = 0.0;             ///< assumed initial altitude [m]
    double z_threshold = 22.0;   ///< minimum usable display value
    double t_gap_max = 300.0;    ///< reinitialize when a gap exceeds this [s]
    std::array<double, 5> initial_cov_diag = {10.0, 10.0, 10.0, 10.0, 100.0};
    double r_var_scale = 1.0;    ///< multiplier on the model measurement variance
    double psi_grid_step_deg = 1.0;  ///< static inversion bearing grid
    double r_min = 10.0;         ///< inversion range bracket [m]
    double r_max = 100e3;
    double r_tol = 0.1;          ///< bisection tolerance in range [m]
    int coarse_scan_points = 64; ///< log-spaced bracketing scan per bearing
    int candidate_cap = 64;      ///< full runs granted to the cheap-screen nominees
    int prescreen_detections = 10;
    int full_screen_budget = 1500;  ///< additional strided full-filter screens
    double candidate_position_bin = 25.0;  ///< dedupe grid for initial states [m]
    double candidate_velocity_bin = 0.5;   ///< dedupe grid for initial speeds [m/s]
    int relinearize_iterations = 1;        ///< measurement-update relinearizations
    double innovation_clip_sigma = 0.0;    ///< clamp |y - h| to k sqrt(F); 0 disables
    /// Restart the filter (new segment) after this many consecutive
    /// detections whose normalized innovation exceeds divergence_sigma;
    /// 0 disables. A power filter predicting a pattern null has a zero
    /// measurement row and cannot recover on its own.
    int divergence_window = 0;
    double divergence_sigma = 4.0;
    MovementParams movement;
    ReceiverModel receiver;
    YagiPattern pattern = YagiPattern::plc1669();

    void validate() const {
        if (!(v_max > 0.0)) throw std::invalid_argument("tracker: v_max must be positive");
        if (!(z0 > 0.0)) throw std::invalid_argument("tracker: z0 must be positive");
        receiver.validate();
        movement.validate();
        if (z_threshold < receiver.z_min)
            throw std::invalid_argument("tracker: Z threshold below receiver floor");
        for (double d : initial_cov_diag)
            if (!(d > 0.0))
                throw std::invalid_argument("tracker: initial covariance diagonal must be positive");
    }

    Matrix5 initial_cov() const {
        Matrix5 p = Matrix5::Zero();
        for (int i = 0; i < 5; ++i) p(i, i) = initial_cov_diag[i];
        return p;
    }
};

/// One posterior estimate of the track, aligned with the detection that
/// produced it.
struct TrackPoint {
    double t = 0.0;
    StateVector state;
    Matrix5 cov = Matrix5::Zero();
    std::string tower_id;
    int beam_index = 0;
    double predicted_display = 0.0;  ///< Z-hat from the posterior state
    double forecast_display = 0.0;   ///< Z-hat from the pre-update prediction
    double observed_display = 0.0;   ///< logged Z
    int segment = 0;                 ///< increments at each reinitialization
};

struct Track {
    std::vector<TrackPoint> points;
    std::vector<std::string> warnings;
};

/// A planar position consistent with one reading at an assumed altitude.
struct PlanarCandidate {
    double x = 0.0;
    double y = 0.0;
    double range = 0.0;
    double off_boresight = 0.0;  ///< [rad]
};

/// Invert one display reading into planar candidates at a fixed altitude.
/// For each bearing on a uniform grid over (-pi, pi] the range equation is
/// solved by bisection inside every sign-change bracket of a coarse
/// log-spaced scan; close-in geometry can cross the height-gain peak where
/// several ranges explain the same reading, and all of them are returned.
inline std::vector<PlanarCandidate> static_inversion(double display, const TowerSite& tower,
                                                     int beam_index, double altitude,
                                                     const TrackerConfig& cfg) {
    if (!(altitude > 0.0))
        throw std::invalid_argument("static_inversion: altitude must be positive");
    const double xi2 = xi2_from_display(cfg.receiver, display);
    std::vector<PlanarCandidate> out;
    if (!(xi2 > 0.0)) return out;  // floor reading carries no range information
    const double target = std::sqrt(xi2);
    const double beam_az = tower.beam_azimuth(beam_index);

    const int n_psi = std::max(1, static_cast<int>(std::lround(360.0 / cfg.psi_grid_step_deg)));
    const double step = 2.0 * pi / n_psi;
    const int n_scan = std::max(cfg.coarse_scan_points, 2);
    const double log_lo = std::log(cfg.r_min);
    const double log_step = (std::log(cfg.r_max) - log_lo) / (n_scan - 1);

    for (int i = 1; i <= n_psi; ++i) {
        const double psi = -pi + step * i;
        auto f = [&](double r) {
            return xi_at(cfg.pattern, psi, r, altitude, tower.height) - target;
        };
        double r_prev = cfg.r_min;
        double f_prev = f(r_prev);
        for (int k = 1; k < n_scan; ++k) {
            const double r_cur = std::exp(log_lo + log_step * k);
            const double f_cur = f(r_cur);
            if ((f_prev <= 0.0) != (f_cur <= 0.0)) {
                double lo = r_prev, hi = r_cur;
                while (hi - lo > cfg.r_tol) {
                    const double mid = 0.5 * (lo + hi);
                    ((f(mid) <= 0.0) == (f_cur <= 0.0) ? hi : lo) = mid;
                }
                const double r = 0.5 * (lo + hi);
                const double az = beam_az + psi;
                out.push_back({tower.x + r * std::cos(az), tower.y + r * std::sin(az),
                               r, psi});
            }
            r_prev = r_cur;
            f_prev = f_cur;
        }
    }
    return out;
}

/// Main-beam closed-form range r = sqrt(H_T z |g(0)| / |xi|); valid when the
/// signal arrives through the main lobe at small grazing angle.
inline double main_beam_range(double display, const TowerSite& tower, double altitude,
                              const TrackerConfig& cfg) {
    const double xi2 = xi2_from_display(cfg.receiver, display);
    if (!(xi2 > 0.0))
        throw std::runtime_error("main_beam_range: reading at the floor carries no range");
    const double g0 = std::abs(field_pattern(cfg.pattern, 0.0));
    return std::sqrt(tower.height * altitude * g0 / std::sqrt(xi2));
}

/// All initial states consistent with the first two readings at altitude z0,
/// cross-pairing the static inversions and keeping pairs whose implied speed
/// does not exceed v_max. Pairs landing in the same (position, velocity)
/// dedupe cell produce one representative; the cross product of two dense
/// inversion loci is otherwise dominated by near-copies.
inline std::vector<StateVector> enumerate_initial_states(const Detection& d0,
                                                         const Detection& d1,
                                                         const TowerLayout& towers,
                                                         const TrackerConfig& cfg,
                                                         double z0) {
    if (!(d0.t < d1.t))
        throw std::invalid_argument("enumerate_initial_states: detections must be time-ordered");
    const double dt = d1.t - d0.t;
    const auto c0 = static_inversion(d0.display, find_tower(towers, d0.tower_id),
                                     d0.beam_index, z0, cfg);
    const auto c1 = static_inversion(d1.display, find_tower(towers, d1.tower_id),
                                     d1.beam_index, z0, cfg);
    std::vector<StateVector> out;
    const double xz0 = std::sqrt(z0);
    const double pos_bin = std::max(cfg.candidate_position_bin, 1e-6);
    const double vel_bin = std::max(cfg.candidate_velocity_bin, 1e-9);
    std::set<std::array<long, 4>> seen;
    for (const auto& a : c0) {
        for (const auto& b : c1) {
            const double dx = b.x - a.x;
            const double dy = b.y - a.y;
            if (std::hypot(dx, dy) > cfg.v_max * dt) continue;
            const StateVector s{a.x, dx / dt, a.y, dy / dt, xz0};
            const std::array<long, 4> cell = {
                std::lround(s.x / pos_bin), std::lround(s.y / pos_bin),
                std::lround(s.vx / vel_bin), std::lround(s.vy / vel_bin)};
            if (seen.insert(cell).second) out.push_back(s);
        }
    }
    if (out.empty())
        throw std::runtime_error("initialization failed: no speed-feasible candidate pair");
    return out;
}

inline std::vector<StateVector> enumerate_initial_states(const Detection& d0,
                                                         const Detection& d1,
                                                         const TowerLayout& towers,
                                                         const TrackerConfig& cfg) {
    return enumerate_initial_states(d0, d1, towers, cfg, cfg.z0);
}

namespace detail {

template <typename ErrorOf>
double trapezoid_rms(const std::vector<TrackPoint>& pts, ErrorOf&& err) {
    const double span = pts.back().t - pts.front().t;
    if (pts.size() == 1 || span <= 0.0) {
        double acc = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) acc += err(i) * err(i);
        return std::sqrt(acc / static_cast<double>(pts.size()));
    }
    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double e0 = err(i), e1 = err(i + 1);
        integral += (pts[i + 1].t - pts[i].t) * 0.5 * (e0 * e0 + e1 * e1);
    }
    return std::sqrt(integral / span);
}

}  // namespace detail

/// Display-domain RMS error of a track: sqrt((1/T) integral (Zhat - Z)^2 dt)
/// with trapezoidal weights over the irregular detection spacing; Zhat comes
/// from the posterior states.
inline double score_track(const Track& track) {
    const auto& pts = track.points;
    if (pts.empty()) throw std::invalid_argument("score_track: empty track");
    return detail::trapezoid_rms(
        pts, [&](std::size_t i) { return pts[i].predicted_display - pts[i].observed_display; });
}

/// Same RMS on the one-step-ahead predictions. Posterior displays chase the
/// sampled fading noise (the update has already seen the reading), so
/// hypothesis selection ranks by this predictive variant instead.
inline double forecast_score(const Track& track) {
    const auto& pts = track.points;
    if (pts.empty()) throw std::invalid_argument("forecast_score: empty track");
    return detail::trapezoid_rms(
        pts, [&](std::size_t i) { return pts[i].forecast_display - pts[i].observed_display; });
}

/// Plain per-detection RMS of (Zhat - Z), no time weighting.
inline double rms_display_error(const Track& track) {
    const auto& pts = track.points;
    if (pts.empty()) throw std::invalid_argument("rms_display_error: empty track");
    double acc = 0.0;
    for (const auto& p : pts) {
        const double e = p.predicted_display - p.observed_display;
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(pts.size()));
}

/// Average of simultaneously updated filter branches: component-wise mean of
/// the state vectors; covariances combine as their element-wise mean.
inline FilterState fuse_simultaneous(const FilterState& a, const FilterState& b) {
    if (std::abs(a.t - b.t) > 1e-9)
        throw std::invalid_argument("fuse_simultaneous: timestamps differ");
    FilterState out;
    out.t = a.t;
    out.mean = StateVector::from_vector(0.5 * (a.mean.to_vector() + b.mean.to_vector()));
    out.cov = 0.5 * (a.cov + b.cov);
    return out;
}

namespace detail {

/// Measurement-domain conversion of one display reading. Saturated readings
/// (Z >= Z_max - 0.5) are censored: mapped to the power at Z_max - 0.5 with
/// the variance inflated tenfold.
///
/// The fading variance 4 xi^2 P0 + 2 P0^2 is evaluated at whichever of the
/// predicted and measured signal levels is stronger; evaluating at a
/// near-null predicted xi alone assigns almost no noise to a strong reading
/// and the resulting gain spikes destabilize the filter. Integer display
/// quantization adds (d xi^2 / dZ)^2 / 12, which dominates the fading term
/// at the top of the display range.
inline std::pair<double, double> measurement_from_display(double display,
                                                          double predicted_xi,
                                                          const TrackerConfig& cfg) {
    const ReceiverModel& rm = cfg.receiver;
    const bool censored = display >= rm.z_max - 0.5;
    const double effective = censored ? rm.z_max - 0.5 : display;
    const double xi2_meas = xi2_from_display(rm, effective);
    const double value = xi2_meas + rm.p0;

    const double xi_eff = std::max(predicted_xi, std::sqrt(xi2_meas));
    double variance = power_variance(xi_eff, rm.p0);
    const double slope = (xi2_meas + rm.p0) *
                         (0.5 / rm.b) *
                         (1.0 / (rm.z_max - 2.0 * rm.z_min + effective) +
                          1.0 / (rm.z_max - effective));
    variance += slope * slope / 12.0;
    variance *= cfg.r_var_scale;
    if (censored) variance *= 10.0;
    return {value, variance};
}

struct DetectionUpdate {
    FilterState state;
    double innovation_ratio = 0.0;   ///< |y - h| / sqrt(F) before any clipping
    double forecast_display = 0.0;   ///< display predicted before the update
};

inline DetectionUpdate update_with_detection(const FilterState& prior, const Detection& d,
                                             const TowerSite& tower,
                                             const TrackerConfig& cfg) {
    const double xi_pred = xi(prior.mean, tower, d.beam_index, cfg.pattern);
    const auto [value, variance] =
        measurement_from_display(static_cast<double>(d.display), xi_pred, cfg);
    Measurement m{d.t, value, variance, d.tower_id, d.beam_index};
    auto lin = [&](const StateVector& s) {
        return measurement_row(s, tower, d.beam_index, cfg.pattern, cfg.receiver.p0);
    };

    const LinearizedObservation at_prior =
        measurement_row(prior.mean, tower, d.beam_index, cfg.pattern, cfg.receiver.p0);
    const double f =
        (at_prior.jacobian * prior.cov * at_prior.jacobian.transpose()).value() + m.variance;
    const double ratio = std::abs(m.value - at_prior.predicted) / std::sqrt(f);
    if (cfg.innovation_clip_sigma > 0.0 && ratio > cfg.innovation_clip_sigma) {
        // clamp fading spikes: the power draw is heavy-tailed relative to its
        // Gaussian stand-in
        const double limit = cfg.innovation_clip_sigma * std::sqrt(f);
        const double v = m.value - at_prior.predicted;
        m.value = at_prior.predicted + (v > 0.0 ? limit : -limit);
    }
    return {update(prior, m, lin, CovarianceUpdate::joseph, cfg.relinearize_iterations).state,
            ratio, display_from_xi(cfg.receiver, xi_pred)};
}

/// Cheap candidate screen: display-domain RMS error of the mean-propagated
/// (no-update) trajectory over the leading detections.
inline double prescreen_score(const StateVector& init, std::span<const Detection> detections,
                              const std::vector<const TowerSite*>& tower_of,
                              const std::vector<Matrix5>& steps, const TrackerConfig& cfg) {
    Vector5 state = init.to_vector();
    double integral = 0.0, prev_err = 0.0, prev_t = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        state = steps[i] * state;
        const Detection& d = detections[i];
        double z_hat = cfg.receiver.z_min;
        try {
            z_hat = display_from_xi(
                cfg.receiver, xi(StateVector::from_vector(state), *tower_of[i],
                                 d.beam_index, cfg.pattern));
        } catch (const degenerate_geometry_error&) {
        }
        const double err = z_hat - static_cast<double>(d.display);
        if (i > 0) integral += (d.t - prev_t) * 0.5 * (prev_err * prev_err + err * err);
        prev_err = err;
        prev_t = d.t;
    }
    const double span = detections[steps.size() - 1].t - detections[0].t;
    return span > 0.0 ? std::sqrt(integral / span) : std::abs(prev_err);
}

/// Re-anchor a broken filter on the detections that follow: enumerate the
/// static-inversion pairs of (d0, d1) at the current altitude estimate and
/// keep the candidate whose mean propagation best explains the next few
/// readings.
inline StateVector reanchor(const FilterState& fs, std::span<const Detection> upcoming,
                            const TowerLayout& towers, const TrackerConfig& cfg) {
    const Detection& d0 = upcoming[0];
    std::size_t j = 1;
    while (j < upcoming.size() && !(upcoming[j].t > d0.t)) ++j;
    if (j == upcoming.size())
        throw std::runtime_error("reanchor: no later detection to pair with");
    const double z0 = std::max(fs.mean.z(), 1e-2);
    // a coarse bearing grid is plenty for re-anchoring; the prescreen decides
    TrackerConfig coarse = cfg;
    coarse.psi_grid_step_deg = std::max(cfg.psi_grid_step_deg, 3.0);
    coarse.coarse_scan_points = std::min(cfg.coarse_scan_points, 32);
    const auto candidates = enumerate_initial_states(d0, upcoming[j], towers, coarse, z0);

    const std::size_t prefix =
        std::min(upcoming.size(), static_cast<std::size_t>(cfg.prescreen_detections));
    std::vector<const TowerSite*> tower_of(prefix);
    std::vector<Matrix5> steps(prefix);
    for (std::size_t i = 0; i < prefix; ++i) {
        tower_of[i] = &find_tower(towers, upcoming[i].tower_id);
        const double dt = i == 0 ? 0.0 : upcoming[i].t - upcoming[i - 1].t;
        steps[i] = transition_matrix(cfg.movement, dt);
    }
    const StateVector* best = nullptr;
    double best_score = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
        const double s = prescreen_score(c, upcoming, tower_of, steps, cfg);
        if (s < best_score) {
            best_score = s;
            best = &c;
        }
    }
    return *best;
}

}  // namespace detail

/// Reinitialized state after a data gap longer than t_gap_max. Candidates
/// come from the static inversion of the two readings that end the gap at the
/// pre-gap altitude; among those reachable within v_max * gap of the pre-gap
/// position the farthest one is chosen to avoid stagnating at the old fix.
inline StateVector handle_gap(const FilterState& prev, double gap, const Detection& d0,
                              const Detection& d1, const TowerLayout& towers,
                              const TrackerConfig& cfg,
                              std::vector<std::string>* warnings = nullptr) {
    if (!(gap > cfg.t_gap_max))
        throw std::invalid_argument("handle_gap: gap does not exceed the configured maximum");
    const double z_prev = std::max(prev.mean.z(), 1e-2);
    const auto candidates = enumerate_initial_states(d0, d1, towers, cfg, z_prev);

    const double reach = cfg.v_max * gap;
    const StateVector* best = nullptr;
    double best_dist = -1.0;
    for (const auto& c : candidates) {
        const double dist = std::hypot(c.x - prev.mean.x, c.y - prev.mean.y);
        if (dist <= reach && dist > best_dist) {
            best_dist = dist;
            best = &c;
        }
    }
    if (best) return *best;

    if (warnings)
        warnings->push_back("gap reinitialization: no candidate reachable within v_max * gap; "
                            "falling back to the nearest candidate");
    double min_dist = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
        const double dist = std::hypot(c.x - prev.mean.x, c.y - prev.mean.y);
        if (dist < min_dist) {
            min_dist = dist;
            best = &c;
        }
    }
    return *best;
}

/// Run the per-detection EKF loop from a given initial state. Detections must
/// be the usable (thresholded, time-sorted) set; the initial state is taken
/// to hold at the first detection's timestamp.
inline Track run_filter(const StateVector& init, std::span<const Detection> detections,
                        const TowerLayout& towers, const TrackerConfig& cfg) {
    if (detections.empty()) throw std::invalid_argument("run_filter: no detections");
    Track track;
    FilterState fs{init, cfg.initial_cov(), detections.front().t};
    int segment = 0;

    auto emit = [&](const FilterState& state, const Detection& d, double forecast) {
        const TowerSite& tower = find_tower(towers, d.tower_id);
        double z_hat = cfg.receiver.z_min;
        try {
            z_hat = display_from_xi(cfg.receiver, xi(state.mean, tower, d.beam_index, cfg.pattern));
        } catch (const degenerate_geometry_error&) {
            track.warnings.push_back("posterior at tower base; display prediction floored");
        }
        track.points.push_back({state.t, state.mean, state.cov, d.tower_id, d.beam_index,
                                z_hat, forecast, static_cast<double>(d.display), segment});
    };

    std::size_t i = 0;
    const std::size_t n = detections.size();
    int mismatch_streak = 0;
    while (i < n) {
        const double t = detections[i].t;

        if (t - fs.t > cfg.t_gap_max) {
            std::size_t j = i + 1;
            while (j < n && !(detections[j].t > t)) ++j;
            if (j < n) {
                const StateVector re =
                    handle_gap(fs, t - fs.t, detections[i], detections[j], towers, cfg,
                               &track.warnings);
                fs = FilterState{re, cfg.initial_cov(), t};
                ++segment;
                mismatch_streak = 0;
            } else {
                track.warnings.push_back(
                    "gap before the final detections; no pair available to reinitialize");
            }
        } else if (cfg.divergence_window > 0 && mismatch_streak >= cfg.divergence_window) {
            try {
                const StateVector re =
                    detail::reanchor(fs, detections.subspan(i), towers, cfg);
                fs = FilterState{re, cfg.initial_cov(), t};
                ++segment;
                track.warnings.push_back("filter diverged; re-anchored at t=" +
                                         std::to_string(t));
            } catch (const std::exception&) {
                // keep going on the old state; nothing better is available
            }
            mismatch_streak = 0;
        }

        std::size_t group_end = i + 1;
        while (group_end < n && std::abs(detections[group_end].t - t) <= 1e-9) ++group_end;

        fs = predict(fs, cfg.movement, t);

        double worst_ratio = 0.0;
        if (group_end - i == 1) {
            const Detection& d = detections[i];
            try {
                const auto res =
                    detail::update_with_detection(fs, d, find_tower(towers, d.tower_id), cfg);
                fs = res.state;
                worst_ratio = res.innovation_ratio;
                emit(fs, d, res.forecast_display);
            } catch (const degenerate_geometry_error&) {
                track.warnings.push_back("skipped detection at degenerate geometry, t=" +
                                         std::to_string(d.t));
            }
        } else {
            // simultaneous detections: update each branch from the shared
            // prior, then average states and covariances
            std::vector<FilterState> branches;
            std::vector<const Detection*> used;
            std::vector<double> forecasts;
            for (std::size_t k = i; k < group_end; ++k) {
                const Detection& d = detections[k];
                try {
                    const auto res = detail::update_with_detection(
                        fs, d, find_tower(towers, d.tower_id), cfg);
                    branches.push_back(res.state);
                    worst_ratio = std::max(worst_ratio, res.innovation_ratio);
                    used.push_back(&d);
                    forecasts.push_back(res.forecast_display);
                } catch (const degenerate_geometry_error&) {
                    track.warnings.push_back("skipped detection at degenerate geometry, t=" +
                                             std::to_string(d.t));
                }
            }
            if (!branches.empty()) {
                FilterState fused = branches.front();
                for (std::size_t k = 1; k < branches.size(); ++k)
                    fused = fuse_simultaneous(fused, branches[k]);
                // pairwise chaining is not a plain mean beyond two branches;
                // recompute as the flat average
                if (branches.size() > 2) {
                    Vector5 mean = Vector5::Zero();
                    Matrix5 cov = Matrix5::Zero();
                    for (const auto& b : branches) {
                        mean += b.mean.to_vector();
                        cov += b.cov;
                    }
                    fused.mean = StateVector::from_vector(mean / branches.size());
                    fused.cov = cov / branches.size();
                }
                fs = fused;
                for (std::size_t k = 0; k < used.size(); ++k)
                    emit(fs, *used[k], forecasts[k]);
            }
        }
        if (worst_ratio > cfg.divergence_sigma)
            ++mismatch_streak;
        else
            mismatch_streak = 0;
        i = group_end;
    }
    if (track.points.empty())
        throw std::runtime_error("run_filter: no detection could be processed");
    return track;
}

/// Run the full filter per candidate and keep the one minimizing the
/// one-step-ahead display RMS error; ties break toward the smaller final
/// covariance trace, then input order.
///
/// Candidate sets larger than the run budget are screened two ways and the
/// nominee pools merged: a cheap mean-propagation display error over the
/// leading detections applied to every candidate, and full filter scoring of
/// an evenly strided subsample (the stride preserves the bearing/branch
/// structure of the inversion). The selection itself never exceeds cap plus
/// budget full runs.
inline std::pair<StateVector, Track> select_initial_state(
    std::span<const StateVector> candidates, std::span<const Detection> detections,
    const TowerLayout& towers, const TrackerConfig& cfg) {
    if (candidates.empty())
        throw std::invalid_argument("select_initial_state: no candidates");

    // candidates are ranked on the plain filter; the divergence re-anchor, if
    // enabled, only shapes the final run of the winner
    TrackerConfig scoring_cfg = cfg;
    scoring_cfg.divergence_window = 0;

    bool have_best = false;
    double best_score = std::numeric_limits<double>::infinity();
    double best_trace = std::numeric_limits<double>::infinity();
    StateVector best_state;
    Track best_track;
    auto consider = [&](std::size_t idx) {
        Track t;
        try {
            t = run_filter(candidates[idx], detections, towers, scoring_cfg);
        } catch (const std::exception&) {
            return;
        }
        const double s = forecast_score(t);
        const double trace = t.points.back().cov.trace();
        if (!have_best || s < best_score || (s == best_score && trace < best_trace)) {
            have_best = true;
            best_score = s;
            best_trace = trace;
            best_state = candidates[idx];
            best_track = std::move(t);
        }
    };

    if (candidates.size() <=
        static_cast<std::size_t>(cfg.candidate_cap + cfg.full_screen_budget)) {
        for (std::size_t c = 0; c < candidates.size(); ++c) consider(c);
    } else {
        // cheap screen over everything
        const std::size_t prefix =
            std::min(detections.size(), static_cast<std::size_t>(cfg.prescreen_detections));
        std::vector<const TowerSite*> tower_of(prefix);
        std::vector<Matrix5> steps(prefix);
        for (std::size_t i = 0; i < prefix; ++i) {
            tower_of[i] = &find_tower(towers, detections[i].tower_id);
            const double dt = i == 0 ? 0.0 : detections[i].t - detections[i - 1].t;
            steps[i] = transition_matrix(cfg.movement, dt);
        }
        std::vector<double> score(candidates.size());
        std::vector<std::size_t> order(candidates.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t c = 0; c < candidates.size(); ++c)
            score[c] = detail::prescreen_score(candidates[c], detections, tower_of, steps, cfg);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
        for (std::size_t k = 0;
             k < std::min<std::size_t>(cfg.candidate_cap, order.size()); ++k)
            consider(order[k]);

        // strided full-filter screen for branch diversity
        const std::size_t stride =
            std::max<std::size_t>(1, candidates.size() / cfg.full_screen_budget);
        for (std::size_t c = 0; c < candidates.size(); c += stride) consider(c);
    }

    if (!have_best)
        throw std::runtime_error("select_initial_state: every candidate filter run failed");
    if (cfg.divergence_window > 0) {
        try {
            best_track = run_filter(best_state, detections, towers, cfg);
        } catch (const std::exception&) {
            // fall back to the plain run already in hand
        }
    }
    return {best_state, std::move(best_track)};
}

/// Full tracking pipeline: threshold, initialize from the first two usable
/// readings, filter every detection with gap and simultaneity handling.
inline Track track(std::span<const Detection> detections, const TowerLayout& towers,
                   const TrackerConfig& cfg) {
    cfg.validate();
    std::vector<Detection> usable;
    usable.reserve(detections.size());
    double last_t = -std::numeric_limits<double>::infinity();
    for (const auto& d : detections) {
        if (d.t < last_t)
            throw std::invalid_argument("track: detections must be time-sorted");
        last_t = d.t;
        const TowerSite& tower = find_tower(towers, d.tower_id);  // resolvable or throws
        tower.beam_azimuth(d.beam_index);
        if (d.display >= cfg.z_threshold) usable.push_back(d);
    }
    if (usable.size() < 2)
        throw std::runtime_error("track: fewer than 2 usable detections above the threshold");

    std::size_t second = 1;
    while (second < usable.size() && !(usable[second].t > usable[0].t)) ++second;
    if (second == usable.size())
        throw std::runtime_error("track: all usable detections are simultaneous");

    const auto candidates =
        enumerate_initial_states(usable[0], usable[second], towers, cfg, cfg.z0);
    auto [init, result] = select_initial_state(candidates, usable, towers, cfg);
    (void)init;
    return std::move(result);
}

}  // namespace vhftrack
