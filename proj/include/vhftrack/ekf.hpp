// SPDX-License-Identifier: Apache-2.0
//
// vhftrack -- extended Kalman filter over the five-state movement model with
// scalar power measurements at irregular times, plus observability
// diagnostics.
//
// Prediction uses the exact discrete transition and closed-form Q, so
// arbitrary inter-measurement gaps are handled natively. The covariance
// update defaults to the Joseph form; the short form (I - kH)P is kept as a
// tested alternative.

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "vhftrack/movement.hpp"
#include "vhftrack/observation.hpp"

namespace vhftrack {

/// Filter mean/covariance at a point in time. Covariance is re-symmetrized
/// after every step.
struct FilterState {
    StateVector mean;
    Matrix5 cov = Matrix5::Zero();
    double t = 0.0;
};

/// One scalar measurement in the normalized power domain (xi^2 + P0),
/// obtained by inverting the display map, bound to the producing beam.
struct Measurement {
    double t = 0.0;
    double value = 0.0;     ///< y = xi^2_meas + P0
    double variance = 0.0;  ///< R > 0
    std::string tower_id;
    int beam_index = 0;
};

enum class CovarianceUpdate { joseph, standard };

/// Time update to t_next: mean through expm(A dt), covariance T P T' + Q(dt).
inline FilterState predict(const FilterState& fs, const MovementParams& p, double t_next) {
    const double dt = t_next - fs.t;
    if (dt < 0.0)
        throw std::invalid_argument("predict: target time precedes filter time");
    const Matrix5 t = transition_matrix(p, dt);
    Matrix5 cov = t * fs.cov * t.transpose() + process_noise_cov(p, dt);
    cov = 0.5 * (cov + cov.transpose());
    return {StateVector::from_vector(t * fs.mean.to_vector()), cov, t_next};
}

struct UpdateResult {
    FilterState state;
    double innovation;           ///< v = y - h(prior mean)
    double innovation_variance;  ///< F = H P H' + R
};

/// Measurement update. The linearizer is called at the a-priori mean (the
/// nominal trajectory) and must return a LinearizedObservation.
///
/// With iterations > 1 the linearization point is refined Gauss-Newton style
/// (iterated EKF): each pass relinearizes about the latest posterior mean,
///
///     p_{j+1} = m- + K_j (y - h_j - H_j (m- - p_j)),
///
/// which recovers gradient information when the nominal point sits near a
/// pattern null where a single linearization has an almost-zero row.
template <typename Linearizer>
UpdateResult update(const FilterState& prior, const Measurement& m, Linearizer&& linearize,
                    CovarianceUpdate form = CovarianceUpdate::joseph, int iterations = 1) {
    if (!(m.variance > 0.0))
        throw std::invalid_argument("update: measurement variance must be positive");
    if (iterations < 1) throw std::invalid_argument("update: iterations must be >= 1");

    const Vector5 prior_mean = prior.mean.to_vector();
    Vector5 point = prior_mean;
    RowVector5 h = RowVector5::Zero();
    Vector5 gain = Vector5::Zero();
    double innovation = 0.0;
    double innov_var = 0.0;
    for (int j = 0; j < iterations; ++j) {
        const LinearizedObservation obs = linearize(StateVector::from_vector(point));
        h = obs.jacobian;
        const Vector5 pht = prior.cov * h.transpose();
        innov_var = (h * pht).value() + m.variance;
        if (!(innov_var > 0.0) || !std::isfinite(innov_var))
            throw std::runtime_error("update: degenerate innovation variance");
        gain = pht / innov_var;
        const double residual = m.value - obs.predicted - (h * (prior_mean - point)).value();
        if (j == 0) innovation = m.value - obs.predicted;
        point = prior_mean + gain * residual;
    }

    const Matrix5 ikh = Matrix5::Identity() - gain * h;
    Matrix5 cov;
    if (form == CovarianceUpdate::joseph)
        cov = ikh * prior.cov * ikh.transpose() + gain * m.variance * gain.transpose();
    else
        cov = ikh * prior.cov;
    cov = 0.5 * (cov + cov.transpose());
    return {FilterState{StateVector::from_vector(point), cov, prior.t}, innovation,
            innov_var};
}

/// Stacked observability matrix [H; HT; HT^2; HT^3; HT^4].
inline Matrix5 observability_matrix(const Matrix5& transition, const RowVector5& h) {
    Matrix5 s;
    s.row(0) = h;
    for (int k = 1; k < 5; ++k) s.row(k) = s.row(k - 1) * transition;
    return s;
}

/// Numerical rank by SVD with a relative singular value threshold.
inline int matrix_rank(const Matrix5& m, double rel_tol = 1e-10) {
    Eigen::JacobiSVD<Matrix5> svd(m);
    const auto& sv = svd.singularValues();
    if (!(sv(0) > 0.0)) return 0;
    int rank = 0;
    for (int i = 0; i < 5; ++i)
        if (sv(i) > rel_tol * sv(0)) ++rank;
    return rank;
}

/// Degree of observability of the linearized system at a state seen from one
/// beam over a step dt. Power measurements never depend on velocity, so the
/// best achievable value is 4, and only with pairwise-distinct decay rates.
inline int degree_of_observability(const MovementParams& params, const StateVector& state,
                                   const TowerSite& tower, int beam_index,
                                   const YagiPattern& pattern, double dt) {
    const XiGradient g = xi_gradient(state, tower, beam_index, pattern);
    RowVector5 h;
    h << 2.0 * g.value * g.d_x, 0.0, 2.0 * g.value * g.d_y, 0.0, 2.0 * g.value * g.d_xz;
    return matrix_rank(observability_matrix(transition_matrix(params, dt), h));
}

}  // namespace vhftrack
