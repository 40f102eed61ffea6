// SPDX-License-Identifier: Apache-2.0
//
// vhftrack -- correlated stochastic movement model.
//
// Planar motion follows an Ornstein-Uhlenbeck velocity process (white noise
// drives velocity, position integrates it); altitude is z = xz^2 where xz is
// an OU-type root variable, which makes z a Cox-Ingersoll-Ross diffusion that
// stays nonnegative by construction. The five-state system
//
//     p = [x, vx, y, vy, xz]'
//
// is linear and time-invariant, so the discrete recursion
//
//     p(t + dt) = expm(A dt) p(t) + noise,   noise ~ N(0, Q(dt))
//
// is exact for arbitrary, non-uniform dt. Both the transition matrix and
// Q(dt) are evaluated in closed form; the small-beta*dt regime goes through
// series expansions to avoid cancellation (beta_z near 1e-5 /s with dt of
// seconds sits exactly there).

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "vhftrack/rng.hpp"

namespace vhftrack {

using Vector5 = Eigen::Matrix<double, 5, 1>;
using Matrix5 = Eigen::Matrix<double, 5, 5>;
using RowVector5 = Eigen::Matrix<double, 1, 5>;
using Matrix53 = Eigen::Matrix<double, 5, 3>;

/// Five-component state [x, vx, y, vy, xz]; altitude z = xz^2.
struct StateVector {
    double x = 0.0;   ///< easting [m]
    double vx = 0.0;  ///< easting velocity [m/s]
    double y = 0.0;   ///< northing [m]
    double vy = 0.0;  ///< northing velocity [m/s]
    double xz = 0.0;  ///< altitude root [m^1/2]

    double z() const { return xz * xz; }

    Vector5 to_vector() const {
        Vector5 v;
        v << x, vx, y, vy, xz;
        return v;
    }

    static StateVector from_vector(const Vector5& v) {
        return {v[0], v[1], v[2], v[3], v[4]};
    }
};

/// Decay rates and noise scales of the movement model, ten in total.
///
/// beta_* are mean-reversion rates [1/s]; sigma_xx/yy/zz scale the white
/// noise driving each coordinate's own channel and the off-diagonal sigmas
/// couple the shared noise sources across coordinates [m s^-3/2].
struct MovementParams {
    double beta_x = 0.0;
    double beta_y = 0.0;
    double beta_z = 0.0;
    double sigma_xx = 0.0;
    double sigma_yy = 0.0;
    double sigma_zz = 0.0;
    double sigma_xy = 0.0;
    double sigma_yx = 0.0;
    double sigma_zx = 0.0;
    double sigma_zy = 0.0;

    void validate() const {
        if (!(beta_x > 0.0) || !(beta_y > 0.0) || !(beta_z > 0.0))
            throw std::invalid_argument("movement: decay rates must be positive");
        if (sigma_xx < 0.0 || sigma_yy < 0.0 || sigma_zz < 0.0)
            throw std::invalid_argument("movement: noise scales must be nonnegative");
    }

    /// True when planar motion statistics are heading-independent:
    /// sigma_xx == sigma_yy and sigma_yx == -sigma_xy.
    bool is_isotropic(double rel_tol = 1e-12) const {
        const double s1 = std::max(std::abs(sigma_xx), std::abs(sigma_yy));
        const double s2 = std::max(std::abs(sigma_xy), std::abs(sigma_yx));
        return std::abs(sigma_xx - sigma_yy) <= rel_tol * s1 &&
               std::abs(sigma_yx + sigma_xy) <= rel_tol * s2;
    }

    /// True when the decay rates are pairwise distinct, a necessary
    /// condition for the observability rank to reach 4.
    bool is_almost_observable_compatible(double rel_sep = 1e-9) const {
        auto separated = [rel_sep](double a, double b) {
            return std::abs(a - b) > rel_sep * std::max(std::abs(a), std::abs(b));
        };
        return separated(beta_x, beta_y) && separated(beta_y, beta_z) &&
               separated(beta_x, beta_z);
    }
};

namespace detail {

// phi_n(x) = integral_0^1 t^(n-1) e^(-x t) dt, x >= 0.
// Series for small x (the recurrence cancels there), upward recurrence
// from phi_1 = (1 - e^-x)/x otherwise.
inline double phi_n(int n, double x) {
    if (x < 0.5) {
        double term = 1.0;  // (-x)^k / k!
        double sum = 0.0;
        for (int k = 0; k < 40; ++k) {
            const double add = term / (n + k);
            sum += add;
            if (std::abs(add) < 1e-18 * std::abs(sum)) break;
            term *= -x / (k + 1);
        }
        return sum;
    }
    const double e = std::exp(-x);
    double phi = -std::expm1(-x) / x;
    for (int m = 2; m <= n; ++m) phi = ((m - 1) * phi - e) / x;
    return phi;
}

// psi_n(x) = integral_0^1 t^(n-1) phi_1(x t) dt, x >= 0, n >= 2.
inline double psi_n(int n, double x) {
    if (x < 0.5) {
        double term = 1.0;  // (-x)^k / (k+1)!
        double sum = 0.0;
        for (int k = 0; k < 40; ++k) {
            const double add = term / (n + k);
            sum += add;
            if (std::abs(add) < 1e-18 * std::abs(sum)) break;
            term *= -x / (k + 2);
        }
        return sum;
    }
    return (1.0 / (n - 1) - phi_n(n - 1, x)) / x;
}

// integral_0^dt e^(-u s) e^(-v s) ds
inline double decay_decay(double u, double v, double dt) {
    return dt * phi_n(1, (u + v) * dt);
}

// integral_0^dt [(1 - e^(-u s))/u] e^(-v s) ds
inline double ramp_decay(double u, double v, double dt) {
    const double xu = u * dt;
    if (xu < 1e-2) {
        const double xv = v * dt;
        double term = 1.0;  // (-xu)^k / (k+1)!
        double sum = 0.0;
        for (int k = 0; k <= 8; ++k) {
            sum += term * phi_n(k + 2, xv);
            term *= -xu / (k + 2);
        }
        return dt * dt * sum;
    }
    return (dt * phi_n(1, v * dt) - dt * phi_n(1, (u + v) * dt)) / u;
}

// integral_0^dt [(1 - e^(-u s))/u] [(1 - e^(-v s))/v] ds
inline double ramp_ramp(double u, double v, double dt) {
    const double xu = u * dt;
    const double xv = v * dt;
    if (xu >= 1e-2 && xv >= 1e-2) {
        const double num =
            dt * (1.0 - phi_n(1, xu) - phi_n(1, xv) + phi_n(1, xu + xv));
        return num / (u * v);
    }
    if (xu < 1e-2 && xv < 1e-2) {
        double sum = 0.0;
        double tj = 1.0;  // (-xu)^j / (j+1)!
        for (int j = 0; j <= 8; ++j) {
            double tk = 1.0;  // (-xv)^k / (k+1)!
            for (int k = 0; k <= 8; ++k) {
                sum += tj * tk / (j + k + 3);
                tk *= -xv / (k + 2);
            }
            tj *= -xu / (j + 2);
        }
        return dt * dt * dt * sum;
    }
    if (xu < 1e-2) {
        double term = 1.0;
        double sum = 0.0;
        for (int k = 0; k <= 8; ++k) {
            sum += term * psi_n(k + 3, xv);
            term *= -xu / (k + 2);
        }
        return dt * dt * dt * sum;
    }
    return ramp_ramp(v, u, dt);
}

}  // namespace detail

/// e^(-beta dt)
inline double exp_decay(double beta, double dt) { return std::exp(-beta * dt); }

/// integral_0^dt e^(-beta s) ds = (1 - e^(-beta dt))/beta, beta -> 0 limit dt.
inline double integrated_decay(double beta, double dt) {
    return dt * detail::phi_n(1, beta * dt);
}

/// Continuous-time system matrix A of dp = A p dt + B dW.
inline Matrix5 system_matrix(const MovementParams& p) {
    Matrix5 a = Matrix5::Zero();
    a(0, 1) = 1.0;
    a(1, 1) = -p.beta_x;
    a(2, 3) = 1.0;
    a(3, 3) = -p.beta_y;
    a(4, 4) = -p.beta_z;
    return a;
}

/// Noise input matrix B mapping the three white-noise channels into the state.
inline Matrix53 noise_input_matrix(const MovementParams& p) {
    Matrix53 b = Matrix53::Zero();
    b(1, 0) = p.sigma_xx;
    b(1, 1) = p.sigma_xy;
    b(3, 0) = p.sigma_yx;
    b(3, 1) = p.sigma_yy;
    b(4, 0) = p.sigma_zx;
    b(4, 1) = p.sigma_zy;
    b(4, 2) = p.sigma_zz;
    return b;
}

/// Exact state transition matrix expm(A dt): block diagonal with
/// [[1, mu_k],[0, lambda_k]] per planar coordinate and [lambda_z] for xz.
inline Matrix5 transition_matrix(const MovementParams& p, double dt) {
    if (dt < 0.0) throw std::invalid_argument("transition_matrix: dt must be nonnegative");
    Matrix5 t = Matrix5::Zero();
    t(0, 0) = 1.0;
    t(0, 1) = integrated_decay(p.beta_x, dt);
    t(1, 1) = exp_decay(p.beta_x, dt);
    t(2, 2) = 1.0;
    t(2, 3) = integrated_decay(p.beta_y, dt);
    t(3, 3) = exp_decay(p.beta_y, dt);
    t(4, 4) = exp_decay(p.beta_z, dt);
    return t;
}

/// Closed-form process noise covariance
///
///     Q(dt) = integral_0^dt expm(A s) B B' expm(A' s) ds.
///
/// Noise enters only the vx, vy and xz rows, so every entry reduces to one of
/// three scalar kernels: the decay-decay, ramp-decay and ramp-ramp integrals
/// over the per-axis factors lambda_k(s) = e^(-beta_k s) and
/// mu_k(s) = (1 - lambda_k)/beta_k.
inline Matrix5 process_noise_cov(const MovementParams& p, double dt) {
    if (dt < 0.0) throw std::invalid_argument("process_noise_cov: dt must be nonnegative");
    using detail::decay_decay;
    using detail::ramp_decay;
    using detail::ramp_ramp;

    const double ax = p.sigma_xx * p.sigma_xx + p.sigma_xy * p.sigma_xy;
    const double ay = p.sigma_yx * p.sigma_yx + p.sigma_yy * p.sigma_yy;
    const double az = p.sigma_zx * p.sigma_zx + p.sigma_zy * p.sigma_zy +
                      p.sigma_zz * p.sigma_zz;
    const double cxy = p.sigma_xx * p.sigma_yx + p.sigma_xy * p.sigma_yy;
    const double cxz = p.sigma_xx * p.sigma_zx + p.sigma_xy * p.sigma_zy;
    const double cyz = p.sigma_yx * p.sigma_zx + p.sigma_yy * p.sigma_zy;
    const double bx = p.beta_x, by = p.beta_y, bz = p.beta_z;

    Matrix5 q = Matrix5::Zero();
    q(0, 0) = ax * ramp_ramp(bx, bx, dt);
    q(0, 1) = ax * ramp_decay(bx, bx, dt);
    q(1, 1) = ax * decay_decay(bx, bx, dt);
    q(2, 2) = ay * ramp_ramp(by, by, dt);
    q(2, 3) = ay * ramp_decay(by, by, dt);
    q(3, 3) = ay * decay_decay(by, by, dt);
    q(0, 2) = cxy * ramp_ramp(bx, by, dt);
    q(0, 3) = cxy * ramp_decay(bx, by, dt);
    q(1, 2) = cxy * ramp_decay(by, bx, dt);
    q(1, 3) = cxy * decay_decay(bx, by, dt);
    q(0, 4) = cxz * ramp_decay(bx, bz, dt);
    q(1, 4) = cxz * decay_decay(bx, bz, dt);
    q(2, 4) = cyz * ramp_decay(by, bz, dt);
    q(3, 4) = cyz * decay_decay(by, bz, dt);
    q(4, 4) = az * decay_decay(bz, bz, dt);
    return q.selfadjointView<Eigen::Upper>();
}

/// Factor L with L L' = m for a symmetric positive semidefinite m.
/// Eigenvalues in [-1e-10 * lambda_max, 0) are clamped to zero; anything
/// more negative is rejected. Plain Cholesky fails on the numerically
/// semidefinite Q(dt) produced by tiny dt.
inline Matrix5 psd_sqrt(const Matrix5& m) {
    Eigen::SelfAdjointEigenSolver<Matrix5> es(m);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("psd_sqrt: eigendecomposition failed");
    Vector5 ev = es.eigenvalues();
    const double emax = std::max(ev.maxCoeff(), 0.0);
    const double floor = -1e-10 * emax - 1e-300;
    Vector5 s;
    for (int i = 0; i < 5; ++i) {
        if (ev[i] < floor)
            throw std::runtime_error("psd_sqrt: matrix is not positive semidefinite");
        s[i] = std::sqrt(std::max(ev[i], 0.0));
    }
    return es.eigenvectors() * s.asDiagonal();
}

/// Mean propagation over dt (exact, no discretization error).
inline StateVector propagate(const StateVector& s, const MovementParams& p, double dt) {
    return StateVector::from_vector(transition_matrix(p, dt) * s.to_vector());
}

/// Propagation with an externally supplied noise sample, expected ~ N(0, Q(dt)).
inline StateVector propagate(const StateVector& s, const MovementParams& p, double dt,
                             const Vector5& noise) {
    return StateVector::from_vector(transition_matrix(p, dt) * s.to_vector() + noise);
}

/// Simulate the state at the given timestamps; out[0] is the initial state at
/// times[0]. Deterministic in (params, init, times, seed).
inline std::vector<StateVector> simulate(const MovementParams& p, const StateVector& init,
                                         std::span<const double> times, std::uint64_t seed) {
    p.validate();
    if (times.empty()) return {};
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw std::invalid_argument("simulate: timestamps must be strictly increasing");

    Philox4x32 rng(seed);
    std::vector<StateVector> out;
    out.reserve(times.size());
    out.push_back(init);

    double cached_dt = -1.0;
    Matrix5 trans = Matrix5::Identity();
    Matrix5 factor = Matrix5::Zero();
    Vector5 v = init.to_vector();
    for (std::size_t i = 1; i < times.size(); ++i) {
        const double dt = times[i] - times[i - 1];
        if (dt != cached_dt) {
            trans = transition_matrix(p, dt);
            factor = psd_sqrt(process_noise_cov(p, dt));
            cached_dt = dt;
        }
        Vector5 white;
        for (int k = 0; k < 5; ++k) white[k] = rng.next_normal();
        v = trans * v + factor * white;
        out.push_back(StateVector::from_vector(v));
    }
    return out;
}

/// Long-run mean altitude (sigma_zx^2 + sigma_zy^2 + sigma_zz^2)/(2 beta_z).
inline double stationary_altitude(const MovementParams& p) {
    if (!(p.beta_z > 0.0))
        throw std::invalid_argument("stationary_altitude: beta_z must be positive");
    return (p.sigma_zx * p.sigma_zx + p.sigma_zy * p.sigma_zy +
            p.sigma_zz * p.sigma_zz) /
           (2.0 * p.beta_z);
}

}  // namespace vhftrack
