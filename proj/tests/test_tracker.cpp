// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "support/test_helpers.hpp"
#include "vhftrack/tracker.hpp"
#include "vhftrack/validation.hpp"

using namespace vhftrack;
using vhftrack::testing::study_params;
using vhftrack::testing::study_receiver;
using vhftrack::testing::test_tower;
using Catch::Approx;

namespace {

TrackerConfig make_config() {
    TrackerConfig cfg;
    cfg.v_max = 20.0;
    cfg.z0 = 14.72;
    cfg.movement = study_params();
    cfg.receiver = study_receiver();
    return cfg;
}

double display_for(const TrackerConfig& cfg, const TowerSite& tower, double psi,
                   double range, double altitude) {
    const double v = xi_at(cfg.pattern, psi, range, altitude, tower.height);
    return display_from_xi(cfg.receiver, v);
}

}  // namespace

TEST_CASE("static inversion recovers the generating range and bearing") {
    const TrackerConfig cfg = make_config();
    const TowerSite tower = test_tower();
    const double z = 30.0;

    for (double psi_deg : {0.0, 7.0, -12.0}) {
        for (double r_true : {900.0, 2500.0, 6000.0}) {
            const double psi = deg_to_rad(psi_deg);
            const double display = display_for(cfg, tower, psi, r_true, z);
            const auto candidates = static_inversion(display, tower, 0, z, cfg);
            REQUIRE_FALSE(candidates.empty());
            double best = 1e18;
            for (const auto& c : candidates) {
                if (std::abs(wrap_angle(c.off_boresight - psi)) < 1e-9)
                    best = std::min(best, std::abs(c.range - r_true));
            }
            REQUIRE(best / r_true < 0.01);
        }
    }
}

TEST_CASE("far-field inversion follows the pattern-shaped range law") {
    const TrackerConfig cfg = make_config();
    const TowerSite tower = test_tower();
    const double z = 5.0;
    const double r_true = 4000.0;
    const double display = display_for(cfg, tower, 0.0, r_true, z);
    const double xi_meas = std::sqrt(xi2_from_display(cfg.receiver, display));

    const auto candidates = static_inversion(display, tower, 0, z, cfg);
    int audited = 0;
    for (const auto& c : candidates) {
        const double slant = std::hypot(c.range, z - tower.height);
        if (height_gain_argument(cfg.pattern, tower.height, z, slant) >= 0.1) continue;
        const double law = std::sqrt(tower.height * z *
                                     std::abs(field_pattern(cfg.pattern, c.off_boresight)) /
                                     xi_meas);
        REQUIRE(c.range == Approx(law).epsilon(0.02));
        ++audited;
    }
    REQUIRE(audited > 50);
}

TEST_CASE("sidelobe candidates sit closer by the pattern square root") {
    const TrackerConfig cfg = make_config();
    const TowerSite tower = test_tower();
    const double z = 5.0;
    const double display = display_for(cfg, tower, 0.0, 5000.0, z);
    const auto candidates = static_inversion(display, tower, 0, z, cfg);

    auto range_at = [&](double psi_deg) -> double {
        for (const auto& c : candidates)
            if (std::abs(wrap_angle(c.off_boresight - deg_to_rad(psi_deg))) < 1e-9)
                return c.range;
        return -1.0;
    };
    const double r0 = range_at(0.0);
    REQUIRE(r0 > 0.0);
    for (double psi_deg : {40.0, 90.0, 180.0}) {
        const double r = range_at(psi_deg);
        if (r < 0.0) continue;  // below the floor of solvable bearings
        const double expected =
            r0 * std::sqrt(std::abs(field_pattern(cfg.pattern, deg_to_rad(psi_deg))) /
                           std::abs(field_pattern(cfg.pattern, 0.0)));
        REQUIRE(r == Approx(expected).epsilon(0.03));
    }
}

TEST_CASE("main-beam closed form matches the inversion at boresight") {
    const TrackerConfig cfg = make_config();
    const TowerSite tower = test_tower();
    const double z = 20.0;
    const double display = display_for(cfg, tower, 0.0, 3500.0, z);

    const double r = main_beam_range(display, tower, z, cfg);
    CHECK(r == Approx(3500.0).epsilon(0.02));

    const auto candidates = static_inversion(display, tower, 0, z, cfg);
    double boresight = -1.0;
    for (const auto& c : candidates)
        if (std::abs(wrap_angle(c.off_boresight)) < 1e-9) boresight = c.range;
    REQUIRE(boresight > 0.0);
    CHECK(r == Approx(boresight).epsilon(0.01));

    // r scales as sqrt(z) at fixed reading
    CHECK(main_beam_range(display, tower, 4.0 * z, cfg) == Approx(2.0 * r).epsilon(1e-9));

    // boresight pattern factor of the study antenna
    CHECK(std::abs(field_pattern(cfg.pattern, 0.0)) == Approx(0.6768).margin(5e-4));
}

TEST_CASE("main-beam range rejects floor readings") {
    const TrackerConfig cfg = make_config();
    REQUIRE_THROWS_AS(main_beam_range(cfg.receiver.z_min, test_tower(), 20.0, cfg),
                      std::runtime_error);
}

TEST_CASE("initialization keeps the near-stationary candidate for repeated readings") {
    const TrackerConfig cfg = make_config();
    const TowerSite tower = test_tower();
    const TowerLayout towers{tower};
    const double display = display_for(cfg, tower, 0.0, 2000.0, cfg.z0);

    Detection d0{"tag", 0.0, tower.id, 0, static_cast<int>(std::lround(display))};
    Detection d1 = d0;
    d1.t = 600.0;
    const auto states = enumerate_initial_states(d0, d1, towers, cfg);
    double min_speed = 1e18;
    for (const auto& s : states) min_speed = std::min(min_speed, std::hypot(s.vx, s.vy));
    CHECK(min_speed < 1e-9);
    for (const auto& s : states) CHECK(s.xz == Approx(std::sqrt(cfg.z0)));
}

TEST_CASE("zero speed bound keeps only coincident pairs") {
    TrackerConfig cfg = make_config();
    const TowerSite tower = test_tower();
    const TowerLayout towers{tower};
    const double display = display_for(cfg, tower, 0.0, 2000.0, cfg.z0);
    Detection d0{"tag", 0.0, tower.id, 0, static_cast<int>(std::lround(display))};
    Detection d1 = d0;
    d1.t = 60.0;
    cfg.v_max = 1e-12;
    const auto states = enumerate_initial_states(d0, d1, towers, cfg);
    for (const auto& s : states) {
        CHECK(std::abs(s.vx) < 1e-9);
        CHECK(std::abs(s.vy) < 1e-9);
    }
}

TEST_CASE("initialization candidates contain the true state") {
    const TrackerConfig cfg = make_config();
    const TowerSite tower = test_tower();
    const TowerLayout towers{tower};
    const double z = cfg.z0;
    // truth on the bearing grid so only range quantization remains
    const double psi = deg_to_rad(4.0);
    const double az = tower.beam_azimuth(0) + psi;
    const double r0 = 1500.0, r1 = 1530.0;
    const double dt = 6.0;

    Detection d0{"tag", 0.0, tower.id, 0,
                 static_cast<int>(std::lround(display_for(cfg, tower, psi, r0, z)))};
    Detection d1{"tag", dt, tower.id, 0,
                 static_cast<int>(std::lround(display_for(cfg, tower, psi, r1, z)))};
    const auto states = enumerate_initial_states(d0, d1, towers, cfg);

    const double x_true = tower.x + r0 * std::cos(az);
    const double y_true = tower.y + r0 * std::sin(az);
    double nearest = 1e18;
    for (const auto& s : states)
        nearest = std::min(nearest, std::hypot(s.x - x_true, s.y - y_true));
    // grid resolution: 1 degree of cross-range plus the display quantization
    CHECK(nearest < r0 * deg_to_rad(1.0) + 0.01 * r0);
}

namespace {

Track synthetic_track(const std::vector<double>& times, const std::vector<double>& errors) {
    Track t;
    for (std::size_t i = 0; i < times.size(); ++i) {
        TrackPoint p;
        p.t = times[i];
        p.observed_display = 100.0;
        p.predicted_display = 100.0 + errors[i];
        t.points.push_back(p);
    }
    return t;
}

}  // namespace

TEST_CASE("track score vanishes for a perfect trace and equals a constant offset") {
    const std::vector<double> times = {0, 6, 12, 30, 36, 90};
    CHECK(score_track(synthetic_track(times, {0, 0, 0, 0, 0, 0})) == 0.0);
    CHECK(score_track(synthetic_track(times, {3, 3, 3, 3, 3, 3})) == Approx(3.0));
    REQUIRE_THROWS_AS(score_track(Track{}), std::invalid_argument);
}

TEST_CASE("track score agrees with a brute-force uniform resampling") {
    std::vector<double> times, errors;
    Philox4x32 rng(77);
    double t = 0.0;
    for (int i = 0; i < 60; ++i) {
        times.push_back(t);
        errors.push_back(10.0 * rng.next_normal());
        t += 2.0 + 20.0 * rng.next_uniform();
    }
    const double scored = score_track(synthetic_track(times, errors));

    // resample the piecewise-linear error onto a fine uniform grid
    const int n = 200000;
    const double span = times.back() - times.front();
    double acc = 0.0;
    std::size_t seg = 0;
    for (int i = 0; i < n; ++i) {
        const double ti = times.front() + span * i / (n - 1.0);
        while (seg + 2 < times.size() && times[seg + 1] < ti) ++seg;
        const double w = (ti - times[seg]) / (times[seg + 1] - times[seg]);
        const double e = errors[seg] * (1.0 - w) + errors[seg + 1] * w;
        acc += e * e;
    }
    const double resampled = std::sqrt(acc / n);
    CHECK(std::abs(scored - resampled) < 1.0);
}

TEST_CASE("single candidate is selected unconditionally") {
    const TrackerConfig cfg = make_config();
    const ScenarioConfig sc = validation_scenario(3);
    const auto truth = simulate_scenario(sc);
    auto detections = synthesize_detections(truth, sc);
    std::vector<Detection> usable;
    for (const auto& d : detections)
        if (d.display >= cfg.z_threshold) usable.push_back(d);
    REQUIRE(usable.size() >= 2);

    const StateVector candidate = truth.front().state;
    const auto [chosen, tr] =
        select_initial_state(std::vector<StateVector>{candidate}, usable, sc.towers, cfg);
    CHECK(chosen.x == candidate.x);
    CHECK(chosen.y == candidate.y);
    CHECK_FALSE(tr.points.empty());
}

TEST_CASE("adding a grossly wrong candidate never lowers the minimum score") {
    const TrackerConfig cfg = make_config();
    const ScenarioConfig sc = validation_scenario(4);
    const auto truth = simulate_scenario(sc);
    auto detections = synthesize_detections(truth, sc);
    std::vector<Detection> usable;
    for (const auto& d : detections)
        if (d.display >= cfg.z_threshold) usable.push_back(d);

    std::vector<StateVector> candidates{truth.front().state};
    const auto [s0, t0] = select_initial_state(candidates, usable, sc.towers, cfg);
    candidates.push_back(StateVector{truth.front().state.x + 80000.0, 15.0,
                                     truth.front().state.y - 60000.0, -15.0, 1.0});
    const auto [s1, t1] = select_initial_state(candidates, usable, sc.towers, cfg);
    CHECK(score_track(t1) <= score_track(t0) + 1e-12);
    CHECK(s1.x == s0.x);
}

TEST_CASE("gap reinitialization honors the reachability bound") {
    const TrackerConfig cfg = make_config();
    const TowerSite tower = test_tower();
    const TowerLayout towers{tower};

    FilterState prev;
    prev.mean = {tower.x + 1200.0, 2.0, tower.y + 300.0, 1.0, std::sqrt(25.0)};
    prev.cov = cfg.initial_cov();
    prev.t = 0.0;

    const double gap = 400.0;
    const double display = display_for(cfg, tower, 0.0, 2500.0, 25.0);
    Detection d0{"tag", gap, tower.id, 0, static_cast<int>(std::lround(display))};
    Detection d1{"tag", gap + 6.0, tower.id, 0, static_cast<int>(std::lround(display))};

    Track scratch;
    const StateVector re = handle_gap(prev, gap, d0, d1, towers, cfg, &scratch.warnings);
    const double dist = std::hypot(re.x - prev.mean.x, re.y - prev.mean.y);
    CHECK(dist <= cfg.v_max * gap + 1e-6);
    CHECK(re.z() == Approx(prev.mean.z()).epsilon(1e-9));
    CHECK(scratch.warnings.empty());

    // the anti-stagnation rule picks the farthest reachable candidate
    const auto cands = enumerate_initial_states(d0, d1, towers, cfg, prev.mean.z());
    double best = -1.0;
    for (const auto& c : cands) {
        const double d = std::hypot(c.x - prev.mean.x, c.y - prev.mean.y);
        if (d <= cfg.v_max * gap) best = std::max(best, d);
    }
    CHECK(dist == Approx(best));
}

TEST_CASE("unreachable gap candidates trigger the fallback with a warning") {
    TrackerConfig cfg = make_config();
    const TowerSite tower = test_tower();
    const TowerLayout towers{tower};

    FilterState prev;
    prev.mean = {tower.x + 90000.0, 0.0, tower.y + 90000.0, 0.0, std::sqrt(25.0)};
    prev.t = 0.0;

    const double gap = 301.0;
    cfg.v_max = 0.5;  // reach of 150 m, far less than the distance to any candidate
    const double display = display_for(cfg, tower, 0.0, 2500.0, 25.0);
    Detection d0{"tag", gap, tower.id, 0, static_cast<int>(std::lround(display))};
    Detection d1{"tag", gap + 6.0, tower.id, 0, static_cast<int>(std::lround(display))};

    std::vector<std::string> warnings;
    const StateVector re = handle_gap(prev, gap, d0, d1, towers, cfg, &warnings);
    REQUIRE(warnings.size() == 1);

    const auto cands = enumerate_initial_states(d0, d1, towers, cfg, prev.mean.z());
    double nearest = 1e18;
    for (const auto& c : cands)
        nearest = std::min(nearest, std::hypot(c.x - prev.mean.x, c.y - prev.mean.y));
    CHECK(std::hypot(re.x - prev.mean.x, re.y - prev.mean.y) == Approx(nearest));
}

TEST_CASE("gap handler rejects gaps within the limit") {
    const TrackerConfig cfg = make_config();
    const TowerLayout towers{test_tower()};
    Detection d0{"tag", 100.0, "T01", 0, 100};
    Detection d1{"tag", 106.0, "T01", 0, 100};
    REQUIRE_THROWS_AS(handle_gap(FilterState{}, 100.0, d0, d1, towers, cfg, nullptr),
                      std::invalid_argument);
}

TEST_CASE("fusing simultaneous estimates averages state and covariance") {
    FilterState a, b;
    a.t = b.t = 50.0;
    a.mean = {0, 0, 0, 0, 1};
    b.mean = {2, 4, -2, 6, 3};
    a.cov = Matrix5::Identity();
    b.cov = 3.0 * Matrix5::Identity();

    const FilterState same = fuse_simultaneous(a, a);
    CHECK((same.mean.to_vector() - a.mean.to_vector()).cwiseAbs().maxCoeff() == 0.0);

    const FilterState fused = fuse_simultaneous(a, b);
    CHECK(fused.mean.x == Approx(1.0));
    CHECK(fused.mean.vx == Approx(2.0));
    CHECK(fused.mean.xz == Approx(2.0));
    CHECK(fused.cov(0, 0) == Approx(2.0));

    b.t = 51.0;
    REQUIRE_THROWS_AS(fuse_simultaneous(a, b), std::invalid_argument);
}

TEST_CASE("tracking a synthetic flight recovers the trend") {
    const ValidationResult res = run_validation_trial(1);
    REQUIRE(res.used >= 100);
    CHECK(res.final_position_error < 5000.0);
    CHECK(res.rms_display < 40.0);
    for (const auto& p : res.track.points) REQUIRE(p.state.z() >= 0.0);
}

TEST_CASE("tracking rejects logs with fewer than two usable detections") {
    const TrackerConfig cfg = make_config();
    const TowerLayout towers{test_tower()};
    std::vector<Detection> low;
    for (int i = 0; i < 10; ++i) low.push_back({"tag", 6.0 * i, "T01", 0, 10});
    REQUIRE_THROWS_AS(track(low, towers, cfg), std::runtime_error);
}

TEST_CASE("tracking is deterministic") {
    const ScenarioConfig sc = validation_scenario(5);
    const auto truth = simulate_scenario(sc);
    const auto detections = synthesize_detections(truth, sc);
    const TrackerConfig cfg = validation_tracker_config();
    const Track a = track(detections, sc.towers, cfg);
    const Track b = track(detections, sc.towers, cfg);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        REQUIRE(a.points[i].state.x == b.points[i].state.x);
        REQUIRE(a.points[i].state.y == b.points[i].state.y);
        REQUIRE(a.points[i].predicted_display == b.points[i].predicted_display);
        REQUIRE((a.points[i].cov - b.points[i].cov).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("below-threshold detections have no influence at all") {
    const ScenarioConfig sc = validation_scenario(6);
    const auto truth = simulate_scenario(sc);
    auto detections = synthesize_detections(truth, sc);
    const TrackerConfig cfg = validation_tracker_config();
    const Track base = track(detections, sc.towers, cfg);

    std::vector<Detection> padded;
    for (const auto& d : detections) {
        padded.push_back(d);
        Detection noise = d;
        noise.t += 1.0;
        noise.display = static_cast<int>(cfg.z_threshold) - 1;
        padded.push_back(noise);
    }
    const Track same = track(padded, sc.towers, cfg);
    REQUIRE(same.points.size() == base.points.size());
    for (std::size_t i = 0; i < base.points.size(); ++i) {
        REQUIRE(same.points[i].state.x == base.points[i].state.x);
        REQUIRE(same.points[i].state.y == base.points[i].state.y);
    }
}

TEST_CASE("segments break exactly at gaps beyond the limit") {
    const ScenarioConfig sc = validation_scenario(7);
    const auto truth = simulate_scenario(sc);
    const auto detections = synthesize_detections(truth, sc);
    TrackerConfig cfg = validation_tracker_config();

    // excise a 400 s window to create one gap
    std::vector<Detection> gappy;
    for (const auto& d : detections) {
        const double rel = d.t - sc.start_time;
        if (rel > 400.0 && rel < 800.0) continue;
        gappy.push_back(d);
    }
    const Track tr = track(gappy, sc.towers, cfg);
    REQUIRE(tr.points.size() > 10);
    int segment = 0;
    for (std::size_t i = 1; i < tr.points.size(); ++i) {
        const double dt = tr.points[i].t - tr.points[i - 1].t;
        if (tr.points[i].segment != tr.points[i - 1].segment) {
            REQUIRE(dt > cfg.t_gap_max);
            ++segment;
        } else {
            REQUIRE(dt <= cfg.t_gap_max);
        }
    }
    CHECK(segment == 1);
    CHECK(tr.points.back().segment == 1);
}

TEST_CASE("simultaneous detections are fused into a single estimate") {
    const TrackerConfig cfg = make_config();
    const ScenarioConfig sc = validation_scenario(8);
    const auto truth = simulate_scenario(sc);
    auto detections = synthesize_detections(truth, sc);

    // duplicate every tenth detection on the adjacent beam at the same instant
    std::vector<Detection> doubled;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        doubled.push_back(detections[i]);
        if (i % 10 == 5) {
            Detection twin = detections[i];
            twin.beam_index = (twin.beam_index + 1) % 6;
            doubled.push_back(twin);
        }
    }
    const Track tr = track(doubled, sc.towers, validation_tracker_config());
    // fused instants produce one point per detection with identical states
    bool found = false;
    for (std::size_t i = 1; i < tr.points.size(); ++i) {
        if (tr.points[i].t == tr.points[i - 1].t) {
            REQUIRE(tr.points[i].state.x == tr.points[i - 1].state.x);
            REQUIRE(tr.points[i].state.y == tr.points[i - 1].state.y);
            found = true;
        }
    }
    CHECK(found);
}
