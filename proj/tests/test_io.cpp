// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "support/test_helpers.hpp"
#include "vhftrack/io.hpp"
#include "vhftrack/validation.hpp"

using namespace vhftrack;
using vhftrack::testing::study_receiver;
using vhftrack::testing::test_tower;
using Catch::Approx;

namespace {

std::filesystem::path tmp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "vhftrack_io_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string path_for(const std::string& name) { return (tmp_dir() / name).string(); }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("timestamp formatting round-trips at millisecond precision") {
    for (double t : {0.0, 1.0, 1234567890.123, 1700000000.999, 86399.5}) {
        const std::string s = format_timestamp(t);
        CHECK(parse_timestamp(s) == Approx(t).margin(5e-4));
    }
    CHECK(format_timestamp(0.0) == "1970-01-01T00:00:00.000Z");
    CHECK(parse_timestamp("2020-06-01T12:30:15.250Z") ==
          Approx(1591014615.25).margin(1e-6));
    CHECK(parse_timestamp("2020-06-01T12:30:15Z") == Approx(1591014615.0));
    REQUIRE_THROWS_AS(parse_timestamp("2020-06-01 12:30:15"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_timestamp("not a time"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_timestamp("2020-06-01T12:30:15.25"), std::invalid_argument);
}

TEST_CASE("detection log round trip") {
    const TowerLayout towers{test_tower()};
    std::vector<Detection> detections;
    for (int i = 0; i < 25; ++i)
        detections.push_back({"tag-7", 1000.0 + 6.5 * i, "T01", i % 6, (i * 37) % 256});
    const std::string path = path_for("detections.csv");
    save_detections(detections, path, {"seed: 9"});
    const auto loaded = load_detections(path, towers);
    REQUIRE(loaded.size() == detections.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].tag_id == detections[i].tag_id);
        CHECK(loaded[i].t == Approx(detections[i].t).margin(5e-4));
        CHECK(loaded[i].tower_id == detections[i].tower_id);
        CHECK(loaded[i].beam_index == detections[i].beam_index);
        CHECK(loaded[i].display == detections[i].display);
    }
}

TEST_CASE("empty detection file loads as an empty list") {
    const std::string path = path_for("empty.csv");
    detail::write_atomic(path, "");
    CHECK(load_detections(path, TowerLayout{test_tower()}).empty());
}

TEST_CASE("detections are sorted on load") {
    const std::string path = path_for("unsorted.csv");
    std::ostringstream body;
    body << detection_csv_header << "\n";
    body << "tag,1970-01-01T00:10:00.000Z,T01,0,100\n";
    body << "tag,1970-01-01T00:00:30.000Z,T01,1,90\n";
    body << "tag,1970-01-01T00:05:00.000Z,T01,2,80\n";
    detail::write_atomic(path, body.str());
    const auto loaded = load_detections(path, TowerLayout{test_tower()});
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].beam_index == 1);
    CHECK(loaded[1].beam_index == 2);
    CHECK(loaded[2].beam_index == 0);
}

TEST_CASE("detection validation failures carry line numbers") {
    const TowerLayout towers{test_tower()};
    const std::string path = path_for("bad.csv");

    detail::write_atomic(path, std::string(detection_csv_header) +
                                   "\ntag,1970-01-01T00:00:00.000Z,NOPE,0,50\n");
    REQUIRE_THROWS_AS(load_detections(path, towers), std::invalid_argument);

    detail::write_atomic(path, std::string(detection_csv_header) +
                                   "\ntag,1970-01-01T00:00:00.000Z,T01,0,300\n");
    REQUIRE_THROWS_WITH(load_detections(path, towers),
                        Catch::Matchers::ContainsSubstring("line 2"));

    detail::write_atomic(path, std::string(detection_csv_header) +
                                   "\ntag,1970-01-01T00:00:00.000Z,T01,9,50\n");
    REQUIRE_THROWS_AS(load_detections(path, towers), std::invalid_argument);

    detail::write_atomic(path, std::string(detection_csv_header) + "\ntag,oops\n");
    REQUIRE_THROWS_WITH(load_detections(path, towers),
                        Catch::Matchers::ContainsSubstring("line 2"));

    detail::write_atomic(path, "tag_id,when,tower_id,beam_index,Z\n");
    REQUIRE_THROWS_AS(load_detections(path, towers), std::invalid_argument);
}

TEST_CASE("a bird parked in the dipole null logs only noise-floor readings") {
    ScenarioConfig sc;
    sc.seed = 31;
    sc.movement = vhftrack::testing::study_params();
    sc.movement.sigma_xx = sc.movement.sigma_yy = sc.movement.sigma_zz = 0.0;
    sc.movement.sigma_xy = sc.movement.sigma_yx = 0.0;
    sc.movement.sigma_zx = sc.movement.sigma_zy = 0.0;
    sc.receiver = study_receiver();

    TowerSite tower = test_tower(1);  // single beam pointing north
    sc.towers = {tower};
    const double az = tower.beam_azimuth(0) + pi / 2.0;  // exactly abeam: g = 0
    sc.initial_state = {tower.x + 2000.0 * std::cos(az), 0.0,
                        tower.y + 2000.0 * std::sin(az), 0.0, std::sqrt(30.0)};
    sc.duration = 1200.0;
    sc.schedule.mode = DwellSchedule::Mode::nearest_beam;

    const auto truth = simulate_scenario(sc);
    const auto detections = synthesize_detections(truth, sc);
    REQUIRE(detections.size() == truth.size());
    int below_anchor = 0;
    for (const auto& d : detections) {
        REQUIRE(d.display <= 200);  // never resembles a real signal
        if (d.display <= 75) ++below_anchor;
    }
    CHECK(below_anchor > static_cast<int>(0.8 * detections.size()));
}

TEST_CASE("round-robin sampling keeps per-beam readings at least 32.5 s apart") {
    ScenarioConfig sc = validation_scenario(12);
    sc.schedule.mode = DwellSchedule::Mode::round_robin;
    sc.schedule.pulse_period = 5.3;
    sc.schedule.dwell = 6.5;
    sc.duration = 2400.0;

    const auto truth = simulate_scenario(sc);
    const auto detections = synthesize_detections(truth, sc);
    REQUIRE(detections.size() > 30);

    std::map<std::pair<std::string, int>, double> last;
    for (const auto& d : detections) {
        const auto key = std::make_pair(d.tower_id, d.beam_index);
        const auto it = last.find(key);
        if (it != last.end()) REQUIRE(d.t - it->second >= 32.5 - 1e-6);
        last[key] = d.t;
    }
}

TEST_CASE("synthetic logs are bit-identical for identical scenario and seed") {
    const ScenarioConfig sc = validation_scenario(21);
    const auto truth = simulate_scenario(sc);
    const std::string p1 = path_for("emit1.csv");
    const std::string p2 = path_for("emit2.csv");
    REQUIRE(emit_detections(truth, sc, p1) > 0);
    REQUIRE(emit_detections(truth, sc, p2) > 0);
    CHECK(slurp(p1) == slurp(p2));

    ScenarioConfig other = sc;
    other.seed = 22;
    const std::string p3 = path_for("emit3.csv");
    emit_detections(simulate_scenario(other), other, p3);
    CHECK(slurp(p1) != slurp(p3));
}

TEST_CASE("trajectory CSV round trip") {
    const ScenarioConfig sc = validation_scenario(2);
    auto truth = simulate_scenario(sc);
    truth.resize(20);
    const std::string path = path_for("trajectory.csv");
    save_trajectory(truth, path);
    const auto loaded = load_trajectory(path);
    REQUIRE(loaded.size() == truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        CHECK(loaded[i].t == Approx(truth[i].t).margin(5e-4));
        CHECK(loaded[i].state.x == Approx(truth[i].state.x).margin(5e-4));
        CHECK(loaded[i].state.y == Approx(truth[i].state.y).margin(5e-4));
        CHECK(loaded[i].state.xz == Approx(truth[i].state.xz).margin(5e-7));
    }
}

TEST_CASE("track CSV round trip and empty-track emission") {
    const std::string path = path_for("track.csv");
    save_track(Track{}, path);
    const std::string content = slurp(path);
    CHECK(content == std::string(track_csv_header) + "\n");
    CHECK(load_track(path).points.empty());

    const ValidationResult res = run_validation_trial(9);
    save_track(res.track, path, {"seed: 9"});
    const Track loaded = load_track(path);
    REQUIRE(loaded.points.size() == res.track.points.size());
    for (std::size_t i = 0; i < loaded.points.size(); ++i) {
        const auto& a = loaded.points[i];
        const auto& b = res.track.points[i];
        CHECK(a.t == Approx(b.t).margin(5e-4));
        CHECK(a.segment == b.segment);
        CHECK(a.tower_id == b.tower_id);
        CHECK(a.beam_index == b.beam_index);
        CHECK(a.state.x == Approx(b.state.x).margin(5e-4));
        CHECK(a.state.y == Approx(b.state.y).margin(5e-4));
        CHECK(a.state.vx == Approx(b.state.vx).margin(5e-7));
        CHECK(a.state.xz == Approx(b.state.xz).margin(5e-7));
        CHECK(a.observed_display == b.observed_display);
        CHECK(a.predicted_display == Approx(b.predicted_display).margin(5e-4));
        for (int k = 0; k < 5; ++k)
            CHECK(std::sqrt(a.cov(k, k)) ==
                  Approx(std::sqrt(std::max(b.cov(k, k), 0.0))).epsilon(1e-5));
    }
}

TEST_CASE("signal trace emission") {
    const ValidationResult res = run_validation_trial(10);
    const std::string path = path_for("trace.csv");
    save_signal_trace(res.track, path);
    const std::string content = slurp(path);
    CHECK(content.find(trace_csv_header) != std::string::npos);
    // one line per track point plus header
    const auto lines = std::count(content.begin(), content.end(), '\n');
    CHECK(lines == static_cast<long>(res.track.points.size()) + 1);
}

TEST_CASE("pattern CSV contains the boresight anchor") {
    const std::string path = path_for("pattern.csv");
    save_pattern_csv(YagiPattern::plc1669(), 1.0, path);
    const std::string content = slurp(path);
    CHECK(content.find("0.000,0.6768,") != std::string::npos);
    REQUIRE_THROWS_AS(save_pattern_csv(YagiPattern::plc1669(), 0.0, path),
                      std::invalid_argument);
}

TEST_CASE("tower configuration round trip") {
    TowerLayout towers;
    towers.push_back(test_tower());
    TowerSite second = test_tower(4);
    second.id = "T02";
    second.x += 25000.0;
    towers.push_back(second);

    const std::string path = path_for("towers.json");
    save_towers(towers, path);
    const TowerLayout loaded = load_towers(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].id == "T01");
    CHECK(loaded[1].id == "T02");
    CHECK(loaded[1].x == Approx(second.x));
    REQUIRE(loaded[0].beam_azimuths.size() == 6);
    for (std::size_t b = 0; b < 6; ++b)
        CHECK(wrap_angle(loaded[0].beam_azimuths[b] - towers[0].beam_azimuths[b]) ==
              Approx(0.0).margin(1e-12));
}

TEST_CASE("configuration files must carry the format version") {
    const std::string path = path_for("noversion.json");
    detail::write_atomic(path, R"({"towers": []})");
    REQUIRE_THROWS_AS(load_towers(path), std::invalid_argument);
    detail::write_atomic(path, R"({"format_version": 99, "towers": []})");
    REQUIRE_THROWS_AS(load_towers(path), std::invalid_argument);
}

TEST_CASE("scenario configuration loads and validates") {
    const std::string path = path_for("scenario.json");
    nlohmann::json j{
        {"format_version", 1},
        {"seed", 17},
        {"tag_id", "tag-x"},
        {"movement",
         {{"beta_x", 2.5e-4},
          {"beta_y", 2.25e-4},
          {"beta_z", 1e-5},
          {"sigma_xx", 0.25},
          {"sigma_yy", 0.25},
          {"sigma_zz", 0.02},
          {"sigma_xy", 0.0625},
          {"sigma_yx", -0.0625},
          {"sigma_zx", 0.004},
          {"sigma_zy", 0.008}}},
        {"receiver", {{"Z_min", 0.0}, {"Z_max", 255.0}, {"b", 0.3013}, {"P0", 4.8916e-11}}},
        {"pattern", {{"effective_length_m", 4.6}}},
        {"towers", nlohmann::json::array(
                       {{{"id", "T01"},
                         {"x", 417768.0},
                         {"y", 4606808.0},
                         {"height", 14.72},
                         {"beam_bearings_deg", {0, 60, 120, 180, 240, 300}}}})},
        {"sampling",
         {{"mode", "nearest_beam"}, {"cadence_s", 6.0}, {"pulse_period_s", 5.3}}},
        {"initial_state",
         {{"x", 417968.0}, {"y", 4607008.0}, {"vx", 2.83}, {"vy", 2.83}, {"z", 14.72}}},
        {"start_time", "2021-05-01T00:00:00.000Z"},
        {"duration_s", 1200.0}};
    detail::write_atomic(path, j.dump(2));
    const ScenarioConfig sc = load_scenario(path);
    CHECK(sc.seed == 17);
    CHECK(sc.movement.beta_y == Approx(2.25e-4));
    CHECK(sc.towers.size() == 1);
    CHECK(sc.initial_state.z() == Approx(14.72));
    CHECK(sc.start_time == Approx(parse_timestamp("2021-05-01T00:00:00.000Z")));

    j["sampling"]["mode"] = "sideways";
    detail::write_atomic(path, j.dump(2));
    REQUIRE_THROWS_AS(load_scenario(path), std::invalid_argument);
}

TEST_CASE("tracker configuration loads") {
    const std::string path = path_for("tracker.json");
    nlohmann::json j{
        {"format_version", 1},
        {"v_max", 20.0},
        {"z0", 14.72},
        {"Z_threshold", 22.0},
        {"T_gap_max", 300.0},
        {"initial_cov_diag", {10, 10, 10, 10, 100}},
        {"movement",
         {{"beta_x", 2.5e-4},
          {"beta_y", 2.25e-4},
          {"beta_z", 1e-5},
          {"sigma_xx", 0.25},
          {"sigma_yy", 0.25},
          {"sigma_zz", 0.02}}},
        {"receiver", {{"Z_min", 0.0}, {"Z_max", 255.0}, {"b", 0.3013}, {"P0", 4.8916e-11}}}};
    detail::write_atomic(path, j.dump(2));
    const TrackerConfig cfg = load_tracker_config(path);
    CHECK(cfg.v_max == Approx(20.0));
    CHECK(cfg.z_threshold == Approx(22.0));
    CHECK(cfg.initial_cov_diag[4] == Approx(100.0));
}

TEST_CASE("calibration CSV in both accepted layouts") {
    const std::string path = path_for("calib.csv");
    detail::write_atomic(path, "xi,Z\n1e-5,120\n2e-5,150\n4e-5,180\n");
    const auto direct = load_calibration(path);
    REQUIRE(direct.size() == 3);
    CHECK(direct[1].xi == Approx(2e-5));
    CHECK(direct[1].display == Approx(150.0));

    const TowerSite tower = test_tower();
    const YagiPattern pat = YagiPattern::plc1669();
    std::ostringstream geo;
    geo << "timestamp,x,y,z,Z\n";
    geo << "1970-01-01T00:00:00.000Z," << tower.x + 2000.0 << "," << tower.y << ",30,140\n";
    geo << "1970-01-01T00:01:00.000Z," << tower.x + 3000.0 << "," << tower.y << ",30,120\n";
    detail::write_atomic(path, geo.str());
    const auto geometric = load_calibration(path, &tower, 1, &pat);
    REQUIRE(geometric.size() == 2);
    StateVector probe{tower.x + 2000.0, 0, tower.y, 0, std::sqrt(30.0)};
    CHECK(geometric[0].xi == Approx(xi(probe, tower, 1, pat)));

    REQUIRE_THROWS_AS(load_calibration(path), std::invalid_argument);

    detail::write_atomic(path, "a,b,c\n1,2,3\n");
    REQUIRE_THROWS_AS(load_calibration(path), std::invalid_argument);
}
