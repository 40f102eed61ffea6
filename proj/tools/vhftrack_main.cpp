// SPDX-License-Identifier: Apache-2.0
//
// vhftrack command line: synthetic log generation, receiver calibration,
// tracking, pattern export and the built-in validation scenario.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "vhftrack/vhftrack.hpp"

namespace {

using namespace vhftrack;

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir) {
    const ScenarioConfig sc = load_scenario(scenario_path);
    std::filesystem::create_directories(out_dir);
    const auto trajectory = simulate_scenario(sc);
    const std::vector<std::string> header = {
        "format_version: " + std::to_string(format_version),
        "seed: " + std::to_string(sc.seed),
        "generator: philox4x32-10",
        "scenario: " + scenario_path,
    };
    const auto traj_path = (std::filesystem::path(out_dir) / "trajectory.csv").string();
    const auto det_path = (std::filesystem::path(out_dir) / "detections.csv").string();
    save_trajectory(trajectory, traj_path, header);
    const std::size_t count = emit_detections(trajectory, sc, det_path);
    std::printf("wrote %zu trajectory samples to %s\n", trajectory.size(),
                traj_path.c_str());
    std::printf("wrote %zu detections to %s\n", count, det_path.c_str());
    return 0;
}

int cmd_calibrate(const std::string& input, double z_min, double z_max,
                  const std::string& towers_path, const std::string& tower_id,
                  int beam_index, double le, double wavelength,
                  const std::string& out_path) {
    const YagiPattern pattern(le, wavelength);
    std::vector<CalibrationSample> samples;
    if (towers_path.empty()) {
        samples = load_calibration(input);
    } else {
        const TowerLayout towers = load_towers(towers_path);
        const TowerSite& tower = find_tower(towers, tower_id);
        samples = load_calibration(input, &tower, beam_index, &pattern);
    }
    const CalibrationResult fit = calibrate(samples, z_min, z_max);
    save_receiver(fit.model, out_path, fit.residual_rms);
    std::printf("fitted b = %.6g, P0 = %.6g (residual rms %.3g) -> %s\n", fit.model.b,
                fit.model.p0, fit.residual_rms, out_path.c_str());
    return 0;
}

int cmd_track(const std::string& detections_path, const std::string& towers_path,
              const std::string& config_path, const std::string& out_track,
              const std::string& out_trace) {
    const TowerLayout towers = load_towers(towers_path);
    const TrackerConfig cfg = load_tracker_config(config_path);
    const auto detections = load_detections(detections_path, towers);
    const Track result = track(detections, towers, cfg);

    const std::vector<std::string> header = {
        "format_version: " + std::to_string(format_version),
        "detections: " + detections_path,
        "config: " + config_path,
    };
    save_track(result, out_track, header);
    if (!out_trace.empty()) save_signal_trace(result, out_trace, header);
    for (const auto& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("tracked %zu detections into %zu points (delta-Z %.2f) -> %s\n",
                detections.size(), result.points.size(), score_track(result),
                out_track.c_str());
    return 0;
}

int cmd_pattern(double le, double wavelength, double step_deg, const std::string& out) {
    const YagiPattern pattern(le, wavelength);
    save_pattern_csv(pattern, step_deg, out);
    std::printf("beamwidth %.2f deg, front-to-back %.2f dB -> %s\n",
                half_power_beamwidth_deg(pattern), front_to_back_db(pattern), out.c_str());
    return 0;
}

int cmd_validate(int seeds, const std::string& out_dir) {
    std::vector<double> final_errors, rms_values;
    for (int seed = 1; seed <= seeds; ++seed) {
        const ValidationResult res = run_validation_trial(seed);
        final_errors.push_back(res.final_position_error);
        rms_values.push_back(res.rms_display);
        std::printf("seed %3d: detections %4zu used %4zu  final error %8.1f m  "
                    "display rms %6.2f\n",
                    seed, res.detections, res.used, res.final_position_error,
                    res.rms_display);
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            const auto base = std::filesystem::path(out_dir);
            save_trajectory(res.truth,
                            (base / ("truth_" + std::to_string(seed) + ".csv")).string());
            save_track(res.track,
                       (base / ("track_" + std::to_string(seed) + ".csv")).string());
            save_signal_trace(res.track,
                              (base / ("trace_" + std::to_string(seed) + ".csv")).string());
        }
    }
    const double med_err = median(final_errors);
    const double med_rms = median(rms_values);
    const bool pass = med_err < 3000.0 && med_rms < 30.0;
    std::printf("median final error %.1f m (limit 3000), median display rms %.2f "
                "(limit 30): %s\n",
                med_err, med_rms, pass ? "PASS" : "FAIL");
    return pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D trajectory estimation for VHF radio tags from "
                 "signal-strength logs"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic detection log");
    std::string scenario_path, out_dir = ".";
    simulate->add_option("--scenario", scenario_path, "scenario JSON")->required();
    simulate->add_option("--out-dir", out_dir, "output directory");

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "fit receiver constants b and P0");
    std::string calib_input, calib_towers, calib_tower_id, calib_out = "receiver.json";
    int calib_beam = 0;
    double z_min = 0.0, z_max = 255.0;
    double cal_le = 4.6, cal_wavelength = speed_of_light / nanotag_carrier_hz;
    calibrate->add_option("--input", calib_input, "calibration CSV (xi,Z or timestamp,x,y,z,Z)")
        ->required();
    calibrate->add_option("--z-min", z_min, "display floor");
    calibrate->add_option("--z-max", z_max, "display ceiling");
    calibrate->add_option("--towers", calib_towers, "tower JSON (geometry input form)");
    calibrate->add_option("--tower", calib_tower_id, "tower id for geometry input");
    calibrate->add_option("--beam", calib_beam, "beam index for geometry input");
    calibrate->add_option("--effective-length", cal_le, "pattern effective length [m]");
    calibrate->add_option("--wavelength", cal_wavelength, "carrier wavelength [m]");
    calibrate->add_option("--out", calib_out, "output receiver JSON");

    // track
    auto* track_cmd = app.add_subcommand("track", "estimate a trajectory from a log");
    std::string det_path, towers_path, config_path;
    std::string out_track = "track.csv", out_trace = "trace.csv";
    track_cmd->add_option("--detections", det_path, "detection CSV")->required();
    track_cmd->add_option("--towers", towers_path, "tower JSON")->required();
    track_cmd->add_option("--config", config_path, "tracker JSON")->required();
    track_cmd->add_option("--out-track", out_track, "output track CSV");
    track_cmd->add_option("--out-trace", out_trace, "output signal trace CSV");

    // pattern
    auto* pattern = app.add_subcommand("pattern", "export the Yagi pattern as CSV");
    double pat_le = 4.6, pat_wavelength = speed_of_light / nanotag_carrier_hz;
    double step_deg = 1.0;
    std::string pattern_out = "pattern.csv";
    pattern->add_option("--effective-length", pat_le, "effective length [m]");
    pattern->add_option("--wavelength", pat_wavelength, "wavelength [m]");
    pattern->add_option("--step-deg", step_deg, "grid step [deg]");
    pattern->add_option("--out", pattern_out, "output CSV");

    // validate
    auto* validate = app.add_subcommand("validate", "run the built-in validation scenario");
    int seeds = 20;
    std::string validate_out;
    validate->add_option("--seeds", seeds, "number of seeded trials")
        ->check(CLI::PositiveNumber);
    validate->add_option("--out-dir", validate_out, "write per-seed CSVs here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(scenario_path, out_dir);
        if (calibrate->parsed())
            return cmd_calibrate(calib_input, z_min, z_max, calib_towers, calib_tower_id,
                                 calib_beam, cal_le, cal_wavelength, calib_out);
        if (track_cmd->parsed())
            return cmd_track(det_path, towers_path, config_path, out_track, out_trace);
        if (pattern->parsed()) return cmd_pattern(pat_le, pat_wavelength, step_deg, pattern_out);
        if (validate->parsed()) return cmd_validate(seeds, validate_out);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
