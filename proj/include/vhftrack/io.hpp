// SPDX-License-Identifier: Apache-2.0
//
// vhftrack -- file formats, configuration, detection-log ingestion and
// synthetic-log emission.
//
// Conventions shared by every format:
//   - coordinates are projected planar meters (e.g. UTM), used verbatim; no
//     geodetic transforms happen anywhere in the library
//   - angles in files are degrees (bearings in degrees true), radians inside
//   - timestamps in files are ISO-8601 UTC with millisecond precision
//   - CSV files may carry leading '#' comment lines echoing the effective
//     configuration; writers are atomic (write temp, then rename)
//
// Exit-code policy for the CLI sitting on top: parse/validation problems
// raise std::invalid_argument (exit 2), numerical failures raise
// std::runtime_error (exit 3).

#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vhftrack/angles.hpp"
#include "vhftrack/antenna.hpp"
#include "vhftrack/detection.hpp"
#include "vhftrack/movement.hpp"
#include "vhftrack/observation.hpp"
#include "vhftrack/rng.hpp"
#include "vhftrack/tracker.hpp"

namespace vhftrack {

inline constexpr int format_version = 1;

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

/// Format UTC seconds as "YYYY-MM-DDTHH:MM:SS.mmmZ".
inline std::string format_timestamp(double t) {
    double whole = std::floor(t);
    long ms = std::lround((t - whole) * 1000.0);
    if (ms == 1000) {
        ms = 0;
        whole += 1.0;
    }
    const std::time_t secs = static_cast<std::time_t>(whole);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03ldZ",
                  tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min,
                  tm.tm_sec, ms);
    return buf;
}

/// Parse an ISO-8601 UTC timestamp (fractional seconds optional) to seconds.
inline double parse_timestamp(const std::string& text) {
    std::tm tm{};
    double frac = 0.0;
    int year, mon, day, hour, min, sec;
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d%n", &year, &mon, &day, &hour, &min,
                    &sec, &consumed) != 6)
        throw std::invalid_argument("bad timestamp '" + text + "'");
    std::size_t pos = static_cast<std::size_t>(consumed);
    if (pos < text.size() && text[pos] == '.') {
        std::size_t end = pos + 1;
        while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
        if (end == pos + 1) throw std::invalid_argument("bad timestamp '" + text + "'");
        frac = std::stod(text.substr(pos, end - pos));
        pos = end;
    }
    if (pos >= text.size() || text[pos] != 'Z')
        throw std::invalid_argument("timestamp must be UTC ('Z'): '" + text + "'");
    tm.tm_year = year - 1900;
    tm.tm_mon = mon - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = min;
    tm.tm_sec = sec;
    const std::time_t secs = timegm(&tm);
    if (secs == static_cast<std::time_t>(-1))
        throw std::invalid_argument("timestamp out of range: '" + text + "'");
    return static_cast<double>(secs) + frac;
}

// ---------------------------------------------------------------------------
// Low-level file helpers
// ---------------------------------------------------------------------------

namespace detail {

inline void write_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
        out << content;
        if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "'");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct CsvReader {
    std::vector<std::string> comments;
    std::vector<std::pair<int, std::vector<std::string>>> rows;  // (line number, fields)
    std::vector<std::string> header;

    explicit CsvReader(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("cannot open '" + path + "'");
        std::string line;
        int line_no = 0;
        bool have_header = false;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            if (line[0] == '#') {
                comments.push_back(line);
                continue;
            }
            if (!have_header) {
                header = split_csv_line(line);
                have_header = true;
                continue;
            }
            rows.emplace_back(line_no, split_csv_line(line));
        }
    }

    void require_header(const std::string& expected, const std::string& path) const {
        std::string joined;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) joined += ',';
            joined += header[i];
        }
        if (joined != expected)
            throw std::invalid_argument("'" + path + "': expected header '" + expected +
                                        "', got '" + joined + "'");
    }
};

inline double parse_double(const std::string& s, const std::string& what, int line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("line " + std::to_string(line) + ": bad " + what +
                                    " '" + s + "'");
    }
}

inline long parse_int(const std::string& s, const std::string& what, int line) {
    try {
        std::size_t used = 0;
        const long v = std::stol(s, &used);
        if (used != s.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("line " + std::to_string(line) + ": bad " + what +
                                    " '" + s + "'");
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON configuration
// ---------------------------------------------------------------------------

namespace detail {

inline void check_format_version(const nlohmann::json& j, const std::string& what) {
    if (!j.contains("format_version") || j.at("format_version").get<int>() != format_version)
        throw std::invalid_argument(what + ": missing or unsupported format_version (expect " +
                                    std::to_string(format_version) + ")");
}

inline MovementParams movement_from_json(const nlohmann::json& j) {
    MovementParams p;
    p.beta_x = j.at("beta_x").get<double>();
    p.beta_y = j.at("beta_y").get<double>();
    p.beta_z = j.at("beta_z").get<double>();
    p.sigma_xx = j.at("sigma_xx").get<double>();
    p.sigma_yy = j.at("sigma_yy").get<double>();
    p.sigma_zz = j.at("sigma_zz").get<double>();
    p.sigma_xy = j.value("sigma_xy", 0.0);
    p.sigma_yx = j.value("sigma_yx", 0.0);
    p.sigma_zx = j.value("sigma_zx", 0.0);
    p.sigma_zy = j.value("sigma_zy", 0.0);
    p.validate();
    return p;
}

inline nlohmann::json movement_to_json(const MovementParams& p) {
    return {{"beta_x", p.beta_x},     {"beta_y", p.beta_y},     {"beta_z", p.beta_z},
            {"sigma_xx", p.sigma_xx}, {"sigma_yy", p.sigma_yy}, {"sigma_zz", p.sigma_zz},
            {"sigma_xy", p.sigma_xy}, {"sigma_yx", p.sigma_yx}, {"sigma_zx", p.sigma_zx},
            {"sigma_zy", p.sigma_zy}};
}

inline ReceiverModel receiver_from_json(const nlohmann::json& j) {
    ReceiverModel m;
    m.z_min = j.value("Z_min", 0.0);
    m.z_max = j.value("Z_max", 255.0);
    m.b = j.at("b").get<double>();
    m.p0 = j.at("P0").get<double>();
    m.validate();
    return m;
}

inline nlohmann::json receiver_to_json(const ReceiverModel& m) {
    return {{"Z_min", m.z_min}, {"Z_max", m.z_max}, {"b", m.b}, {"P0", m.p0}};
}

inline YagiPattern pattern_from_json(const nlohmann::json& j) {
    const double le = j.value("effective_length_m", 4.6);
    const double lambda0 =
        j.value("wavelength_m", speed_of_light / nanotag_carrier_hz);
    return YagiPattern(le, lambda0);
}

inline nlohmann::json pattern_to_json(const YagiPattern& p) {
    return {{"effective_length_m", p.effective_length}, {"wavelength_m", p.wavelength}};
}

inline TowerSite tower_from_json(const nlohmann::json& j) {
    TowerSite t;
    t.id = j.at("id").get<std::string>();
    t.x = j.at("x").get<double>();
    t.y = j.at("y").get<double>();
    t.height = j.at("height").get<double>();
    for (const auto& b : j.at("beam_bearings_deg"))
        t.beam_azimuths.push_back(bearing_to_azimuth(b.get<double>()));
    t.validate();
    return t;
}

inline nlohmann::json tower_to_json(const TowerSite& t) {
    nlohmann::json bearings = nlohmann::json::array();
    for (double az : t.beam_azimuths) bearings.push_back(azimuth_to_bearing(az));
    return {{"id", t.id}, {"x", t.x}, {"y", t.y}, {"height", t.height},
            {"beam_bearings_deg", bearings}};
}

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("'" + path + "': " + e.what());
    }
    return j;
}

}  // namespace detail

inline TowerLayout load_towers(const std::string& path) {
    const auto j = detail::load_json(path);
    detail::check_format_version(j, path);
    TowerLayout towers;
    try {
        for (const auto& t : j.at("towers")) towers.push_back(detail::tower_from_json(t));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("'" + path + "': " + e.what());
    }
    if (towers.empty()) throw std::invalid_argument("'" + path + "': no towers");
    return towers;
}

inline void save_towers(const TowerLayout& towers, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : towers) arr.push_back(detail::tower_to_json(t));
    nlohmann::json j{{"format_version", format_version}, {"towers", arr}};
    detail::write_atomic(path, j.dump(2) + "\n");
}

inline ReceiverModel load_receiver(const std::string& path) {
    const auto j = detail::load_json(path);
    detail::check_format_version(j, path);
    try {
        return detail::receiver_from_json(j.at("receiver"));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("'" + path + "': " + e.what());
    }
}

inline void save_receiver(const ReceiverModel& m, const std::string& path,
                          std::optional<double> residual_rms = std::nullopt) {
    nlohmann::json j{{"format_version", format_version},
                     {"receiver", detail::receiver_to_json(m)}};
    if (residual_rms) j["fit_residual_rms"] = *residual_rms;
    detail::write_atomic(path, j.dump(2) + "\n");
}

inline TrackerConfig load_tracker_config(const std::string& path) {
    const auto j = detail::load_json(path);
    detail::check_format_version(j, path);
    TrackerConfig cfg;
    try {
        cfg.v_max = j.at("v_max").get<double>();
        cfg.z0 = j.at("z0").get<double>();
        cfg.z_threshold = j.value("Z_threshold", cfg.z_threshold);
        cfg.t_gap_max = j.value("T_gap_max", cfg.t_gap_max);
        if (j.contains("initial_cov_diag")) {
            const auto& d = j.at("initial_cov_diag");
            if (d.size() != 5)
                throw std::invalid_argument("initial_cov_diag must have 5 entries");
            for (int i = 0; i < 5; ++i) cfg.initial_cov_diag[i] = d[i].get<double>();
        }
        cfg.r_var_scale = j.value("r_var_scale", cfg.r_var_scale);
        cfg.psi_grid_step_deg = j.value("psi_grid_step_deg", cfg.psi_grid_step_deg);
        cfg.r_min = j.value("r_min", cfg.r_min);
        cfg.r_max = j.value("r_max", cfg.r_max);
        cfg.r_tol = j.value("r_tol", cfg.r_tol);
        cfg.candidate_cap = j.value("candidate_cap", cfg.candidate_cap);
        cfg.prescreen_detections = j.value("prescreen_detections", cfg.prescreen_detections);
        cfg.movement = detail::movement_from_json(j.at("movement"));
        cfg.receiver = detail::receiver_from_json(j.at("receiver"));
        if (j.contains("pattern")) cfg.pattern = detail::pattern_from_json(j.at("pattern"));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("'" + path + "': " + e.what());
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Scenario (synthetic log generation)
// ---------------------------------------------------------------------------

/// Receiver sampling schedule for synthetic logs.
///
/// round_robin reproduces the real receiver: each tower listens to one beam
/// at a time for `dwell` seconds, cycling through its beams, and logs at most
/// one reading (the first tag pulse) per dwell window. nearest_beam logs the
/// strongest beam of every tower at each trajectory sample, which matches
/// validation experiments run at a fixed cadence.
struct DwellSchedule {
    enum class Mode { nearest_beam, round_robin };
    Mode mode = Mode::nearest_beam;
    double pulse_period = 5.3;  ///< tag burst interval [s]
    double dwell = 6.5;         ///< per-beam listening window [s]
    double cadence = 6.0;       ///< sample interval in nearest_beam mode [s]
};

struct ScenarioConfig {
    std::uint64_t seed = 0;
    std::string tag_id = "tag-000";
    MovementParams movement;
    ReceiverModel receiver;
    YagiPattern pattern = YagiPattern::plc1669();
    TowerLayout towers;
    DwellSchedule schedule;
    StateVector initial_state;
    double start_time = 0.0;
    double duration = 0.0;

    void validate() const {
        movement.validate();
        receiver.validate();
        if (towers.empty()) throw std::invalid_argument("scenario: no towers");
        for (const auto& t : towers) t.validate();
        if (!(duration > 0.0)) throw std::invalid_argument("scenario: duration must be positive");
        if (!(schedule.pulse_period > 0.0) || !(schedule.dwell > 0.0) ||
            !(schedule.cadence > 0.0))
            throw std::invalid_argument("scenario: schedule intervals must be positive");
    }
};

struct TrajectorySample {
    double t = 0.0;
    StateVector state;
};

/// Trajectory sampling instants implied by the schedule: the fixed cadence in
/// nearest_beam mode, the tag pulse train in round_robin mode.
inline std::vector<double> schedule_times(const ScenarioConfig& sc) {
    const double step = sc.schedule.mode == DwellSchedule::Mode::nearest_beam
                            ? sc.schedule.cadence
                            : sc.schedule.pulse_period;
    std::vector<double> times;
    for (double t = 0.0; t <= sc.duration + 1e-9; t += step)
        times.push_back(sc.start_time + t);
    return times;
}

/// Simulate the movement model over the scenario schedule (noise stream 0 of
/// the scenario seed).
inline std::vector<TrajectorySample> simulate_scenario(const ScenarioConfig& sc) {
    sc.validate();
    const auto times = schedule_times(sc);
    const auto states = simulate(sc.movement, sc.initial_state, times, sc.seed);
    std::vector<TrajectorySample> out(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) out[i] = {times[i], states[i]};
    return out;
}

/// Synthesize the detection log a receiver network would record for a known
/// trajectory (measurement noise stream 1 of the scenario seed). Display
/// values go through the instantaneous-power draw, the soft-limiter map and
/// integer quantization clamped to [Z_min, 255].
inline std::vector<Detection> synthesize_detections(
    const std::vector<TrajectorySample>& trajectory, const ScenarioConfig& sc) {
    sc.validate();
    Philox4x32 rng(sc.seed, 1);
    std::vector<Detection> out;

    auto emit = [&](const TrajectorySample& s, const TowerSite& tower, int beam) {
        double xi_true;
        try {
            xi_true = xi(s.state, tower, beam, sc.pattern);
        } catch (const degenerate_geometry_error&) {
            rng.next_normal();  // keep the draw sequence aligned
            return;
        }
        const double power = sample_power(xi_true, sc.receiver.p0, rng);
        const double display = display_from_power(sc.receiver, power);
        const long quantized =
            std::lround(std::min(std::max(display, sc.receiver.z_min), 255.0));
        out.push_back({sc.tag_id, s.t, tower.id, beam, static_cast<int>(quantized)});
    };

    if (sc.schedule.mode == DwellSchedule::Mode::nearest_beam) {
        for (const auto& s : trajectory) {
            for (const auto& tower : sc.towers) {
                int best_beam = -1;
                double best_gain = -1.0;
                for (std::size_t b = 0; b < tower.beam_azimuths.size(); ++b) {
                    try {
                        const auto geo = beam_geometry(s.state, tower, static_cast<int>(b));
                        const double gain = power_gain(sc.pattern, geo.off_boresight);
                        if (gain > best_gain) {
                            best_gain = gain;
                            best_beam = static_cast<int>(b);
                        }
                    } catch (const degenerate_geometry_error&) {
                        break;
                    }
                }
                if (best_beam >= 0) emit(s, tower, best_beam);
            }
        }
    } else {
        // one reading per dwell window: first pulse sample inside the window,
        // beam index cycling with the window number
        std::map<std::string, long> last_window;
        for (const auto& s : trajectory) {
            for (const auto& tower : sc.towers) {
                const long window =
                    static_cast<long>(std::floor((s.t - sc.start_time) / sc.schedule.dwell));
                auto [it, fresh] = last_window.try_emplace(tower.id, -1);
                if (!fresh && it->second == window) continue;
                it->second = window;
                const int beam =
                    static_cast<int>(window % static_cast<long>(tower.beam_azimuths.size()));
                emit(s, tower, beam);
            }
        }
        std::stable_sort(out.begin(), out.end(),
                         [](const Detection& a, const Detection& b) { return a.t < b.t; });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Detection CSV
// ---------------------------------------------------------------------------

inline constexpr const char* detection_csv_header = "tag_id,timestamp,tower_id,beam_index,Z";

/// Load, validate and time-sort a detection log. Unknown towers or beams and
/// out-of-range display values are hard errors; malformed rows are reported
/// with their line numbers.
inline std::vector<Detection> load_detections(const std::string& path,
                                              const TowerLayout& towers) {
    detail::CsvReader csv(path);
    if (csv.header.empty() && csv.rows.empty()) return {};  // empty file
    csv.require_header(detection_csv_header, path);
    std::vector<Detection> out;
    out.reserve(csv.rows.size());
    for (const auto& [line, fields] : csv.rows) {
        if (fields.size() != 5)
            throw std::invalid_argument("'" + path + "' line " + std::to_string(line) +
                                        ": expected 5 fields, got " +
                                        std::to_string(fields.size()));
        Detection d;
        d.tag_id = fields[0];
        try {
            d.t = parse_timestamp(fields[1]);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("'" + path + "' line " + std::to_string(line) + ": " +
                                        e.what());
        }
        d.tower_id = fields[2];
        d.beam_index = static_cast<int>(detail::parse_int(fields[3], "beam_index", line));
        const long z = detail::parse_int(fields[4], "Z", line);
        if (z < 0 || z > 255)
            throw std::invalid_argument("'" + path + "' line " + std::to_string(line) +
                                        ": Z out of range [0,255]");
        d.display = static_cast<int>(z);
        const TowerSite& tower = find_tower(towers, d.tower_id);
        tower.beam_azimuth(d.beam_index);
        out.push_back(std::move(d));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Detection& a, const Detection& b) { return a.t < b.t; });
    return out;
}

inline void save_detections(const std::vector<Detection>& detections,
                            const std::string& path,
                            const std::vector<std::string>& comments = {}) {
    std::ostringstream out;
    for (const auto& c : comments) out << "# " << c << "\n";
    out << detection_csv_header << "\n";
    for (const auto& d : detections)
        out << d.tag_id << ',' << format_timestamp(d.t) << ',' << d.tower_id << ','
            << d.beam_index << ',' << d.display << "\n";
    detail::write_atomic(path, out.str());
}

/// Simulate + synthesize + write in one step; returns the detection count.
inline std::size_t emit_detections(const std::vector<TrajectorySample>& trajectory,
                                   const ScenarioConfig& sc, const std::string& path) {
    const auto detections = synthesize_detections(trajectory, sc);
    save_detections(detections, path,
                    {"format_version: " + std::to_string(format_version),
                     "seed: " + std::to_string(sc.seed), "generator: philox4x32-10"});
    return detections.size();
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

inline constexpr const char* trajectory_csv_header = "timestamp,x,y,z,vx,vy,xz";

inline void save_trajectory(const std::vector<TrajectorySample>& trajectory,
                            const std::string& path,
                            const std::vector<std::string>& comments = {}) {
    std::ostringstream out;
    for (const auto& c : comments) out << "# " << c << "\n";
    out << trajectory_csv_header << "\n";
    char buf[256];
    for (const auto& s : trajectory) {
        std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f,%.3f,%.6f,%.6f,%.6f\n",
                      format_timestamp(s.t).c_str(), s.state.x, s.state.y, s.state.z(),
                      s.state.vx, s.state.vy, s.state.xz);
        out << buf;
    }
    detail::write_atomic(path, out.str());
}

inline std::vector<TrajectorySample> load_trajectory(const std::string& path) {
    detail::CsvReader csv(path);
    if (csv.header.empty() && csv.rows.empty()) return {};
    csv.require_header(trajectory_csv_header, path);
    std::vector<TrajectorySample> out;
    for (const auto& [line, f] : csv.rows) {
        if (f.size() != 7)
            throw std::invalid_argument("'" + path + "' line " + std::to_string(line) +
                                        ": expected 7 fields");
        TrajectorySample s;
        s.t = parse_timestamp(f[0]);
        s.state.x = detail::parse_double(f[1], "x", line);
        s.state.y = detail::parse_double(f[2], "y", line);
        s.state.vx = detail::parse_double(f[4], "vx", line);
        s.state.vy = detail::parse_double(f[5], "vy", line);
        s.state.xz = detail::parse_double(f[6], "xz", line);
        out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Track and signal-trace CSV
// ---------------------------------------------------------------------------

inline constexpr const char* track_csv_header =
    "timestamp,segment,tower_id,beam_index,x,y,z,vx,vy,xz,sd_x,sd_vx,sd_y,sd_vy,sd_xz,Z,Z_hat";

inline void save_track(const Track& track, const std::string& path,
                       const std::vector<std::string>& comments = {}) {
    std::ostringstream out;
    for (const auto& c : comments) out << "# " << c << "\n";
    for (const auto& w : track.warnings) out << "# warning: " << w << "\n";
    out << track_csv_header << "\n";
    char buf[512];
    for (const auto& p : track.points) {
        std::snprintf(buf, sizeof buf,
                      "%s,%d,%s,%d,%.3f,%.3f,%.3f,%.6f,%.6f,%.6f,%.6g,%.6g,%.6g,%.6g,%.6g,"
                      "%.0f,%.3f\n",
                      format_timestamp(p.t).c_str(), p.segment, p.tower_id.c_str(),
                      p.beam_index, p.state.x, p.state.y, p.state.z(), p.state.vx,
                      p.state.vy, p.state.xz, std::sqrt(std::max(p.cov(0, 0), 0.0)),
                      std::sqrt(std::max(p.cov(1, 1), 0.0)),
                      std::sqrt(std::max(p.cov(2, 2), 0.0)),
                      std::sqrt(std::max(p.cov(3, 3), 0.0)),
                      std::sqrt(std::max(p.cov(4, 4), 0.0)), p.observed_display,
                      p.predicted_display);
        out << buf;
    }
    detail::write_atomic(path, out.str());
}

/// Reload an emitted track. Only the emitted quantities round-trip: states at
/// file precision, marginal standard deviations (restored to a diagonal
/// covariance), display values.
inline Track load_track(const std::string& path) {
    detail::CsvReader csv(path);
    Track track;
    if (csv.header.empty() && csv.rows.empty()) return track;
    csv.require_header(track_csv_header, path);
    for (const auto& [line, f] : csv.rows) {
        if (f.size() != 17)
            throw std::invalid_argument("'" + path + "' line " + std::to_string(line) +
                                        ": expected 17 fields");
        TrackPoint p;
        p.t = parse_timestamp(f[0]);
        p.segment = static_cast<int>(detail::parse_int(f[1], "segment", line));
        p.tower_id = f[2];
        p.beam_index = static_cast<int>(detail::parse_int(f[3], "beam_index", line));
        p.state.x = detail::parse_double(f[4], "x", line);
        p.state.y = detail::parse_double(f[5], "y", line);
        p.state.vx = detail::parse_double(f[7], "vx", line);
        p.state.vy = detail::parse_double(f[8], "vy", line);
        p.state.xz = detail::parse_double(f[9], "xz", line);
        for (int i = 0; i < 5; ++i) {
            const double sd = detail::parse_double(f[10 + i], "sd", line);
            p.cov(i, i) = sd * sd;
        }
        p.observed_display = detail::parse_double(f[15], "Z", line);
        p.predicted_display = detail::parse_double(f[16], "Z_hat", line);
        track.points.push_back(std::move(p));
    }
    return track;
}

inline constexpr const char* trace_csv_header = "timestamp,tower_id,beam_index,Z,Z_hat";

/// Per-detection observed vs predicted display values of a track.
inline void save_signal_trace(const Track& track, const std::string& path,
                              const std::vector<std::string>& comments = {}) {
    std::ostringstream out;
    for (const auto& c : comments) out << "# " << c << "\n";
    out << trace_csv_header << "\n";
    char buf[160];
    for (const auto& p : track.points) {
        std::snprintf(buf, sizeof buf, "%s,%s,%d,%.0f,%.3f\n", format_timestamp(p.t).c_str(),
                      p.tower_id.c_str(), p.beam_index, p.observed_display,
                      p.predicted_display);
        out << buf;
    }
    detail::write_atomic(path, out.str());
}

inline constexpr const char* pattern_csv_header = "psi_deg,g,g_squared,gain_db";

/// Pattern cut over (-180, 180] degrees for plotting; dB floored at -120.
inline void save_pattern_csv(const YagiPattern& pattern, double step_deg,
                             const std::string& path) {
    if (!(step_deg > 0.0)) throw std::invalid_argument("pattern step must be positive");
    std::ostringstream out;
    out << pattern_csv_header << "\n";
    char buf[128];
    const int n = static_cast<int>(std::lround(360.0 / step_deg));
    for (int i = -n / 2 + 1; i <= n / 2; ++i) {
        const double deg = i * step_deg;
        const double g = field_pattern(pattern, deg_to_rad(deg));
        const double g2 = g * g;
        const double db = g2 > 0.0 ? std::max(10.0 * std::log10(g2), -120.0) : -120.0;
        std::snprintf(buf, sizeof buf, "%.3f,%.4f,%.6g,%.2f\n", deg, g, g2, db);
        out << buf;
    }
    detail::write_atomic(path, out.str());
}

// ---------------------------------------------------------------------------
// Scenario JSON
// ---------------------------------------------------------------------------

inline ScenarioConfig load_scenario(const std::string& path) {
    const auto j = detail::load_json(path);
    detail::check_format_version(j, path);
    ScenarioConfig sc;
    try {
        sc.seed = j.value("seed", 0ull);
        sc.tag_id = j.value("tag_id", sc.tag_id);
        sc.movement = detail::movement_from_json(j.at("movement"));
        sc.receiver = detail::receiver_from_json(j.at("receiver"));
        if (j.contains("pattern")) sc.pattern = detail::pattern_from_json(j.at("pattern"));
        for (const auto& t : j.at("towers")) sc.towers.push_back(detail::tower_from_json(t));
        if (j.contains("sampling")) {
            const auto& s = j.at("sampling");
            const std::string mode = s.value("mode", "nearest_beam");
            if (mode == "nearest_beam")
                sc.schedule.mode = DwellSchedule::Mode::nearest_beam;
            else if (mode == "round_robin")
                sc.schedule.mode = DwellSchedule::Mode::round_robin;
            else
                throw std::invalid_argument("unknown sampling mode '" + mode + "'");
            sc.schedule.pulse_period = s.value("pulse_period_s", sc.schedule.pulse_period);
            sc.schedule.dwell = s.value("dwell_s", sc.schedule.dwell);
            sc.schedule.cadence = s.value("cadence_s", sc.schedule.cadence);
        }
        const auto& init = j.at("initial_state");
        sc.initial_state.x = init.at("x").get<double>();
        sc.initial_state.y = init.at("y").get<double>();
        sc.initial_state.vx = init.value("vx", 0.0);
        sc.initial_state.vy = init.value("vy", 0.0);
        const double z0 = init.value("z", 0.0);
        if (z0 < 0.0) throw std::invalid_argument("initial z must be nonnegative");
        sc.initial_state.xz = std::sqrt(z0);
        if (j.contains("start_time"))
            sc.start_time = parse_timestamp(j.at("start_time").get<std::string>());
        sc.duration = j.at("duration_s").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("'" + path + "': " + e.what());
    }
    sc.validate();
    return sc;
}

// ---------------------------------------------------------------------------
// Calibration CSV
// ---------------------------------------------------------------------------

/// Calibration input: either precomputed observables ("xi,Z") or reference
/// geometry ("timestamp,x,y,z,Z") resolved against a tower beam.
inline std::vector<CalibrationSample> load_calibration(
    const std::string& path, const TowerSite* tower = nullptr, int beam_index = 0,
    const YagiPattern* pattern = nullptr) {
    detail::CsvReader csv(path);
    if (csv.header.empty() && csv.rows.empty()) return {};
    std::vector<CalibrationSample> out;
    if (csv.header == std::vector<std::string>{"xi", "Z"}) {
        for (const auto& [line, f] : csv.rows) {
            if (f.size() != 2)
                throw std::invalid_argument("'" + path + "' line " + std::to_string(line) +
                                            ": expected 2 fields");
            CalibrationSample s;
            s.xi = detail::parse_double(f[0], "xi", line);
            s.display = detail::parse_double(f[1], "Z", line);
            if (s.xi < 0.0)
                throw std::invalid_argument("'" + path + "' line " + std::to_string(line) +
                                            ": xi must be nonnegative");
            out.push_back(s);
        }
        return out;
    }
    if (csv.header == std::vector<std::string>{"timestamp", "x", "y", "z", "Z"}) {
        if (!tower || !pattern)
            throw std::invalid_argument("'" + path +
                                        "': geometry calibration needs a tower and pattern");
        for (const auto& [line, f] : csv.rows) {
            if (f.size() != 5)
                throw std::invalid_argument("'" + path + "' line " + std::to_string(line) +
                                            ": expected 5 fields");
            StateVector s;
            s.x = detail::parse_double(f[1], "x", line);
            s.y = detail::parse_double(f[2], "y", line);
            const double z = detail::parse_double(f[3], "z", line);
            if (z < 0.0)
                throw std::invalid_argument("'" + path + "' line " + std::to_string(line) +
                                            ": z must be nonnegative");
            s.xz = std::sqrt(z);
            CalibrationSample sample;
            sample.xi = xi(s, *tower, beam_index, *pattern);
            sample.display = detail::parse_double(f[4], "Z", line);
            out.push_back(sample);
        }
        return out;
    }
    throw std::invalid_argument("'" + path + "': expected header 'xi,Z' or "
                                "'timestamp,x,y,z,Z'");
}

}  // namespace vhftrack
