#pragma once

#include "iontrap/dynamics_sim.hpp"
#include "iontrap/qubit_sim.hpp"
#include "iontrap/stray_calib.hpp"
#include "iontrap/waveform_synth.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace iontrap::io {

/// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);
std::string read_file(const std::filesystem::path& path);

/// Relative paths are placed under $IONTRAP_OUTPUT_DIR when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& path);

// Waveform CSV: header `t_s,<electrode names>`, one row per sample, 9 significant digits.
std::string waveform_csv(const Waveform& waveform);
Waveform parse_waveform_csv(std::string_view text, const HardwareLimits& limits);

// Waveform binary container, little endian:
//   char[4] "ITWF", u32 version (1), u64 n_t, u64 n_e, f64 dt, f64 t0,
//   n_e x {u32 length, name bytes}, f64 samples[n_t][n_e] row-major.
std::string waveform_binary(const Waveform& waveform);
Waveform parse_waveform_binary(std::string_view bytes, const HardwareLimits& limits);

/// Reads either format, chosen by the leading magic bytes.
Waveform load_waveform(const std::filesystem::path& path, const HardwareLimits& limits);

// Frequency profile CSV: `x_m,omega_rad_s,sigma_rad_s`.
std::string profile_csv(const FrequencyProfile& profile);
FrequencyProfile parse_profile_csv(std::string_view text, double base_frequency);

// Window voltages as a flat JSON object {"name": volts}.
std::string window_json(const std::map<std::string, double>& voltages);
std::map<std::string, double> parse_window_json(std::string_view text);

// Compensation rounds: `round,residual_rad_s,<window voltages...>`.
std::string compensation_csv(const std::vector<CompensationRound>& rounds);

// Ion trajectory CSV: `t_s,x_m,v_m_s,E_J`.
std::string trajectory_csv(const IonTrajectory& trajectory);
IonTrajectory parse_trajectory_csv(std::string_view text);

// Doppler map: JSON header naming the matrix file, plus a CSV whose header is
// `delay_s,<detunings rad/s>` and whose rows hold one delay each.
std::string doppler_header_json(const DopplerMap& map, const std::string& matrix_file);
std::string doppler_matrix_csv(const DopplerMap& map);
DopplerMap parse_doppler(std::string_view header_json, std::string_view matrix_csv);

// Ramsey results: `phi_rad,p_down,sigma`.
std::string ramsey_csv(const RamseyResult& result);
RamseyResult parse_ramsey_csv(std::string_view text);

// Spectroscopy series: `t_s,omega_rad_s,sigma_rad_s,zone`, any number of zones.
std::string spectroscopy_csv(const std::vector<SpectroscopySeries>& series);
std::vector<SpectroscopySeries> parse_spectroscopy_csv(std::string_view text);

// Generic numeric CSV with a header row.
struct Table {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  const std::vector<double>& column(const std::string& name) const;
};
Table parse_table(std::string_view text);

struct OutputRecord {
  std::string path;
  std::uint64_t fnv1a64 = 0;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string toolkit_version;
  std::string started_utc;
  std::string finished_utc;
  std::vector<OutputRecord> outputs;

  std::string to_json() const;
};

/// UTC timestamp; honours SOURCE_DATE_EPOCH for reproducible builds.
std::string utc_timestamp();

std::string toolkit_version();

}  // namespace iontrap::io
