#pragma once

#include "iontrap/trap_model.hpp"
#include "iontrap/waveform_synth.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace iontrap {

struct CalibrationDefaults {
  double span = 50e-6;  // half-width of the probed region around each zone, m
  std::size_t points = 21;
  double noise_fraction = 1e-3;  // sigma of frequency noise relative to omega_0
  int rounds = 3;
  std::vector<std::vector<std::string>> ties;
};

struct ProbeDefaults {
  double duration = 30e-6;             // s
  double rabi_rate = kTwoPi * 15e3;    // rad/s
  double wavevector = kTwoPi / 729e-9; // rad/m
};

struct ToolkitDefaults {
  SolverOptions solver;
  double axial_frequency = kTwoPi * 1.9e6;  // rad/s
  double integrator_dt = 1e-9;              // s
  std::size_t output_stride = 10;
  std::uint64_t seed = 1;
  CalibrationDefaults calibration;
  ProbeDefaults probe;
  double transition_sensitivity = kTwoPi * 558.5 / 1e-7;  // rad/s per tesla
};

struct ToolkitConfig {
  TrapLayout layout;
  HardwareLimits hardware;
  ToolkitDefaults defaults;
  std::string canonical;  // canonical JSON text of the input
  std::uint64_t hash = 0; // FNV-1a of `canonical`

  std::string hash_hex() const;
};

/// Parses and validates a JSON configuration. Keys carry unit suffixes
/// (`height_um`, `filter_cutoffs_kHz`, ...); values are converted to SI.
ToolkitConfig parse_config(std::string_view text);
ToolkitConfig load_config(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view data);

}  // namespace iontrap
