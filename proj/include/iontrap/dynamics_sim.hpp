#pragma once

#include "iontrap/filter.hpp"
#include "iontrap/trap_model.hpp"
#include "iontrap/waveform_synth.hpp"

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace iontrap {

/// Per-channel causal response of the cascade. The cascade must run at the
/// waveform's sample period.
Waveform filter_response(const Waveform& waveform, const FilterCascade& cascade);

struct IonTrajectory {
  std::vector<double> times;       // s
  std::vector<double> positions;   // m
  std::vector<double> velocities;  // m/s
  std::vector<double> energies;    // J, relative to the instantaneous well minimum; NaN where no well exists
  double final_nbar = std::numeric_limits<double>::quiet_NaN();

  std::size_t size() const { return times.size(); }
  void validate() const;
};

struct IntegrationOptions {
  double dt = 1e-9;              // s
  std::size_t output_stride = 10;
  double hold_time = 0.0;        // s of integration past the last sample, voltages held
};

/// Velocity-Verlet integration of m x'' = -q dphi/dx(x, t) along the RF null
/// line. Voltages are linearly interpolated between (optionally filtered)
/// samples; window and other fixed sources of the layout are included.
/// final_nbar is filled when the held tail spans at least three periods of
/// the final well.
IonTrajectory integrate_motion(const TrapLayout& layout, const Waveform& waveform,
                               const std::optional<FilterCascade>& cascade, double x0, double v0,
                               const IntegrationOptions& options = {});

/// Mean secular energy over the last `periods` oscillation periods, in quanta
/// of the final well.
double motional_excitation(const IonTrajectory& trajectory, const PotentialWell& final_well, double mass,
                           double periods = 3.0);

struct ProbeSettings {
  double duration = 30e-6;               // s
  double wavevector = kTwoPi / 729e-9;   // rad/m
  double rabi_rate = kTwoPi * 15e3;      // rad/s
};

struct DopplerMap {
  std::vector<double> probe_delays;  // s, probe start relative to the trajectory start
  std::vector<double> detunings;     // rad/s
  Eigen::MatrixXd excitation;        // delays x detunings
  double wavevector = 0.0;           // rad/m
  double probe_duration = 0.0;       // s
  double rabi_rate = 0.0;            // rad/s
  std::vector<std::string> warnings;

  void validate() const;
};

/// Two-level excitation for every (delay, detuning) pair, with instantaneous
/// detuning delta(t) = detuning + k v(t) held piecewise constant on the
/// trajectory grid.
DopplerMap doppler_map(const IonTrajectory& trajectory, const ProbeSettings& probe,
                       const std::vector<double>& delays, const std::vector<double>& detunings,
                       unsigned threads = 1);

/// Integrates the motion (energies are not tracked) and maps the result.
DopplerMap doppler_map(const TrapLayout& layout, const Waveform& waveform,
                       const std::optional<FilterCascade>& cascade, double x0, double v0,
                       const IntegrationOptions& options, const ProbeSettings& probe,
                       const std::vector<double>& delays, const std::vector<double>& detunings,
                       unsigned threads = 1);

/// Ridge detuning per delay: excitation-weighted centroid of the contiguous
/// bins around the maximum that stay above 5% of it. Under a chirp the line
/// becomes a plateau whose height follows the dwell time at each detuning, so
/// the centroid tracks the probe-averaged -k v. Throws NoPeak for a flat row.
std::vector<double> doppler_ridge(const DopplerMap& map);

/// Mean velocity over each probe window [delay, delay + duration].
std::vector<double> probe_mean_velocities(const IonTrajectory& trajectory, const std::vector<double>& delays,
                                          double duration);

}  // namespace iontrap
