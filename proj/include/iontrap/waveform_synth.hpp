#pragma once

#include "iontrap/filter.hpp"
#include "iontrap/trap_model.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace iontrap {

struct HardwareLimits {
  double v_min = -10.0;               // V at the AWG output
  double v_max = 10.0;                // V
  double awg_sample_period = 390e-9;  // s
  double awg_slew_max = 20e6;         // V/s at the AWG output
  double amp_gain = 2.5;
  double amp_slew_max = 1e6;          // V/s at the electrode
  std::vector<double> filter_cutoffs{60e3, 60e3};  // Hz

  void validate() const;
  double electrode_min() const { return v_min * amp_gain; }
  double electrode_max() const { return v_max * amp_gain; }
  /// Binding slew rate at the electrode, V/s.
  double max_slew_rate() const;
  FilterCascade filter() const { return {filter_cutoffs, awg_sample_period}; }
};

struct TrajectorySample {
  double time = 0.0;       // s
  double position = 0.0;   // m
  double frequency = 0.0;  // rad/s
  Vec3 field = Vec3::Zero();  // target DC field at the well, V/m
};

struct Trajectory {
  std::vector<TrajectorySample> samples;

  std::size_t size() const { return samples.size(); }
  void validate() const;
  /// Same sample times, positions and targets in reverse order.
  Trajectory reversed() const;
};

/// Normalised sigmoid p(t) on [0, duration] with p(0) = 0, p(duration) = 1,
/// odd-symmetric about the midpoint.
double sigmoid_profile(double t, double duration, double steepness);
/// Peak velocity of a sigmoid move of length `distance`.
double sigmoid_peak_velocity(double distance, double duration, double steepness);

Trajectory sigmoid_trajectory(double x_start, double x_end, double duration, double steepness,
                              double frequency, std::size_t n_samples);

/// Sigmoid trajectory sampled on the AWG clock. The duration is rounded to a
/// whole number of sample periods.
Trajectory transport_trajectory(double x_start, double x_end, double duration, double frequency,
                                double sample_period, double steepness = 6.0);

struct ZoneObjective {
  std::string zone;
  std::optional<double> well_position;  // m, defaults to the zone marker
  std::optional<double> axial_frequency;  // rad/s
  Vec3 field = Vec3::Zero();            // target DC field, V/m; E_y and E_z only bind with a frequency target or null_field
  bool null_field = false;
  bool null_curvature = false;
};

struct SolverOptions {
  double regularization = 1e-6;
  double smoothness = 1e-3;
  double equality_weight = 1e3;
  double field_scale = 1e3;              // V/m
  double curvature_scale = 0.0;          // V/m^2, 0 selects m (2 pi 1 MHz)^2 / q
  double transverse_weight = 3e-6;       // relative weight of E_y, E_z, phi_xy, phi_xz rows of wells
  double residual_tolerance = 1e-5;      // on scaled target rows
  int max_active_set_iterations = 500;
  unsigned threads = 1;
};

std::vector<double> solve_static(const TrapLayout& layout, const std::vector<ZoneObjective>& objectives,
                                 const HardwareLimits& limits, const SolverOptions& options = {});

struct Waveform {
  std::vector<std::string> electrode_names;
  Eigen::MatrixXd samples;  // time x electrode, V
  double sample_period = 0.0;
  double start_time = 0.0;
  HardwareLimits limits;

  std::size_t n_samples() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t n_electrodes() const { return static_cast<std::size_t>(samples.cols()); }
  double time(std::size_t i) const { return start_time + static_cast<double>(i) * sample_period; }
  double duration() const { return sample_period * static_cast<double>(n_samples() - 1); }
  std::vector<double> row(std::size_t i) const;
  std::vector<double> channel(std::size_t e) const;
  void validate() const;
};

/// Throws SlewViolation or Infeasible naming the first offending electrode and sample.
void check_limits(const Waveform& waveform);

Waveform synthesize_waveform(const TrapLayout& layout, const Trajectory& trajectory,
                             const HardwareLimits& limits, const SolverOptions& options = {});

struct AuditReport {
  double max_position_error = 0.0;   // m
  double max_frequency_error = 0.0;  // relative
  std::size_t worst_position_sample = 0;
  std::size_t worst_frequency_sample = 0;
};

/// Re-locates the well of every sample with find_well and compares it with
/// the trajectory targets.
AuditReport audit_waveform(const TrapLayout& layout, const Trajectory& trajectory,
                           const Waveform& waveform);

/// Layout whose named window electrodes carry the given fixed voltages.
TrapLayout apply_window_compensation(const TrapLayout& layout,
                                     const std::map<std::string, double>& window_voltages);

Waveform precompensate_filter(const Waveform& waveform, const HardwareLimits& limits);

}  // namespace iontrap
