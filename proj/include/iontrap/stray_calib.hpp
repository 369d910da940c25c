#pragma once

#include "iontrap/trap_model.hpp"
#include "iontrap/waveform_synth.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace iontrap {

struct FrequencyProfile {
  std::vector<double> positions;         // m
  std::vector<double> frequencies;       // rad/s
  std::vector<double> frequency_errors;  // rad/s, 0 when unknown
  double base_frequency = 0.0;           // rad/s

  std::size_t size() const { return positions.size(); }
  void validate() const;
  /// max |omega(x) - omega_0|
  double max_deviation() const;
};

struct WindowVoltageSet {
  std::map<std::string, double> voltages;
  std::vector<std::vector<std::string>> ties;
};

/// Evenly spaced probe positions within +-span of each centre, sorted.
std::vector<double> calibration_positions(const std::vector<double>& centres, double span, std::size_t points);

/// omega(x) = sqrt(omega_0^2 + (q/m) sum_j V_j d2phi_j/dx2) on the RF null line.
FrequencyProfile predict_profile(const TrapLayout& layout, const std::map<std::string, double>& window_voltages,
                                 double base_frequency, const std::vector<double>& positions);

struct FitOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-10;
  double rank_tolerance = 1e-8;  // relative singular value floor
};

struct WindowFit {
  WindowVoltageSet fitted;
  std::vector<std::vector<std::string>> groups;  // one per parameter
  Eigen::VectorXd parameters;                    // V, one per group
  Eigen::MatrixXd covariance;                    // V^2
  double residual_rms = 0.0;                     // rad/s
  double chi_squared = 0.0;
  int iterations = 0;

  double sigma(const std::string& window) const;
};

/// Weighted Levenberg-Marquardt fit of window voltages to a measured profile.
/// Windows named in the same tie group share one parameter.
WindowFit fit_window_voltages(const FrequencyProfile& profile, const TrapLayout& layout,
                              const std::vector<std::string>& windows,
                              const std::vector<std::vector<std::string>>& ties, const FitOptions& options = {});

struct MeasurementOptions {
  double noise_fraction = 0.0;  // Gaussian sigma relative to omega_0
  std::uint64_t seed = 1;
  int max_iterations = 40;
  double position_tolerance = 1e-12;  // m
};

/// Simulated spectroscopy: for each probe position a static well with
/// frequency omega_0 is synthesized on `model` (which carries the current
/// window estimate), its axial field offset is trimmed until the ion sits at
/// the probe position in `truth`, and the frequency is read off find_well.
FrequencyProfile measure_profile(const TrapLayout& truth, const TrapLayout& model, double base_frequency,
                                 const std::vector<double>& positions, const HardwareLimits& limits,
                                 const SolverOptions& solver, const MeasurementOptions& options);

struct CompensationRound {
  int round = 0;
  WindowVoltageSet estimate;
  double residual = 0.0;  // max |omega(x) - omega_0| re-measured after the update, rad/s
  WindowFit fit;
};

struct CompensationOptions {
  int rounds = 3;
  std::vector<std::string> windows;
  std::vector<std::vector<std::string>> ties;
  std::vector<double> positions;
  MeasurementOptions measurement;
  FitOptions fit;
  SolverOptions solver;
  HardwareLimits limits;
  std::map<std::string, double> initial_estimate;
};

/// Closed-loop calibration against hidden window voltages: measure, fit the
/// residual profile, add it to the estimate, repeat.
std::vector<CompensationRound> iterate_compensation(const std::map<std::string, double>& true_voltages,
                                                    const TrapLayout& layout, double base_frequency,
                                                    const CompensationOptions& options);

/// Transverse DC field E_y at every zone marker from the window sources alone, V/m.
std::map<std::string, double> micromotion_offset(const TrapLayout& layout,
                                                 const std::map<std::string, double>& window_voltages);

}  // namespace iontrap
