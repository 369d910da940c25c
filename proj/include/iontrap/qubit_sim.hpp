#pragma once

#include "iontrap/common.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace iontrap {

using Complex = std::complex<double>;
using ThreeLevelUnitary = Eigen::Matrix3cd;

/// Amplitudes over {|down>, |up>, |1>}.
struct ThreeLevelState {
  Eigen::Vector3cd amplitudes = Eigen::Vector3cd(1.0, 0.0, 0.0);

  static ThreeLevelState down() { return {}; }
  double population(int level) const { return std::norm(amplitudes[level]); }
  void validate() const;
};

enum class LevelPair { Down1, OneUp, DownUp };

/// Rotation of area theta and phase phi on one pair of levels:
/// cos(theta/2) on the diagonal, i e^{-i phi} sin(theta/2) above it and
/// i e^{i phi} sin(theta/2) below it (in basis order), identity elsewhere.
ThreeLevelUnitary rotation(LevelPair pair, double theta, double phi);

/// Memory-qubit rotation built from optical pulses,
///   U_1up(pi, phi_L + pi) U_down1(theta, phi_L + phi + pi/2) U_1up(pi, phi_L),
/// which equals rotation(DownUp, theta, phi) for every phi_L.
ThreeLevelUnitary hybrid_memory_rotation(double theta, double phi, double phi_L);

/// Largest entry-wise modulus of a - b.
double matrix_distance(const ThreeLevelUnitary& a, const ThreeLevelUnitary& b);

/// Largest entry of |U^dagger U - I|.
double unitarity_error(const ThreeLevelUnitary& u);

enum class RamseyMode { Optical, Hybrid };

enum class LaserPhaseModel {
  Fixed,     // optical phase 0 in both zones
  PerShot,   // independent uniform phase per zone for every shot
  PerPoint,  // one random relative phase per scan point, shared by its shots
};

struct RamseyOptions {
  RamseyMode mode = RamseyMode::Hybrid;
  LaserPhaseModel phase_model = LaserPhaseModel::PerShot;
  std::size_t shots = 500;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct RamseyResult {
  std::vector<double> phases;   // rad
  std::vector<double> p_down;   // measured fraction of shots in |down>
  std::vector<double> sigma;    // binomial standard error
};

/// Exact |down> probability of one Ramsey shot with optical phases phase1
/// and phase2 in the two zones.
double ramsey_population(RamseyMode mode, double phi, double phase1, double phase2);

/// Two-zone Ramsey scan: pi/2 in the first zone, pi/2 at phase phi + pi in
/// the second, projective |down> detection. The ideal signal is
/// (1 + cos phi) / 2.
RamseyResult ramsey_scan(const std::vector<double>& phases, const RamseyOptions& options);

struct SinusoidFit {
  double offset = 0.0;
  double contrast = 0.0;        // peak-to-peak amplitude
  double phase = 0.0;           // rad, signal = offset + contrast/2 cos(phi - phase)
  double contrast_sigma = 0.0;
};

/// Linear least-squares fit of offset + a cos(phi) + b sin(phi).
SinusoidFit fit_sinusoid(const std::vector<double>& phases, const std::vector<double>& values);

/// 1 - |<target|psi>|^2 after a pi pulse with fractional area error epsilon,
/// starting in |down> on the optical pair.
double plain_pi_infidelity(double epsilon);

/// Same for the BB1 sequence pi_0 pi_p1 pi_3p1 pi_3p1 pi_p1, p1 = acos(-1/4).
double bb1_pi_infidelity(double epsilon);

struct ThermalParams {
  double rabi = 0.0;        // bare carrier Rabi frequency, rad/s
  double eta = 0.0;         // Lamb-Dicke parameter
  double nbar = 0.0;
  std::size_t n_cut = 0;    // 0 selects the truncation automatically

  void validate() const;
};

/// Geometric tail weight sum_{n >= n_cut} P(n).
double thermal_tail_weight(double nbar, std::size_t n_cut);

/// Truncation used when n_cut is 0: at least max(20, ceil(nbar (1 + 12/sqrt(nbar))))
/// and large enough for a tail weight below 1e-12.
std::size_t auto_truncation(double nbar);

/// Carrier |down> population after time t for a thermal motional state.
/// Throws TruncationTooSmall when an explicit n_cut leaves a tail of 1e-8 or more.
double thermal_carrier(const ThermalParams& params, double t);

struct NbarFit {
  double nbar = 0.0;
  double rabi = 0.0;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();  // (nbar, rabi)
  double chi2 = 0.0;
  int iterations = 0;

  double nbar_sigma() const { return std::sqrt(covariance(0, 0)); }
  double rabi_sigma() const { return std::sqrt(covariance(1, 1)); }
};

/// Least-squares fit of thermal_carrier to a Rabi flop with known eta.
/// With `sigma` empty the covariance is scaled by the reduced chi-square.
NbarFit fit_nbar(const std::vector<double>& times, const std::vector<double>& populations, double eta,
                 double rabi_guess, const std::vector<double>& sigma = {});

struct LorentzianFit {
  double center = 0.0;     // rad/s
  double fwhm = 0.0;       // rad/s
  double amplitude = 0.0;
  double offset = 0.0;
  double center_sigma = 0.0;
  double fwhm_sigma = 0.0;
  double amplitude_sigma = 0.0;
};

/// offset + amplitude / (1 + (2 (delta - center) / fwhm)^2). Throws NoPeak
/// when the amplitude is within three standard errors of zero or the centre
/// falls outside the scanned range.
LorentzianFit lorentzian_fit(const std::vector<double>& detunings, const std::vector<double>& populations,
                             const std::vector<double>& sigma = {});

struct Ratio {
  double value = 0.0;
  double sigma = 0.0;
};

/// Spectator over target Rabi frequency with first-order error propagation.
Ratio crosstalk_ratio(double target, double target_sigma, double spectator, double spectator_sigma);

struct SpectroscopySeries {
  std::vector<double> times;          // s
  std::vector<double> centers;        // rad/s
  std::vector<double> uncertainties;  // rad/s
  std::string zone;

  std::size_t size() const { return times.size(); }
  void validate() const;
};

struct CorrelationResult {
  double r = 0.0;
  std::size_t pairs = 0;
  std::size_t dropped = 0;  // points of either series left without a partner
};

/// Pearson coefficient c12 / sqrt(c11 c22) of the centre deviations after
/// pairing each point with the nearest unused point of the other series
/// within `window` seconds.
CorrelationResult correlation(const SpectroscopySeries& a, const SpectroscopySeries& b, double window);

/// Magnetic field change producing a transition shift, for a sensitivity in rad/s per tesla.
double frequency_to_field(double delta_omega, double sensitivity);

/// Field gradient (T/m) from the differential shift of two ions `separation` apart.
double field_gradient(double differential_omega, double separation, double sensitivity);

}  // namespace iontrap
