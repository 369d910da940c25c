#pragma once

#include "iontrap/common.hpp"

#include <array>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iontrap {

/// Axis-aligned rectangle in the z = 0 electrode plane, SI metres.
struct RectPatch {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;

  double area() const { return (x_max - x_min) * (y_max - y_min); }
};

void validate(const RectPatch& patch);

/// Unit-voltage potential of a gapless rectangular patch: the fraction of the
/// 2*pi solid angle the patch subtends at `point`. Requires point.z() > 0.
double patch_potential(const RectPatch& patch, const Vec3& point);

struct PatchDerivatives {
  Vec3 gradient = Vec3::Zero();  // 1/m
  Mat3 hessian = Mat3::Zero();   // 1/m^2
};

/// Analytic gradient and Hessian of patch_potential with respect to the field
/// point. The zz entry is computed directly, so the trace is a real check of
/// harmonicity rather than an identity.
PatchDerivatives patch_derivatives(const RectPatch& patch, const Vec3& point);

/// First and second x-derivatives only; the hot path of the axial integrator.
struct AxialDerivatives {
  double first = 0.0;
  double second = 0.0;
};
AxialDerivatives patch_axial_derivatives(const RectPatch& patch, const Vec3& point);

enum class ElectrodeKind { DC, Window, RFRail };

std::string_view to_string(ElectrodeKind kind);

struct Electrode {
  std::string name;
  ElectrodeKind kind = ElectrodeKind::DC;
  std::vector<RectPatch> patches;
};

struct Zone {
  std::string id;
  double x = 0.0;  // axial position, m
};

struct IonSpecies {
  double mass = kCa40Mass;
  double charge = kElementaryCharge;
};

/// Geometry and species of a segmented surface trap. Immutable once built.
///
/// Electrodes of kind DC are the optimisation variables of the waveform
/// solvers. Window and RF-rail electrodes carry fixed voltages (zero unless
/// set through with_fixed_voltages); the RF drive itself is replaced by a
/// static pseudopotential with radial frequencies `pseudo_frequencies`
/// centred on the line y = 0, z = ion_height.
class TrapLayout {
 public:
  TrapLayout(std::vector<Electrode> electrodes, double ion_height, IonSpecies ion,
             std::array<double, 2> pseudo_frequencies, std::vector<Zone> zones);

  const std::vector<Electrode>& electrodes() const { return electrodes_; }
  double ion_height() const { return ion_height_; }
  const IonSpecies& ion() const { return ion_; }
  double charge_to_mass() const { return ion_.charge / ion_.mass; }
  /// Radial (y, z) angular frequencies of the static pseudopotential.
  const std::array<double, 2>& pseudo_frequencies() const { return pseudo_frequencies_; }
  const std::vector<Zone>& zones() const { return zones_; }

  std::size_t electrode_count() const { return electrodes_.size(); }
  std::size_t electrode_index(std::string_view name) const;
  bool has_electrode(std::string_view name) const;

  /// Indices of DC electrodes, in declaration order.
  const std::vector<std::size_t>& dc_indices() const { return dc_indices_; }
  std::vector<std::string> dc_names() const;
  std::size_t dc_count() const { return dc_indices_.size(); }

  double zone_position(std::string_view zone_id) const;

  /// Axial extent [x_min, x_max] covered by the DC electrodes.
  std::pair<double, double> axial_span() const { return span_; }

  /// Per-electrode fixed voltages (zero for DC electrodes).
  const std::vector<double>& fixed_voltages() const { return fixed_voltages_; }
  bool has_fixed_sources() const;

  /// Copy of the layout with the named non-DC electrodes held at the given
  /// voltages. Unnamed electrodes keep their current fixed voltage.
  TrapLayout with_fixed_voltages(const std::map<std::string, double>& voltages) const;

  /// Full per-electrode voltage vector: DC entries from `dc_voltages`, all
  /// other entries from the fixed sources.
  std::vector<double> full_voltages(std::span<const double> dc_voltages) const;

  /// Equilibrium point of the pseudopotential for axial position x.
  Vec3 rf_null(double x) const { return {x, 0.0, ion_height_}; }

 private:
  std::vector<Electrode> electrodes_;
  double ion_height_;
  IonSpecies ion_;
  std::array<double, 2> pseudo_frequencies_;
  std::vector<Zone> zones_;
  std::vector<std::size_t> dc_indices_;
  std::vector<double> fixed_voltages_;
  std::pair<double, double> span_{0.0, 0.0};
};

/// Potential, gradient and Hessian of a scalar potential at one point.
struct FieldSample {
  double potential = 0.0;   // V
  Vec3 gradient = Vec3::Zero();  // V/m
  Mat3 hessian = Mat3::Zero();   // V/m^2
};

/// Unit potential of one electrode (sum over its patches).
FieldSample electrode_unit_sample(const Electrode& electrode, const Vec3& point);

/// Per-electrode unit potentials, gradients and Hessians at a set of points.
class ElectrodeBasis {
 public:
  ElectrodeBasis(const TrapLayout& layout, std::span<const Vec3> points);

  std::size_t point_count() const { return n_points_; }
  std::size_t electrode_count() const { return n_electrodes_; }

  const FieldSample& unit(std::size_t point, std::size_t electrode) const {
    return samples_[point * n_electrodes_ + electrode];
  }

  /// Linear combination with one voltage per electrode.
  FieldSample combine(std::size_t point, std::span<const double> voltages) const;

 private:
  std::size_t n_points_;
  std::size_t n_electrodes_;
  std::vector<FieldSample> samples_;
};

/// Total potential of the layout with all-electrode voltages at a point.
FieldSample sample_potential(const TrapLayout& layout, std::span<const double> voltages,
                             const Vec3& point);

/// Axial first and second derivatives of each electrode on the RF null line.
void axial_unit_derivatives(const TrapLayout& layout, double x, std::span<double> first,
                            std::span<double> second);

struct PotentialWell {
  Vec3 position = Vec3::Zero();
  double axial_frequency = 0.0;     // rad/s
  Mat3 hessian = Mat3::Zero();      // DC Hessian, V/m^2
  Vec3 residual_field = Vec3::Zero();  // DC field E = -grad(phi), V/m
  double radial_mode_angle = 0.0;   // rad, lower radial mode w.r.t. the trap plane
  Vec3 mode_frequencies = Vec3::Zero();  // eigenfrequencies of the 3-D secular matrix, ascending
};

/// Everything find_well needs besides the potential itself.
struct WellContext {
  double mass = kCa40Mass;
  double charge = kElementaryCharge;
  std::array<double, 2> pseudo_frequencies{0.0, 0.0};
  double rf_height = 0.0;
  double x_min = 0.0;
  double x_max = 0.0;

  static WellContext from_layout(const TrapLayout& layout);
};

struct WellOptions {
  int max_iterations = 50;
  double step_tolerance = 1e-12;   // m
  double max_step = 20e-6;         // m, Newton damping
};

using FieldFunction = std::function<FieldSample(const Vec3&)>;

/// Locates the axial potential minimum nearest to the guess by damped Newton
/// on the RF null line, where the pseudopotential pins the transverse
/// coordinates. The axial frequency follows from phi_xx there; the 3-D secular
/// matrix (DC hessian plus pseudopotential) must be positive definite.
/// Throws NoWellFound on saddles, anti-trapping or non-convergence.
PotentialWell find_well(const FieldFunction& field, const WellContext& context, double guess,
                        const WellOptions& options = {});

/// Well of `layout` with the given DC voltages (fixed sources included).
PotentialWell find_well(const TrapLayout& layout, std::span<const double> dc_voltages,
                        double guess, const WellOptions& options = {});

}  // namespace iontrap
