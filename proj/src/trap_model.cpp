#include "iontrap/trap_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace iontrap {

namespace {

void require_above_plane(const Vec3& point) {
  if (!(point.z() > 0.0) || !point.allFinite()) {
    std::ostringstream msg;
    msg << "field point must lie above the electrode plane (z > 0), got z = " << point.z();
    fail(ErrorCode::InvalidArgument, msg.str());
  }
}

// Corner offsets and signs of the gapless solid-angle sum.
struct Corner {
  double dx;
  double dy;
  double sign;
};

std::array<Corner, 4> corners(const RectPatch& p, const Vec3& r) {
  return {{{p.x_min - r.x(), p.y_min - r.y(), +1.0},
           {p.x_max - r.x(), p.y_max - r.y(), +1.0},
           {p.x_min - r.x(), p.y_max - r.y(), -1.0},
           {p.x_max - r.x(), p.y_min - r.y(), -1.0}}};
}

constexpr double kInvTwoPi = 1.0 / kTwoPi;

}  // namespace

void validate(const RectPatch& patch) {
  const bool finite = std::isfinite(patch.x_min) && std::isfinite(patch.x_max) &&
                      std::isfinite(patch.y_min) && std::isfinite(patch.y_max);
  if (!finite || !(patch.x_min < patch.x_max) || !(patch.y_min < patch.y_max)) {
    fail(ErrorCode::InvalidArgument, "rectangle patch needs finite extents with min < max");
  }
}

double patch_potential(const RectPatch& patch, const Vec3& point) {
  require_above_plane(point);
  const double z = point.z();
  double sum = 0.0;
  for (const auto& c : corners(patch, point)) {
    const double r = std::sqrt(c.dx * c.dx + c.dy * c.dy + z * z);
    sum += c.sign * std::atan2(c.dx * c.dy, z * r);
  }
  return sum * kInvTwoPi;
}

PatchDerivatives patch_derivatives(const RectPatch& patch, const Vec3& point) {
  require_above_plane(point);
  const double z = point.z();
  const double z2 = z * z;
  PatchDerivatives out;
  for (const auto& c : corners(patch, point)) {
    const double X = c.dx;
    const double Y = c.dy;
    const double X2 = X * X;
    const double Y2 = Y * Y;
    const double R2 = X2 + Y2 + z2;
    const double R = std::sqrt(R2);
    const double R3 = R2 * R;
    const double ax = X2 + z2;
    const double ay = Y2 + z2;

    // Derivatives of atan(XY / (zR)) in the corner-offset variables.
    const double FX = z * Y / (ax * R);
    const double FY = z * X / (ay * R);
    const double N = R2 + z2;
    const double D = ax * ay * R;
    const double Fz = -X * Y * N / D;

    const double FXX = -z * X * Y * (2.0 * R2 + ax) / (ax * ax * R3);
    const double FYY = -z * X * Y * (2.0 * R2 + ay) / (ay * ay * R3);
    const double FXY = z / R3;
    const double FXz = Y * (ax * (X2 + Y2) - 2.0 * z2 * R2) / (ax * ax * R3);
    const double FYz = X * (ay * (X2 + Y2) - 2.0 * z2 * R2) / (ay * ay * R3);
    const double dD = 2.0 * z * ay * R + 2.0 * z * ax * R + ax * ay * z / R;
    const double Fzz = -X * Y * (4.0 * z * D - N * dD) / (D * D);

    // X = x_c - x and Y = y_c - y, so each x or y derivative flips sign.
    const double s = c.sign;
    out.gradient += s * Vec3(-FX, -FY, Fz);
    Mat3 h;
    h << FXX, FXY, -FXz,
         FXY, FYY, -FYz,
         -FXz, -FYz, Fzz;
    out.hessian += s * h;
  }
  out.gradient *= kInvTwoPi;
  out.hessian *= kInvTwoPi;
  return out;
}

AxialDerivatives patch_axial_derivatives(const RectPatch& patch, const Vec3& point) {
  require_above_plane(point);
  const double z = point.z();
  const double z2 = z * z;
  AxialDerivatives out;
  for (const auto& c : corners(patch, point)) {
    const double X = c.dx;
    const double Y = c.dy;
    const double R2 = X * X + Y * Y + z2;
    const double R = std::sqrt(R2);
    const double ax = X * X + z2;
    out.first -= c.sign * z * Y / (ax * R);
    out.second -= c.sign * z * X * Y * (2.0 * R2 + ax) / (ax * ax * R2 * R);
  }
  out.first *= kInvTwoPi;
  out.second *= kInvTwoPi;
  return out;
}

std::string_view to_string(ElectrodeKind kind) {
  switch (kind) {
    case ElectrodeKind::DC: return "dc";
    case ElectrodeKind::Window: return "window";
    case ElectrodeKind::RFRail: return "rf";
  }
  return "dc";
}

namespace {

// Area of overlap of two rectangles (zero when they only touch).
double overlap_area(const RectPatch& a, const RectPatch& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

}  // namespace

TrapLayout::TrapLayout(std::vector<Electrode> electrodes, double ion_height, IonSpecies ion,
                       std::array<double, 2> pseudo_frequencies, std::vector<Zone> zones)
    : electrodes_(std::move(electrodes)),
      ion_height_(ion_height),
      ion_(ion),
      pseudo_frequencies_(pseudo_frequencies),
      zones_(std::move(zones)) {
  require(ion_height_ > 0.0 && std::isfinite(ion_height_), "ion height must be positive");
  require(ion_.mass > 0.0 && std::isfinite(ion_.mass), "ion mass must be positive");
  require(ion_.charge != 0.0 && std::isfinite(ion_.charge), "ion charge must be non-zero");
  require(pseudo_frequencies_[0] >= 0.0 && pseudo_frequencies_[1] >= 0.0,
          "pseudopotential frequencies must be non-negative");
  require(!electrodes_.empty(), "layout needs at least one electrode");

  std::set<std::string, std::less<>> names;
  for (const auto& e : electrodes_) {
    require(!e.name.empty(), "electrode names must be non-empty");
    require(names.insert(e.name).second, "duplicate electrode name '" + e.name + "'");
    require(!e.patches.empty(), "electrode '" + e.name + "' has no patches");
    for (const auto& p : e.patches) validate(p);
    for (std::size_t i = 0; i < e.patches.size(); ++i) {
      for (std::size_t j = i + 1; j < e.patches.size(); ++j) {
        require(overlap_area(e.patches[i], e.patches[j]) == 0.0,
                "patches of electrode '" + e.name + "' overlap");
      }
    }
  }
  for (std::size_t i = 1; i < zones_.size(); ++i) {
    require(zones_[i].x > zones_[i - 1].x, "zone positions must be strictly increasing");
  }
  std::set<std::string, std::less<>> zone_ids;
  for (const auto& z : zones_) require(zone_ids.insert(z.id).second, "duplicate zone id '" + z.id + "'");

  fixed_voltages_.assign(electrodes_.size(), 0.0);
  double lo = 0.0;
  double hi = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < electrodes_.size(); ++i) {
    if (electrodes_[i].kind != ElectrodeKind::DC) continue;
    dc_indices_.push_back(i);
    for (const auto& p : electrodes_[i].patches) {
      lo = first ? p.x_min : std::min(lo, p.x_min);
      hi = first ? p.x_max : std::max(hi, p.x_max);
      first = false;
    }
  }
  span_ = {lo, hi};
}

std::size_t TrapLayout::electrode_index(std::string_view name) const {
  for (std::size_t i = 0; i < electrodes_.size(); ++i) {
    if (electrodes_[i].name == name) return i;
  }
  fail(ErrorCode::UnknownElectrode, "unknown electrode '" + std::string(name) + "'");
}

bool TrapLayout::has_electrode(std::string_view name) const {
  return std::any_of(electrodes_.begin(), electrodes_.end(),
                     [&](const Electrode& e) { return e.name == name; });
}

std::vector<std::string> TrapLayout::dc_names() const {
  std::vector<std::string> names;
  names.reserve(dc_indices_.size());
  for (auto i : dc_indices_) names.push_back(electrodes_[i].name);
  return names;
}

double TrapLayout::zone_position(std::string_view zone_id) const {
  for (const auto& z : zones_) {
    if (z.id == zone_id) return z.x;
  }
  fail(ErrorCode::InvalidArgument, "unknown zone '" + std::string(zone_id) + "'");
}

bool TrapLayout::has_fixed_sources() const {
  return std::any_of(fixed_voltages_.begin(), fixed_voltages_.end(),
                     [](double v) { return v != 0.0; });
}

TrapLayout TrapLayout::with_fixed_voltages(const std::map<std::string, double>& voltages) const {
  TrapLayout copy = *this;
  for (const auto& [name, v] : voltages) {
    const auto idx = electrode_index(name);
    if (electrodes_[idx].kind == ElectrodeKind::DC) {
      fail(ErrorCode::UnknownElectrode,
           "electrode '" + name + "' is a DC electrode and cannot carry a fixed voltage");
    }
    require(std::isfinite(v), "fixed voltage for '" + name + "' must be finite");
    copy.fixed_voltages_[idx] = v;
  }
  return copy;
}

std::vector<double> TrapLayout::full_voltages(std::span<const double> dc_voltages) const {
  require(dc_voltages.size() == dc_indices_.size(),
          "expected one voltage per DC electrode");
  std::vector<double> v = fixed_voltages_;
  for (std::size_t k = 0; k < dc_indices_.size(); ++k) v[dc_indices_[k]] = dc_voltages[k];
  return v;
}

FieldSample electrode_unit_sample(const Electrode& electrode, const Vec3& point) {
  FieldSample s;
  for (const auto& p : electrode.patches) {
    s.potential += patch_potential(p, point);
    const auto d = patch_derivatives(p, point);
    s.gradient += d.gradient;
    s.hessian += d.hessian;
  }
  return s;
}

ElectrodeBasis::ElectrodeBasis(const TrapLayout& layout, std::span<const Vec3> points)
    : n_points_(points.size()), n_electrodes_(layout.electrode_count()) {
  require(!points.empty(), "electrode basis needs at least one point");
  samples_.resize(n_points_ * n_electrodes_);
  for (std::size_t p = 0; p < n_points_; ++p) {
    for (std::size_t e = 0; e < n_electrodes_; ++e) {
      samples_[p * n_electrodes_ + e] = electrode_unit_sample(layout.electrodes()[e], points[p]);
    }
  }
}

FieldSample ElectrodeBasis::combine(std::size_t point, std::span<const double> voltages) const {
  require(voltages.size() == n_electrodes_, "expected one voltage per electrode");
  require(point < n_points_, "basis point index out of range");
  FieldSample total;
  for (std::size_t e = 0; e < n_electrodes_; ++e) {
    const double v = voltages[e];
    if (v == 0.0) continue;
    const auto& u = unit(point, e);
    total.potential += v * u.potential;
    total.gradient += v * u.gradient;
    total.hessian += v * u.hessian;
  }
  return total;
}

FieldSample sample_potential(const TrapLayout& layout, std::span<const double> voltages,
                             const Vec3& point) {
  require(voltages.size() == layout.electrode_count(), "expected one voltage per electrode");
  FieldSample total;
  for (std::size_t e = 0; e < voltages.size(); ++e) {
    if (voltages[e] == 0.0) continue;
    const auto u = electrode_unit_sample(layout.electrodes()[e], point);
    total.potential += voltages[e] * u.potential;
    total.gradient += voltages[e] * u.gradient;
    total.hessian += voltages[e] * u.hessian;
  }
  return total;
}

void axial_unit_derivatives(const TrapLayout& layout, double x, std::span<double> first,
                            std::span<double> second) {
  const auto n = layout.electrode_count();
  require(first.size() == n && second.size() == n, "output spans must match electrode count");
  const Vec3 point = layout.rf_null(x);
  for (std::size_t e = 0; e < n; ++e) {
    double d1 = 0.0;
    double d2 = 0.0;
    for (const auto& p : layout.electrodes()[e].patches) {
      const auto d = patch_axial_derivatives(p, point);
      d1 += d.first;
      d2 += d.second;
    }
    first[e] = d1;
    second[e] = d2;
  }
}

WellContext WellContext::from_layout(const TrapLayout& layout) {
  WellContext c;
  c.mass = layout.ion().mass;
  c.charge = layout.ion().charge;
  c.pseudo_frequencies = layout.pseudo_frequencies();
  c.rf_height = layout.ion_height();
  std::tie(c.x_min, c.x_max) = layout.axial_span();
  return c;
}

namespace {

[[noreturn]] void no_well(const std::string& why, const Vec3& last) {
  std::ostringstream msg;
  msg.precision(12);
  msg << "no well found: " << why << " (last iterate x = " << last.x() << ", y = " << last.y()
      << ", z = " << last.z() << ")";
  fail(ErrorCode::NoWellFound, msg.str());
}

}  // namespace

PotentialWell find_well(const FieldFunction& field, const WellContext& ctx, double guess,
                        const WellOptions& options) {
  require(ctx.mass > 0.0 && ctx.charge != 0.0, "well context needs mass and charge");
  require(ctx.x_min < ctx.x_max, "well context needs a valid axial span");
  if (!(guess >= ctx.x_min && guess <= ctx.x_max)) {
    fail(ErrorCode::InvalidArgument, "well guess lies outside the electrode span");
  }
  const double q = ctx.charge;
  const double m = ctx.mass;

  // Axial damped Newton on the RF null line.
  double x = guess;
  bool converged = false;
  for (int it = 0; it < options.max_iterations; ++it) {
    const auto s = field(Vec3(x, 0.0, ctx.rf_height));
    const double g = q * s.gradient.x();
    const double c = q * s.hessian(0, 0);
    double dx = 0.0;
    if (c > 0.0) {
      dx = -g / c;
    } else if (g != 0.0) {
      dx = -std::copysign(options.max_step, g);
    } else {
      no_well("axial curvature is not confining", Vec3(x, 0.0, ctx.rf_height));
    }
    dx = std::clamp(dx, -options.max_step, options.max_step);
    const double x_next = std::clamp(x + dx, ctx.x_min, ctx.x_max);
    const double step = x_next - x;
    x = x_next;
    if (std::abs(step) < options.step_tolerance) {
      if (c <= 0.0) no_well("converged onto an axial saddle", Vec3(x, 0.0, ctx.rf_height));
      converged = true;
      break;
    }
  }
  if (!converged) no_well("axial Newton iteration did not converge", Vec3(x, 0.0, ctx.rf_height));

  const Vec3 r(x, 0.0, ctx.rf_height);
  const auto s = field(r);

  Mat3 k = (q / m) * s.hessian;
  k(1, 1) += ctx.pseudo_frequencies[0] * ctx.pseudo_frequencies[0];
  k(2, 2) += ctx.pseudo_frequencies[1] * ctx.pseudo_frequencies[1];
  Eigen::SelfAdjointEigenSolver<Mat3> eig(k);
  const Vec3 lambdas = eig.eigenvalues();
  if (lambdas.minCoeff() <= 0.0) no_well("secular matrix is not positive definite", r);

  PotentialWell well;
  well.position = r;
  well.axial_frequency = std::sqrt(k(0, 0));
  well.hessian = 0.5 * (s.hessian + s.hessian.transpose());
  well.residual_field = -s.gradient;
  well.mode_frequencies = lambdas.cwiseSqrt();

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> radial(k.block<2, 2>(1, 1));
  const Eigen::Vector2d lower = radial.eigenvectors().col(0);
  double angle = std::atan2(lower.y(), lower.x());
  if (angle <= -kPi / 2) angle += kPi;
  if (angle > kPi / 2) angle -= kPi;
  well.radial_mode_angle = angle;
  return well;
}

PotentialWell find_well(const TrapLayout& layout, std::span<const double> dc_voltages,
                        double guess, const WellOptions& options) {
  const auto voltages = layout.full_voltages(dc_voltages);
  auto field = [&](const Vec3& r) { return sample_potential(layout, voltages, r); };
  return find_well(field, WellContext::from_layout(layout), guess, options);
}

}  // namespace iontrap
