#include "iontrap/dynamics_sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <sstream>
#include <thread>

namespace iontrap {

Waveform filter_response(const Waveform& waveform, const FilterCascade& cascade) {
  waveform.validate();
  Waveform out = waveform;
  if (cascade.empty()) return out;
  if (std::abs(cascade.sample_period() - waveform.sample_period) > 1e-9 * waveform.sample_period) {
    std::ostringstream msg;
    msg << "filter sample period " << cascade.sample_period() << " s does not match the waveform period "
        << waveform.sample_period << " s";
    fail(ErrorCode::InvalidArgument, msg.str());
  }
  for (Eigen::Index e = 0; e < out.samples.cols(); ++e) {
    const Eigen::VectorXd column = waveform.samples.col(e);
    const auto filtered = cascade.apply(std::span<const double>(column.data(), static_cast<std::size_t>(column.size())));
    for (Eigen::Index i = 0; i < out.samples.rows(); ++i) out.samples(i, e) = filtered[static_cast<std::size_t>(i)];
  }
  return out;
}

void IonTrajectory::validate() const {
  require(!times.empty(), "trajectory is empty");
  require(positions.size() == times.size() && velocities.size() == times.size() && energies.size() == times.size(),
          "trajectory arrays differ in length");
  for (std::size_t i = 1; i < times.size(); ++i) {
    require(times[i] > times[i - 1], "trajectory times must be strictly increasing");
  }
}

namespace {

// Electrode voltages along time plus per-electrode axial derivatives.
class AxialPotential {
 public:
  AxialPotential(const TrapLayout& layout, const Waveform& waveform) : layout_(layout) {
    const auto& electrodes = layout.electrodes();
    std::vector<int> column(electrodes.size(), -1);
    for (std::size_t c = 0; c < waveform.electrode_names.size(); ++c) {
      const auto& name = waveform.electrode_names[c];
      if (!layout.has_electrode(name)) fail(ErrorCode::UnknownElectrode, "waveform electrode '" + name + "' is not in the layout");
      const auto e = layout.electrode_index(name);
      if (electrodes[e].kind != ElectrodeKind::DC) {
        fail(ErrorCode::UnknownElectrode, "waveform electrode '" + name + "' is not a DC electrode");
      }
      column[e] = static_cast<int>(c);
    }
    const auto& fixed = layout.fixed_voltages();
    for (std::size_t e = 0; e < electrodes.size(); ++e) {
      if (column[e] >= 0) {
        if (waveform.samples.col(column[e]).cwiseAbs().maxCoeff() == 0.0) continue;
        driven_.push_back(e);
        columns_.push_back(column[e]);
      } else if (fixed[e] != 0.0) {
        static_.push_back(e);
      }
    }
    samples_ = waveform.samples;
    period_ = waveform.sample_period;
    start_ = waveform.start_time;
  }

  double start() const { return start_; }
  double end() const { return start_ + period_ * static_cast<double>(samples_.rows() - 1); }

  // Voltages of the driven electrodes at time t.
  void voltages(double t, std::vector<double>& v) const {
    v.resize(driven_.size());
    double s = (t - start_) / period_;
    const auto last = static_cast<double>(samples_.rows() - 1);
    s = std::clamp(s, 0.0, last);
    auto i = static_cast<Eigen::Index>(std::floor(s));
    if (i >= samples_.rows() - 1) i = std::max<Eigen::Index>(samples_.rows() - 2, 0);
    const double f = samples_.rows() > 1 ? s - static_cast<double>(i) : 0.0;
    for (std::size_t k = 0; k < driven_.size(); ++k) {
      const auto c = columns_[k];
      const double a = samples_(i, c);
      const double b = samples_.rows() > 1 ? samples_(i + 1, c) : a;
      v[k] = a + f * (b - a);
    }
  }

  // dphi/dx and d2phi/dx2 on the RF null line.
  std::pair<double, double> axial(double x, const std::vector<double>& v) const {
    const Vec3 p = layout_.rf_null(x);
    double g = 0.0;
    double c = 0.0;
    const auto& electrodes = layout_.electrodes();
    for (std::size_t k = 0; k < driven_.size(); ++k) {
      for (const auto& patch : electrodes[driven_[k]].patches) {
        const auto d = patch_axial_derivatives(patch, p);
        g += v[k] * d.first;
        c += v[k] * d.second;
      }
    }
    const auto& fixed = layout_.fixed_voltages();
    for (auto e : static_) {
      for (const auto& patch : electrodes[e].patches) {
        const auto d = patch_axial_derivatives(patch, p);
        g += fixed[e] * d.first;
        c += fixed[e] * d.second;
      }
    }
    return {g, c};
  }

  double potential(double x, const std::vector<double>& v) const {
    const Vec3 p = layout_.rf_null(x);
    double phi = 0.0;
    const auto& electrodes = layout_.electrodes();
    for (std::size_t k = 0; k < driven_.size(); ++k) {
      for (const auto& patch : electrodes[driven_[k]].patches) phi += v[k] * patch_potential(patch, p);
    }
    const auto& fixed = layout_.fixed_voltages();
    for (auto e : static_) {
      for (const auto& patch : electrodes[e].patches) phi += fixed[e] * patch_potential(patch, p);
    }
    return phi;
  }

  // Axial minimum near `guess`, or nullopt when Newton finds none.
  std::optional<double> minimum(double guess, const std::vector<double>& v) const {
    const auto [lo, hi] = layout_.axial_span();
    double x = guess;
    for (int it = 0; it < 60; ++it) {
      const auto [g, c] = axial(x, v);
      if (!(c > 0.0)) return std::nullopt;
      const double dx = std::clamp(-g / c, -20e-6, 20e-6);
      x = std::clamp(x + dx, lo, hi);
      if (std::abs(dx) < 1e-13) return x;
    }
    return std::nullopt;
  }

  std::vector<double> dc_voltages_at_end() const {
    std::vector<double> dc(layout_.dc_count(), 0.0);
    const auto& idx = layout_.dc_indices();
    for (std::size_t k = 0; k < driven_.size(); ++k) {
      const auto pos = std::find(idx.begin(), idx.end(), driven_[k]) - idx.begin();
      dc[static_cast<std::size_t>(pos)] = samples_(samples_.rows() - 1, columns_[k]);
    }
    return dc;
  }

 private:
  const TrapLayout& layout_;
  std::vector<std::size_t> driven_;
  std::vector<Eigen::Index> columns_;
  std::vector<std::size_t> static_;
  Eigen::MatrixXd samples_;
  double period_ = 0.0;
  double start_ = 0.0;
};

Waveform with_hold(const Waveform& w, double hold_time) {
  if (hold_time <= 0.0) return w;
  const auto extra = static_cast<Eigen::Index>(std::ceil(hold_time / w.sample_period - 1e-9));
  Waveform out = w;
  out.samples.conservativeResize(w.samples.rows() + extra, Eigen::NoChange);
  for (Eigen::Index i = w.samples.rows(); i < out.samples.rows(); ++i) out.samples.row(i) = w.samples.row(w.samples.rows() - 1);
  return out;
}

[[noreturn]] void lost(const std::string& why, double t, double x) {
  std::ostringstream msg;
  msg.precision(10);
  msg << "ion lost at t = " << t << " s, x = " << x << " m: " << why;
  fail(ErrorCode::IonLost, msg.str());
}

IonTrajectory integrate(const TrapLayout& layout, const Waveform& waveform, const std::optional<FilterCascade>& cascade,
                        double x0, double v0, const IntegrationOptions& options, bool track_energy) {
  waveform.validate();
  require(options.dt > 0.0 && std::isfinite(options.dt), "integration step must be positive");
  require(options.output_stride >= 1, "output stride must be at least 1");
  require(options.hold_time >= 0.0, "hold time must be non-negative");
  require(std::isfinite(x0) && std::isfinite(v0), "initial state must be finite");
  const auto [lo, hi] = layout.axial_span();
  if (!(x0 >= lo && x0 <= hi)) fail(ErrorCode::InvalidArgument, "initial position lies outside the electrode span");

  Waveform drive = with_hold(waveform, options.hold_time);
  if (cascade && !cascade->empty()) drive = filter_response(drive, *cascade);
  const AxialPotential field(layout, drive);

  const double q = layout.ion().charge;
  const double m = layout.ion().mass;
  const double dt = options.dt;
  const double max_phase = kTwoPi / 50.0;
  const double t0 = field.start();
  const auto steps = static_cast<std::size_t>(std::floor((field.end() - t0) / dt + 1e-9));

  std::vector<double> v;
  field.voltages(t0, v);
  auto [g, c] = field.axial(x0, v);
  auto check_step = [&](double curvature, double t, double x) {
    if (q * curvature / m * dt * dt > max_phase * max_phase) {
      std::ostringstream msg;
      msg << "time step " << dt << " s exceeds 1/50 of the local oscillation period at t = " << t
          << " s, x = " << x << " m";
      fail(ErrorCode::InvalidArgument, msg.str());
    }
  };
  check_step(c, t0, x0);

  IonTrajectory out;
  const std::size_t n_out = steps / options.output_stride + 1;
  out.times.reserve(n_out);
  out.positions.reserve(n_out);
  out.velocities.reserve(n_out);
  out.energies.reserve(n_out);

  std::optional<double> well = x0;
  auto record = [&](double t, double x, double vel, const std::vector<double>& volts) {
    out.times.push_back(t);
    out.positions.push_back(x);
    out.velocities.push_back(vel);
    double e = std::numeric_limits<double>::quiet_NaN();
    if (track_energy) {
      well = field.minimum(well.value_or(x), volts);
      if (!well) well = field.minimum(x, volts);
      if (well) e = 0.5 * m * vel * vel + q * (field.potential(x, volts) - field.potential(*well, volts));
    }
    out.energies.push_back(e);
  };

  double x = x0;
  double vel = v0;
  double acc = -q * g / m;
  double omega_ref = c > 0.0 ? std::sqrt(q * c / m) : 0.0;
  double unconfined_since = c > 0.0 ? -1.0 : t0;
  record(t0, x, vel, v);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    x += vel * dt + 0.5 * acc * dt * dt;
    if (!(x >= lo && x <= hi)) lost("left the electrode span", t, x);
    field.voltages(t, v);
    std::tie(g, c) = field.axial(x, v);
    const double acc_new = -q * g / m;
    vel += 0.5 * (acc + acc_new) * dt;
    acc = acc_new;
    if (c > 0.0) {
      check_step(c, t, x);
      omega_ref = std::sqrt(q * c / m);
      unconfined_since = -1.0;
    } else {
      if (unconfined_since < 0.0) unconfined_since = t;
      const double period = omega_ref > 0.0 ? kTwoPi / omega_ref : 0.0;
      if (t - unconfined_since > period) lost("axial curvature anti-trapping for longer than one period", t, x);
    }
    if (k % options.output_stride == 0) record(t, x, vel, v);
  }

  if (track_energy && options.hold_time > 0.0) {
    try {
      const auto final_well = find_well(layout, field.dc_voltages_at_end(), x);
      if (options.hold_time * final_well.axial_frequency >= 3.0 * kTwoPi) {
        out.final_nbar = motional_excitation(out, final_well, m);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoWellFound && e.code() != ErrorCode::InvalidArgument) throw;
    }
  }
  return out;
}

}  // namespace

IonTrajectory integrate_motion(const TrapLayout& layout, const Waveform& waveform,
                               const std::optional<FilterCascade>& cascade, double x0, double v0,
                               const IntegrationOptions& options) {
  return integrate(layout, waveform, cascade, x0, v0, options, true);
}

double motional_excitation(const IonTrajectory& trajectory, const PotentialWell& final_well, double mass,
                           double periods) {
  trajectory.validate();
  require(mass > 0.0 && periods > 0.0, "mass and averaging periods must be positive");
  const double w = final_well.axial_frequency;
  require(w > 0.0, "final well has no axial frequency");
  const double window = periods * kTwoPi / w;
  const double t_end = trajectory.times.back();
  if (t_end - trajectory.times.front() < window) {
    fail(ErrorCode::InvalidArgument, "trajectory is shorter than the averaging window");
  }
  const double xw = final_well.position.x();
  double harmonic = 0.0;
  double exact = 0.0;
  std::size_t count = 0;
  std::size_t exact_count = 0;
  for (std::size_t i = trajectory.size(); i-- > 0;) {
    if (trajectory.times[i] < t_end - window) break;
    const double dx = trajectory.positions[i] - xw;
    const double v = trajectory.velocities[i];
    harmonic += 0.5 * mass * (v * v + w * w * dx * dx);
    ++count;
    if (std::isfinite(trajectory.energies[i])) {
      exact += trajectory.energies[i];
      ++exact_count;
    }
  }
  if (count < 8) fail(ErrorCode::InvalidArgument, "too few trajectory samples in the averaging window");
  harmonic /= static_cast<double>(count);
  const double quantum = kHbar * w;
  if (exact_count == count) {
    exact /= static_cast<double>(exact_count);
    if (exact > 10.0 * quantum && std::abs(harmonic - exact) > 0.1 * exact) {
      std::ostringstream msg;
      msg << "final motion is outside the harmonic region (harmonic energy " << harmonic << " J, exact " << exact
          << " J)";
      fail(ErrorCode::InvalidArgument, msg.str());
    }
  }
  return harmonic / quantum;
}

void DopplerMap::validate() const {
  require(static_cast<std::size_t>(excitation.rows()) == probe_delays.size() &&
              static_cast<std::size_t>(excitation.cols()) == detunings.size(),
          "doppler map dimensions do not match its axes");
  require(excitation.size() == 0 || (excitation.minCoeff() >= 0.0 && excitation.maxCoeff() <= 1.0),
          "doppler map entries must lie in [0, 1]");
}

namespace {

double excitation_after(const std::vector<double>& steps, double h, double detuning, double k, double rabi) {
  using C = std::complex<double>;
  C g(1.0, 0.0);
  C e(0.0, 0.0);
  for (double vel : steps) {
    const double delta = detuning + k * vel;
    const double big = std::hypot(rabi, delta);
    const double theta = 0.5 * big * h;
    const double c = std::cos(theta);
    const double s = big > 0.0 ? std::sin(theta) / big : 0.5 * h;
    // exp(-i h [(rabi/2) sx - (delta/2) sz])
    const C u00(c, s * delta);
    const C u11(c, -s * delta);
    const C u01(0.0, -s * rabi);
    const C g2 = u00 * g + u01 * e;
    const C e2 = u01 * g + u11 * e;
    g = g2;
    e = e2;
  }
  return std::clamp(std::norm(e), 0.0, 1.0);
}

// Grid velocities over [t_start, t_start + duration], one per interval (midpoint).
std::vector<double> window_velocities(const IonTrajectory& tr, double h, double delay, double duration) {
  const double first = (delay) / h;
  const auto i0 = static_cast<std::size_t>(std::llround(first));
  const auto n = static_cast<std::size_t>(std::llround(duration / h));
  if (i0 + n >= tr.size() || delay < 0.0) {
    std::ostringstream msg;
    msg << "probe window starting at delay " << delay << " s exceeds the trajectory";
    fail(ErrorCode::InvalidArgument, msg.str());
  }
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = 0.5 * (tr.velocities[i0 + j] + tr.velocities[i0 + j + 1]);
  return out;
}

double grid_step(const IonTrajectory& tr) {
  require(tr.size() >= 2, "trajectory needs at least two samples");
  const double h = (tr.times.back() - tr.times.front()) / static_cast<double>(tr.size() - 1);
  for (std::size_t i = 1; i < tr.size(); ++i) {
    require(std::abs(tr.times[i] - tr.times[i - 1] - h) <= 1e-6 * h, "trajectory times must be uniformly spaced");
  }
  return h;
}

}  // namespace

DopplerMap doppler_map(const IonTrajectory& trajectory, const ProbeSettings& probe,
                       const std::vector<double>& delays, const std::vector<double>& detunings, unsigned threads) {
  trajectory.validate();
  require(probe.duration > 0.0 && probe.rabi_rate > 0.0 && std::isfinite(probe.wavevector),
          "probe needs a positive duration and Rabi rate");
  require(!delays.empty() && !detunings.empty(), "doppler map needs delays and detunings");
  const double h = grid_step(trajectory);
  require(probe.duration >= h, "probe is shorter than the trajectory grid");

  std::vector<std::vector<double>> windows;
  std::size_t chirped = 0;
  for (double d : delays) {
    windows.push_back(window_velocities(trajectory, h, d, probe.duration));
    const auto [mn, mx] = std::minmax_element(windows.back().begin(), windows.back().end());
    if (std::abs(probe.wavevector) * (*mx - *mn) > kTwoPi / probe.duration) ++chirped;
  }

  DopplerMap map;
  map.probe_delays = delays;
  map.detunings = detunings;
  map.wavevector = probe.wavevector;
  map.probe_duration = probe.duration;
  map.rabi_rate = probe.rabi_rate;
  map.excitation.resize(static_cast<Eigen::Index>(delays.size()), static_cast<Eigen::Index>(detunings.size()));
  if (chirped > 0) {
    std::ostringstream msg;
    msg << chirped << " of " << delays.size()
        << " probe windows see a Doppler chirp wider than the Fourier limit of the probe";
    map.warnings.push_back(msg.str());
  }

  auto row = [&](std::size_t i) {
    for (std::size_t j = 0; j < detunings.size(); ++j) {
      map.excitation(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          excitation_after(windows[i], h, detunings[j], probe.wavevector, probe.rabi_rate);
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(delays.size())));
  if (n_threads == 1) {
    for (std::size_t i = 0; i < delays.size(); ++i) row(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < delays.size(); i += n_threads) row(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return map;
}

DopplerMap doppler_map(const TrapLayout& layout, const Waveform& waveform, const std::optional<FilterCascade>& cascade,
                       double x0, double v0, const IntegrationOptions& options, const ProbeSettings& probe,
                       const std::vector<double>& delays, const std::vector<double>& detunings, unsigned threads) {
  const auto trajectory = integrate(layout, waveform, cascade, x0, v0, options, false);
  return doppler_map(trajectory, probe, delays, detunings, threads);
}

namespace {
constexpr double kRidgeFloor = 0.05;
}

std::vector<double> doppler_ridge(const DopplerMap& map) {
  map.validate();
  std::vector<double> ridge;
  const auto cols = map.excitation.cols();
  for (Eigen::Index i = 0; i < map.excitation.rows(); ++i) {
    const auto r = map.excitation.row(i);
    Eigen::Index peak = 0;
    const double top = r.maxCoeff(&peak);
    if (!(top > 1e-6) || top - r.minCoeff() < 1e-9) {
      std::ostringstream msg;
      msg << "no excitation peak at probe delay " << map.probe_delays[static_cast<std::size_t>(i)] << " s";
      fail(ErrorCode::NoPeak, msg.str());
    }
    Eigen::Index a = peak;
    Eigen::Index b = peak;
    const double floor = kRidgeFloor * top;
    while (a > 0 && r[a - 1] >= floor) --a;
    while (b + 1 < cols && r[b + 1] >= floor) ++b;
    double sw = 0.0;
    double s = 0.0;
    for (Eigen::Index j = a; j <= b; ++j) {
      sw += r[j];
      s += r[j] * map.detunings[static_cast<std::size_t>(j)];
    }
    ridge.push_back(s / sw);
  }
  return ridge;
}

std::vector<double> probe_mean_velocities(const IonTrajectory& trajectory, const std::vector<double>& delays,
                                          double duration) {
  trajectory.validate();
  const double h = grid_step(trajectory);
  std::vector<double> out;
  for (double d : delays) {
    const auto w = window_velocities(trajectory, h, d, duration);
    double s = 0.0;
    for (double v : w) s += v;
    out.push_back(s / static_cast<double>(w.size()));
  }
  return out;
}

}  // namespace iontrap
