#include "iontrap/waveform_synth.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace iontrap {

void HardwareLimits::validate() const {
  require(std::isfinite(v_min) && std::isfinite(v_max) && v_min < v_max,
          "hardware limits need v_min < v_max");
  require(awg_sample_period > 0.0 && awg_slew_max > 0.0 && amp_gain > 0.0 && amp_slew_max > 0.0,
          "hardware rates, periods and gain must be positive");
  for (double fc : filter_cutoffs) require(fc > 0.0 && std::isfinite(fc), "filter cutoffs must be positive");
}

double HardwareLimits::max_slew_rate() const { return std::min(awg_slew_max * amp_gain, amp_slew_max); }

void Trajectory::validate() const {
  require(!samples.empty(), "trajectory is empty");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    require(std::isfinite(s.time) && std::isfinite(s.position) && s.field.allFinite(),
            "trajectory values must be finite");
    require(s.frequency > 0.0, "trajectory frequencies must be positive");
    if (i > 0) require(s.time > samples[i - 1].time, "trajectory times must be strictly increasing");
  }
}

Trajectory Trajectory::reversed() const {
  Trajectory r = *this;
  const std::size_t n = samples.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& src = samples[n - 1 - i];
    r.samples[i].position = src.position;
    r.samples[i].frequency = src.frequency;
    r.samples[i].field = src.field;
  }
  return r;
}

double sigmoid_profile(double t, double duration, double steepness) {
  const double ts = std::tanh(steepness);
  const double u = std::clamp(t / duration, 0.0, 1.0);
  return (std::tanh(steepness * (2.0 * u - 1.0)) + ts) / (2.0 * ts);
}

double sigmoid_peak_velocity(double distance, double duration, double steepness) {
  return distance * steepness / (duration * std::tanh(steepness));
}

Trajectory sigmoid_trajectory(double x_start, double x_end, double duration, double steepness,
                              double frequency, std::size_t n_samples) {
  require(duration > 0.0 && std::isfinite(duration), "trajectory duration must be positive");
  require(n_samples >= 2, "trajectory needs at least two samples");
  require(steepness > 0.0, "sigmoid steepness must be positive");
  require(frequency > 0.0, "trajectory frequency must be positive");
  Trajectory traj;
  traj.samples.resize(n_samples);
  const double last = static_cast<double>(n_samples - 1);
  for (std::size_t i = 0; i < n_samples; ++i) {
    auto& s = traj.samples[i];
    s.time = duration * (static_cast<double>(i) / last);
    s.position = x_start + (x_end - x_start) * sigmoid_profile(s.time, duration, steepness);
    s.frequency = frequency;
  }
  traj.samples.back().position = x_end;
  return traj;
}

Trajectory transport_trajectory(double x_start, double x_end, double duration, double frequency,
                                double sample_period, double steepness) {
  require(sample_period > 0.0, "sample period must be positive");
  require(duration >= sample_period, "transport duration must span at least one sample period");
  const auto steps = static_cast<std::size_t>(std::llround(duration / sample_period));
  auto traj = sigmoid_trajectory(x_start, x_end, static_cast<double>(steps) * sample_period, steepness,
                                 frequency, steps + 1);
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    traj.samples[i].time = static_cast<double>(i) * sample_period;
  }
  return traj;
}

namespace {

// One well (or null) condition at one point, expressed on the DC electrodes.
struct TargetPoint {
  Vec3 point = Vec3::Zero();
  Vec3 field = Vec3::Zero();
  bool transverse_field = false;
  std::optional<double> curvature;  // target phi_xx, V/m^2
  bool cross_terms = false;
  bool soft_transverse = false;  // transverse rows of a well objective
};

struct LinearRows {
  Eigen::MatrixXd a;       // scaled rows x DC electrodes
  Eigen::VectorXd b;       // scaled targets with fixed sources removed
  Eigen::VectorXd weight;  // per-row weight relative to the equality weight
};

double curvature_scale(const TrapLayout& layout, const SolverOptions& options) {
  if (options.curvature_scale > 0.0) return options.curvature_scale;
  const double w = kTwoPi * 1e6;
  return layout.ion().mass * w * w / layout.ion().charge;
}

LinearRows build_rows(const TrapLayout& layout, const std::vector<TargetPoint>& targets,
                      const SolverOptions& options) {
  std::vector<Vec3> points;
  for (const auto& t : targets) points.push_back(t.point);
  const ElectrodeBasis basis(layout, points);
  const auto& dc = layout.dc_indices();
  const auto& fixed = layout.fixed_voltages();
  const double fs = options.field_scale;
  const double cs = curvature_scale(layout, options);

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  std::vector<double> weights;
  const auto n_dc = static_cast<Eigen::Index>(dc.size());
  for (std::size_t p = 0; p < targets.size(); ++p) {
    const auto& t = targets[p];
    FieldSample offset;
    for (std::size_t e = 0; e < layout.electrode_count(); ++e) {
      if (fixed[e] == 0.0) continue;
      const auto& u = basis.unit(p, e);
      offset.gradient += fixed[e] * u.gradient;
      offset.hessian += fixed[e] * u.hessian;
    }
    auto add = [&](auto&& coeff, double target, double scale, double weight) {
      if (weight == 0.0) return;
      Eigen::RowVectorXd r(n_dc);
      for (Eigen::Index k = 0; k < n_dc; ++k) r[k] = coeff(basis.unit(p, dc[static_cast<std::size_t>(k)])) / scale;
      rows.push_back(r);
      rhs.push_back(target / scale);
      weights.push_back(weight);
    };
    const double tw = t.soft_transverse ? options.transverse_weight : 1.0;
    add([](const FieldSample& u) { return -u.gradient.x(); }, t.field.x() + offset.gradient.x(), fs, 1.0);
    if (t.transverse_field) {
      add([](const FieldSample& u) { return -u.gradient.y(); }, t.field.y() + offset.gradient.y(), fs, tw);
      add([](const FieldSample& u) { return -u.gradient.z(); }, t.field.z() + offset.gradient.z(), fs, tw);
    }
    if (t.curvature) {
      add([](const FieldSample& u) { return u.hessian(0, 0); }, *t.curvature - offset.hessian(0, 0), cs, 1.0);
    }
    if (t.cross_terms) {
      add([](const FieldSample& u) { return u.hessian(0, 1); }, -offset.hessian(0, 1), cs, tw);
      add([](const FieldSample& u) { return u.hessian(0, 2); }, -offset.hessian(0, 2), cs, tw);
    }
  }
  LinearRows out;
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  out.a.resize(n_rows, n_dc);
  out.b.resize(n_rows);
  out.weight.resize(n_rows);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    out.a.row(i) = rows[static_cast<std::size_t>(i)];
    out.b[i] = rhs[static_cast<std::size_t>(i)];
    out.weight[i] = weights[static_cast<std::size_t>(i)];
  }
  return out;
}

struct BoxSolution {
  Eigen::VectorXd x;
  std::vector<int> bound;  // -1 lower, 0 free, +1 upper
};

// min |M x - d|^2 subject to lo <= x <= hi by a primal active-set method.
// M must have full column rank.
BoxSolution box_least_squares(const Eigen::MatrixXd& m, const Eigen::VectorXd& d, double lo, double hi,
                              int max_iterations) {
  const Eigen::Index n = m.cols();
  BoxSolution sol;
  sol.x = Eigen::VectorXd::Constant(n, std::clamp(0.0, lo, hi));
  sol.bound.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (sol.x[i] == lo) sol.bound[static_cast<std::size_t>(i)] = -1;
    if (sol.x[i] == hi) sol.bound[static_cast<std::size_t>(i)] = +1;
  }
  const double grad_tol = 1e-12 * (m.transpose() * d).cwiseAbs().maxCoeff() + 1e-300;

  for (int it = 0; it < max_iterations; ++it) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sol.bound[static_cast<std::size_t>(i)] == 0) free.push_back(i);
    }
    Eigen::VectorXd z = sol.x;
    if (!free.empty()) {
      Eigen::VectorXd r = d;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (sol.bound[static_cast<std::size_t>(i)] != 0) r -= m.col(i) * sol.x[i];
      }
      Eigen::MatrixXd mf(m.rows(), static_cast<Eigen::Index>(free.size()));
      for (std::size_t k = 0; k < free.size(); ++k) mf.col(static_cast<Eigen::Index>(k)) = m.col(free[k]);
      const Eigen::VectorXd zf = mf.colPivHouseholderQr().solve(r);
      for (std::size_t k = 0; k < free.size(); ++k) z[free[k]] = zf[static_cast<Eigen::Index>(k)];
    }

    bool inside = true;
    double alpha = 1.0;
    for (auto i : free) {
      if (z[i] < lo) {
        inside = false;
        alpha = std::min(alpha, (lo - sol.x[i]) / (z[i] - sol.x[i]));
      } else if (z[i] > hi) {
        inside = false;
        alpha = std::min(alpha, (hi - sol.x[i]) / (z[i] - sol.x[i]));
      }
    }
    if (!inside) {
      alpha = std::clamp(alpha, 0.0, 1.0);
      for (auto i : free) {
        sol.x[i] += alpha * (z[i] - sol.x[i]);
        const bool hit_lo = z[i] < lo && sol.x[i] <= lo + 1e-12 * (hi - lo);
        const bool hit_hi = z[i] > hi && sol.x[i] >= hi - 1e-12 * (hi - lo);
        if (hit_lo) {
          sol.x[i] = lo;
          sol.bound[static_cast<std::size_t>(i)] = -1;
        } else if (hit_hi) {
          sol.x[i] = hi;
          sol.bound[static_cast<std::size_t>(i)] = +1;
        }
      }
      continue;
    }

    sol.x = z;
    const Eigen::VectorXd g = m.transpose() * (m * sol.x - d);
    Eigen::Index release = -1;
    double worst = grad_tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int b = sol.bound[static_cast<std::size_t>(i)];
      const double violation = b < 0 ? -g[i] : (b > 0 ? g[i] : 0.0);
      if (violation > worst) {
        worst = violation;
        release = i;
      }
    }
    if (release < 0) return sol;
    sol.bound[static_cast<std::size_t>(release)] = 0;
  }
  fail(ErrorCode::NoConvergence, "bounded least-squares active set did not converge");
}

std::string bound_report(const std::vector<std::string>& names, const BoxSolution& sol) {
  std::ostringstream msg;
  bool any = false;
  for (std::size_t i = 0; i < sol.bound.size(); ++i) {
    if (sol.bound[i] == 0) continue;
    msg << (any ? ", " : "") << names[i] << (sol.bound[i] < 0 ? " at lower bound" : " at upper bound");
    any = true;
  }
  if (!any) msg << "no electrode at a bound";
  return msg.str();
}

// Solves one regularised, bounded problem and verifies the target rows.
std::vector<double> solve_rows(const LinearRows& rows, const TrapLayout& layout, const HardwareLimits& limits,
                               const SolverOptions& options, const Eigen::VectorXd* reference,
                               double smoothness, const std::string& context) {
  const Eigen::Index n = rows.a.cols();
  const Eigen::Index r = rows.a.rows();
  const bool smooth = reference != nullptr && smoothness > 0.0;
  const Eigen::Index total = r + n + (smooth ? n : 0);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(total, n);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(total);
  m.topRows(r) = options.equality_weight * rows.weight.asDiagonal() * rows.a;
  d.head(r) = options.equality_weight * rows.weight.cwiseProduct(rows.b);
  m.block(r, 0, n, n) = std::sqrt(options.regularization) * Eigen::MatrixXd::Identity(n, n);
  if (smooth) {
    m.block(r + n, 0, n, n) = std::sqrt(smoothness) * Eigen::MatrixXd::Identity(n, n);
    d.segment(r + n, n) = std::sqrt(smoothness) * *reference;
  }
  const auto sol = box_least_squares(m, d, limits.electrode_min(), limits.electrode_max(),
                                     options.max_active_set_iterations);
  double residual = 0.0;
  const Eigen::VectorXd miss = rows.a * sol.x - rows.b;
  for (Eigen::Index i = 0; i < r; ++i) {
    if (rows.weight[i] == 1.0) residual = std::max(residual, std::abs(miss[i]));
  }
  if (!(residual <= options.residual_tolerance)) {
    std::ostringstream msg;
    msg << context << "targets not reachable within limits (scaled residual " << residual << "; "
        << bound_report(layout.dc_names(), sol) << ")";
    fail(ErrorCode::Infeasible, msg.str());
  }
  return {sol.x.data(), sol.x.data() + n};
}

void validate_options(const SolverOptions& o) {
  require(o.regularization > 0.0, "regularization weight must be positive");
  require(o.smoothness >= 0.0, "smoothness weight must be non-negative");
  require(o.equality_weight > 0.0 && o.field_scale > 0.0 && o.curvature_scale >= 0.0,
          "solver weights and scales must be positive");
  require(o.transverse_weight >= 0.0 && o.transverse_weight <= 1.0, "transverse weight must lie in [0, 1]");
  require(o.residual_tolerance > 0.0, "residual tolerance must be positive");
}

double target_curvature(const TrapLayout& layout, double omega) {
  return layout.ion().mass * omega * omega / layout.ion().charge;
}

}  // namespace

std::vector<double> solve_static(const TrapLayout& layout, const std::vector<ZoneObjective>& objectives,
                                 const HardwareLimits& limits, const SolverOptions& options) {
  limits.validate();
  validate_options(options);
  std::vector<TargetPoint> targets;
  std::set<std::string> seen;
  for (const auto& o : objectives) {
    require(seen.insert(o.zone).second, "zone '" + o.zone + "' has more than one objective");
    const double x = o.well_position.value_or(layout.zone_position(o.zone));
    require(o.axial_frequency.has_value() != o.null_curvature,
            "zone '" + o.zone + "' needs exactly one of a frequency target or null curvature");
    require(o.field.allFinite(), "field target must be finite");
    TargetPoint t;
    t.point = layout.rf_null(x);
    t.field = o.field;
    if (o.axial_frequency) {
      require(*o.axial_frequency > 0.0, "target frequency must be positive");
      t.curvature = target_curvature(layout, *o.axial_frequency);
      t.transverse_field = true;
      t.cross_terms = true;
      t.soft_transverse = !o.null_field;
    } else {
      t.curvature = 0.0;
    }
    if (o.null_field) t.transverse_field = true;
    targets.push_back(t);
  }
  if (targets.empty()) return std::vector<double>(layout.dc_count(), 0.0);
  const auto rows = build_rows(layout, targets, options);
  return solve_rows(rows, layout, limits, options, nullptr, 0.0, "");
}

std::vector<double> Waveform::row(std::size_t i) const {
  std::vector<double> r(n_electrodes());
  for (std::size_t e = 0; e < r.size(); ++e) r[e] = samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e));
  return r;
}

std::vector<double> Waveform::channel(std::size_t e) const {
  std::vector<double> c(n_samples());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e));
  return c;
}

void Waveform::validate() const {
  require(samples.rows() >= 1, "waveform has no samples");
  require(static_cast<std::size_t>(samples.cols()) == electrode_names.size(),
          "waveform column count must match its electrode names");
  require(sample_period > 0.0 && std::isfinite(sample_period), "waveform sample period must be positive");
  require(samples.allFinite(), "waveform voltages must be finite");
}

namespace {

struct Violation {
  ErrorCode code;
  std::string message;
};

std::optional<Violation> find_violation(const Waveform& w) {
  const double lo = w.limits.electrode_min();
  const double hi = w.limits.electrode_max();
  const double step = w.limits.max_slew_rate() * w.sample_period;
  const double slack = 1e-9 * std::max(std::abs(lo), std::abs(hi));
  for (Eigen::Index i = 0; i < w.samples.rows(); ++i) {
    for (Eigen::Index e = 0; e < w.samples.cols(); ++e) {
      const double v = w.samples(i, e);
      if (v < lo - slack || v > hi + slack) {
        std::ostringstream msg;
        msg << "electrode '" << w.electrode_names[static_cast<std::size_t>(e)] << "' sample " << i << ": " << v
            << " V outside [" << lo << ", " << hi << "] V";
        return Violation{ErrorCode::Infeasible, msg.str()};
      }
      if (i > 0) {
        const double dv = std::abs(v - w.samples(i - 1, e));
        if (dv > step * (1.0 + 1e-9)) {
          std::ostringstream msg;
          msg << "electrode '" << w.electrode_names[static_cast<std::size_t>(e)] << "' sample " << i
              << ": step of " << dv << " V exceeds the slew limit of " << step << " V per sample";
          return Violation{ErrorCode::SlewViolation, msg.str()};
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace

void check_limits(const Waveform& waveform) {
  waveform.validate();
  if (auto v = find_violation(waveform)) fail(v->code, v->message);
}

Waveform synthesize_waveform(const TrapLayout& layout, const Trajectory& trajectory,
                             const HardwareLimits& limits, const SolverOptions& options) {
  limits.validate();
  validate_options(options);
  trajectory.validate();
  const std::size_t n = trajectory.size();
  const auto [x_lo, x_hi] = layout.axial_span();
  double period = limits.awg_sample_period;
  if (n >= 2) {
    period = (trajectory.samples.back().time - trajectory.samples.front().time) / static_cast<double>(n - 1);
    for (std::size_t i = 1; i < n; ++i) {
      const double dt = trajectory.samples[i].time - trajectory.samples[i - 1].time;
      require(std::abs(dt - period) <= 1e-6 * period, "trajectory samples must be uniformly spaced");
    }
    require(period >= limits.awg_sample_period * (1.0 - 1e-9),
            "trajectory sample spacing is shorter than the AWG sample period");
  }

  std::vector<LinearRows> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = trajectory.samples[i];
    require(s.position >= x_lo && s.position <= x_hi, "trajectory leaves the electrode span");
    TargetPoint t;
    t.point = layout.rf_null(s.position);
    t.field = s.field;
    t.transverse_field = true;
    t.curvature = target_curvature(layout, s.frequency);
    t.cross_terms = true;
    t.soft_transverse = true;
    rows[i] = build_rows(layout, {t}, options);
  }

  auto context = [&](std::size_t i) {
    std::ostringstream msg;
    msg << "sample " << i << " (t = " << trajectory.samples[i].time << " s): ";
    return msg.str();
  };

  const std::size_t n_dc = layout.dc_count();
  Eigen::MatrixXd first(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_dc));
  auto solve_range = [&](auto&& body) {
    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n)));
    if (threads == 1) {
      for (std::size_t i = 0; i < n; ++i) body(i);
      return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += threads) body(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  };

  solve_range([&](std::size_t i) {
    const auto v = solve_rows(rows[i], layout, limits, options, nullptr, 0.0, context(i));
    for (std::size_t e = 0; e < n_dc; ++e) first(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e)) = v[e];
  });

  Eigen::MatrixXd result = first;
  if (n >= 2 && options.smoothness > 0.0) {
    solve_range([&](std::size_t i) {
      const auto ii = static_cast<Eigen::Index>(i);
      Eigen::VectorXd ref;
      if (i == 0) {
        ref = first.row(1).transpose();
      } else if (i + 1 == n) {
        ref = first.row(ii - 1).transpose();
      } else {
        ref = 0.5 * (first.row(ii - 1) + first.row(ii + 1)).transpose();
      }
      const auto v = solve_rows(rows[i], layout, limits, options, &ref, options.smoothness, context(i));
      for (std::size_t e = 0; e < n_dc; ++e) result(ii, static_cast<Eigen::Index>(e)) = v[e];
    });
  }

  Waveform w;
  w.electrode_names = layout.dc_names();
  w.samples = std::move(result);
  w.sample_period = period;
  w.start_time = trajectory.samples.front().time;
  w.limits = limits;
  check_limits(w);
  return w;
}

AuditReport audit_waveform(const TrapLayout& layout, const Trajectory& trajectory, const Waveform& waveform) {
  require(trajectory.size() == waveform.n_samples(), "trajectory and waveform lengths differ");
  require(waveform.electrode_names == layout.dc_names(), "waveform electrodes do not match the layout");
  AuditReport report;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto& s = trajectory.samples[i];
    const auto well = find_well(layout, waveform.row(i), s.position);
    const double dx = std::abs(well.position.x() - s.position);
    const double df = std::abs(well.axial_frequency - s.frequency) / s.frequency;
    if (dx > report.max_position_error) {
      report.max_position_error = dx;
      report.worst_position_sample = i;
    }
    if (df > report.max_frequency_error) {
      report.max_frequency_error = df;
      report.worst_frequency_sample = i;
    }
  }
  return report;
}

TrapLayout apply_window_compensation(const TrapLayout& layout,
                                     const std::map<std::string, double>& window_voltages) {
  for (const auto& [name, v] : window_voltages) {
    const auto idx = layout.electrode_index(name);
    if (layout.electrodes()[idx].kind != ElectrodeKind::Window) {
      fail(ErrorCode::UnknownElectrode, "electrode '" + name + "' is not a window electrode");
    }
  }
  return layout.with_fixed_voltages(window_voltages);
}

Waveform precompensate_filter(const Waveform& waveform, const HardwareLimits& limits) {
  waveform.validate();
  limits.validate();
  if (limits.filter_cutoffs.empty()) return waveform;
  require(std::abs(waveform.sample_period - limits.awg_sample_period) <= 1e-9 * limits.awg_sample_period,
          "waveform sample period must match the AWG sample period");
  const auto cascade = limits.filter();
  Waveform out = waveform;
  out.limits = limits;
  for (std::size_t e = 0; e < waveform.n_electrodes(); ++e) {
    const auto u = cascade.invert(waveform.channel(e));
    for (std::size_t i = 0; i < u.size(); ++i) {
      out.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e)) = u[i];
    }
  }
  if (auto v = find_violation(out)) {
    fail(ErrorCode::Infeasible, "filter precompensation exceeds hardware limits: " + v->message);
  }
  return out;
}

}  // namespace iontrap
