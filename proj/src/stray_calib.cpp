#include "iontrap/stray_calib.hpp"

#include <unsupported/Eigen/LevenbergMarquardt>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace iontrap {

void FrequencyProfile::validate() const {
  require(!positions.empty(), "frequency profile is empty");
  require(frequencies.size() == positions.size(), "profile frequencies and positions differ in length");
  require(frequency_errors.empty() || frequency_errors.size() == positions.size(),
          "profile errors and positions differ in length");
  require(base_frequency > 0.0, "profile base frequency must be positive");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    require(std::isfinite(positions[i]) && frequencies[i] > 0.0, "profile frequencies must be positive");
    if (i > 0) require(positions[i] > positions[i - 1], "profile positions must be strictly increasing");
    if (!frequency_errors.empty()) require(frequency_errors[i] >= 0.0, "profile errors must be non-negative");
  }
}

double FrequencyProfile::max_deviation() const {
  double m = 0.0;
  for (double w : frequencies) m = std::max(m, std::abs(w - base_frequency));
  return m;
}

std::vector<double> calibration_positions(const std::vector<double>& centres, double span, std::size_t points) {
  require(span > 0.0 && points >= 2, "calibration needs a positive span and at least two points");
  std::vector<double> out;
  for (double c : centres) {
    for (std::size_t i = 0; i < points; ++i) {
      out.push_back(c - span + 2.0 * span * static_cast<double>(i) / static_cast<double>(points - 1));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

// Axial unit curvature of each named window at each position.
Eigen::MatrixXd window_curvatures(const TrapLayout& layout, const std::vector<std::string>& windows,
                                  const std::vector<double>& positions) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(positions.size()), static_cast<Eigen::Index>(windows.size()));
  for (std::size_t j = 0; j < windows.size(); ++j) {
    const auto& e = layout.electrodes()[layout.electrode_index(windows[j])];
    if (e.kind != ElectrodeKind::Window) {
      fail(ErrorCode::UnknownElectrode, "electrode '" + windows[j] + "' is not a window electrode");
    }
    for (std::size_t i = 0; i < positions.size(); ++i) {
      double d2 = 0.0;
      for (const auto& p : e.patches) d2 += patch_axial_derivatives(p, layout.rf_null(positions[i])).second;
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d2;
    }
  }
  return c;
}

struct ProfileFunctor : Eigen::DenseFunctor<double> {
  ProfileFunctor(const Eigen::MatrixXd& design, const Eigen::VectorXd& measured, const Eigen::VectorXd& sigma,
                 double w0, double qm)
      : Eigen::DenseFunctor<double>(static_cast<int>(design.cols()), static_cast<int>(design.rows())),
        d(design),
        y(measured),
        s(sigma),
        w0_sq(w0 * w0),
        q_over_m(qm),
        floor(1e-6 * w0 * w0) {}

  Eigen::VectorXd model(const Eigen::VectorXd& p) const {
    const Eigen::VectorXd rad = (Eigen::VectorXd::Constant(d.rows(), w0_sq) + q_over_m * d * p).cwiseMax(floor);
    return rad.cwiseSqrt();
  }

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& f) const {
    f = (model(p) - y).cwiseQuotient(s);
    return 0;
  }

  int df(const Eigen::VectorXd& p, Eigen::MatrixXd& j) const {
    const Eigen::VectorXd w = model(p);
    j.resize(d.rows(), d.cols());
    for (Eigen::Index i = 0; i < d.rows(); ++i) j.row(i) = q_over_m * d.row(i) / (2.0 * w[i] * s[i]);
    return 0;
  }

  Eigen::MatrixXd d;
  Eigen::VectorXd y;
  Eigen::VectorXd s;
  double w0_sq;
  double q_over_m;
  double floor;
};

std::vector<std::vector<std::string>> parameter_groups(const std::vector<std::string>& windows,
                                                       const std::vector<std::vector<std::string>>& ties) {
  std::set<std::string> wanted(windows.begin(), windows.end());
  require(wanted.size() == windows.size(), "window list contains duplicates");
  std::set<std::string> tied;
  std::vector<std::vector<std::string>> groups;
  for (const auto& w : windows) {
    if (tied.count(w)) continue;
    const std::vector<std::string>* group = nullptr;
    for (const auto& t : ties) {
      if (std::find(t.begin(), t.end(), w) != t.end()) {
        require(group == nullptr, "window '" + w + "' appears in more than one tie group");
        group = &t;
      }
    }
    if (!group) {
      groups.push_back({w});
      continue;
    }
    std::vector<std::string> g;
    for (const auto& n : *group) {
      if (!wanted.count(n)) continue;
      g.push_back(n);
      tied.insert(n);
    }
    groups.push_back(g);
  }
  return groups;
}

}  // namespace

FrequencyProfile predict_profile(const TrapLayout& layout, const std::map<std::string, double>& window_voltages,
                                 double base_frequency, const std::vector<double>& positions) {
  require(base_frequency > 0.0, "base frequency must be positive");
  require(!positions.empty(), "no positions to predict");
  std::vector<std::string> names;
  Eigen::VectorXd v(static_cast<Eigen::Index>(window_voltages.size()));
  for (const auto& [name, volts] : window_voltages) {
    v[static_cast<Eigen::Index>(names.size())] = volts;
    names.push_back(name);
  }
  const Eigen::MatrixXd c = window_curvatures(layout, names, positions);
  const Eigen::VectorXd curvature = names.empty() ? Eigen::VectorXd::Zero(static_cast<Eigen::Index>(positions.size()))
                                                  : Eigen::VectorXd(c * v);
  FrequencyProfile out;
  out.positions = positions;
  out.base_frequency = base_frequency;
  out.frequency_errors.assign(positions.size(), 0.0);
  std::vector<double> bad;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const double rad = base_frequency * base_frequency +
                       layout.charge_to_mass() * curvature[static_cast<Eigen::Index>(i)];
    if (!(rad > 0.0)) bad.push_back(positions[i]);
    out.frequencies.push_back(rad > 0.0 ? std::sqrt(rad) : 0.0);
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "window curvature overcomes the trap at " << bad.size() << " position(s):";
    for (double x : bad) msg << ' ' << x;
    msg << " m";
    fail(ErrorCode::AntiTrapping, msg.str());
  }
  return out;
}

double WindowFit::sigma(const std::string& window) const {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (std::find(groups[g].begin(), groups[g].end(), window) != groups[g].end()) {
      const auto k = static_cast<Eigen::Index>(g);
      return std::sqrt(covariance(k, k));
    }
  }
  fail(ErrorCode::UnknownElectrode, "window '" + window + "' was not fitted");
}

WindowFit fit_window_voltages(const FrequencyProfile& profile, const TrapLayout& layout,
                              const std::vector<std::string>& windows,
                              const std::vector<std::vector<std::string>>& ties, const FitOptions& options) {
  profile.validate();
  require(!windows.empty(), "no windows to fit");
  const auto groups = parameter_groups(windows, ties);
  const auto n = static_cast<Eigen::Index>(profile.size());
  const auto p = static_cast<Eigen::Index>(groups.size());
  require(n >= p + 2, "profile needs at least two more samples than fit parameters");

  const Eigen::MatrixXd c = window_curvatures(layout, windows, profile.positions);
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index g = 0; g < p; ++g) {
    for (const auto& name : groups[static_cast<std::size_t>(g)]) {
      const auto j = std::find(windows.begin(), windows.end(), name) - windows.begin();
      design.col(g) += c.col(j);
    }
  }

  Eigen::MatrixXd normalized = design;
  for (Eigen::Index g = 0; g < p; ++g) {
    const double norm = normalized.col(g).norm();
    if (norm == 0.0) fail(ErrorCode::RankDeficient, "a window group has no curvature over the sampled positions");
    normalized.col(g) /= norm;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(normalized);
  const auto sv = svd.singularValues();
  if (sv[p - 1] < options.rank_tolerance * sv[0]) {
    fail(ErrorCode::RankDeficient, "window curvature profiles are linearly dependent over the sampled positions");
  }

  const bool weighted = !profile.frequency_errors.empty() &&
                        std::all_of(profile.frequency_errors.begin(), profile.frequency_errors.end(),
                                    [](double s) { return s > 0.0; });
  Eigen::VectorXd y(n);
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = profile.frequencies[static_cast<std::size_t>(i)];
    s[i] = weighted ? profile.frequency_errors[static_cast<std::size_t>(i)] : 1.0;
  }

  ProfileFunctor functor(design, y, s, profile.base_frequency, layout.charge_to_mass());
  Eigen::LevenbergMarquardt<ProfileFunctor> lm(functor);
  lm.setMaxfev(options.max_iterations);
  lm.setXtol(options.step_tolerance);
  lm.setFtol(0.0);
  lm.setGtol(0.0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
  const auto status = lm.minimize(x);
  if (status == Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation ||
      status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters) {
    fail(ErrorCode::NoConvergence, "window voltage fit did not converge");
  }

  Eigen::VectorXd f;
  functor(x, f);
  Eigen::MatrixXd jac;
  functor.df(x, jac);
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::MatrixXd cov = jtj.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  const double chi2 = f.squaredNorm();
  if (!weighted) cov *= chi2 / static_cast<double>(n - p);

  WindowFit out;
  out.groups = groups;
  out.parameters = x;
  out.covariance = cov;
  out.chi_squared = chi2;
  out.iterations = static_cast<int>(lm.iterations());
  out.residual_rms = std::sqrt((functor.model(x) - y).squaredNorm() / static_cast<double>(n));
  out.fitted.ties = ties;
  for (Eigen::Index g = 0; g < p; ++g) {
    for (const auto& name : groups[static_cast<std::size_t>(g)]) out.fitted.voltages[name] = x[g];
  }
  return out;
}

namespace {

std::string nearest_zone(const TrapLayout& layout, double x) {
  require(!layout.zones().empty(), "layout defines no zones");
  const Zone* best = &layout.zones().front();
  for (const auto& z : layout.zones()) {
    if (std::abs(z.x - x) < std::abs(best->x - x)) best = &z;
  }
  return best->id;
}

}  // namespace

FrequencyProfile measure_profile(const TrapLayout& truth, const TrapLayout& model, double base_frequency,
                                 const std::vector<double>& positions, const HardwareLimits& limits,
                                 const SolverOptions& solver, const MeasurementOptions& options) {
  require(base_frequency > 0.0, "base frequency must be positive");
  require(options.noise_fraction >= 0.0, "noise fraction must be non-negative");
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  FrequencyProfile out;
  out.base_frequency = base_frequency;
  out.positions = positions;
  for (double x : positions) {
    ZoneObjective obj;
    obj.zone = nearest_zone(model, x);
    obj.well_position = x;
    obj.axial_frequency = base_frequency;
    PotentialWell well;
    bool settled = false;
    for (int it = 0; it < options.max_iterations; ++it) {
      const auto v = solve_static(model, {obj}, limits, solver);
      well = find_well(truth, v, x);
      const double d = well.position.x() - x;
      if (std::abs(d) < options.position_tolerance) {
        settled = true;
        break;
      }
      obj.field.x() -= well.hessian(0, 0) * d;
    }
    if (!settled) {
      std::ostringstream msg;
      msg << "could not hold the ion at the probe position " << x << " m";
      fail(ErrorCode::NoConvergence, msg.str());
    }
    double w = well.axial_frequency;
    const double sigma = options.noise_fraction * base_frequency;
    if (sigma > 0.0) w += sigma * gauss(rng);
    out.frequencies.push_back(w);
    out.frequency_errors.push_back(sigma);
  }
  return out;
}

std::vector<CompensationRound> iterate_compensation(const std::map<std::string, double>& true_voltages,
                                                    const TrapLayout& layout, double base_frequency,
                                                    const CompensationOptions& options) {
  require(options.rounds >= 1, "at least one calibration round is required");
  require(!options.positions.empty(), "calibration needs probe positions");
  std::vector<std::string> windows = options.windows;
  if (windows.empty()) {
    for (const auto& [name, v] : true_voltages) windows.push_back(name);
  }
  const TrapLayout truth = apply_window_compensation(layout, true_voltages);
  std::map<std::string, double> estimate;
  for (const auto& w : windows) estimate[w] = 0.0;
  for (const auto& [name, v] : options.initial_estimate) estimate[name] = v;

  MeasurementOptions clean = options.measurement;
  clean.noise_fraction = 0.0;
  const bool noiseless = options.measurement.noise_fraction == 0.0;

  std::vector<CompensationRound> rounds;
  int growth = 0;
  for (int r = 1; r <= options.rounds; ++r) {
    const TrapLayout model = apply_window_compensation(layout, estimate);
    MeasurementOptions m = options.measurement;
    m.seed = options.measurement.seed + static_cast<std::uint64_t>(r - 1);
    const auto profile = measure_profile(truth, model, base_frequency, options.positions, options.limits,
                                         options.solver, m);
    CompensationRound round;
    round.round = r;
    round.fit = fit_window_voltages(profile, layout, windows, options.ties, options.fit);
    for (const auto& [name, v] : round.fit.fitted.voltages) estimate[name] += v;
    round.estimate.voltages = estimate;
    round.estimate.ties = options.ties;
    const TrapLayout updated = apply_window_compensation(layout, estimate);
    round.residual = measure_profile(truth, updated, base_frequency, options.positions, options.limits,
                                     options.solver, clean)
                         .max_deviation();
    if (noiseless && !rounds.empty()) {
      growth = round.residual > rounds.back().residual ? growth + 1 : 0;
      if (growth >= 2) {
        std::ostringstream msg;
        msg << "calibration residual grew in two consecutive rounds (round " << r << ": " << round.residual
            << " rad/s)";
        fail(ErrorCode::Diverged, msg.str());
      }
    }
    rounds.push_back(std::move(round));
  }
  return rounds;
}

std::map<std::string, double> micromotion_offset(const TrapLayout& layout,
                                                 const std::map<std::string, double>& window_voltages) {
  std::map<std::string, double> out;
  for (const auto& z : layout.zones()) {
    const Vec3 p = layout.rf_null(z.x);
    double ey = 0.0;
    for (const auto& [name, v] : window_voltages) {
      const auto& e = layout.electrodes()[layout.electrode_index(name)];
      if (e.kind != ElectrodeKind::Window) {
        fail(ErrorCode::UnknownElectrode, "electrode '" + name + "' is not a window electrode");
      }
      for (const auto& patch : e.patches) ey -= v * patch_derivatives(patch, p).gradient.y();
    }
    out[z.id] = ey;
  }
  return out;
}

}  // namespace iontrap
