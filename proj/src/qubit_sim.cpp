#include "iontrap/qubit_sim.hpp"

#include <unsupported/Eigen/LevenbergMarquardt>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace iontrap {

namespace {

constexpr Complex kI(0.0, 1.0);

std::pair<int, int> levels(LevelPair pair) {
  switch (pair) {
    case LevelPair::Down1: return {0, 2};
    case LevelPair::OneUp: return {1, 2};
    case LevelPair::DownUp: return {0, 1};
  }
  return {0, 1};
}

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  const unsigned t = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += t) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::mt19937_64 point_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

double final_down(const ThreeLevelUnitary& first, const ThreeLevelUnitary& second) {
  const Eigen::Vector3cd psi = second * (first * ThreeLevelState::down().amplitudes);
  return std::norm(psi[0]);
}

double pi_infidelity(double epsilon, bool composite) {
  require(std::abs(epsilon) < 0.5, "pulse area error must satisfy |epsilon| < 0.5");
  const double area = kPi * (1.0 + epsilon);
  ThreeLevelUnitary u = rotation(LevelPair::Down1, area, 0.0);
  if (composite) {
    const double p1 = std::acos(-0.25);
    for (double phase : {p1, 3.0 * p1, 3.0 * p1, p1}) u = rotation(LevelPair::Down1, area, phase) * u;
  }
  const Eigen::Vector3cd target = rotation(LevelPair::Down1, kPi, 0.0).col(0);
  const Eigen::Vector3cd psi = u.col(0);
  return std::max(0.0, 1.0 - std::norm(target.dot(psi)));
}

// Thermal carrier model and its derivatives with respect to nbar and rabi.
struct CarrierTerms {
  double value = 1.0;
  double d_nbar = 0.0;
  double d_rabi = 0.0;
};

CarrierTerms carrier_terms(double rabi, double eta, double nbar, std::size_t n_cut, double t) {
  const double ratio = nbar / (nbar + 1.0);
  double p = 1.0 / (nbar + 1.0);
  double p_prev = 0.0;
  CarrierTerms out;
  double sum = 0.0;
  for (std::size_t n = 0; n < n_cut; ++n) {
    if (n > 0) {
      p_prev = p;
      p *= ratio;
    }
    const double scale = 1.0 - 0.5 * eta * eta * (2.0 * static_cast<double>(n) + 1.0);
    const double arg = rabi * scale * t;
    const double s = std::sin(0.5 * arg);
    const double dn = static_cast<double>(n);
    const double dp = (dn * p_prev - (dn + 1.0) * p) / (nbar + 1.0);
    sum += p * s * s;
    out.d_nbar -= dp * s * s;
    out.d_rabi -= p * 0.5 * std::sin(arg) * scale * t;
    if (p == 0.0 && n > 0) break;
  }
  out.value = 1.0 - sum;
  return out;
}

void check_truncation(double nbar, std::size_t n_cut) {
  const double tail = thermal_tail_weight(nbar, n_cut);
  if (!(tail < 1e-8)) {
    std::ostringstream msg;
    msg << "truncation at " << n_cut << " levels leaves a thermal tail weight of " << tail
        << " (need < 1e-8) for nbar = " << nbar;
    fail(ErrorCode::TruncationTooSmall, msg.str());
  }
}

Eigen::MatrixXd covariance_from(const Eigen::MatrixXd& j, double scale) {
  const Eigen::MatrixXd jtj = j.transpose() * j;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  if (!lu.isInvertible()) fail(ErrorCode::NoConvergence, "fit Jacobian is singular at the solution");
  return lu.inverse() * scale;
}

struct CarrierFunctor : Eigen::DenseFunctor<double> {
  CarrierFunctor(const std::vector<double>& t, const std::vector<double>& y, const std::vector<double>& s, double eta,
                 double rabi_unit)
      : Eigen::DenseFunctor<double>(2, static_cast<int>(t.size())), t(t), y(y), s(s), eta(eta), unit(rabi_unit) {}

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& f) const {
    const double nbar = std::abs(p[0]);
    const auto cut = auto_truncation(nbar);
    for (std::size_t i = 0; i < t.size(); ++i) {
      f[static_cast<Eigen::Index>(i)] = (carrier_terms(p[1] * unit, eta, nbar, cut, t[i]).value - y[i]) / s[i];
    }
    return 0;
  }

  int df(const Eigen::VectorXd& p, Eigen::MatrixXd& jac) const {
    const double nbar = std::abs(p[0]);
    const double sign = p[0] < 0.0 ? -1.0 : 1.0;
    const auto cut = auto_truncation(nbar);
    jac.resize(static_cast<Eigen::Index>(t.size()), 2);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto c = carrier_terms(p[1] * unit, eta, nbar, cut, t[i]);
      jac(static_cast<Eigen::Index>(i), 0) = sign * c.d_nbar / s[i];
      jac(static_cast<Eigen::Index>(i), 1) = c.d_rabi * unit / s[i];
    }
    return 0;
  }

  const std::vector<double>& t;
  const std::vector<double>& y;
  const std::vector<double>& s;
  double eta;
  double unit;
};

struct LorentzFunctor : Eigen::DenseFunctor<double> {
  LorentzFunctor(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& s)
      : Eigen::DenseFunctor<double>(4, static_cast<int>(x.size())), x(x), y(y), s(s) {}

  // p = (center, fwhm, amplitude, offset)
  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& f) const {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double u = 2.0 * (x[i] - p[0]) / p[1];
      f[i] = (p[3] + p[2] / (1.0 + u * u) - y[i]) / s[i];
    }
    return 0;
  }

  int df(const Eigen::VectorXd& p, Eigen::MatrixXd& j) const {
    j.resize(x.size(), 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double u = 2.0 * (x[i] - p[0]) / p[1];
      const double l = 1.0 / (1.0 + u * u);
      const double dl_du = -2.0 * u * l * l;
      j(i, 0) = p[2] * dl_du * (-2.0 / p[1]) / s[i];
      j(i, 1) = p[2] * dl_du * (-u / p[1]) / s[i];
      j(i, 2) = l / s[i];
      j(i, 3) = 1.0 / s[i];
    }
    return 0;
  }

  Eigen::VectorXd x, y, s;
};

std::vector<double> sigma_or_unit(const std::vector<double>& sigma, std::size_t n) {
  if (sigma.empty()) return std::vector<double>(n, 1.0);
  require(sigma.size() == n, "sigma must match the number of samples");
  for (double s : sigma) require(s > 0.0 && std::isfinite(s), "sigma values must be positive");
  return sigma;
}

}  // namespace

void ThreeLevelState::validate() const {
  require(amplitudes.allFinite(), "state amplitudes must be finite");
  require(std::abs(amplitudes.squaredNorm() - 1.0) <= 1e-12, "state must be normalized");
}

ThreeLevelUnitary rotation(LevelPair pair, double theta, double phi) {
  const auto [a, b] = levels(pair);
  ThreeLevelUnitary u = ThreeLevelUnitary::Identity();
  const double c = std::cos(0.5 * theta);
  const double s = std::sin(0.5 * theta);
  u(a, a) = c;
  u(b, b) = c;
  u(a, b) = kI * std::exp(-kI * phi) * s;
  u(b, a) = kI * std::exp(kI * phi) * s;
  return u;
}

ThreeLevelUnitary hybrid_memory_rotation(double theta, double phi, double phi_L) {
  return rotation(LevelPair::OneUp, kPi, phi_L + kPi) *
         rotation(LevelPair::Down1, theta, phi_L + phi + 0.5 * kPi) * rotation(LevelPair::OneUp, kPi, phi_L);
}

double matrix_distance(const ThreeLevelUnitary& a, const ThreeLevelUnitary& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

double unitarity_error(const ThreeLevelUnitary& u) {
  return (u.adjoint() * u - ThreeLevelUnitary::Identity()).cwiseAbs().maxCoeff();
}

double ramsey_population(RamseyMode mode, double phi, double phase1, double phase2) {
  if (mode == RamseyMode::Hybrid) {
    return final_down(hybrid_memory_rotation(0.5 * kPi, 0.0, phase1),
                      hybrid_memory_rotation(0.5 * kPi, phi + kPi, phase2));
  }
  return final_down(rotation(LevelPair::Down1, 0.5 * kPi, phase1),
                    rotation(LevelPair::Down1, 0.5 * kPi, phase2 + phi + kPi));
}

RamseyResult ramsey_scan(const std::vector<double>& phases, const RamseyOptions& options) {
  require(options.shots >= 1, "Ramsey scan needs at least one shot per point");
  require(!phases.empty(), "Ramsey scan needs at least one phase");
  RamseyResult out;
  out.phases = phases;
  out.p_down.assign(phases.size(), 0.0);
  out.sigma.assign(phases.size(), 0.0);
  parallel_for(phases.size(), options.threads, [&](std::size_t i) {
    auto rng = point_rng(options.seed, i);
    std::uniform_real_distribution<double> uniform_phase(0.0, kTwoPi);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double shared = options.phase_model == LaserPhaseModel::PerPoint ? uniform_phase(rng) : 0.0;
    const bool per_shot = options.phase_model == LaserPhaseModel::PerShot;
    const double fixed = per_shot ? 0.0 : ramsey_population(options.mode, phases[i], 0.0, shared);
    std::size_t down = 0;
    for (std::size_t s = 0; s < options.shots; ++s) {
      double p = fixed;
      if (per_shot) {
        const double l1 = uniform_phase(rng);
        p = ramsey_population(options.mode, phases[i], l1, uniform_phase(rng));
      }
      if (unit(rng) < p) ++down;
    }
    const double p = static_cast<double>(down) / static_cast<double>(options.shots);
    out.p_down[i] = p;
    out.sigma[i] = std::sqrt(std::max(p * (1.0 - p), 0.25 / static_cast<double>(options.shots)) /
                             static_cast<double>(options.shots));
  });
  return out;
}

SinusoidFit fit_sinusoid(const std::vector<double>& phases, const std::vector<double>& values) {
  require(phases.size() == values.size(), "phases and values must have equal length");
  require(phases.size() >= 4, "sinusoid fit needs at least four points");
  const auto n = static_cast<Eigen::Index>(phases.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = std::cos(phases[static_cast<std::size_t>(i)]);
    a(i, 2) = std::sin(phases[static_cast<std::size_t>(i)]);
    y[i] = values[static_cast<std::size_t>(i)];
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 3) fail(ErrorCode::DegenerateData, "phases do not determine a sinusoid");
  const Eigen::Vector3d c = qr.solve(y);
  const double dof = static_cast<double>(n - 3);
  const double var = dof > 0 ? (a * c - y).squaredNorm() / dof : 0.0;
  const Eigen::Matrix3d cov = (a.transpose() * a).inverse() * var;
  SinusoidFit f;
  f.offset = c[0];
  const double amp = std::hypot(c[1], c[2]);
  f.contrast = 2.0 * amp;
  f.phase = std::atan2(c[2], c[1]);
  if (amp > 0.0) {
    const Eigen::Vector2d g(c[1] / amp, c[2] / amp);
    f.contrast_sigma = 2.0 * std::sqrt(std::max(0.0, g.dot(cov.block<2, 2>(1, 1) * g)));
  } else {
    f.contrast_sigma = 2.0 * std::sqrt(0.5 * (cov(1, 1) + cov(2, 2)));
  }
  return f;
}

double plain_pi_infidelity(double epsilon) { return pi_infidelity(epsilon, false); }

double bb1_pi_infidelity(double epsilon) { return pi_infidelity(epsilon, true); }

void ThermalParams::validate() const {
  require(rabi > 0.0 && std::isfinite(rabi), "Rabi frequency must be positive");
  require(eta > 0.0 && eta < 1.0, "Lamb-Dicke parameter must lie in (0, 1)");
  require(nbar >= 0.0 && std::isfinite(nbar), "nbar must be non-negative");
}

double thermal_tail_weight(double nbar, std::size_t n_cut) {
  require(nbar >= 0.0, "nbar must be non-negative");
  if (nbar == 0.0) return n_cut == 0 ? 1.0 : 0.0;
  return std::pow(nbar / (nbar + 1.0), static_cast<double>(n_cut));
}

std::size_t auto_truncation(double nbar) {
  require(nbar >= 0.0 && std::isfinite(nbar), "nbar must be non-negative");
  if (nbar == 0.0) return 20;
  auto n = static_cast<std::size_t>(std::max(20.0, std::ceil(nbar * (1.0 + 12.0 / std::sqrt(nbar)))));
  const double needed = std::ceil(std::log(1e-12) / std::log(nbar / (nbar + 1.0)));
  return std::max(n, static_cast<std::size_t>(needed));
}

double thermal_carrier(const ThermalParams& params, double t) {
  params.validate();
  require(std::isfinite(t), "time must be finite");
  const std::size_t cut = params.n_cut == 0 ? auto_truncation(params.nbar) : params.n_cut;
  check_truncation(params.nbar, cut);
  return std::clamp(carrier_terms(params.rabi, params.eta, params.nbar, cut, t).value, 0.0, 1.0);
}

NbarFit fit_nbar(const std::vector<double>& times, const std::vector<double>& populations, double eta,
                 double rabi_guess, const std::vector<double>& sigma) {
  require(times.size() == populations.size(), "times and populations must have equal length");
  require(times.size() >= 10, "nbar fit needs at least 10 samples");
  require(eta > 0.0 && eta < 1.0, "Lamb-Dicke parameter must lie in (0, 1)");
  require(rabi_guess > 0.0, "Rabi frequency guess must be positive");
  const auto [tmin, tmax] = std::minmax_element(times.begin(), times.end());
  require((*tmax - *tmin) * rabi_guess / kTwoPi >= 3.0, "samples must span at least three Rabi periods");
  const double mean = std::accumulate(populations.begin(), populations.end(), 0.0) / static_cast<double>(populations.size());
  double spread = 0.0;
  for (double p : populations) spread = std::max(spread, std::abs(p - mean));
  if (spread < 1e-9) fail(ErrorCode::DegenerateData, "population signal is flat");
  const auto s = sigma_or_unit(sigma, times.size());

  CarrierFunctor functor(times, populations, s, eta, rabi_guess);
  Eigen::VectorXd best(2);
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd f(static_cast<Eigen::Index>(times.size()));
  for (double nbar : {0.0, 3.0, 15.0, 60.0}) {
    for (int k = -5; k <= 5; ++k) {
      const Eigen::Vector2d p(nbar, 1.0 + 0.01 * k);
      functor(p, f);
      if (f.squaredNorm() < best_cost) {
        best_cost = f.squaredNorm();
        best = p;
      }
    }
  }
  Eigen::LevenbergMarquardt<CarrierFunctor> lm(functor);
  lm.setMaxfev(400);
  lm.setXtol(1e-12);
  lm.setFtol(1e-14);
  const auto status = lm.minimize(best);
  if (status == Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation ||
      status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters) {
    fail(ErrorCode::NoConvergence, "nbar fit did not converge");
  }
  functor(best, f);
  Eigen::MatrixXd j;
  functor.df(best, j);
  j.col(1) /= rabi_guess;
  const double dof = static_cast<double>(times.size() - 2);
  NbarFit out;
  out.nbar = std::abs(best[0]);
  out.rabi = best[1] * rabi_guess;
  out.chi2 = f.squaredNorm();
  out.covariance = covariance_from(j, sigma.empty() ? out.chi2 / dof : 1.0);
  out.iterations = static_cast<int>(lm.iterations());
  return out;
}

LorentzianFit lorentzian_fit(const std::vector<double>& detunings, const std::vector<double>& populations,
                             const std::vector<double>& sigma) {
  require(detunings.size() == populations.size(), "detunings and populations must have equal length");
  require(detunings.size() >= 5, "Lorentzian fit needs at least five points");
  const auto n = static_cast<Eigen::Index>(detunings.size());
  const auto s = sigma_or_unit(sigma, detunings.size());
  const auto [lo_it, hi_it] = std::minmax_element(detunings.begin(), detunings.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  require(hi > lo, "detunings must span a range");
  const double mid = 0.5 * (lo + hi);
  const double scale = 0.5 * (hi - lo);

  Eigen::VectorXd x(n), y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = (detunings[static_cast<std::size_t>(i)] - mid) / scale;
    y[i] = populations[static_cast<std::size_t>(i)];
    w[i] = s[static_cast<std::size_t>(i)];
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  double spacing = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < order.size(); ++k) spacing = std::min(spacing, x[order[k]] - x[order[k - 1]]);
  require(spacing > 0.0, "detunings must be distinct");

  Eigen::Index peak = 0;
  y.maxCoeff(&peak);
  const double base = y.minCoeff();
  const double half = 0.5 * (y[peak] + base);
  std::size_t above = 0;
  for (Eigen::Index i = 0; i < n; ++i) above += y[i] >= half;
  Eigen::VectorXd p(4);
  p << x[peak], std::max(2.0 * spacing, static_cast<double>(above) * 2.0 / static_cast<double>(n)), y[peak] - base, base;

  LorentzFunctor functor(x, y, w);
  Eigen::LevenbergMarquardt<LorentzFunctor> lm(functor);
  lm.setMaxfev(1000);
  lm.setXtol(1e-14);
  lm.setFtol(1e-15);
  const auto status = lm.minimize(p);
  if (status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters) {
    fail(ErrorCode::NoConvergence, "Lorentzian fit rejected its input");
  }
  const bool stalled = status == Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation;
  p[1] = std::abs(p[1]);
  Eigen::VectorXd f(n);
  functor(p, f);
  Eigen::MatrixXd j;
  functor.df(p, j);
  const double chi2 = f.squaredNorm();
  Eigen::Matrix4d cov;
  const Eigen::Matrix4d jtj = j.transpose() * j;
  Eigen::FullPivLU<Eigen::Matrix4d> lu(jtj);
  if (!lu.isInvertible() || stalled) fail(ErrorCode::NoPeak, "no resolvable Lorentzian peak in the data");
  cov = lu.inverse() * (sigma.empty() ? chi2 / static_cast<double>(n - 4) : 1.0);

  LorentzianFit out;
  out.center = mid + scale * p[0];
  out.fwhm = scale * p[1];
  out.amplitude = p[2];
  out.offset = p[3];
  out.center_sigma = scale * std::sqrt(cov(0, 0));
  out.fwhm_sigma = scale * std::sqrt(cov(1, 1));
  out.amplitude_sigma = std::sqrt(cov(2, 2));
  if (!(out.amplitude > 3.0 * out.amplitude_sigma) || out.center < lo || out.center > hi || p[1] < spacing) {
    std::ostringstream msg;
    msg << "no significant Lorentzian peak: amplitude " << out.amplitude << " +- " << out.amplitude_sigma
        << ", centre " << out.center << " rad/s, width " << out.fwhm << " rad/s";
    fail(ErrorCode::NoPeak, msg.str());
  }
  return out;
}

Ratio crosstalk_ratio(double target, double target_sigma, double spectator, double spectator_sigma) {
  require(target > 0.0 && std::isfinite(target), "target Rabi frequency must be positive");
  require(std::isfinite(spectator), "spectator Rabi frequency must be finite");
  require(target_sigma >= 0.0 && spectator_sigma >= 0.0, "uncertainties must be non-negative");
  Ratio r;
  r.value = spectator / target;
  r.sigma = std::hypot(spectator_sigma / target, spectator * target_sigma / (target * target));
  return r;
}

void SpectroscopySeries::validate() const {
  require(times.size() == centers.size() && times.size() == uncertainties.size(),
          "spectroscopy series columns must have equal length");
  for (std::size_t i = 0; i < times.size(); ++i) {
    require(std::isfinite(times[i]) && std::isfinite(centers[i]), "spectroscopy values must be finite");
    require(uncertainties[i] > 0.0, "spectroscopy uncertainties must be positive");
    if (i > 0) require(times[i] > times[i - 1], "spectroscopy timestamps must be strictly increasing");
  }
}

CorrelationResult correlation(const SpectroscopySeries& a, const SpectroscopySeries& b, double window) {
  a.validate();
  b.validate();
  require(window >= 0.0, "pairing window must be non-negative");
  std::vector<bool> used(b.size(), false);
  std::vector<std::pair<double, double>> pairs;
  std::size_t start = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    while (start < b.size() && b.times[start] < a.times[i] - window) ++start;
    std::size_t best = b.size();
    double best_dt = std::numeric_limits<double>::infinity();
    for (std::size_t k = start; k < b.size() && b.times[k] <= a.times[i] + window; ++k) {
      const double dt = std::abs(b.times[k] - a.times[i]);
      if (!used[k] && dt < best_dt) {
        best_dt = dt;
        best = k;
      }
    }
    if (best < b.size()) {
      used[best] = true;
      pairs.emplace_back(a.centers[i], b.centers[best]);
    }
  }
  CorrelationResult out;
  out.pairs = pairs.size();
  out.dropped = a.size() + b.size() - 2 * pairs.size();
  if (pairs.size() < 3) fail(ErrorCode::DegenerateData, "correlation needs at least three paired points");
  double m1 = 0.0, m2 = 0.0, peak1 = 0.0, peak2 = 0.0;
  for (const auto& [u, v] : pairs) {
    m1 += u;
    m2 += v;
    peak1 = std::max(peak1, std::abs(u));
    peak2 = std::max(peak2, std::abs(v));
  }
  m1 /= static_cast<double>(pairs.size());
  m2 /= static_cast<double>(pairs.size());
  double c11 = 0.0, c22 = 0.0, c12 = 0.0;
  for (const auto& [u, v] : pairs) {
    c11 += (u - m1) * (u - m1);
    c22 += (v - m2) * (v - m2);
    c12 += (u - m1) * (v - m2);
  }
  const double n = static_cast<double>(pairs.size());
  c11 /= n;
  c22 /= n;
  c12 /= n;
  if (c11 <= std::pow(1e-12 * peak1, 2) || c22 <= std::pow(1e-12 * peak2, 2)) {
    fail(ErrorCode::DegenerateVariance, "a spectroscopy series has zero variance");
  }
  out.r = std::clamp(c12 / std::sqrt(c11 * c22), -1.0, 1.0);
  return out;
}

double frequency_to_field(double delta_omega, double sensitivity) {
  require(sensitivity != 0.0 && std::isfinite(sensitivity), "transition sensitivity must be non-zero");
  return delta_omega / sensitivity;
}

double field_gradient(double differential_omega, double separation, double sensitivity) {
  require(separation > 0.0, "ion separation must be positive");
  return frequency_to_field(differential_omega, sensitivity) / separation;
}

}  // namespace iontrap
