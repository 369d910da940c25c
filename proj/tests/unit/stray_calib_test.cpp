#include "iontrap/stray_calib.hpp"

#include "support/layouts.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace iontrap;
using iontrap::testing::default_config;
using iontrap::testing::um;

namespace {

const std::vector<std::string> kZone1 = {"z1_left", "z1_right", "z1_top", "z1_bottom"};
const std::vector<std::vector<std::string>> kTie = {{"z1_top", "z1_bottom"}};
const std::map<std::string, double> kV1 = {
    {"z1_left", -2.21}, {"z1_right", -2.14}, {"z1_top", -2.12}, {"z1_bottom", -2.12}};
const std::map<std::string, double> kV2 = {
    {"z1_left", -1.62}, {"z1_right", -1.52}, {"z1_top", -2.03}, {"z1_bottom", -1.20}};
constexpr double kOmega0 = kTwoPi * 1.9e6;

double zone1() { return default_config().layout.zone_position("zone1"); }

std::vector<double> zone1_positions(std::size_t n = 21) { return calibration_positions({zone1()}, 50 * um, n); }

// Curvature of the summed window potential by Richardson-extrapolated central differences.
double fd_window_curvature(const TrapLayout& layout, const std::map<std::string, double>& v, double x) {
  auto phi = [&](double xx) {
    double s = 0.0;
    for (const auto& [name, volts] : v) {
      for (const auto& p : layout.electrodes()[layout.electrode_index(name)].patches) {
        s += volts * patch_potential(p, layout.rf_null(xx));
      }
    }
    return s;
  };
  auto d2 = [&](double h) { return (phi(x + h) - 2.0 * phi(x) + phi(x - h)) / (h * h); };
  const double h = 0.4 * um;
  return (4.0 * d2(h / 2) - d2(h)) / 3.0;
}

MeasurementOptions noiseless() { return {}; }

}  // namespace

TEST_CASE("calibration positions cover each zone symmetrically") {
  const auto p = calibration_positions({-1e-4, 1e-4}, 10 * um, 5);
  REQUIRE(p.size() == 10);
  CHECK(p.front() == doctest::Approx(-1.1e-4));
  CHECK(p.back() == doctest::Approx(1.1e-4));
  for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] > p[i - 1]);
  CHECK_THROWS_AS(calibration_positions({0.0}, 0.0, 5), Error);
}

TEST_CASE("zero window voltages give a flat profile") {
  const auto& layout = default_config().layout;
  std::map<std::string, double> zero;
  for (const auto& w : kZone1) zero[w] = 0.0;
  const auto prof = predict_profile(layout, zero, kOmega0, zone1_positions());
  for (double w : prof.frequencies) CHECK(w == kOmega0);
  CHECK(prof.max_deviation() == 0.0);
}

TEST_CASE("predicted profile matches a finite-difference curvature oracle") {
  const auto& layout = default_config().layout;
  const auto pos = zone1_positions();
  const auto prof = predict_profile(layout, kV1, kOmega0, pos);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const double c = fd_window_curvature(layout, kV1, pos[i]);
    const double expected = std::sqrt(kOmega0 * kOmega0 + layout.charge_to_mass() * c);
    CHECK(std::abs(prof.frequencies[i] - expected) / expected < 1e-6);
  }
}

TEST_CASE("predicted profile agrees with simulated find_well spectroscopy") {
  const auto& cfg = default_config();
  const auto truth = apply_window_compensation(cfg.layout, kV1);
  const auto pos = zone1_positions();
  const auto measured = measure_profile(truth, cfg.layout, kOmega0, pos, cfg.hardware, cfg.defaults.solver, noiseless());
  const auto predicted = predict_profile(cfg.layout, kV1, kOmega0, pos);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    CHECK(std::abs(measured.frequencies[i] - predicted.frequencies[i]) / predicted.frequencies[i] < 1e-3);
  }
}

TEST_CASE("final-round window set produces a visibly non-uniform profile") {
  const auto prof = predict_profile(default_config().layout, kV2, kOmega0, zone1_positions(41));
  CHECK(prof.max_deviation() > kTwoPi * 10e3);
}

TEST_CASE("anti-trapping windows are reported") {
  std::map<std::string, double> v;
  for (const auto& w : kZone1) v[w] = 25.0;
  try {
    predict_profile(default_config().layout, v, kOmega0, zone1_positions());
    FAIL("expected AntiTrapping");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AntiTrapping);
    CHECK(std::string(e.what()).find("position") != std::string::npos);
  }
}

TEST_CASE("noiseless fit recovers planted voltages and honours ties") {
  const auto& layout = default_config().layout;
  const auto prof = predict_profile(layout, kV1, kOmega0, zone1_positions());
  const auto fit = fit_window_voltages(prof, layout, kZone1, kTie);
  for (const auto& [name, v] : kV1) CHECK(std::abs(fit.fitted.voltages.at(name) - v) < 1e-6 * std::abs(v));
  CHECK(fit.fitted.voltages.at("z1_top") == fit.fitted.voltages.at("z1_bottom"));
  CHECK(fit.groups.size() == 3);
  CHECK(fit.covariance.rows() == 3);
}

TEST_CASE("flat profile fits to zero voltages") {
  const auto& layout = default_config().layout;
  FrequencyProfile flat;
  flat.positions = zone1_positions();
  flat.frequencies.assign(flat.positions.size(), kOmega0);
  flat.base_frequency = kOmega0;
  const auto fit = fit_window_voltages(flat, layout, kZone1, kTie);
  for (const auto& [name, v] : fit.fitted.voltages) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("mirror windows without a tie are rank deficient") {
  const auto& layout = default_config().layout;
  const auto prof = predict_profile(layout, kV1, kOmega0, zone1_positions());
  try {
    fit_window_voltages(prof, layout, kZone1, {});
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficient);
  }
}

TEST_CASE("fit needs two more samples than parameters") {
  const auto& layout = default_config().layout;
  const auto prof = predict_profile(layout, kV1, kOmega0, calibration_positions({zone1()}, 50 * um, 4));
  CHECK_THROWS_AS(fit_window_voltages(prof, layout, kZone1, kTie), Error);
}

TEST_CASE("fit rejects non-window electrodes") {
  const auto& layout = default_config().layout;
  const auto prof = predict_profile(layout, kV1, kOmega0, zone1_positions());
  try {
    fit_window_voltages(prof, layout, {"z1_left", "dc_t03"}, {});
    FAIL("expected UnknownElectrode");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownElectrode);
  }
}

TEST_CASE("noisy fits land within three sigma") {
  const auto& layout = default_config().layout;
  const auto pos = zone1_positions();
  const auto clean = predict_profile(layout, kV1, kOmega0, pos);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = 1e-3 * kOmega0;
  int inside = 0;
  const int trials = 60;
  for (int t = 0; t < trials; ++t) {
    auto noisy = clean;
    noisy.frequency_errors.assign(pos.size(), sigma);
    for (auto& w : noisy.frequencies) w += sigma * gauss(rng);
    const auto fit = fit_window_voltages(noisy, layout, kZone1, kTie);
    bool ok = true;
    for (const auto& [name, v] : kV1) ok = ok && std::abs(fit.fitted.voltages.at(name) - v) <= 3.0 * fit.sigma(name);
    inside += ok;
  }
  CHECK(inside >= 0.9 * trials);
}

TEST_CASE("profile validation") {
  FrequencyProfile p;
  CHECK_THROWS_AS(p.validate(), Error);
  p.positions = {0.0, 1e-6};
  p.frequencies = {1.0, 1.0};
  p.base_frequency = 1.0;
  CHECK_NOTHROW(p.validate());
  p.positions = {1e-6, 0.0};
  CHECK_THROWS_AS(p.validate(), Error);
  p.positions = {0.0, 1e-6};
  p.frequencies = {1.0, -1.0};
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("measurement noise is seeded and scaled") {
  const auto& cfg = default_config();
  const auto truth = apply_window_compensation(cfg.layout, kV1);
  const auto pos = calibration_positions({zone1()}, 20 * um, 5);
  MeasurementOptions m;
  m.noise_fraction = 1e-3;
  m.seed = 9;
  const auto a = measure_profile(truth, cfg.layout, kOmega0, pos, cfg.hardware, cfg.defaults.solver, m);
  const auto b = measure_profile(truth, cfg.layout, kOmega0, pos, cfg.hardware, cfg.defaults.solver, m);
  CHECK(a.frequencies == b.frequencies);
  for (double s : a.frequency_errors) CHECK(s == doctest::Approx(1e-3 * kOmega0));
}

TEST_CASE("closed loop starting at the truth stays converged") {
  const auto& cfg = default_config();
  CompensationOptions o;
  o.rounds = 1;
  o.windows = kZone1;
  o.ties = kTie;
  o.positions = zone1_positions();
  o.limits = cfg.hardware;
  o.solver = cfg.defaults.solver;
  o.initial_estimate = kV1;
  const auto rounds = iterate_compensation(kV1, cfg.layout, kOmega0, o);
  REQUIRE(rounds.size() == 1);
  CHECK(rounds[0].residual < 1e-6 * kOmega0);
}

TEST_CASE("closed loop converges monotonically from zero") {
  const auto& cfg = default_config();
  std::map<std::string, double> truth;
  for (const auto& w : kZone1) truth[w] = -2.0;
  CompensationOptions o;
  o.rounds = 3;
  o.windows = kZone1;
  o.ties = kTie;
  o.positions = zone1_positions();
  o.limits = cfg.hardware;
  o.solver = cfg.defaults.solver;
  const auto rounds = iterate_compensation(truth, cfg.layout, kOmega0, o);
  REQUIRE(rounds.size() == 3);
  for (std::size_t r = 1; r < rounds.size(); ++r) CHECK(rounds[r].residual <= rounds[r - 1].residual);
  CHECK(rounds.back().residual < kTwoPi * 1e3);
  for (const auto& w : kZone1) CHECK(rounds.back().estimate.voltages.at(w) == doctest::Approx(-2.0).epsilon(1e-6));
}

TEST_CASE("micromotion field from window asymmetry") {
  const auto& layout = default_config().layout;
  const auto sym = micromotion_offset(layout, kV1);
  CHECK(std::abs(sym.at("zone1")) < 1e-9);

  const auto asym = micromotion_offset(layout, kV2);
  CHECK(asym.at("zone1") > 0.0);

  std::map<std::string, double> doubled;
  for (const auto& [k, v] : kV2) doubled[k] = 2.0 * v;
  const auto twice = micromotion_offset(layout, doubled);
  CHECK(twice.at("zone1") == doctest::Approx(2.0 * asym.at("zone1")).epsilon(1e-12));
  CHECK(twice.at("zone2") == doctest::Approx(2.0 * asym.at("zone2")).epsilon(1e-12));
}
