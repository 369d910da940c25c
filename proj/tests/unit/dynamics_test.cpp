#include "iontrap/dynamics_sim.hpp"

#include "support/layouts.hpp"

#include <doctest.h>

#include <cmath>

using namespace iontrap;
using iontrap::testing::default_config;
using iontrap::testing::um;

namespace {

constexpr double kOmega = kTwoPi * 1.9e6;

Waveform static_waveform(double duration) {
  const auto& cfg = default_config();
  ZoneObjective o;
  o.zone = "zone1";
  o.axial_frequency = kOmega;
  const auto v = solve_static(cfg.layout, {o}, cfg.hardware);
  Waveform w;
  w.electrode_names = cfg.layout.dc_names();
  w.sample_period = cfg.hardware.awg_sample_period;
  w.limits = cfg.hardware;
  const auto n = static_cast<Eigen::Index>(std::llround(duration / w.sample_period)) + 1;
  w.samples.resize(n, static_cast<Eigen::Index>(v.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < v.size(); ++e) w.samples(i, static_cast<Eigen::Index>(e)) = v[e];
  }
  return w;
}

PotentialWell static_well(const Waveform& w) {
  const auto& cfg = default_config();
  return find_well(cfg.layout, w.row(0), cfg.layout.zone_position("zone1"));
}

IonTrajectory uniform_motion(double v, double duration, double h) {
  IonTrajectory tr;
  const auto n = static_cast<std::size_t>(std::llround(duration / h)) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    tr.times.push_back(static_cast<double>(i) * h);
    tr.positions.push_back(v * static_cast<double>(i) * h);
    tr.velocities.push_back(v);
    tr.energies.push_back(0.0);
  }
  return tr;
}

std::vector<double> grid(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

Waveform transport_waveform(double duration) {
  const auto& cfg = default_config();
  const auto tr = transport_trajectory(cfg.layout.zone_position("zone1"), cfg.layout.zone_position("zone2"),
                                       duration, kOmega, cfg.hardware.awg_sample_period);
  return synthesize_waveform(cfg.layout, tr, cfg.hardware, cfg.defaults.solver);
}

}  // namespace

TEST_CASE("ion at the well minimum stays put") {
  const auto& cfg = default_config();
  const auto w = static_waveform(20e-6);
  const auto well = static_well(w);
  const auto tr = integrate_motion(cfg.layout, w, std::nullopt, well.position.x(), 0.0);
  for (double x : tr.positions) CHECK(std::abs(x - well.position.x()) < 1e-12);
  for (double e : tr.energies) CHECK(std::abs(e) < 1e-6 * kHbar * kOmega);
}

TEST_CASE("small oscillation runs at the well frequency") {
  const auto& cfg = default_config();
  const auto w = static_waveform(40e-6);
  const auto well = static_well(w);
  IntegrationOptions o;
  o.output_stride = 1;
  const auto tr = integrate_motion(cfg.layout, w, std::nullopt, well.position.x() + 10e-9, 0.0, o);
  std::vector<double> crossings;
  for (std::size_t i = 1; i < tr.size(); ++i) {
    const double a = tr.positions[i - 1] - well.position.x();
    const double b = tr.positions[i] - well.position.x();
    if (a > 0.0 && b <= 0.0) crossings.push_back(tr.times[i - 1] + (tr.times[i] - tr.times[i - 1]) * a / (a - b));
  }
  REQUIRE(crossings.size() > 20);
  const double period = (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
  CHECK(std::abs(kTwoPi / period - well.axial_frequency) / well.axial_frequency < 1e-4);
}

TEST_CASE("energy is conserved over ten thousand periods") {
  const auto& cfg = default_config();
  const auto w = static_waveform(1e4 * kTwoPi / kOmega);
  const auto well = static_well(w);
  IntegrationOptions o;
  o.output_stride = 100;
  const auto tr = integrate_motion(cfg.layout, w, std::nullopt, well.position.x() + 20e-9, 0.0, o);
  const double e0 = tr.energies.front();
  double drift = 0.0;
  for (std::size_t i = tr.size() / 2; i < tr.size(); ++i) drift = std::max(drift, std::abs(tr.energies[i] - e0));
  CHECK(drift / e0 < 1e-4);
}

TEST_CASE("final occupation of a planted oscillation") {
  const auto& cfg = default_config();
  const auto w = static_waveform(1e-6);
  const auto well = static_well(w);
  IntegrationOptions o;
  o.hold_time = 5e-6;
  const auto rest = integrate_motion(cfg.layout, w, std::nullopt, well.position.x(), 0.0, o);
  CHECK(rest.final_nbar < 0.01);

  const double amp = 100e-9;
  const auto moving = integrate_motion(cfg.layout, w, std::nullopt, well.position.x() + amp, 0.0, o);
  const double expected = 0.5 * cfg.layout.ion().mass * std::pow(well.axial_frequency * amp, 2) /
                          (kHbar * well.axial_frequency);
  CHECK(std::abs(moving.final_nbar - expected) / expected < 0.01);

  const double direct = motional_excitation(moving, well, cfg.layout.ion().mass);
  CHECK(direct == doctest::Approx(moving.final_nbar).epsilon(1e-12));
}

TEST_CASE("unconfined or escaping ions are lost") {
  const auto& cfg = default_config();
  auto w = static_waveform(5e-6);
  w.samples.setZero();
  try {
    integrate_motion(cfg.layout, w, std::nullopt, cfg.layout.zone_position("zone1"), 0.0);
    FAIL("expected IonLost");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IonLost);
  }
  const auto held = static_waveform(5e-6);
  try {
    integrate_motion(cfg.layout, held, std::nullopt, static_well(held).position.x(), 3e3);
    FAIL("expected IonLost");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IonLost);
  }
}

TEST_CASE("integration arguments are checked") {
  const auto& cfg = default_config();
  const auto w = static_waveform(2e-6);
  const double x = static_well(w).position.x();
  IntegrationOptions coarse;
  coarse.dt = 20e-9;
  CHECK_THROWS_AS(integrate_motion(cfg.layout, w, std::nullopt, x, 0.0, coarse), Error);
  CHECK_THROWS_AS(integrate_motion(cfg.layout, w, std::nullopt, 1.0, 0.0), Error);
  auto renamed = w;
  renamed.electrode_names[0] = "nope";
  try {
    integrate_motion(cfg.layout, renamed, std::nullopt, x, 0.0);
    FAIL("expected UnknownElectrode");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownElectrode);
  }
}

TEST_CASE("slower transports excite less") {
  const auto& cfg = default_config();
  double previous = std::numeric_limits<double>::infinity();
  for (double duration : {0.5e-3, 1e-3, 2e-3}) {
    const auto w = transport_waveform(duration);
    const double x0 = find_well(cfg.layout, w.row(0), cfg.layout.zone_position("zone1")).position.x();
    IntegrationOptions o;
    o.hold_time = 10e-6;
    const auto tr = integrate_motion(cfg.layout, w, cfg.hardware.filter(), x0, 0.0, o);
    REQUIRE(std::isfinite(tr.final_nbar));
    CHECK(tr.final_nbar < previous);
    previous = tr.final_nbar;
  }
}

TEST_CASE("forward then reverse transport returns the ion") {
  const auto& cfg = default_config();
  const auto w = transport_waveform(1e-3);
  Waveform both = w;
  const auto n = w.n_samples();
  both.samples.conservativeResize(2 * n, Eigen::NoChange);
  for (Eigen::Index i = 0; i < n; ++i) both.samples.row(n + i) = w.samples.row(n - 1 - i);
  const double x0 = find_well(cfg.layout, w.row(0), cfg.layout.zone_position("zone1")).position.x();
  const auto tr = integrate_motion(cfg.layout, both, std::nullopt, x0, 0.0);
  CHECK(std::abs(tr.positions.back() - x0) < 1e-9);
  const auto mid = static_cast<std::size_t>(std::distance(
      tr.times.begin(), std::lower_bound(tr.times.begin(), tr.times.end(), 1e-3)));
  CHECK(std::abs(tr.positions[mid] - cfg.layout.zone_position("zone2")) < 1e-6);
}

TEST_CASE("ion at rest shows its resonance at zero detuning") {
  const auto tr = uniform_motion(0.0, 100e-6, 10e-9);
  const auto det = grid(-kTwoPi * 200e3, kTwoPi * 200e3, 81);
  const auto map = doppler_map(tr, {}, {0.0, 20e-6, 60e-6}, det);
  CHECK_NOTHROW(map.validate());
  const double bin = det[1] - det[0];
  for (double r : doppler_ridge(map)) CHECK(std::abs(r) <= bin);
  const Eigen::Index centre = 40;
  CHECK(map.excitation(0, centre) > 0.5);
}

TEST_CASE("uniform velocity shifts the ridge by -k v") {
  const ProbeSettings probe;
  const double v = 0.5;
  const auto tr = uniform_motion(v, 100e-6, 10e-9);
  const auto det = grid(-kTwoPi * 1e6, kTwoPi * 1e6, 201);
  const auto map = doppler_map(tr, probe, {0.0, 30e-6, 60e-6}, det);
  const double bin = det[1] - det[0];
  for (double r : doppler_ridge(map)) CHECK(std::abs(r + probe.wavevector * v) <= bin);
  for (double m : probe_mean_velocities(tr, {0.0, 30e-6}, probe.duration)) CHECK(m == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("a velocity boost translates the map along detuning") {
  const ProbeSettings probe;
  const auto det = grid(-kTwoPi * 400e3, kTwoPi * 400e3, 161);
  const double bin = det[1] - det[0];
  const double boost = 5.0 * bin / probe.wavevector;
  auto tr = uniform_motion(0.0, 60e-6, 10e-9);
  for (std::size_t i = 0; i < tr.size(); ++i) tr.velocities[i] = 0.2 * std::sin(1e5 * tr.times[i]);
  auto boosted = tr;
  for (auto& v : boosted.velocities) v += boost;
  const std::vector<double> delays = {0.0, 15e-6};
  const auto a = doppler_map(tr, probe, delays, det);
  const auto b = doppler_map(boosted, probe, delays, det);
  for (Eigen::Index i = 0; i < 2; ++i) {
    for (Eigen::Index j = 0; j + 5 < 161; ++j) CHECK(std::abs(b.excitation(i, j) - a.excitation(i, j + 5)) < 1e-9);
  }
}

TEST_CASE("threaded doppler maps are identical") {
  const auto tr = uniform_motion(0.1, 80e-6, 10e-9);
  const auto det = grid(-kTwoPi * 300e3, kTwoPi * 300e3, 61);
  const auto a = doppler_map(tr, {}, {0.0, 10e-6, 20e-6, 40e-6}, det, 1);
  const auto b = doppler_map(tr, {}, {0.0, 10e-6, 20e-6, 40e-6}, det, 3);
  CHECK((a.excitation.array() == b.excitation.array()).all());
}

TEST_CASE("flat rows have no ridge") {
  DopplerMap m;
  m.probe_delays = {0.0};
  m.detunings = {-1.0, 0.0, 1.0};
  m.excitation = Eigen::MatrixXd::Zero(1, 3);
  try {
    doppler_ridge(m);
    FAIL("expected NoPeak");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoPeak);
  }
}

TEST_CASE("probe windows must fit in the trajectory") {
  const auto tr = uniform_motion(0.0, 20e-6, 10e-9);
  CHECK_THROWS_AS(doppler_map(tr, {}, {0.0}, {0.0, 1.0}), Error);
}
