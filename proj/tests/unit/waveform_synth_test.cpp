#include "iontrap/waveform_synth.hpp"

#include "support/layouts.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

using namespace iontrap;
using iontrap::testing::default_config;
using iontrap::testing::um;

namespace {

constexpr double kOmega = kTwoPi * 1.9e6;

ZoneObjective well(const std::string& zone, double omega = kOmega) {
  ZoneObjective o;
  o.zone = zone;
  o.axial_frequency = omega;
  return o;
}

std::string mirror_name(const std::string& name) {
  if (name.rfind("dc_", 0) == 0) {
    const int k = std::stoi(name.substr(4));
    char buf[16];
    std::snprintf(buf, sizeof buf, "dc_%c%02d", name[3], 11 - k);
    return buf;
  }
  std::string out = name;
  if (out[1] == '1') out[1] = '2'; else out[1] = '1';
  if (out.find("left") != std::string::npos) out.replace(out.find("left"), 4, "right");
  else if (out.find("right") != std::string::npos) out.replace(out.find("right"), 5, "left");
  return out;
}

const std::map<std::string, double> kV2 = {
    {"z1_left", -1.62}, {"z1_right", -1.52}, {"z1_top", -2.03}, {"z1_bottom", -1.20}};
const std::map<std::string, double> kZone2Set = {
    {"z2_left", -3.14}, {"z2_right", -3.14}, {"z2_top", -3.62}, {"z2_bottom", -2.82}};

Trajectory transport(double duration) {
  const auto& cfg = default_config();
  return transport_trajectory(cfg.layout.zone_position("zone1"), cfg.layout.zone_position("zone2"), duration,
                              kOmega, cfg.hardware.awg_sample_period);
}

Waveform ramp_waveform(double duration, double swing, const HardwareLimits& limits) {
  const double t_total = duration + 40e-6;
  const auto n = static_cast<Eigen::Index>(std::llround(t_total / limits.awg_sample_period)) + 1;
  Waveform w;
  w.electrode_names = {"a", "b"};
  w.samples.resize(n, 2);
  w.sample_period = limits.awg_sample_period;
  w.limits = limits;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * w.sample_period - 20e-6;
    const double p = t <= 0.0 ? 0.0 : (t >= duration ? 1.0 : sigmoid_profile(t, duration, 6.0));
    w.samples(i, 0) = swing * p;
    w.samples(i, 1) = -0.5 * swing * p;
  }
  return w;
}

}  // namespace

TEST_CASE("sigmoid trajectory endpoints, symmetry and monotonicity") {
  const auto tr = sigmoid_trajectory(0.0, 375 * um, 200e-6, 6.0, kOmega, 2001);
  CHECK(tr.samples.front().position == 0.0);
  CHECK(std::abs(tr.samples.back().position - 375 * um) <= 1e-4 * 375 * um);
  CHECK(std::abs(tr.samples[1000].time - 100e-6) < 1e-18);
  CHECK(std::abs(tr.samples[1000].position - 187.5 * um) < 1e-12);
  for (std::size_t i = 1; i < tr.size(); ++i) {
    CHECK(tr.samples[i].position >= tr.samples[i - 1].position);
    CHECK(tr.samples[i].frequency == kOmega);
  }
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double sum = tr.samples[i].position + tr.samples[tr.size() - 1 - i].position;
    CHECK(std::abs(sum - 375 * um) < 1e-12 * 375 * um * 10);
  }
}

TEST_CASE("sigmoid peak velocity matches numerical differentiation") {
  const double d = 375 * um;
  const double t = 200e-6;
  const auto tr = sigmoid_trajectory(0.0, d, t, 6.0, kOmega, 200001);
  double vmax = 0.0;
  for (std::size_t i = 1; i + 1 < tr.size(); ++i) {
    const double v = (tr.samples[i + 1].position - tr.samples[i - 1].position) /
                     (tr.samples[i + 1].time - tr.samples[i - 1].time);
    vmax = std::max(vmax, v);
  }
  CHECK(std::abs(vmax - sigmoid_peak_velocity(d, t, 6.0)) / vmax < 1e-6);
}

TEST_CASE("sigmoid degenerate and invalid inputs") {
  const auto flat = sigmoid_trajectory(1e-5, 1e-5, 1e-4, 6.0, kOmega, 10);
  for (const auto& s : flat.samples) CHECK(s.position == 1e-5);
  CHECK_THROWS_AS(sigmoid_trajectory(0, 1e-5, 0.0, 6.0, kOmega, 10), Error);
  CHECK_THROWS_AS(sigmoid_trajectory(0, 1e-5, 1e-4, 0.0, kOmega, 10), Error);
  CHECK_THROWS_AS(sigmoid_trajectory(0, 1e-5, 1e-4, 6.0, kOmega, 1), Error);
}

TEST_CASE("transport trajectory sits on the AWG clock") {
  const double period = 390e-9;
  const auto tr = transport_trajectory(-1e-4, 1e-4, 1e-3, kOmega, period);
  const auto n = tr.size();
  CHECK(n == static_cast<std::size_t>(std::llround(1e-3 / period)) + 1);
  for (std::size_t i = 0; i < n; ++i) CHECK(tr.samples[i].time == doctest::Approx(i * period).epsilon(1e-12));
  CHECK(tr.samples.back().position == doctest::Approx(1e-4).epsilon(1e-12));
  const auto rev = tr.reversed();
  CHECK(rev.samples.front().position == tr.samples.back().position);
  CHECK(rev.samples.front().time == tr.samples.front().time);
}

TEST_CASE("static well meets position and frequency targets") {
  const auto& cfg = default_config();
  for (const char* zone : {"zone1", "zone2"}) {
    const auto v = solve_static(cfg.layout, {well(zone)}, cfg.hardware);
    const auto w = find_well(cfg.layout, v, cfg.layout.zone_position(zone));
    CHECK(std::abs(w.position.x() - cfg.layout.zone_position(zone)) < 1e-9);
    CHECK(std::abs(w.axial_frequency - kOmega) / kOmega < 1e-3);
    for (double x : v) CHECK(std::abs(x) <= cfg.hardware.electrode_max());
  }
}

TEST_CASE("symmetric two-zone request gives a mirror-symmetric solution") {
  const auto& cfg = default_config();
  const auto v = solve_static(cfg.layout, {well("zone1", kTwoPi * 1e6), well("zone2", kTwoPi * 1e6)}, cfg.hardware);
  const auto names = cfg.layout.dc_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto j = std::find(names.begin(), names.end(), mirror_name(names[i])) - names.begin();
    CHECK(std::abs(v[i] - v[static_cast<std::size_t>(j)]) < 1e-9);
  }
}

TEST_CASE("no objectives yield zero voltages") {
  const auto& cfg = default_config();
  const auto v = solve_static(cfg.layout, {}, cfg.hardware);
  for (double x : v) CHECK(x == 0.0);
}

TEST_CASE("field applied in zone 2 leaves a nulled zone 1 in place") {
  const auto& cfg = default_config();
  const auto& layout = cfg.layout;
  const double x1 = layout.zone_position("zone1");
  const double x2 = layout.zone_position("zone2");
  auto z1 = well("zone1");
  z1.null_field = true;
  auto z2 = well("zone2");
  z2.field = Vec3(100.0, 0.0, 0.0);
  const auto v = solve_static(layout, {z1, z2}, cfg.hardware);
  const auto w1 = find_well(layout, v, x1);
  const auto w2 = find_well(layout, v, x2);
  const auto full = layout.full_voltages(v);
  const auto s1 = sample_potential(layout, full, layout.rf_null(x1));
  CHECK(s1.gradient.norm() < 1.0);
  const double d2 = std::abs(w2.position.x() - x2);
  CHECK(d2 > 1e-9);
  CHECK(std::abs(w1.position.x() - x1) < 0.01 * d2);
}

TEST_CASE("null objectives hold field and curvature near zero") {
  const auto& cfg = default_config();
  auto z1 = well("zone1");
  ZoneObjective z2;
  z2.zone = "zone2";
  z2.null_field = true;
  z2.null_curvature = true;
  const auto v = solve_static(cfg.layout, {z1, z2}, cfg.hardware);
  const auto s = sample_potential(cfg.layout, cfg.layout.full_voltages(v), cfg.layout.rf_null(cfg.layout.zone_position("zone2")));
  CHECK(s.gradient.norm() < 1e-2);
  const double active = cfg.layout.ion().mass * kOmega * kOmega / cfg.layout.ion().charge;
  CHECK(std::abs(s.hessian(0, 0)) < 1e-2 * active);
}

TEST_CASE("inconsistent objectives are rejected") {
  const auto& cfg = default_config();
  auto both = well("zone1");
  both.null_curvature = true;
  CHECK_THROWS_AS(solve_static(cfg.layout, {both}, cfg.hardware), Error);
  CHECK_THROWS_AS(solve_static(cfg.layout, {well("zone1"), well("zone1")}, cfg.hardware), Error);
  CHECK_THROWS_AS(solve_static(cfg.layout, {well("nowhere")}, cfg.hardware), Error);
}

TEST_CASE("unreachable targets are infeasible with an electrode report") {
  const auto& cfg = default_config();
  try {
    solve_static(cfg.layout, {well("zone1", kTwoPi * 40e6)}, cfg.hardware);
    FAIL("expected Infeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
    CHECK(std::string(e.what()).find("dc_") != std::string::npos);
  }
}

TEST_CASE("randomized objectives never produce out-of-bounds voltages") {
  const auto& cfg = default_config();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> freq(0.3e6, 6e6), field(-3e3, 3e3), shift(-60 * um, 60 * um);
  for (int t = 0; t < 40; ++t) {
    auto z1 = well("zone1", kTwoPi * freq(rng));
    z1.field = Vec3(field(rng), 0.0, 0.0);
    z1.well_position = cfg.layout.zone_position("zone1") + shift(rng);
    auto z2 = well("zone2", kTwoPi * freq(rng));
    z2.null_field = (t % 2) == 0;
    try {
      const auto v = solve_static(cfg.layout, {z1, z2}, cfg.hardware);
      for (double x : v) {
        CHECK(x >= cfg.hardware.electrode_min() - 1e-9);
        CHECK(x <= cfg.hardware.electrode_max() + 1e-9);
      }
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Infeasible);
    }
  }
}

TEST_CASE("single-sample trajectory reproduces the static solution") {
  const auto& cfg = default_config();
  Trajectory tr;
  tr.samples.push_back({0.0, cfg.layout.zone_position("zone1"), kOmega, Vec3::Zero()});
  const auto w = synthesize_waveform(cfg.layout, tr, cfg.hardware);
  const auto v = solve_static(cfg.layout, {well("zone1")}, cfg.hardware);
  REQUIRE(w.n_samples() == 1);
  for (std::size_t e = 0; e < v.size(); ++e) CHECK(std::abs(w.samples(0, static_cast<Eigen::Index>(e)) - v[e]) < 1e-12);
}

TEST_CASE("transport waveform passes the per-sample audit and is deterministic") {
  const auto& cfg = default_config();
  const auto tr = transport(1e-3);
  const auto w = synthesize_waveform(cfg.layout, tr, cfg.hardware, cfg.defaults.solver);
  CHECK_NOTHROW(check_limits(w));
  const auto report = audit_waveform(cfg.layout, tr, w);
  CHECK(report.max_position_error < 1e-9);
  CHECK(report.max_frequency_error < 5e-3);
  const auto again = synthesize_waveform(cfg.layout, tr, cfg.hardware, cfg.defaults.solver);
  CHECK((again.samples.array() == w.samples.array()).all());

  const auto rev = synthesize_waveform(cfg.layout, tr.reversed(), cfg.hardware, cfg.defaults.solver);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < w.samples.rows(); ++i) {
    worst = std::max(worst, (rev.samples.row(i) - w.samples.row(w.samples.rows() - 1 - i)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("threaded synthesis is bit-identical") {
  const auto& cfg = default_config();
  const auto tr = transport(1e-3);
  auto opts = cfg.defaults.solver;
  const auto a = synthesize_waveform(cfg.layout, tr, cfg.hardware, opts);
  opts.threads = 3;
  const auto b = synthesize_waveform(cfg.layout, tr, cfg.hardware, opts);
  CHECK((a.samples.array() == b.samples.array()).all());
}

TEST_CASE("trajectory outside the array or faster than the AWG is rejected") {
  const auto& cfg = default_config();
  auto tr = transport(1e-4);
  tr.samples[3].position = 1.0;
  CHECK_THROWS_AS(synthesize_waveform(cfg.layout, tr, cfg.hardware), Error);
  const auto fast = sigmoid_trajectory(-1e-4, 1e-4, 1e-5, 6.0, kOmega, 200);
  CHECK_THROWS_AS(synthesize_waveform(cfg.layout, fast, cfg.hardware), Error);
}

TEST_CASE("limit checks name the electrode and sample") {
  HardwareLimits hw;
  Waveform w;
  w.electrode_names = {"e0", "e1"};
  w.sample_period = hw.awg_sample_period;
  w.limits = hw;
  w.samples = Eigen::MatrixXd::Zero(4, 2);
  w.samples(2, 1) = 0.3;
  CHECK_NOTHROW(check_limits(w));
  w.samples(2, 1) = 0.5;
  try {
    check_limits(w);
    FAIL("expected SlewViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SlewViolation);
    CHECK(std::string(e.what()).find("e1") != std::string::npos);
    CHECK(std::string(e.what()).find("sample 2") != std::string::npos);
  }
  w.samples.setConstant(30.0);
  try {
    check_limits(w);
    FAIL("expected Infeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
  }
}

TEST_CASE("window compensation") {
  const auto& cfg = default_config();
  const auto tr = transport(1e-3);
  std::map<std::string, double> zero;
  for (const auto& [k, v] : kV2) zero[k] = 0.0;
  const auto plain = synthesize_waveform(cfg.layout, tr, cfg.hardware);
  const auto same = synthesize_waveform(apply_window_compensation(cfg.layout, zero), tr, cfg.hardware);
  CHECK((plain.samples.array() == same.samples.array()).all());

  const double x1 = cfg.layout.zone_position("zone1");
  const auto comp1 = apply_window_compensation(cfg.layout, kV2);
  const auto v_plain = solve_static(cfg.layout, {well("zone1")}, cfg.hardware);
  const auto v_comp = solve_static(comp1, {well("zone1")}, cfg.hardware);
  double moved = 0.0;
  for (std::size_t i = 0; i < v_plain.size(); ++i) moved = std::max(moved, std::abs(v_plain[i] - v_comp[i]));
  CHECK(moved > 1e-3);
  const auto w1 = find_well(comp1, v_comp, x1);
  CHECK(std::abs(w1.position.x() - x1) < 1e-9);
  CHECK(std::abs(w1.axial_frequency - kOmega) / kOmega < 1e-3);

  const double x2 = cfg.layout.zone_position("zone2");
  const auto comp2 = apply_window_compensation(cfg.layout, kZone2Set);
  const auto v2 = solve_static(comp2, {well("zone2")}, cfg.hardware);
  const auto w2 = find_well(comp2, v2, x2);
  CHECK(std::abs(w2.position.x() - x2) < 1e-9);
  CHECK(std::abs(w2.axial_frequency - kOmega) / kOmega < 1e-3);

  CHECK_THROWS_AS(apply_window_compensation(cfg.layout, {{"dc_t01", 1.0}}), Error);
  CHECK_THROWS_AS(apply_window_compensation(cfg.layout, {{"missing", 1.0}}), Error);
  try {
    apply_window_compensation(cfg.layout, {{"rf_top", 1.0}});
    FAIL("expected UnknownElectrode");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownElectrode);
  }
}

TEST_CASE("window sources superpose on the DC potential") {
  const auto& cfg = default_config();
  const auto comp = apply_window_compensation(cfg.layout, kV2);
  const auto v = solve_static(comp, {well("zone1")}, cfg.hardware);
  for (double x : {-230 * um, -187.5 * um, -120 * um}) {
    const Vec3 r = cfg.layout.rf_null(x);
    const auto total = sample_potential(comp, comp.full_voltages(v), r);
    auto sum = sample_potential(cfg.layout, cfg.layout.full_voltages(v), r);
    for (const auto& [name, volts] : kV2) {
      const auto u = electrode_unit_sample(cfg.layout.electrodes()[cfg.layout.electrode_index(name)], r);
      sum.potential += volts * u.potential;
      sum.gradient += volts * u.gradient;
      sum.hessian += volts * u.hessian;
    }
    CHECK(std::abs(total.potential - sum.potential) <= 1e-9 * std::abs(sum.potential));
    CHECK((total.gradient - sum.gradient).norm() <= 1e-9 * sum.gradient.norm());
    CHECK((total.hessian - sum.hessian).norm() <= 1e-9 * sum.hessian.norm());
  }
}

TEST_CASE("filter precompensation") {
  HardwareLimits hw;
  const auto slow = ramp_waveform(100e-6, 10.0, hw);
  const auto pre = precompensate_filter(slow, hw);
  CHECK_NOTHROW(check_limits(pre));
  const auto filter = hw.filter();
  const double tau = filter.total_time_constant();
  const auto skip = static_cast<Eigen::Index>(std::ceil(tau / hw.awg_sample_period));
  double worst = 0.0;
  for (Eigen::Index e = 0; e < 2; ++e) {
    const Eigen::VectorXd col = pre.samples.col(e);
    const auto out = filter.apply(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
    for (Eigen::Index i = skip; i + skip < pre.samples.rows(); ++i) {
      worst = std::max(worst, std::abs(out[static_cast<std::size_t>(i)] - slow.samples(i, e)));
    }
  }
  CHECK(worst < 1e-3);

  try {
    precompensate_filter(ramp_waveform(25e-6, 10.0, hw), hw);
    FAIL("expected Infeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
  }

  HardwareLimits none = hw;
  none.filter_cutoffs.clear();
  const auto id = precompensate_filter(slow, none);
  CHECK((id.samples.array() == slow.samples.array()).all());

  auto other = slow;
  other.sample_period *= 2.0;
  CHECK_THROWS_AS(precompensate_filter(other, hw), Error);
}
