#include "iontrap/iontrap.h"

#include "iontrap/config.hpp"
#include "iontrap/dynamics_sim.hpp"
#include "iontrap/io.hpp"
#include "iontrap/qubit_sim.hpp"
#include "iontrap/stray_calib.hpp"
#include "iontrap/waveform_synth.hpp"

#include <json.hpp>

#include <cmath>
#include <algorithm>
#include <cstring>
#include <memory>
#include <optional>
#include <new>
#include <sstream>

struct it_config {
  iontrap::ToolkitConfig cfg;
};
struct it_waveform {
  iontrap::Waveform w;
};
struct it_trajectory {
  iontrap::IonTrajectory t;
};
struct it_doppler_map {
  iontrap::DopplerMap m;
};
struct it_calibration {
  std::vector<iontrap::CompensationRound> rounds;
  std::vector<std::string> estimates;
};
struct it_text {
  std::string s;
};
struct it_table {
  iontrap::io::Table t;
};

namespace {

using namespace iontrap;
using nlohmann::json;

thread_local std::string last_error;

template <class F>
it_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return IT_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return static_cast<it_status>(static_cast<int>(e.code()) + 1);
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return IT_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    last_error = e.what();
    return IT_INTERNAL_ERROR;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

std::vector<std::string> split(const char* list) {
  std::vector<std::string> out;
  if (list == nullptr) return out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::map<std::string, double> windows_from(const char* json_text) {
  if (json_text == nullptr || *json_text == '\0') return {};
  return io::parse_window_json(json_text);
}

TrapLayout layout_with(const ToolkitConfig& cfg, const char* windows_json) {
  const auto w = windows_from(windows_json);
  return w.empty() ? cfg.layout : apply_window_compensation(cfg.layout, w);
}

std::vector<double> copy(const double* p, std::size_t n) {
  if (n > 0) need(p, "array");
  return std::vector<double>(p, p + n);
}

double start_position(const ToolkitConfig& cfg, const TrapLayout& truth, const Waveform& w, const char* zone) {
  const auto& zones = cfg.layout.zones();
  if (zones.empty()) fail(ErrorCode::InvalidArgument, "layout defines no zones");
  const double guess = zone != nullptr ? cfg.layout.zone_position(zone) : zones.front().x;
  return find_well(truth, w.row(0), guess).position.x();
}

IntegrationOptions integration(const ToolkitConfig& cfg, const it_sim_options& o) {
  IntegrationOptions io;
  io.dt = o.dt > 0.0 ? o.dt : cfg.defaults.integrator_dt;
  io.output_stride = o.output_stride > 0 ? o.output_stride : cfg.defaults.output_stride;
  io.hold_time = o.hold_time;
  return io;
}

std::vector<std::vector<std::string>> ties_within(const std::vector<std::vector<std::string>>& ties,
                                                  const std::vector<std::string>& windows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& group : ties) {
    bool inside = true;
    for (const auto& n : group) inside = inside && std::find(windows.begin(), windows.end(), n) != windows.end();
    if (inside) out.push_back(group);
  }
  return out;
}

}  // namespace

extern "C" {

const char* it_last_error(void) { return last_error.c_str(); }

const char* it_status_name(it_status status) {
  if (status == IT_OK) return "Ok";
  if (status == IT_INTERNAL_ERROR) return "InternalError";
  if (status > IT_OK && status < IT_INTERNAL_ERROR) {
    return to_string(static_cast<ErrorCode>(static_cast<int>(status) - 1)).data();
  }
  return "Unknown";
}

int it_status_is_validation(it_status status) {
  switch (status) {
    case IT_INVALID_ARGUMENT:
    case IT_PARSE_ERROR:
    case IT_SCHEMA_ERROR:
    case IT_UNIT_ERROR:
    case IT_IO_ERROR:
    case IT_UNKNOWN_ELECTRODE:
      return 1;
    default:
      return 0;
  }
}

const char* it_version(void) {
  static const std::string v = io::toolkit_version();
  return v.c_str();
}

it_status it_config_load(const char* path, it_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new it_config{load_config(path)};
  });
}

void it_config_free(it_config* config) { delete config; }

it_status it_config_hash(const it_config* config, char out[17]) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    std::memcpy(out, config->cfg.hash_hex().c_str(), 17);
  });
}

it_status it_config_seed(const it_config* config, uint64_t* out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = config->cfg.defaults.seed;
  });
}

it_status it_config_axial_frequency(const it_config* config, double* out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = config->cfg.defaults.axial_frequency;
  });
}

it_status it_config_probe_duration(const it_config* config, double* out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = config->cfg.defaults.probe.duration;
  });
}

it_status it_config_zone_position(const it_config* config, const char* zone, double* out) {
  return guarded([&] {
    need(config, "config");
    need(zone, "zone");
    need(out, "out");
    *out = config->cfg.layout.zone_position(zone);
  });
}

it_status it_synthesize_transport(const it_config* config, const char* from_zone, const char* to_zone,
                                  double duration, double frequency, double steepness, const char* model_windows_json, unsigned threads,
                                  it_waveform** out, double* max_position_error, double* max_frequency_error) {
  return guarded([&] {
    need(config, "config");
    need(from_zone, "from_zone");
    need(to_zone, "to_zone");
    need(out, "out");
    const auto& cfg = config->cfg;
    const double w = frequency > 0.0 ? frequency : cfg.defaults.axial_frequency;
    const auto model = layout_with(cfg, model_windows_json);
    const auto traj = transport_trajectory(cfg.layout.zone_position(from_zone), cfg.layout.zone_position(to_zone),
                                           duration, w, cfg.hardware.awg_sample_period,
                                           steepness > 0.0 ? steepness : 6.0);
    auto solver = cfg.defaults.solver;
    solver.threads = std::max(1u, threads);
    auto wf = synthesize_waveform(model, traj, cfg.hardware, solver);
    if (max_position_error != nullptr || max_frequency_error != nullptr) {
      const auto report = audit_waveform(model, traj, wf);
      if (max_position_error != nullptr) *max_position_error = report.max_position_error;
      if (max_frequency_error != nullptr) *max_frequency_error = report.max_frequency_error;
    }
    *out = new it_waveform{std::move(wf)};
  });
}

it_status it_waveform_precompensate(const it_config* config, const it_waveform* waveform, it_waveform** out) {
  return guarded([&] {
    need(config, "config");
    need(waveform, "waveform");
    need(out, "out");
    *out = new it_waveform{precompensate_filter(waveform->w, config->cfg.hardware)};
  });
}

it_status it_waveform_load(const it_config* config, const char* path, it_waveform** out) {
  return guarded([&] {
    need(config, "config");
    need(path, "path");
    need(out, "out");
    *out = new it_waveform{io::load_waveform(path, config->cfg.hardware)};
  });
}

it_status it_waveform_save(const it_waveform* waveform, const char* path, int binary) {
  return guarded([&] {
    need(waveform, "waveform");
    need(path, "path");
    io::write_file_atomic(path, binary ? io::waveform_binary(waveform->w) : io::waveform_csv(waveform->w));
  });
}

size_t it_waveform_samples(const it_waveform* waveform) { return waveform ? waveform->w.n_samples() : 0; }
size_t it_waveform_electrodes(const it_waveform* waveform) { return waveform ? waveform->w.n_electrodes() : 0; }
double it_waveform_period(const it_waveform* waveform) { return waveform ? waveform->w.sample_period : 0.0; }

it_status it_waveform_value(const it_waveform* waveform, size_t sample, size_t electrode, double* out) {
  return guarded([&] {
    need(waveform, "waveform");
    need(out, "out");
    require(sample < waveform->w.n_samples() && electrode < waveform->w.n_electrodes(), "waveform index out of range");
    *out = waveform->w.samples(static_cast<Eigen::Index>(sample), static_cast<Eigen::Index>(electrode));
  });
}

void it_waveform_free(it_waveform* waveform) { delete waveform; }

void it_sim_options_default(it_sim_options* options) {
  if (options == nullptr) return;
  *options = it_sim_options{0, 0.0, 0.0, 0, nullptr, nullptr};
}

it_status it_simulate(const it_config* config, const it_waveform* waveform, const it_sim_options* options,
                      it_trajectory** out) {
  return guarded([&] {
    need(config, "config");
    need(waveform, "waveform");
    need(out, "out");
    it_sim_options o;
    it_sim_options_default(&o);
    if (options != nullptr) o = *options;
    const auto& cfg = config->cfg;
    const auto truth = layout_with(cfg, o.truth_windows_json);
    const double x0 = start_position(cfg, truth, waveform->w, o.start_zone);
    std::optional<FilterCascade> cascade;
    if (o.apply_filter) cascade = cfg.hardware.filter();
    *out = new it_trajectory{integrate_motion(truth, waveform->w, cascade, x0, 0.0, integration(cfg, o))};
  });
}

size_t it_trajectory_size(const it_trajectory* trajectory) { return trajectory ? trajectory->t.size() : 0; }

double it_trajectory_final_nbar(const it_trajectory* trajectory) {
  return trajectory ? trajectory->t.final_nbar : std::nan("");
}

it_status it_trajectory_sample(const it_trajectory* trajectory, size_t index, double* t, double* x, double* v,
                               double* energy) {
  return guarded([&] {
    need(trajectory, "trajectory");
    require(index < trajectory->t.size(), "trajectory index out of range");
    if (t) *t = trajectory->t.times[index];
    if (x) *x = trajectory->t.positions[index];
    if (v) *v = trajectory->t.velocities[index];
    if (energy) *energy = trajectory->t.energies[index];
  });
}

it_status it_trajectory_save(const it_trajectory* trajectory, const char* path) {
  return guarded([&] {
    need(trajectory, "trajectory");
    need(path, "path");
    io::write_file_atomic(path, io::trajectory_csv(trajectory->t));
  });
}

void it_trajectory_free(it_trajectory* trajectory) { delete trajectory; }

it_status it_doppler(const it_config* config, const it_waveform* waveform, const it_sim_options* sim,
                     const it_doppler_options* options, it_doppler_map** out) {
  return guarded([&] {
    need(config, "config");
    need(waveform, "waveform");
    need(options, "options");
    need(out, "out");
    it_sim_options o;
    it_sim_options_default(&o);
    if (sim != nullptr) o = *sim;
    const auto& cfg = config->cfg;
    const auto& d = *options;
    require(d.delay_step > 0.0 && d.delay_stop >= d.delay_start, "delay range must be increasing with a positive step");
    require(d.detuning_points >= 2 && d.detuning_max > d.detuning_min, "detuning grid needs two or more increasing points");
    std::vector<double> delays;
    const auto n_delay = static_cast<std::size_t>(std::floor((d.delay_stop - d.delay_start) / d.delay_step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n_delay; ++i) delays.push_back(d.delay_start + static_cast<double>(i) * d.delay_step);
    std::vector<double> detunings;
    for (std::size_t k = 0; k < d.detuning_points; ++k) {
      detunings.push_back(d.detuning_min + (d.detuning_max - d.detuning_min) * static_cast<double>(k) /
                                               static_cast<double>(d.detuning_points - 1));
    }
    ProbeSettings probe;
    probe.duration = d.probe_duration > 0.0 ? d.probe_duration : cfg.defaults.probe.duration;
    probe.wavevector = cfg.defaults.probe.wavevector;
    probe.rabi_rate = cfg.defaults.probe.rabi_rate;
    const auto truth = layout_with(cfg, o.truth_windows_json);
    const double x0 = start_position(cfg, truth, waveform->w, o.start_zone);
    std::optional<FilterCascade> cascade;
    if (o.apply_filter) cascade = cfg.hardware.filter();
    *out = new it_doppler_map{doppler_map(truth, waveform->w, cascade, x0, 0.0, integration(cfg, o), probe, delays,
                                          detunings, std::max(1u, d.threads))};
  });
}

size_t it_doppler_delays(const it_doppler_map* map) { return map ? map->m.probe_delays.size() : 0; }

it_status it_doppler_ridge(const it_doppler_map* map, double* out, size_t n) {
  return guarded([&] {
    need(map, "map");
    need(out, "out");
    const auto r = doppler_ridge(map->m);
    require(n >= r.size(), "ridge buffer is too small");
    std::copy(r.begin(), r.end(), out);
  });
}

it_status it_doppler_save(const it_doppler_map* map, const char* header_path, const char* matrix_path) {
  return guarded([&] {
    need(map, "map");
    need(header_path, "header_path");
    need(matrix_path, "matrix_path");
    const auto name = std::filesystem::path(matrix_path).filename().string();
    io::write_file_atomic(matrix_path, io::doppler_matrix_csv(map->m));
    io::write_file_atomic(header_path, io::doppler_header_json(map->m, name));
  });
}

void it_doppler_free(it_doppler_map* map) { delete map; }

it_status it_calibrate(const it_config* config, const char* true_windows_json, const char* zones, int rounds,
                       double noise_fraction, uint64_t seed, it_calibration** out) {
  return guarded([&] {
    need(config, "config");
    need(true_windows_json, "true_windows_json");
    need(out, "out");
    const auto& cfg = config->cfg;
    const auto truth = io::parse_window_json(true_windows_json);
    require(!truth.empty(), "true window voltages are empty");
    std::vector<double> centres;
    const auto names = split(zones);
    if (names.empty()) {
      for (const auto& z : cfg.layout.zones()) centres.push_back(z.x);
    } else {
      for (const auto& z : names) centres.push_back(cfg.layout.zone_position(z));
    }
    CompensationOptions o;
    o.rounds = rounds > 0 ? rounds : cfg.defaults.calibration.rounds;
    for (const auto& [k, v] : truth) o.windows.push_back(k);
    o.ties = ties_within(cfg.defaults.calibration.ties, o.windows);
    o.positions = calibration_positions(centres, cfg.defaults.calibration.span, cfg.defaults.calibration.points);
    o.measurement.noise_fraction = noise_fraction >= 0.0 ? noise_fraction : cfg.defaults.calibration.noise_fraction;
    o.measurement.seed = seed != 0 ? seed : cfg.defaults.seed;
    o.limits = cfg.hardware;
    o.solver = cfg.defaults.solver;
    auto result = std::make_unique<it_calibration>();
    result->rounds = iterate_compensation(truth, cfg.layout, cfg.defaults.axial_frequency, o);
    for (const auto& r : result->rounds) result->estimates.push_back(io::window_json(r.estimate.voltages));
    *out = result.release();
  });
}

int it_calibration_rounds(const it_calibration* calibration) {
  return calibration ? static_cast<int>(calibration->rounds.size()) : 0;
}

it_status it_calibration_residual(const it_calibration* calibration, int round, double* out) {
  return guarded([&] {
    need(calibration, "calibration");
    need(out, "out");
    require(round >= 1 && round <= static_cast<int>(calibration->rounds.size()), "round out of range");
    *out = calibration->rounds[static_cast<std::size_t>(round - 1)].residual;
  });
}

const char* it_calibration_estimate(const it_calibration* calibration, int round) {
  if (calibration == nullptr || round < 1 || round > static_cast<int>(calibration->estimates.size())) return nullptr;
  return calibration->estimates[static_cast<std::size_t>(round - 1)].c_str();
}

it_status it_calibration_save(const it_calibration* calibration, const char* table_path, const char* estimate_path) {
  return guarded([&] {
    need(calibration, "calibration");
    if (table_path != nullptr) io::write_file_atomic(table_path, io::compensation_csv(calibration->rounds));
    if (estimate_path != nullptr && !calibration->estimates.empty()) {
      io::write_file_atomic(estimate_path, calibration->estimates.back());
    }
  });
}

void it_calibration_free(it_calibration* calibration) { delete calibration; }

it_status it_fit_profile(const it_config* config, const char* profile_path, const char* windows,
                         const char* ties_json, it_text** out) {
  return guarded([&] {
    need(config, "config");
    need(profile_path, "profile_path");
    need(out, "out");
    const auto& cfg = config->cfg;
    const auto profile = io::parse_profile_csv(io::read_file(profile_path), cfg.defaults.axial_frequency);
    const auto names = split(windows);
    require(!names.empty(), "no windows given");
    std::vector<std::vector<std::string>> ties;
    if (ties_json != nullptr && *ties_json != '\0') {
      try {
        ties = json::parse(ties_json).get<std::vector<std::vector<std::string>>>();
      } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, std::string("ties: ") + e.what());
      }
    } else {
      ties = ties_within(cfg.defaults.calibration.ties, names);
    }
    const auto fit = fit_window_voltages(profile, cfg.layout, names, ties);
    json j;
    j["voltages"] = fit.fitted.voltages;
    json sig = json::object();
    for (const auto& [k, v] : fit.fitted.voltages) sig[k] = fit.sigma(k);
    j["sigma"] = sig;
    j["residual_rms_rad_s"] = fit.residual_rms;
    j["chi_squared"] = fit.chi_squared;
    j["iterations"] = fit.iterations;
    *out = new it_text{j.dump(2) + "\n"};
  });
}

const char* it_text_get(const it_text* text) { return text ? text->s.c_str() : nullptr; }
void it_text_free(it_text* text) { delete text; }

it_status it_ramsey(int mode, int phase_model, const double* phases, size_t n, size_t shots, uint64_t seed,
                    unsigned threads, double* p_down, double* sigma) {
  return guarded([&] {
    need(p_down, "p_down");
    require(mode == IT_RAMSEY_OPTICAL || mode == IT_RAMSEY_HYBRID, "unknown Ramsey mode");
    require(phase_model >= IT_PHASE_FIXED && phase_model <= IT_PHASE_PER_POINT, "unknown laser phase model");
    RamseyOptions o;
    o.mode = mode == IT_RAMSEY_HYBRID ? RamseyMode::Hybrid : RamseyMode::Optical;
    o.phase_model = phase_model == IT_PHASE_FIXED      ? LaserPhaseModel::Fixed
                    : phase_model == IT_PHASE_PER_SHOT ? LaserPhaseModel::PerShot
                                                       : LaserPhaseModel::PerPoint;
    o.shots = shots;
    o.seed = seed;
    o.threads = std::max(1u, threads);
    const auto r = ramsey_scan(copy(phases, n), o);
    std::copy(r.p_down.begin(), r.p_down.end(), p_down);
    if (sigma != nullptr) std::copy(r.sigma.begin(), r.sigma.end(), sigma);
  });
}

it_status it_ramsey_save(const char* path, const double* phases, const double* p_down, const double* sigma,
                         size_t n) {
  return guarded([&] {
    need(path, "path");
    RamseyResult r{copy(phases, n), copy(p_down, n), copy(sigma, n)};
    io::write_file_atomic(path, io::ramsey_csv(r));
  });
}

it_status it_fit_sinusoid(const double* phases, const double* values, size_t n, double* contrast,
                          double* contrast_sigma, double* phase) {
  return guarded([&] {
    const auto f = fit_sinusoid(copy(phases, n), copy(values, n));
    if (contrast) *contrast = f.contrast;
    if (contrast_sigma) *contrast_sigma = f.contrast_sigma;
    if (phase) *phase = f.phase;
  });
}

it_status it_pi_infidelity(double epsilon, int composite, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = composite ? bb1_pi_infidelity(epsilon) : plain_pi_infidelity(epsilon);
  });
}

it_status it_thermal_carrier(double rabi, double eta, double nbar, double t, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = thermal_carrier({rabi, eta, nbar, 0}, t);
  });
}

it_status it_table_load(const char* path, it_table** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new it_table{io::parse_table(io::read_file(path))};
  });
}

size_t it_table_rows(const it_table* table) { return table ? table->t.rows() : 0; }

it_status it_table_column(const it_table* table, const char* name, double* out, size_t n) {
  return guarded([&] {
    need(table, "table");
    need(name, "name");
    need(out, "out");
    const auto& c = table->t.column(name);
    require(n >= c.size(), "column buffer is too small");
    std::copy(c.begin(), c.end(), out);
  });
}

void it_table_free(it_table* table) { delete table; }

it_status it_fit_nbar(const double* times, const double* populations, size_t n, double eta, double rabi_guess,
                      const double* sigma, double* nbar, double* nbar_sigma, double* rabi, double* rabi_sigma) {
  return guarded([&] {
    const auto f = fit_nbar(copy(times, n), copy(populations, n), eta, rabi_guess,
                            sigma ? copy(sigma, n) : std::vector<double>{});
    if (nbar) *nbar = f.nbar;
    if (nbar_sigma) *nbar_sigma = f.nbar_sigma();
    if (rabi) *rabi = f.rabi;
    if (rabi_sigma) *rabi_sigma = f.rabi_sigma();
  });
}

it_status it_lorentzian_fit(const double* detunings, const double* populations, size_t n, const double* sigma,
                            double* center, double* center_sigma, double* fwhm, double* fwhm_sigma) {
  return guarded([&] {
    const auto f = lorentzian_fit(copy(detunings, n), copy(populations, n), sigma ? copy(sigma, n) : std::vector<double>{});
    if (center) *center = f.center;
    if (center_sigma) *center_sigma = f.center_sigma;
    if (fwhm) *fwhm = f.fwhm;
    if (fwhm_sigma) *fwhm_sigma = f.fwhm_sigma;
  });
}

it_status it_crosstalk_ratio(double target, double target_sigma, double spectator, double spectator_sigma,
                             double* ratio, double* sigma) {
  return guarded([&] {
    const auto r = crosstalk_ratio(target, target_sigma, spectator, spectator_sigma);
    if (ratio) *ratio = r.value;
    if (sigma) *sigma = r.sigma;
  });
}

it_status it_correlation(const char* spectroscopy_path, const char* zone_a, const char* zone_b, double window,
                         double* r, size_t* pairs, size_t* dropped) {
  return guarded([&] {
    need(spectroscopy_path, "spectroscopy_path");
    need(zone_a, "zone_a");
    need(zone_b, "zone_b");
    const auto series = io::parse_spectroscopy_csv(io::read_file(spectroscopy_path));
    auto find = [&](const char* z) -> const SpectroscopySeries& {
      for (const auto& s : series) {
        if (s.zone == z) return s;
      }
      fail(ErrorCode::InvalidArgument, std::string("no spectroscopy series for zone '") + z + "'");
    };
    const auto c = correlation(find(zone_a), find(zone_b), window);
    if (r) *r = c.r;
    if (pairs) *pairs = c.pairs;
    if (dropped) *dropped = c.dropped;
  });
}

it_status it_resolve_output(const char* path, char* buffer, size_t capacity) {
  return guarded([&] {
    need(path, "path");
    need(buffer, "buffer");
    const auto p = io::resolve_output(path).string();
    require(p.size() + 1 <= capacity, "path buffer is too small");
    std::memcpy(buffer, p.c_str(), p.size() + 1);
  });
}

it_status it_write_file(const char* path, const char* data, size_t size) {
  return guarded([&] {
    need(path, "path");
    if (size > 0) need(data, "data");
    io::write_file_atomic(path, std::string_view(data, size));
  });
}

it_status it_timestamp(char out[32]) {
  return guarded([&] {
    need(out, "out");
    const auto s = io::utc_timestamp();
    std::memcpy(out, s.c_str(), std::min<std::size_t>(s.size() + 1, 32));
  });
}

it_status it_write_manifest(const char* path, const char* command, const char* const* arguments, size_t n_arguments,
                            const char* config_hash, uint64_t seed, const char* started, const char* const* outputs,
                            size_t n_outputs) {
  return guarded([&] {
    need(path, "path");
    need(command, "command");
    io::RunManifest m;
    m.command = command;
    for (size_t i = 0; i < n_arguments; ++i) m.arguments.emplace_back(arguments[i]);
    m.config_hash = config_hash ? config_hash : "";
    m.seed = seed;
    m.toolkit_version = io::toolkit_version();
    m.started_utc = started ? started : io::utc_timestamp();
    const auto base = std::filesystem::path(path).parent_path();
    for (size_t i = 0; i < n_outputs; ++i) {
      need(outputs[i], "output path");
      auto rel = std::filesystem::path(outputs[i]).lexically_relative(base.empty() ? "." : base);
      if (rel.empty()) rel = outputs[i];
      m.outputs.push_back({rel.generic_string(), fnv1a64(io::read_file(outputs[i]))});
    }
    m.finished_utc = io::utc_timestamp();
    io::write_file_atomic(path, m.to_json());
  });
}

}  // extern "C"
