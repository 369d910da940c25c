#include <iontrap/iontrap.h>

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

struct Failure {
  it_status status;
  std::string message;
};

void check(it_status s) {
  if (s != IT_OK) throw Failure{s, it_last_error()};
}

void usage_error(const std::string& message) { throw Failure{IT_INVALID_ARGUMENT, message}; }

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Config = Handle<it_config, it_config_free>;
using WaveformH = Handle<it_waveform, it_waveform_free>;
using TrajectoryH = Handle<it_trajectory, it_trajectory_free>;
using DopplerH = Handle<it_doppler_map, it_doppler_free>;
using CalibrationH = Handle<it_calibration, it_calibration_free>;
using TextH = Handle<it_text, it_text_free>;
using TableH = Handle<it_table, it_table_free>;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string resolve(const std::string& path) {
  std::vector<char> buf(path.size() + 4096);
  check(it_resolve_output(path.c_str(), buf.data(), buf.size()));
  return buf.data();
}

// Inline JSON, or @path to read it from a file.
std::string json_argument(const std::string& value) {
  if (value.empty() || value[0] != '@') return value;
  std::ifstream in(value.substr(1), std::ios::binary);
  if (!in) throw Failure{IT_IO_ERROR, "cannot open '" + value.substr(1) + "'"};
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<double> column(const it_table* table, const char* name, bool optional = false) {
  std::vector<double> v(it_table_rows(table));
  const it_status s = it_table_column(table, name, v.data(), v.size());
  if (s != IT_OK && optional) return {};
  check(s);
  return v;
}

std::string stem_with(const std::string& path, const std::string& suffix) {
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  return (has_ext ? path.substr(0, dot) : path) + suffix;
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

struct Run {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned threads = 1;
  std::vector<std::string> arguments;
  std::string command;
  std::string started;

  Config config;
  std::vector<std::string> outputs;

  const it_config* cfg() {
    if (config.get() == nullptr) {
      if (config_path.empty()) usage_error("--config is required for this command");
      check(it_config_load(config_path.c_str(), config.out()));
    }
    return config.get();
  }

  std::uint64_t effective_seed() {
    if (seed_given) return seed;
    if (!config_path.empty()) {
      std::uint64_t s = 1;
      check(it_config_seed(cfg(), &s));
      return s;
    }
    return 1;
  }

  std::string output(const std::string& path) {
    const std::string p = resolve(path);
    outputs.push_back(p);
    return p;
  }

  std::string primary_output() {
    if (out.empty()) usage_error("--out is required");
    return output(out);
  }

  void write_text(const std::string& path, const std::string& text) {
    check(it_write_file(output(path).c_str(), text.data(), text.size()));
  }

  void finish() {
    if (outputs.empty()) return;
    std::string hash;
    if (!config_path.empty()) {
      char h[17];
      check(it_config_hash(cfg(), h));
      hash = h;
    }
    std::vector<const char*> args;
    for (const auto& a : arguments) args.push_back(a.c_str());
    std::vector<const char*> outs;
    for (const auto& o : outputs) outs.push_back(o.c_str());
    const std::string manifest = outputs.front() + ".manifest.json";
    check(it_write_manifest(manifest.c_str(), command.c_str(), args.data(), args.size(), hash.c_str(),
                            effective_seed(), started.c_str(), outs.data(), outs.size()));
  }
};

std::string json_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '"' || c == '\\') o += '\\';
    o += c;
  }
  return o;
}

struct JsonObject {
  std::vector<std::pair<std::string, std::string>> fields;
  void num(const std::string& k, double v) { fields.emplace_back(k, std::isfinite(v) ? fmt(v) : "null"); }
  void str(const std::string& k, const std::string& v) { fields.emplace_back(k, "\"" + json_escape(v) + "\""); }
  std::string dump() const {
    std::string s = "{\n";
    for (std::size_t i = 0; i < fields.size(); ++i) {
      s += "  \"" + fields[i].first + "\": " + fields[i].second + (i + 1 < fields.size() ? ",\n" : "\n");
    }
    return s + "}\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  Run run;
  for (int i = 1; i < argc; ++i) run.arguments.emplace_back(argv[i]);

  CLI::App app{"Ion-trap transport toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(it_version()));
  app.add_option("--config", run.config_path, "Toolkit configuration (JSON)");
  auto* seed_opt = app.add_option("--seed", run.seed, "Random seed (default: configured seed)");
  app.add_option("--out", run.out, "Primary output file; a manifest is written next to it");
  app.add_option("--threads", run.threads, "Worker thread cap")->check(CLI::Range(1u, 1024u));

  // synth
  auto* synth = app.add_subcommand("synth", "Synthesize a zone-to-zone transport waveform");
  std::string from = "zone1", to = "zone2", model_windows;
  double duration = 1e-3, freq_mhz = 0.0, steepness = 6.0;
  bool precompensate = false;
  synth->add_option("--from", from, "Start zone")->capture_default_str();
  synth->add_option("--to", to, "End zone")->capture_default_str();
  synth->add_option("--duration", duration, "Transport duration, s")->capture_default_str();
  synth->add_option("--frequency-MHz", freq_mhz, "Axial frequency (default: configured)");
  synth->add_option("--steepness", steepness, "Sigmoid steepness")->capture_default_str();
  synth->add_option("--model-voltages", model_windows, "Window voltages included in the model (JSON or @file)");
  synth->add_flag("--precompensate", precompensate, "Pre-distort for the configured filter cascade");

  // shared motion options
  std::string waveform_path, true_windows, start_zone;
  bool apply_filter = false;
  double hold = 0.0;
  auto motion_options = [&](CLI::App* c) {
    c->add_option("--waveform", waveform_path, "Waveform file (CSV or binary)")->required();
    c->add_option("--true-voltages", true_windows, "Window voltages present in the trap (JSON or @file)");
    c->add_option("--start-zone", start_zone, "Zone whose well holds the ion initially");
    c->add_flag("--filter", apply_filter, "Pass the drive through the configured filter cascade");
    c->add_option("--hold", hold, "Hold time after the last sample, s")->capture_default_str();
  };

  auto* simulate = app.add_subcommand("simulate", "Integrate the ion motion under a waveform");
  motion_options(simulate);

  auto* doppler = app.add_subcommand("doppler", "Simulated Doppler velocimetry map");
  motion_options(doppler);
  double probe_us = 0.0, delay_step_us = 10.0, span_khz = 1000.0;
  std::size_t det_points = 201;
  doppler->add_option("--probe-us", probe_us, "Probe duration, us (default: configured)");
  doppler->add_option("--delay-step-us", delay_step_us, "Probe delay step, us")->capture_default_str();
  doppler->add_option("--span-kHz", span_khz, "Detuning half-span, kHz")->capture_default_str();
  doppler->add_option("--points", det_points, "Detuning points")->capture_default_str();

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Closed-loop window compensation demo");
  std::string calib_true, zones;
  int rounds = 0;
  double noise = -1.0;
  calibrate->add_option("--true-voltages", calib_true, "Hidden window voltages (JSON or @file)")->required();
  calibrate->add_option("--rounds", rounds, "Rounds (default: configured)");
  calibrate->add_option("--zones", zones, "Comma separated zones to probe (default: all)");
  calibrate->add_option("--noise", noise, "Frequency noise relative to omega_0 (default: configured)");

  // qubit
  auto* qubit = app.add_subcommand("qubit", "Qubit protocol simulations");
  qubit->require_subcommand(1);
  qubit->fallthrough();
  auto* ramsey = qubit->add_subcommand("ramsey", "Two-zone Ramsey phase scan");
  std::string mode = "hybrid", phase_model = "per-shot";
  std::size_t points = 25, shots = 500;
  ramsey->add_option("--mode", mode)->check(CLI::IsMember({"optical", "hybrid"}))->capture_default_str();
  ramsey->add_option("--phase-model", phase_model)
      ->check(CLI::IsMember({"fixed", "per-shot", "per-point"}))
      ->capture_default_str();
  ramsey->add_option("--points", points, "Phase points over one period")->capture_default_str();
  ramsey->add_option("--shots", shots, "Shots per point")->capture_default_str();

  auto* bb1 = qubit->add_subcommand("bb1", "Pi-pulse infidelity versus area error, plain and BB1");
  double eps_min = 0.01, eps_max = 0.1;
  std::size_t eps_points = 10;
  bb1->add_option("--eps-min", eps_min)->capture_default_str();
  bb1->add_option("--eps-max", eps_max)->capture_default_str();
  bb1->add_option("--points", eps_points)->capture_default_str();

  auto* carrier = qubit->add_subcommand("carrier", "Thermal carrier Rabi flop");
  double rabi_khz = 15.0, eta = 0.05, nbar = 0.0, t_max = 200e-6;
  std::size_t t_points = 101;
  carrier->add_option("--rabi-kHz", rabi_khz)->capture_default_str();
  carrier->add_option("--eta", eta)->capture_default_str();
  carrier->add_option("--nbar", nbar)->capture_default_str();
  carrier->add_option("--t-max", t_max, "s")->capture_default_str();
  carrier->add_option("--points", t_points)->capture_default_str();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Fits and statistics on measured data");
  analyze->require_subcommand(1);
  analyze->fallthrough();
  std::string input;
  auto* a_nbar = analyze->add_subcommand("nbar", "Fit n-bar to a carrier flop (columns t_s,p_down[,sigma])");
  a_nbar->add_option("--input", input)->required();
  a_nbar->add_option("--eta", eta)->required();
  a_nbar->add_option("--rabi-kHz", rabi_khz, "Initial Rabi frequency guess")->required();
  auto* a_lor = analyze->add_subcommand("lorentzian", "Lorentzian line fit (columns detuning_rad_s,p[,sigma])");
  a_lor->add_option("--input", input)->required();
  auto* a_xt = analyze->add_subcommand("crosstalk", "Spectator-to-target Rabi ratio");
  double target_khz = 0.0, target_sig = 0.0, spect_khz = 0.0, spect_sig = 0.0;
  a_xt->add_option("--target-kHz", target_khz)->required();
  a_xt->add_option("--target-sigma-kHz", target_sig)->capture_default_str();
  a_xt->add_option("--spectator-kHz", spect_khz)->required();
  a_xt->add_option("--spectator-sigma-kHz", spect_sig)->capture_default_str();
  auto* a_corr = analyze->add_subcommand("correlation", "Correlation of two spectroscopy series");
  std::string zone_a = "zone1", zone_b = "zone2";
  double window = 60.0;
  a_corr->add_option("--input", input)->required();
  a_corr->add_option("--zone-a", zone_a)->capture_default_str();
  a_corr->add_option("--zone-b", zone_b)->capture_default_str();
  a_corr->add_option("--window", window, "Pairing window, s")->capture_default_str();
  auto* a_prof = analyze->add_subcommand("profile", "Fit window voltages to a frequency profile");
  std::string windows, ties;
  a_prof->add_option("--input", input)->required();
  a_prof->add_option("--windows", windows, "Comma separated window names")->required();
  a_prof->add_option("--ties", ties, "JSON array of tied name groups (default: configured)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  run.seed_given = seed_opt->count() > 0;

  try {
    char ts[32];
    check(it_timestamp(ts));
    run.started = ts;

    it_sim_options sim;
    it_sim_options_default(&sim);
    std::string truth_json;
    auto fill_sim = [&] {
      truth_json = json_argument(true_windows);
      sim.apply_filter = apply_filter ? 1 : 0;
      sim.hold_time = hold;
      sim.start_zone = start_zone.empty() ? nullptr : start_zone.c_str();
      sim.truth_windows_json = truth_json.empty() ? nullptr : truth_json.c_str();
    };
    auto load_waveform = [&](WaveformH& w) { check(it_waveform_load(run.cfg(), waveform_path.c_str(), w.out())); };

    if (*synth) {
      run.command = "synth";
      const std::string model = json_argument(model_windows);
      WaveformH wf;
      double pos_err = 0.0, freq_err = 0.0;
      check(it_synthesize_transport(run.cfg(), from.c_str(), to.c_str(), duration, freq_mhz * 1e6 * kTwoPi, steepness,
                                    model.empty() ? nullptr : model.c_str(), run.threads, wf.out(), &pos_err,
                                    &freq_err));
      const it_waveform* result = wf.get();
      WaveformH pre;
      if (precompensate) {
        check(it_waveform_precompensate(run.cfg(), wf.get(), pre.out()));
        result = pre.get();
      }
      const std::string path = run.primary_output();
      const bool binary = ends_with(path, ".bin") || ends_with(path, ".itwf");
      check(it_waveform_save(result, path.c_str(), binary ? 1 : 0));
      std::cout << "samples " << it_waveform_samples(result) << "\nelectrodes " << it_waveform_electrodes(result)
                << "\nmax_position_error_m " << fmt(pos_err) << "\nmax_frequency_error " << fmt(freq_err) << "\n";
    } else if (*simulate) {
      run.command = "simulate";
      fill_sim();
      WaveformH wf;
      load_waveform(wf);
      TrajectoryH traj;
      check(it_simulate(run.cfg(), wf.get(), &sim, traj.out()));
      check(it_trajectory_save(traj.get(), run.primary_output().c_str()));
      std::cout << "points " << it_trajectory_size(traj.get()) << "\nfinal_nbar "
                << fmt(it_trajectory_final_nbar(traj.get())) << "\n";
    } else if (*doppler) {
      run.command = "doppler";
      fill_sim();
      WaveformH wf;
      load_waveform(wf);
      double probe = probe_us * 1e-6;
      if (probe <= 0.0) check(it_config_probe_duration(run.cfg(), &probe));
      const double total = it_waveform_period(wf.get()) * static_cast<double>(it_waveform_samples(wf.get()) - 1) + hold;
      if (total < probe) usage_error("waveform is shorter than the probe");
      it_doppler_options d{};
      d.probe_duration = probe;
      d.delay_start = 0.0;
      d.delay_step = delay_step_us * 1e-6;
      d.delay_stop = total - probe;
      d.detuning_min = -span_khz * 1e3 * kTwoPi;
      d.detuning_max = span_khz * 1e3 * kTwoPi;
      d.detuning_points = det_points;
      d.threads = run.threads;
      DopplerH map;
      check(it_doppler(run.cfg(), wf.get(), &sim, &d, map.out()));
      const std::string header = run.primary_output();
      const std::string matrix = run.output(stem_with(run.out, ".matrix.csv"));
      check(it_doppler_save(map.get(), header.c_str(), matrix.c_str()));
      std::cout << "delays " << it_doppler_delays(map.get()) << "\n";
    } else if (*calibrate) {
      run.command = "calibrate";
      const std::string truth = json_argument(calib_true);
      CalibrationH cal;
      check(it_calibrate(run.cfg(), truth.c_str(), zones.empty() ? nullptr : zones.c_str(), rounds, noise,
                         run.effective_seed(), cal.out()));
      const std::string table = run.primary_output();
      const std::string estimate = run.output(stem_with(run.out, ".estimate.json"));
      check(it_calibration_save(cal.get(), table.c_str(), estimate.c_str()));
      for (int r = 1; r <= it_calibration_rounds(cal.get()); ++r) {
        double res = 0.0;
        check(it_calibration_residual(cal.get(), r, &res));
        std::cout << "round " << r << " residual_Hz " << fmt(res / kTwoPi) << "\n";
      }
    } else if (*ramsey) {
      run.command = "qubit ramsey";
      if (points < 3) usage_error("--points must be at least 3");
      std::vector<double> phi(points), p(points), sig(points);
      for (std::size_t i = 0; i < points; ++i) phi[i] = kTwoPi * static_cast<double>(i) / static_cast<double>(points);
      const int m = mode == "hybrid" ? IT_RAMSEY_HYBRID : IT_RAMSEY_OPTICAL;
      const int pm = phase_model == "fixed" ? IT_PHASE_FIXED : phase_model == "per-shot" ? IT_PHASE_PER_SHOT
                                                                                          : IT_PHASE_PER_POINT;
      check(it_ramsey(m, pm, phi.data(), points, shots, run.effective_seed(), run.threads, p.data(), sig.data()));
      check(it_ramsey_save(run.primary_output().c_str(), phi.data(), p.data(), sig.data(), points));
      double c = 0.0, cs = 0.0, ph = 0.0;
      check(it_fit_sinusoid(phi.data(), p.data(), points, &c, &cs, &ph));
      std::cout << "contrast " << fmt(c) << "\ncontrast_sigma " << fmt(cs) << "\n";
    } else if (*bb1) {
      run.command = "qubit bb1";
      if (eps_points < 2 || !(eps_min > 0.0) || !(eps_max > eps_min)) usage_error("need 0 < eps-min < eps-max and 2+ points");
      std::string csv = "epsilon,plain_infidelity,bb1_infidelity\n";
      for (std::size_t i = 0; i < eps_points; ++i) {
        const double e = eps_min * std::pow(eps_max / eps_min, static_cast<double>(i) / static_cast<double>(eps_points - 1));
        double plain = 0.0, comp = 0.0;
        check(it_pi_infidelity(e, 0, &plain));
        check(it_pi_infidelity(e, 1, &comp));
        csv += fmt(e) + "," + fmt(plain) + "," + fmt(comp) + "\n";
      }
      if (run.out.empty()) usage_error("--out is required");
      run.write_text(run.out, csv);
    } else if (*carrier) {
      run.command = "qubit carrier";
      if (t_points < 2) usage_error("--points must be at least 2");
      std::string csv = "t_s,p_down\n";
      for (std::size_t i = 0; i < t_points; ++i) {
        const double t = t_max * static_cast<double>(i) / static_cast<double>(t_points - 1);
        double p = 0.0;
        check(it_thermal_carrier(rabi_khz * 1e3 * kTwoPi, eta, nbar, t, &p));
        csv += fmt(t) + "," + fmt(p) + "\n";
      }
      if (run.out.empty()) usage_error("--out is required");
      run.write_text(run.out, csv);
    } else if (*analyze) {
      JsonObject j;
      if (*a_nbar) {
        run.command = "analyze nbar";
        TableH t;
        check(it_table_load(input.c_str(), t.out()));
        const auto ts_ = column(t.get(), "t_s");
        const auto p = column(t.get(), "p_down");
        const auto s = column(t.get(), "sigma", true);
        double nb = 0, nbs = 0, om = 0, oms = 0;
        check(it_fit_nbar(ts_.data(), p.data(), ts_.size(), eta, rabi_khz * 1e3 * kTwoPi, s.empty() ? nullptr : s.data(),
                          &nb, &nbs, &om, &oms));
        j.num("nbar", nb);
        j.num("nbar_sigma", nbs);
        j.num("rabi_rad_s", om);
        j.num("rabi_sigma_rad_s", oms);
      } else if (*a_lor) {
        run.command = "analyze lorentzian";
        TableH t;
        check(it_table_load(input.c_str(), t.out()));
        const auto d = column(t.get(), "detuning_rad_s");
        const auto p = column(t.get(), "p");
        const auto s = column(t.get(), "sigma", true);
        double c = 0, cs = 0, w = 0, ws = 0;
        check(it_lorentzian_fit(d.data(), p.data(), d.size(), s.empty() ? nullptr : s.data(), &c, &cs, &w, &ws));
        j.num("center_rad_s", c);
        j.num("center_sigma_rad_s", cs);
        j.num("fwhm_rad_s", w);
        j.num("fwhm_sigma_rad_s", ws);
      } else if (*a_xt) {
        run.command = "analyze crosstalk";
        double r = 0, rs = 0;
        check(it_crosstalk_ratio(target_khz, target_sig, spect_khz, spect_sig, &r, &rs));
        j.num("ratio", r);
        j.num("ratio_sigma", rs);
      } else if (*a_corr) {
        run.command = "analyze correlation";
        double r = 0;
        std::size_t pairs = 0, dropped = 0;
        check(it_correlation(input.c_str(), zone_a.c_str(), zone_b.c_str(), window, &r, &pairs, &dropped));
        j.num("r", r);
        j.num("pairs", static_cast<double>(pairs));
        j.num("dropped", static_cast<double>(dropped));
      } else if (*a_prof) {
        run.command = "analyze profile";
        const std::string tj = json_argument(ties);
        TextH text;
        check(it_fit_profile(run.cfg(), input.c_str(), windows.c_str(), tj.empty() ? nullptr : tj.c_str(), text.out()));
        if (run.out.empty()) usage_error("--out is required");
        run.write_text(run.out, it_text_get(text.get()));
        std::cout << it_text_get(text.get());
      }
      if (!j.fields.empty()) {
        const std::string text = j.dump();
        if (!run.out.empty()) run.write_text(run.out, text);
        std::cout << text;
      }
    }
    run.finish();
  } catch (const Failure& f) {
    std::cerr << "error [" << it_status_name(f.status) << "]: " << f.message << "\n";
    return it_status_is_validation(f.status) ? 2 : 1;
  }
  return 0;
}
