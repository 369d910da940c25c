#include <iontrap/iontrap.h>

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>
#include <unistd.h>

namespace {

constexpr double kTwoPi = 6.28318530717958647692;
const std::string kConfig = std::string(IONTRAP_SOURCE_DIR) + "/configs/default.json";

std::filesystem::path scratch() {
  auto p = std::filesystem::temp_directory_path() / ("iontrap_capi_test_" + std::to_string(::getpid()));
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct Cfg {
  it_config* p = nullptr;
  Cfg() { REQUIRE(it_config_load(kConfig.c_str(), &p) == IT_OK); }
  ~Cfg() { it_config_free(p); }
};

}  // namespace

TEST_CASE("status names and classification") {
  CHECK(std::string(it_status_name(IT_OK)) == "Ok");
  CHECK(std::string(it_status_name(IT_SLEW_VIOLATION)) == "SlewViolation");
  CHECK(std::string(it_status_name(IT_INTERNAL_ERROR)) == "InternalError");
  CHECK(it_status_is_validation(IT_SCHEMA_ERROR));
  CHECK(it_status_is_validation(IT_IO_ERROR));
  CHECK_FALSE(it_status_is_validation(IT_INFEASIBLE));
  CHECK_FALSE(it_status_is_validation(IT_ION_LOST));
  CHECK(std::strlen(it_version()) > 0);
}

TEST_CASE("config errors carry codes and messages") {
  it_config* c = nullptr;
  CHECK(it_config_load("/nonexistent/config.json", &c) == IT_IO_ERROR);
  CHECK(c == nullptr);
  CHECK(std::strlen(it_last_error()) > 0);
  CHECK(it_config_load(nullptr, &c) == IT_INVALID_ARGUMENT);

  const auto bad = scratch() / "bad.json";
  std::ofstream(bad) << "{\n  \"layout\": [1, 2,\n";
  CHECK(it_config_load(bad.string().c_str(), &c) == IT_PARSE_ERROR);
}

TEST_CASE("config accessors") {
  Cfg cfg;
  char hash[17];
  REQUIRE(it_config_hash(cfg.p, hash) == IT_OK);
  CHECK(std::strlen(hash) == 16);
  CHECK(std::string(hash).find_first_not_of("0123456789abcdef") == std::string::npos);
  Cfg again;
  char hash2[17];
  REQUIRE(it_config_hash(again.p, hash2) == IT_OK);
  CHECK(std::string(hash) == hash2);

  double f = 0.0, z = 0.0, probe = 0.0;
  CHECK(it_config_axial_frequency(cfg.p, &f) == IT_OK);
  CHECK(f == doctest::Approx(kTwoPi * 1.9e6).epsilon(1e-12));
  CHECK(it_config_zone_position(cfg.p, "zone2", &z) == IT_OK);
  CHECK(z == doctest::Approx(187.5e-6).epsilon(1e-12));
  CHECK(it_config_probe_duration(cfg.p, &probe) == IT_OK);
  CHECK(probe == doctest::Approx(30e-6).epsilon(1e-12));
  CHECK(it_config_zone_position(cfg.p, "zone9", &z) == IT_INVALID_ARGUMENT);
}

TEST_CASE("transport synthesis, file round trips and simulation") {
  Cfg cfg;
  it_waveform* wf = nullptr;
  double pos_err = 1.0, freq_err = 1.0;
  REQUIRE(it_synthesize_transport(cfg.p, "zone1", "zone2", 1e-3, 0.0, 0.0, nullptr, 1, &wf, &pos_err, &freq_err) ==
          IT_OK);
  CHECK(pos_err < 1e-9);
  CHECK(freq_err < 5e-3);
  CHECK(it_waveform_electrodes(wf) == 20);
  CHECK(it_waveform_period(wf) == doctest::Approx(390e-9));
  const std::size_t n = it_waveform_samples(wf);
  CHECK(n == 2565);
  double v = 0.0;
  CHECK(it_waveform_value(wf, n, 0, &v) == IT_INVALID_ARGUMENT);

  const auto dir = scratch();
  const auto csv = (dir / "wf.csv").string();
  const auto bin = (dir / "wf.bin").string();
  REQUIRE(it_waveform_save(wf, csv.c_str(), 0) == IT_OK);
  REQUIRE(it_waveform_save(wf, bin.c_str(), 1) == IT_OK);
  it_waveform* from_csv = nullptr;
  it_waveform* from_bin = nullptr;
  REQUIRE(it_waveform_load(cfg.p, csv.c_str(), &from_csv) == IT_OK);
  REQUIRE(it_waveform_load(cfg.p, bin.c_str(), &from_bin) == IT_OK);
  double worst_csv = 0.0, worst_bin = 0.0;
  for (std::size_t i = 0; i < n; i += 7) {
    for (std::size_t e = 0; e < 20; ++e) {
      double a = 0, b = 0, c = 0;
      it_waveform_value(wf, i, e, &a);
      it_waveform_value(from_csv, i, e, &b);
      it_waveform_value(from_bin, i, e, &c);
      worst_csv = std::max(worst_csv, std::abs(a - b) / std::max(std::abs(a), 1e-3));
      worst_bin = std::max(worst_bin, std::abs(a - c));
    }
  }
  CHECK(worst_csv < 1e-8);
  CHECK(worst_bin == 0.0);

  it_sim_options opt;
  it_sim_options_default(&opt);
  opt.hold_time = 20e-6;
  it_trajectory* traj = nullptr;
  REQUIRE(it_simulate(cfg.p, from_bin, &opt, &traj) == IT_OK);
  CHECK(it_trajectory_size(traj) > 1000);
  CHECK(it_trajectory_final_nbar(traj) < 1.0);
  double t = 0, x = 0;
  REQUIRE(it_trajectory_sample(traj, it_trajectory_size(traj) - 1, &t, &x, nullptr, nullptr) == IT_OK);
  CHECK(std::abs(x - 187.5e-6) < 1e-7);
  const auto traj_csv = (dir / "traj.csv").string();
  CHECK(it_trajectory_save(traj, traj_csv.c_str()) == IT_OK);
  CHECK(slurp(traj_csv).rfind("t_s,x_m,v_m_s,E_J\n", 0) == 0);

  it_trajectory_free(traj);
  it_waveform_free(from_csv);
  it_waveform_free(from_bin);
  it_waveform_free(wf);
}

TEST_CASE("fast transport is refused with a slew diagnosis") {
  Cfg cfg;
  it_waveform* wf = nullptr;
  CHECK(it_synthesize_transport(cfg.p, "zone1", "zone2", 100e-6, 0.0, 0.0, nullptr, 1, &wf, nullptr, nullptr) ==
        IT_SLEW_VIOLATION);
  CHECK(wf == nullptr);
  CHECK(std::string(it_last_error()).find("sample") != std::string::npos);
}

TEST_CASE("closed-loop calibration through the C interface") {
  Cfg cfg;
  const char* truth = R"({"z1_left":-2,"z1_right":-2,"z1_top":-2,"z1_bottom":-2})";
  it_calibration* cal = nullptr;
  REQUIRE(it_calibrate(cfg.p, truth, "zone1", 3, 0.0, 0, &cal) == IT_OK);
  REQUIRE(it_calibration_rounds(cal) == 3);
  double last = 1e9;
  CHECK(it_calibration_residual(cal, 3, &last) == IT_OK);
  CHECK(last < kTwoPi * 1e3);
  CHECK(it_calibration_residual(cal, 4, &last) == IT_INVALID_ARGUMENT);
  CHECK(it_calibration_estimate(cal, 0) == nullptr);
  const auto est = nlohmann::json::parse(it_calibration_estimate(cal, 3));
  CHECK(est.at("z1_left").get<double>() == doctest::Approx(-2.0).epsilon(1e-3));
  CHECK(est.at("z1_top").get<double>() == est.at("z1_bottom").get<double>());
  it_calibration_free(cal);

  CHECK(it_calibrate(cfg.p, "{\"nope\": 1}", nullptr, 1, 0.0, 0, &cal) == IT_UNKNOWN_ELECTRODE);
  CHECK(it_calibrate(cfg.p, "{bad json", nullptr, 1, 0.0, 0, &cal) == IT_PARSE_ERROR);
}

TEST_CASE("flat profile fits to zero window voltages") {
  Cfg cfg;
  double w0 = 0.0;
  it_config_axial_frequency(cfg.p, &w0);
  const auto path = scratch() / "flat_profile.csv";
  {
    std::ofstream out(path);
    out.precision(17);
    out << "x_m,omega_rad_s,sigma_rad_s\n";
    for (int i = 0; i < 21; ++i) out << (-237.5e-6 + 5e-6 * i) << "," << w0 << "," << 0.0 << "\n";
  }
  it_text* text = nullptr;
  REQUIRE(it_fit_profile(cfg.p, path.string().c_str(), "z1_left,z1_right,z1_top,z1_bottom", nullptr, &text) == IT_OK);
  const auto j = nlohmann::json::parse(it_text_get(text));
  for (const auto& [k, v] : j.at("voltages").items()) CHECK(std::abs(v.get<double>()) < 1e-9);
  it_text_free(text);
  CHECK(it_fit_profile(cfg.p, path.string().c_str(), "", nullptr, &text) == IT_INVALID_ARGUMENT);
}

TEST_CASE("qubit entry points") {
  std::vector<double> phi(16), p(16), s(16);
  for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = kTwoPi * static_cast<double>(i) / 16.0;
  REQUIRE(it_ramsey(IT_RAMSEY_HYBRID, IT_PHASE_FIXED, phi.data(), phi.size(), 200, 3, 1, p.data(), s.data()) == IT_OK);
  double c = 0, cs = 0, ph = 0;
  REQUIRE(it_fit_sinusoid(phi.data(), p.data(), phi.size(), &c, &cs, &ph) == IT_OK);
  CHECK(std::abs(c - 1.0) < 4.0 * cs + 1e-12);
  CHECK(it_ramsey(7, IT_PHASE_FIXED, phi.data(), phi.size(), 200, 3, 1, p.data(), s.data()) == IT_INVALID_ARGUMENT);

  double plain = 0, bb1 = 0;
  it_pi_infidelity(0.05, 0, &plain);
  it_pi_infidelity(0.05, 1, &bb1);
  CHECK(plain == doctest::Approx(std::pow(std::sin(kTwoPi / 4.0 * 0.05), 2)).epsilon(1e-12));
  CHECK(bb1 < 1e-4 * plain);

  double pc = 0;
  REQUIRE(it_thermal_carrier(kTwoPi * 15e3, 0.05, 0.0, 1.0 / 30e3, &pc) == IT_OK);
  CHECK(pc == doctest::Approx(std::pow(std::cos(kTwoPi * 15e3 * (1.0 - 0.5 * 0.05 * 0.05) / 30e3 / 2.0), 2)).epsilon(1e-9));
}

TEST_CASE("table loading and analysis") {
  const auto path = scratch() / "table.csv";
  std::ofstream(path) << "a,b\n1,2\n3,4\n";
  it_table* t = nullptr;
  REQUIRE(it_table_load(path.string().c_str(), &t) == IT_OK);
  CHECK(it_table_rows(t) == 2);
  double col[2];
  REQUIRE(it_table_column(t, "b", col, 2) == IT_OK);
  CHECK(col[1] == 4.0);
  CHECK(it_table_column(t, "c", col, 2) == IT_SCHEMA_ERROR);
  it_table_free(t);

  double r = 0, rs = 0;
  REQUIRE(it_crosstalk_ratio(196.3, 0.0, 0.28, 0.0, &r, &rs) == IT_OK);
  CHECK(r == doctest::Approx(0.28 / 196.3).epsilon(1e-14));
}

TEST_CASE("manifest records output digests relative to its directory") {
  const auto dir = scratch();
  const auto out = (dir / "payload.txt").string();
  const std::string body = "abc\n";
  REQUIRE(it_write_file(out.c_str(), body.data(), body.size()) == IT_OK);
  const auto manifest = (dir / "payload.txt.manifest.json").string();
  const char* args[] = {"--x", "1"};
  const char* outs[] = {out.c_str()};
  ::setenv("SOURCE_DATE_EPOCH", "0", 1);
  char ts[32];
  REQUIRE(it_timestamp(ts) == IT_OK);
  CHECK(std::string(ts) == "1970-01-01T00:00:00Z");
  REQUIRE(it_write_manifest(manifest.c_str(), "test", args, 2, "00", 9, ts, outs, 1) == IT_OK);
  ::unsetenv("SOURCE_DATE_EPOCH");
  const auto j = nlohmann::json::parse(slurp(manifest));
  CHECK(j.at("seed").get<std::uint64_t>() == 9);
  CHECK(j.at("outputs").at(0).at("path") == "payload.txt");
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv(body)));
  CHECK(j.at("outputs").at(0).at("fnv1a64") == hex);

  ::setenv("IONTRAP_OUTPUT_DIR", "/tmp/somewhere", 1);
  char buf[256];
  REQUIRE(it_resolve_output("x.csv", buf, sizeof buf) == IT_OK);
  CHECK(std::string(buf) == "/tmp/somewhere/x.csv");
  CHECK(it_resolve_output("x.csv", buf, 4) == IT_INVALID_ARGUMENT);
  ::unsetenv("IONTRAP_OUTPUT_DIR");
}
