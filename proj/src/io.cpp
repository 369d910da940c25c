#include "iontrap/io.hpp"

#include "iontrap/config.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace iontrap::io {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "binary container assumes a little-endian host");

constexpr char kMagic[4] = {'I', 'T', 'W', 'F'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void bad(const std::string& what, const std::string& msg) {
  fail(ErrorCode::ParseError, what + ": " + msg);
}

std::string fmt(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

Csv read_csv(std::string_view text, const std::string& what) {
  Csv csv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (csv.header.empty()) {
      csv.header = std::move(cells);
    } else {
      if (cells.size() != csv.header.size()) {
        bad(what, "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) + " fields, expected " +
                      std::to_string(csv.header.size()));
      }
      csv.rows.push_back(std::move(cells));
      csv.line_numbers.push_back(line_no);
    }
    if (end == text.size()) break;
  }
  if (csv.header.empty()) bad(what, "missing header row");
  return csv;
}

double number(const std::string& cell, const std::string& what, std::size_t line) {
  double v = 0.0;
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    bad(what, "line " + std::to_string(line) + ": '" + cell + "' is not a number");
  }
  return v;
}

void expect_header(const Csv& csv, const std::vector<std::string>& names, const std::string& what) {
  if (csv.header.size() < names.size()) bad(what, "header has too few columns");
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (csv.header[i] != names[i]) bad(what, "expected column '" + names[i] + "', found '" + csv.header[i] + "'");
  }
}

template <class T>
void put(std::string& out, const T& v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  template <class T>
  T get() {
    if (pos + sizeof(T) > bytes.size()) bad("waveform binary", "truncated container");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }

  std::string text(std::size_t n) {
    if (pos + n > bytes.size()) bad("waveform binary", "truncated container");
    std::string s(bytes.substr(pos, n));
    pos += n;
    return s;
  }
};

double uniform_period(const std::vector<double>& t, const std::string& what) {
  if (t.size() < 2) return 0.0;
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) bad(what, "times must increase");
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double expected = t.front() + static_cast<double>(i) * dt;
    if (std::abs(t[i] - expected) > 1e-6 * dt + 1e-9 * std::abs(expected)) {
      bad(what, "sample times are not uniformly spaced at row " + std::to_string(i + 1));
    }
  }
  return dt;
}

json numbers(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  const auto dir = path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create directory '" + dir.string() + "': " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open '" + tmp.string() + "' for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) fail(ErrorCode::Io, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::Io, "cannot move output into place at '" + path.string() + "'");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::filesystem::path resolve_output(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  const char* dir = std::getenv("IONTRAP_OUTPUT_DIR");
  if (dir == nullptr || *dir == '\0') return path;
  return std::filesystem::path(dir) / path;
}

std::string waveform_csv(const Waveform& waveform) {
  waveform.validate();
  std::string out = "t_s";
  for (const auto& n : waveform.electrode_names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < waveform.n_samples(); ++i) {
    out += fmt(waveform.time(i), 9);
    for (std::size_t e = 0; e < waveform.n_electrodes(); ++e) {
      out += ",";
      out += fmt(waveform.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e)), 9);
    }
    out += "\n";
  }
  return out;
}

Waveform parse_waveform_csv(std::string_view text, const HardwareLimits& limits) {
  const std::string what = "waveform CSV";
  const Csv csv = read_csv(text, what);
  expect_header(csv, {"t_s"}, what);
  if (csv.header.size() < 2) bad(what, "no electrode columns");
  if (csv.rows.empty()) bad(what, "no samples");
  Waveform w;
  w.electrode_names.assign(csv.header.begin() + 1, csv.header.end());
  w.limits = limits;
  w.samples.resize(static_cast<Eigen::Index>(csv.rows.size()), static_cast<Eigen::Index>(w.electrode_names.size()));
  std::vector<double> t;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    t.push_back(number(csv.rows[r][0], what, csv.line_numbers[r]));
    for (std::size_t e = 0; e < w.electrode_names.size(); ++e) {
      w.samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(e)) =
          number(csv.rows[r][e + 1], what, csv.line_numbers[r]);
    }
  }
  w.start_time = t.front();
  w.sample_period = t.size() > 1 ? uniform_period(t, what) : limits.awg_sample_period;
  w.validate();
  return w;
}

std::string waveform_binary(const Waveform& waveform) {
  waveform.validate();
  std::string out(kMagic, sizeof kMagic);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(waveform.n_samples()));
  put(out, static_cast<std::uint64_t>(waveform.n_electrodes()));
  put(out, waveform.sample_period);
  put(out, waveform.start_time);
  for (const auto& n : waveform.electrode_names) {
    put(out, static_cast<std::uint32_t>(n.size()));
    out += n;
  }
  for (std::size_t i = 0; i < waveform.n_samples(); ++i) {
    for (std::size_t e = 0; e < waveform.n_electrodes(); ++e) {
      put(out, waveform.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e)));
    }
  }
  return out;
}

Waveform parse_waveform_binary(std::string_view bytes, const HardwareLimits& limits) {
  Reader r{bytes};
  if (r.text(4) != std::string(kMagic, 4)) bad("waveform binary", "bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) bad("waveform binary", "unsupported version " + std::to_string(version));
  const auto n_t = r.get<std::uint64_t>();
  const auto n_e = r.get<std::uint64_t>();
  if (n_t == 0 || n_e == 0 || n_t * n_e * 8 > bytes.size()) bad("waveform binary", "implausible dimensions");
  Waveform w;
  w.limits = limits;
  w.sample_period = r.get<double>();
  w.start_time = r.get<double>();
  for (std::uint64_t e = 0; e < n_e; ++e) w.electrode_names.push_back(r.text(r.get<std::uint32_t>()));
  w.samples.resize(static_cast<Eigen::Index>(n_t), static_cast<Eigen::Index>(n_e));
  for (std::uint64_t i = 0; i < n_t; ++i) {
    for (std::uint64_t e = 0; e < n_e; ++e) {
      w.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e)) = r.get<double>();
    }
  }
  if (r.pos != bytes.size()) bad("waveform binary", "trailing bytes after the sample matrix");
  w.validate();
  return w;
}

Waveform load_waveform(const std::filesystem::path& path, const HardwareLimits& limits) {
  const std::string data = read_file(path);
  if (data.size() >= 4 && data.compare(0, 4, std::string(kMagic, 4)) == 0) return parse_waveform_binary(data, limits);
  return parse_waveform_csv(data, limits);
}

std::string profile_csv(const FrequencyProfile& profile) {
  profile.validate();
  std::string out = "x_m,omega_rad_s,sigma_rad_s\n";
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const double s = profile.frequency_errors.empty() ? 0.0 : profile.frequency_errors[i];
    out += fmt(profile.positions[i], 17) + "," + fmt(profile.frequencies[i], 17) + "," + fmt(s, 17) + "\n";
  }
  return out;
}

FrequencyProfile parse_profile_csv(std::string_view text, double base_frequency) {
  const std::string what = "profile CSV";
  const Csv csv = read_csv(text, what);
  expect_header(csv, {"x_m", "omega_rad_s", "sigma_rad_s"}, what);
  FrequencyProfile p;
  p.base_frequency = base_frequency;
  bool any_sigma = false;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    p.positions.push_back(number(csv.rows[r][0], what, csv.line_numbers[r]));
    p.frequencies.push_back(number(csv.rows[r][1], what, csv.line_numbers[r]));
    p.frequency_errors.push_back(number(csv.rows[r][2], what, csv.line_numbers[r]));
    any_sigma = any_sigma || p.frequency_errors.back() != 0.0;
  }
  if (!any_sigma) p.frequency_errors.clear();
  p.validate();
  return p;
}

std::string window_json(const std::map<std::string, double>& voltages) {
  json j = json::object();
  for (const auto& [k, v] : voltages) j[k] = v;
  return j.dump(2) + "\n";
}

std::map<std::string, double> parse_window_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, std::string("window voltages: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::SchemaError, "window voltages must be a JSON object of name: volts");
  std::map<std::string, double> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number()) fail(ErrorCode::SchemaError, "window voltage '" + it.key() + "' must be a number");
    const double v = it.value().get<double>();
    if (!std::isfinite(v)) fail(ErrorCode::SchemaError, "window voltage '" + it.key() + "' must be finite");
    out[it.key()] = v;
  }
  return out;
}

std::string compensation_csv(const std::vector<CompensationRound>& rounds) {
  std::string out = "round,residual_rad_s";
  if (rounds.empty()) return out + "\n";
  for (const auto& [name, v] : rounds.front().estimate.voltages) out += "," + name;
  out += "\n";
  for (const auto& r : rounds) {
    out += std::to_string(r.round) + "," + fmt(r.residual, 17);
    for (const auto& [name, v] : r.estimate.voltages) out += "," + fmt(v, 17);
    out += "\n";
  }
  return out;
}

std::string trajectory_csv(const IonTrajectory& trajectory) {
  trajectory.validate();
  std::string out = "t_s,x_m,v_m_s,E_J\n";
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    out += fmt(trajectory.times[i], 17) + "," + fmt(trajectory.positions[i], 17) + "," +
           fmt(trajectory.velocities[i], 17) + "," + fmt(trajectory.energies[i], 17) + "\n";
  }
  return out;
}

IonTrajectory parse_trajectory_csv(std::string_view text) {
  const std::string what = "trajectory CSV";
  const Csv csv = read_csv(text, what);
  expect_header(csv, {"t_s", "x_m", "v_m_s", "E_J"}, what);
  IonTrajectory t;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    t.times.push_back(number(csv.rows[r][0], what, csv.line_numbers[r]));
    t.positions.push_back(number(csv.rows[r][1], what, csv.line_numbers[r]));
    t.velocities.push_back(number(csv.rows[r][2], what, csv.line_numbers[r]));
    t.energies.push_back(number(csv.rows[r][3], what, csv.line_numbers[r]));
  }
  t.validate();
  return t;
}

std::string doppler_header_json(const DopplerMap& map, const std::string& matrix_file) {
  map.validate();
  json j;
  j["matrix_csv"] = matrix_file;
  j["probe_delays_s"] = numbers(map.probe_delays);
  j["detunings_rad_s"] = numbers(map.detunings);
  j["wavevector_rad_m"] = map.wavevector;
  j["probe_duration_s"] = map.probe_duration;
  j["rabi_rad_s"] = map.rabi_rate;
  j["warnings"] = map.warnings;
  return j.dump(2) + "\n";
}

std::string doppler_matrix_csv(const DopplerMap& map) {
  map.validate();
  std::string out = "delay_s";
  for (double d : map.detunings) out += "," + fmt(d, 17);
  out += "\n";
  for (std::size_t i = 0; i < map.probe_delays.size(); ++i) {
    out += fmt(map.probe_delays[i], 17);
    for (std::size_t k = 0; k < map.detunings.size(); ++k) {
      out += "," + fmt(map.excitation(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)), 17);
    }
    out += "\n";
  }
  return out;
}

DopplerMap parse_doppler(std::string_view header_json, std::string_view matrix_csv) {
  json j;
  try {
    j = json::parse(header_json.begin(), header_json.end());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, std::string("doppler header: ") + e.what());
  }
  DopplerMap m;
  try {
    m.probe_delays = j.at("probe_delays_s").get<std::vector<double>>();
    m.detunings = j.at("detunings_rad_s").get<std::vector<double>>();
    m.wavevector = j.at("wavevector_rad_m").get<double>();
    m.probe_duration = j.at("probe_duration_s").get<double>();
    m.rabi_rate = j.at("rabi_rad_s").get<double>();
    m.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("doppler header: ") + e.what());
  }
  const std::string what = "doppler matrix CSV";
  const Csv csv = read_csv(matrix_csv, what);
  expect_header(csv, {"delay_s"}, what);
  if (csv.header.size() != m.detunings.size() + 1 || csv.rows.size() != m.probe_delays.size()) {
    bad(what, "matrix shape does not match the header");
  }
  m.excitation.resize(static_cast<Eigen::Index>(m.probe_delays.size()), static_cast<Eigen::Index>(m.detunings.size()));
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    for (std::size_t k = 0; k < m.detunings.size(); ++k) {
      m.excitation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
          number(csv.rows[r][k + 1], what, csv.line_numbers[r]);
    }
  }
  m.validate();
  return m;
}

std::string ramsey_csv(const RamseyResult& result) {
  std::string out = "phi_rad,p_down,sigma\n";
  for (std::size_t i = 0; i < result.phases.size(); ++i) {
    out += fmt(result.phases[i], 17) + "," + fmt(result.p_down[i], 17) + "," + fmt(result.sigma[i], 17) + "\n";
  }
  return out;
}

RamseyResult parse_ramsey_csv(std::string_view text) {
  const std::string what = "Ramsey CSV";
  const Csv csv = read_csv(text, what);
  expect_header(csv, {"phi_rad", "p_down", "sigma"}, what);
  RamseyResult r;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    r.phases.push_back(number(csv.rows[i][0], what, csv.line_numbers[i]));
    r.p_down.push_back(number(csv.rows[i][1], what, csv.line_numbers[i]));
    r.sigma.push_back(number(csv.rows[i][2], what, csv.line_numbers[i]));
  }
  return r;
}

std::string spectroscopy_csv(const std::vector<SpectroscopySeries>& series) {
  std::string out = "t_s,omega_rad_s,sigma_rad_s,zone\n";
  for (const auto& s : series) {
    s.validate();
    require(!s.zone.empty() && s.zone.find(',') == std::string::npos, "series zone must be a non-empty name without commas");
    for (std::size_t i = 0; i < s.size(); ++i) {
      out += fmt(s.times[i], 17) + "," + fmt(s.centers[i], 17) + "," + fmt(s.uncertainties[i], 17) + "," + s.zone + "\n";
    }
  }
  return out;
}

std::vector<SpectroscopySeries> parse_spectroscopy_csv(std::string_view text) {
  const std::string what = "spectroscopy CSV";
  const Csv csv = read_csv(text, what);
  expect_header(csv, {"t_s", "omega_rad_s", "sigma_rad_s", "zone"}, what);
  std::vector<SpectroscopySeries> out;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& zone = csv.rows[r][3];
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) { return s.zone == zone; });
    if (it == out.end()) {
      out.push_back({});
      out.back().zone = zone;
      it = out.end() - 1;
    }
    it->times.push_back(number(csv.rows[r][0], what, csv.line_numbers[r]));
    it->centers.push_back(number(csv.rows[r][1], what, csv.line_numbers[r]));
    it->uncertainties.push_back(number(csv.rows[r][2], what, csv.line_numbers[r]));
  }
  for (const auto& s : out) s.validate();
  return out;
}

const std::vector<double>& Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return columns[i];
  }
  fail(ErrorCode::SchemaError, "table has no column '" + name + "'");
}

Table parse_table(std::string_view text) {
  const std::string what = "table CSV";
  const Csv csv = read_csv(text, what);
  Table t;
  t.names = csv.header;
  t.columns.assign(t.names.size(), {});
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    for (std::size_t c = 0; c < t.names.size(); ++c) t.columns[c].push_back(number(csv.rows[r][c], what, csv.line_numbers[r]));
  }
  return t;
}

std::string RunManifest::to_json() const {
  json j;
  j["command"] = command;
  j["arguments"] = arguments;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["toolkit_version"] = toolkit_version;
  j["started_utc"] = started_utc;
  j["finished_utc"] = finished_utc;
  json outs = json::array();
  for (const auto& o : outputs) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(o.fnv1a64));
    outs.push_back({{"path", o.path}, {"fnv1a64", buf}});
  }
  j["outputs"] = outs;
  return j.dump(2) + "\n";
}

std::string utc_timestamp() {
  std::time_t t = 0;
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  if (epoch != nullptr && *epoch != '\0') {
    char* end = nullptr;
    const long long v = std::strtoll(epoch, &end, 10);
    if (end == nullptr || *end != '\0' || v < 0) fail(ErrorCode::InvalidArgument, "SOURCE_DATE_EPOCH must be a non-negative integer");
    t = static_cast<std::time_t>(v);
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string toolkit_version() { return IONTRAP_VERSION; }

}  // namespace iontrap::io
