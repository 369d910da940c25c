#include "iontrap/config.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace iontrap {

using nlohmann::json;

namespace {

enum class Dim { Length, Frequency, Time, Voltage, Slew, Mass, Charge, Sensitivity };

struct UnitDef {
  std::string_view suffix;
  double factor;
};

const std::vector<UnitDef>& units(Dim d) {
  static const std::vector<UnitDef> length{{"m", 1.0}, {"mm", 1e-3}, {"um", 1e-6}, {"nm", 1e-9}};
  static const std::vector<UnitDef> frequency{{"Hz", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}, {"GHz", 1e9}};
  static const std::vector<UnitDef> time{{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}};
  static const std::vector<UnitDef> voltage{{"V", 1.0}, {"mV", 1e-3}};
  static const std::vector<UnitDef> slew{{"V_per_s", 1.0}, {"V_per_us", 1e6}};
  static const std::vector<UnitDef> mass{{"kg", 1.0}, {"amu", 1.66053906660e-27}};
  static const std::vector<UnitDef> charge{{"C", 1.0}, {"e", kElementaryCharge}};
  // Cyclic frequency shift per field, converted to Hz per tesla.
  static const std::vector<UnitDef> sensitivity{{"Hz_per_T", 1.0}, {"Hz_per_G", 1e4}, {"Hz_per_mG", 1e7}};
  switch (d) {
    case Dim::Length: return length;
    case Dim::Frequency: return frequency;
    case Dim::Time: return time;
    case Dim::Voltage: return voltage;
    case Dim::Slew: return slew;
    case Dim::Mass: return mass;
    case Dim::Charge: return charge;
    case Dim::Sensitivity: return sensitivity;
  }
  return length;
}

[[noreturn]] void schema(const std::string& msg) { fail(ErrorCode::SchemaError, msg); }

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) schema("'" + path_ + "' must be a JSON object");
  }

  std::string key_path(std::string_view key) const { return path_ + "." + std::string(key); }

  void expect_unit_base(std::string_view base) { unit_bases_.insert(std::string(base)); }

  bool has(std::string_view key) const { return j_.contains(std::string(key)); }

  const json* raw(std::string_view key) {
    auto it = j_.find(std::string(key));
    if (it == j_.end()) return nullptr;
    used_.insert(std::string(key));
    return &*it;
  }

  std::optional<double> number(std::string_view base, Dim dim) {
    const json* v = find_unit(base, dim);
    if (!v) return std::nullopt;
    return scalar(*v, last_key_) * last_factor_;
  }

  std::optional<std::vector<double>> numbers(std::string_view base, Dim dim) {
    const json* v = find_unit(base, dim);
    if (!v) return std::nullopt;
    if (!v->is_array()) schema("'" + key_path(last_key_) + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : *v) out.push_back(scalar(x, last_key_) * last_factor_);
    return out;
  }

  std::optional<double> plain(std::string_view key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    return scalar(*v, std::string(key));
  }

  double scalar(const json& v, const std::string& key) const {
    if (!v.is_number()) schema("'" + key_path(key) + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) schema("'" + key_path(key) + "' must be finite");
    return d;
  }

  // Throws UnitError when `base` appears only with an unrecognized suffix.
  void finish_unit(std::string_view base) const {
    const std::string prefix = std::string(base) + "_";
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      const std::string& key = it.key();
      if (key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0) {
        fail(ErrorCode::UnitError, "unknown unit suffix '" + key.substr(prefix.size()) + "' in '" + key_path(key) + "'");
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      const std::string& key = it.key();
      if (used_.count(key)) continue;
      for (const auto& base : unit_bases_) {
        if (key.size() > base.size() + 1 && key.compare(0, base.size() + 1, base + "_") == 0) {
          fail(ErrorCode::UnitError, "unknown unit suffix '" + key.substr(base.size() + 1) + "' in '" +
                                         key_path(key) + "'");
        }
      }
      schema("unknown key '" + key_path(key) + "'");
    }
  }

 private:
  const json* find_unit(std::string_view base, Dim dim) {
    const std::string prefix = std::string(base) + "_";
    unit_bases_.insert(std::string(base));
    const json* found = nullptr;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      const std::string& key = it.key();
      if (key.size() <= prefix.size() || key.compare(0, prefix.size(), prefix) != 0) continue;
      const std::string suffix = key.substr(prefix.size());
      for (const auto& u : units(dim)) {
        if (u.suffix != suffix) continue;
        if (found) schema("'" + key_path(base) + "' is given more than once");
        found = &it.value();
        last_key_ = key;
        last_factor_ = u.factor;
        used_.insert(key);
      }
    }
    return found;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
  std::set<std::string> unit_bases_;
  std::string last_key_;
  double last_factor_ = 1.0;
};

std::string require_string(Section& s, std::string_view key) {
  const json* v = s.raw(key);
  if (!v) schema("missing key '" + s.key_path(key) + "'");
  if (!v->is_string()) schema("'" + s.key_path(key) + "' must be a string");
  return v->get<std::string>();
}

double require_number(Section& s, std::string_view base, Dim dim) {
  auto v = s.number(base, dim);
  if (!v) {
    s.finish_unit(base);
    schema("missing key '" + s.key_path(base) + "_<unit>'");
  }
  return *v;
}

RectPatch parse_patch(const json& p, const std::string& path, double factor) {
  if (!p.is_array() || p.size() != 4) schema("'" + path + "' must be [x_min, x_max, y_min, y_max]");
  std::array<double, 4> v{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!p[i].is_number()) schema("'" + path + "' must contain numbers");
    v[i] = p[i].get<double>() * factor;
  }
  RectPatch r{v[0], v[1], v[2], v[3]};
  try {
    validate(r);
  } catch (const Error& e) {
    schema("'" + path + "': " + e.what());
  }
  return r;
}

ElectrodeKind parse_kind(const std::string& k, const std::string& path) {
  if (k == "dc") return ElectrodeKind::DC;
  if (k == "window") return ElectrodeKind::Window;
  if (k == "rf") return ElectrodeKind::RFRail;
  schema("'" + path + "' must be one of dc, window, rf");
}

TrapLayout parse_layout(const json& j) {
  Section s(j, "layout");
  const double height = require_number(s, "height", Dim::Length);
  if (!(height > 0.0)) schema("'layout.height' must be positive");

  IonSpecies ion;
  if (const json* ij = s.raw("ion")) {
    Section is(*ij, "layout.ion");
    if (auto m = is.number("mass", Dim::Mass)) ion.mass = *m;
    if (auto q = is.number("charge", Dim::Charge)) ion.charge = *q;
    is.finish();
    if (!(ion.mass > 0.0)) schema("'layout.ion.mass' must be positive");
    if (ion.charge == 0.0) schema("'layout.ion.charge' must be non-zero");
  }

  auto pseudo = s.numbers("pseudo_frequencies", Dim::Frequency);
  if (!pseudo) schema("missing key 'layout.pseudo_frequencies_<unit>'");
  if (pseudo->size() != 2) schema("'layout.pseudo_frequencies' needs two values");
  for (double f : *pseudo) {
    if (!(f > 0.0)) schema("'layout.pseudo_frequencies' must be positive");
  }

  std::vector<Zone> zones;
  if (const json* zj = s.raw("zones")) {
    if (!zj->is_array()) schema("'layout.zones' must be an array");
    for (std::size_t i = 0; i < zj->size(); ++i) {
      Section zs((*zj)[i], "layout.zones[" + std::to_string(i) + "]");
      Zone z;
      z.id = require_string(zs, "id");
      z.x = require_number(zs, "x", Dim::Length);
      zs.finish();
      zones.push_back(z);
    }
  }

  std::vector<Electrode> electrodes;
  const json* ej = s.raw("electrodes");
  if (!ej || !ej->is_array() || ej->empty()) schema("'layout.electrodes' must be a non-empty array");
  for (std::size_t i = 0; i < ej->size(); ++i) {
    const std::string path = "layout.electrodes[" + std::to_string(i) + "]";
    Section es((*ej)[i], path);
    Electrode e;
    e.name = require_string(es, "name");
    e.kind = parse_kind(require_string(es, "kind"), path + ".kind");
    bool got = false;
    for (const auto& u : units(Dim::Length)) {
      const std::string key = "patches_" + std::string(u.suffix);
      if (!es.has(key)) continue;
      if (got) schema("'" + path + ".patches' is given more than once");
      got = true;
      const json* pj = es.raw(key);
      if (!pj->is_array() || pj->empty()) schema("'" + path + "." + key + "' must be a non-empty array");
      for (std::size_t k = 0; k < pj->size(); ++k) {
        e.patches.push_back(parse_patch((*pj)[k], path + "." + key + "[" + std::to_string(k) + "]", u.factor));
      }
    }
    es.expect_unit_base("patches");
    if (!got) schema("missing key '" + path + ".patches_<unit>'");
    es.finish();
    electrodes.push_back(std::move(e));
  }
  s.finish();

  try {
    return TrapLayout(std::move(electrodes), height, ion,
                      {kTwoPi * (*pseudo)[0], kTwoPi * (*pseudo)[1]}, std::move(zones));
  } catch (const Error& e) {
    schema(std::string("invalid layout: ") + e.what());
  }
}

HardwareLimits parse_hardware(const json* j) {
  HardwareLimits h;
  if (!j) return h;
  Section s(*j, "hardware");
  if (auto v = s.number("v_min", Dim::Voltage)) h.v_min = *v;
  if (auto v = s.number("v_max", Dim::Voltage)) h.v_max = *v;
  if (auto v = s.number("awg_sample_period", Dim::Time)) h.awg_sample_period = *v;
  if (auto v = s.number("awg_slew", Dim::Slew)) h.awg_slew_max = *v;
  if (auto v = s.plain("amp_gain")) h.amp_gain = *v;
  if (auto v = s.number("amp_slew", Dim::Slew)) h.amp_slew_max = *v;
  if (auto v = s.numbers("filter_cutoffs", Dim::Frequency)) h.filter_cutoffs = *v;
  s.finish();
  try {
    h.validate();
  } catch (const Error& e) {
    schema(std::string("invalid hardware limits: ") + e.what());
  }
  return h;
}

ToolkitDefaults parse_defaults(const json* j, const TrapLayout& layout) {
  ToolkitDefaults d;
  if (!j) return d;
  Section s(*j, "defaults");
  if (const json* sj = s.raw("solver")) {
    Section ss(*sj, "defaults.solver");
    if (auto v = ss.plain("regularization")) d.solver.regularization = *v;
    if (auto v = ss.plain("smoothness")) d.solver.smoothness = *v;
    if (auto v = ss.plain("equality_weight")) d.solver.equality_weight = *v;
    if (auto v = ss.plain("transverse_weight")) d.solver.transverse_weight = *v;
    ss.finish();
    if (!(d.solver.regularization > 0.0 && d.solver.smoothness >= 0.0 && d.solver.equality_weight > 0.0 &&
          d.solver.transverse_weight >= 0.0 && d.solver.transverse_weight <= 1.0)) {
      schema("'defaults.solver' weights must be positive");
    }
  }
  if (auto v = s.number("axial_frequency", Dim::Frequency)) d.axial_frequency = kTwoPi * *v;
  if (auto v = s.number("integrator_dt", Dim::Time)) d.integrator_dt = *v;
  if (auto v = s.plain("output_stride")) {
    if (!(*v >= 1.0) || std::floor(*v) != *v) schema("'defaults.output_stride' must be a positive integer");
    d.output_stride = static_cast<std::size_t>(*v);
  }
  if (const json* v = s.raw("seed")) {
    if (!v->is_number_unsigned()) schema("'defaults.seed' must be a non-negative integer");
    d.seed = v->get<std::uint64_t>();
  }
  if (const json* cj = s.raw("calibration")) {
    Section cs(*cj, "defaults.calibration");
    if (auto v = cs.number("span", Dim::Length)) d.calibration.span = *v;
    if (auto v = cs.plain("points")) {
      if (!(*v >= 3.0) || std::floor(*v) != *v) schema("'defaults.calibration.points' must be an integer >= 3");
      d.calibration.points = static_cast<std::size_t>(*v);
    }
    if (auto v = cs.plain("noise_fraction")) d.calibration.noise_fraction = *v;
    if (auto v = cs.plain("rounds")) {
      if (!(*v >= 1.0) || std::floor(*v) != *v) schema("'defaults.calibration.rounds' must be a positive integer");
      d.calibration.rounds = static_cast<int>(*v);
    }
    if (const json* tj = cs.raw("ties")) {
      if (!tj->is_array()) schema("'defaults.calibration.ties' must be an array of name lists");
      for (const auto& group : *tj) {
        if (!group.is_array() || group.empty()) schema("'defaults.calibration.ties' entries must be name lists");
        std::vector<std::string> names;
        for (const auto& n : group) {
          if (!n.is_string()) schema("'defaults.calibration.ties' entries must be strings");
          const auto name = n.get<std::string>();
          if (!layout.has_electrode(name) ||
              layout.electrodes()[layout.electrode_index(name)].kind != ElectrodeKind::Window) {
            schema("'defaults.calibration.ties' names unknown window electrode '" + name + "'");
          }
          names.push_back(name);
        }
        d.calibration.ties.push_back(std::move(names));
      }
    }
    cs.finish();
    if (!(d.calibration.span > 0.0) || !(d.calibration.noise_fraction >= 0.0)) {
      schema("'defaults.calibration' span must be positive and noise non-negative");
    }
  }
  if (const json* pj = s.raw("probe")) {
    Section ps(*pj, "defaults.probe");
    if (auto v = ps.number("duration", Dim::Time)) d.probe.duration = *v;
    if (auto v = ps.number("rabi", Dim::Frequency)) d.probe.rabi_rate = kTwoPi * *v;
    if (auto v = ps.number("wavelength", Dim::Length)) d.probe.wavevector = kTwoPi / *v;
    ps.finish();
    if (!(d.probe.duration > 0.0 && d.probe.rabi_rate > 0.0 && d.probe.wavevector > 0.0)) {
      schema("'defaults.probe' values must be positive");
    }
  }
  if (auto v = s.number("transition_sensitivity", Dim::Sensitivity)) d.transition_sensitivity = kTwoPi * *v;
  s.finish();
  if (!(d.axial_frequency > 0.0 && d.integrator_dt > 0.0)) {
    schema("'defaults' frequency and integrator step must be positive");
  }
  return d;
}

[[noreturn]] void parse_failure(std::string_view text, std::size_t byte, const std::string& what) {
  std::size_t line = 1;
  std::size_t column = 1;
  const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  std::ostringstream msg;
  msg << "line " << line << ", column " << column << ": " << what;
  fail(ErrorCode::ParseError, msg.str());
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string ToolkitConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

ToolkitConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    parse_failure(text, e.byte, e.what());
  }
  Section root(j, "config");
  const json* lj = root.raw("layout");
  if (!lj) schema("missing key 'layout'");
  TrapLayout layout = parse_layout(*lj);
  HardwareLimits hardware = parse_hardware(root.raw("hardware"));
  ToolkitDefaults defaults = parse_defaults(root.raw("defaults"), layout);
  root.finish();
  ToolkitConfig cfg{std::move(layout), std::move(hardware), std::move(defaults), j.dump(), 0};
  cfg.hash = fnv1a64(cfg.canonical);
  return cfg;
}

ToolkitConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace iontrap
