#include "iontrap/config.hpp"

#include "support/layouts.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace iontrap;
using nlohmann::json;

namespace {

json default_json() {
  std::ifstream in(IONTRAP_SOURCE_DIR "/configs/default.json");
  return json::parse(in);
}

ErrorCode code_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("configuration was accepted");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("default configuration converts units to SI") {
  const auto& cfg = iontrap::testing::default_config();
  CHECK(cfg.layout.ion_height() == doctest::Approx(50e-6));
  CHECK(cfg.layout.zone_position("zone1") == doctest::Approx(-187.5e-6));
  CHECK(cfg.hardware.awg_sample_period == doctest::Approx(390e-9));
  CHECK(cfg.hardware.filter_cutoffs.size() == 2);
  CHECK(cfg.hardware.filter_cutoffs[0] == doctest::Approx(60e3));
  CHECK(cfg.defaults.axial_frequency == doctest::Approx(kTwoPi * 1.9e6));
  CHECK(cfg.defaults.integrator_dt == doctest::Approx(1e-9));
  CHECK(cfg.defaults.probe.duration == doctest::Approx(30e-6));
  CHECK(cfg.defaults.probe.wavevector == doctest::Approx(kTwoPi / 729e-9));
  CHECK(cfg.defaults.solver.transverse_weight == doctest::Approx(3e-6));
  CHECK(cfg.defaults.calibration.ties.size() == 2);
}

TEST_CASE("hash is stable under whitespace and key order") {
  const auto j = default_json();
  const auto a = parse_config(j.dump());
  const auto b = parse_config(j.dump(4));
  CHECK(a.hash == b.hash);
  CHECK(a.hash_hex().size() == 16);
  auto k = j;
  k["defaults"]["seed"] = 2;
  CHECK(parse_config(k.dump()).hash != a.hash);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("schema violations") {
  auto neg = default_json();
  neg["layout"]["height_um"] = -50;
  CHECK(code_of(neg.dump()) == ErrorCode::SchemaError);

  auto dup = default_json();
  dup["layout"]["electrodes"][1]["name"] = "dc_t01";
  CHECK(code_of(dup.dump()) == ErrorCode::SchemaError);

  auto unknown = default_json();
  unknown["hardware"]["colour"] = 1;
  CHECK(code_of(unknown.dump()) == ErrorCode::SchemaError);

  auto missing = default_json();
  missing.erase("layout");
  CHECK(code_of(missing.dump()) == ErrorCode::SchemaError);

  auto tie = default_json();
  tie["defaults"]["calibration"]["ties"] = json::array({json::array({"z1_top", "dc_t01"})});
  CHECK(code_of(tie.dump()) != ErrorCode::InvalidArgument);

  auto weight = default_json();
  weight["defaults"]["solver"]["transverse_weight"] = 2.0;
  CHECK(code_of(weight.dump()) == ErrorCode::SchemaError);
}

TEST_CASE("unit suffixes") {
  auto bad = default_json();
  bad["layout"].erase("height_um");
  bad["layout"]["height_furlong"] = 1;
  CHECK(code_of(bad.dump()) == ErrorCode::UnitError);

  auto mm = default_json();
  mm["layout"].erase("height_um");
  mm["layout"]["height_mm"] = 0.05;
  CHECK(parse_config(mm.dump()).layout.ion_height() == doctest::Approx(50e-6));
}

TEST_CASE("malformed JSON reports line and column") {
  const std::string text = "{\n  \"layout\": {\n    \"height_um\": 50,,\n  }\n}\n";
  try {
    parse_config(text);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    CHECK(std::string(e.what()).find("column") != std::string::npos);
  }
}

TEST_CASE("missing file is an IO error") {
  try {
    load_config("/nonexistent/config.json");
    FAIL("expected Io");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
  }
}
