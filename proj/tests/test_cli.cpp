#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <tuple>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return crnsynth::cli::run(args, out, err);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

// rows of a CSV with a header, as maps column -> text
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  std::vector<std::string> head;
  {
    std::stringstream s(line);
    std::string c;
    while (std::getline(s, c, ',')) head.push_back(c);
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(f, line)) {
    std::stringstream s(line);
    std::string c;
    std::map<std::string, std::string> r;
    for (const auto& h : head) {
      std::getline(s, c, ',');
      r[h] = c;
    }
    rows.push_back(r);
  }
  return rows;
}

fs::path write_json(const std::string& name, const json& j) {
  fs::path p = fs::current_path() / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("exit codes for malformed invocations") {
  CHECK(run({}) == crnsynth::cli::kConfigError);
  CHECK(run({"frobnicate"}) == crnsynth::cli::kConfigError);
  CHECK(run({"strata", "--model", "nonesuch", "--out", "cli_bad"}) == crnsynth::cli::kConfigError);
  const auto cfg = write_json("cli_unknown_key.json", {{"model", "tutorial"}, {"colour", "blue"}});
  CHECK(run({"strata", "--config", cfg.string(), "--out", "cli_bad"}) == crnsynth::cli::kConfigError);
  const auto mk = write_json("cli_mk_nodelta.json", {{"model", "mckeithan"}, {"d", 0.2}});
  CHECK(run({"strata", "--config", mk.string(), "--out", "cli_bad"}) == crnsynth::cli::kConfigError);
  const auto neg = write_json("cli_neg_tol.json", {{"model", "tutorial"}, {"tolerances", {{"on_locus", -1.0}}}});
  CHECK(run({"strata", "--config", neg.string(), "--out", "cli_bad"}) == crnsynth::cli::kConfigError);
  CHECK(run({"strata", "--model", "tutorial", "--grid", "7", "--out", "cli_bad"}) == crnsynth::cli::kConfigError);
}

TEST_CASE("strata: parabola, saturation markers, sidecars and determinism") {
  REQUIRE(run({"strata", "--model", "tutorial", "--grid", "21,21", "--out", "cli_strata_a"}) == 0);
  REQUIRE(run({"strata", "--model", "tutorial", "--grid", "21,21", "--out", "cli_strata_b"}) == 0);
  const auto S = read_csv("cli_strata_a/loci_S.csv");
  REQUIRE(S.size() > 5);
  for (const auto& r : S) {
    const double y = std::stod(r.at("y")), z = std::stod(r.at("z"));
    CHECK(std::abs(y - z * z) < 1e-9);
  }
  int sat = 0;
  for (const auto& r : read_csv("cli_strata_a/events.csv")) {
    if (r.at("kind") != "saturation") continue;
    ++sat;
    CHECK(std::abs(std::abs(std::stod(r.at("z"))) - 1.0 / 6.0) < 1e-9);
  }
  CHECK(sat == 2);
  for (const auto& e : fs::directory_iterator("cli_strata_a")) {
    const auto name = e.path().filename().string();
    if (name.size() > 10 && name.substr(name.size() - 10) == ".meta.json") continue;
    CHECK(slurp(e.path()) == slurp(fs::path("cli_strata_b") / name));
    const fs::path meta = e.path().string() + ".meta.json";
    REQUIRE(fs::exists(meta));
    const json m = json::parse(slurp(meta));
    CHECK(m.at("config_hash").get<std::string>().size() == 16);
    CHECK(m.contains("versions"));
  }
}

TEST_CASE("network: McKeithan scheme and an irreversible reaction") {
  const auto cfg = write_json(
      "cli_net.json",
      {{"network",
        {{"scheme", "mckeithan"}, {"n_bound", 2}, {"k1", 1.0}, {"kp", {0.5}}, {"km", {0.8, 0.3}}, {"c0", {1.0, 0.8, 0.0, 0.0}},
         {"t_end", 50.0}, {"samples", 40}}}});
  REQUIRE(run({"network", "--config", cfg.string(), "--out", "cli_net"}) == 0);
  const json info = json::parse(slurp("cli_net/network_info.json"));
  CHECK(info.at("deficiency").at("delta") == 0);
  CHECK(info.at("deficiency").at("n") == 3);
  CHECK(info.at("strongly_connected") == true);
  CHECK(read_csv("cli_net/simulation.csv").size() == 41);
  CHECK(info.at("simulation").at("max_conservation_drift").get<double>() < 1e-9);

  const auto ab = write_json("cli_ab.json", {{"species", {"A", "B"}},
                                             {"complexes", {{1, 0}, {0, 1}}},
                                             {"reactions", {{{"from", 1}, {"to", 2}, {"A", 1.0}, {"E", 0.0}}}}});
  REQUIRE(run({"network", "--model", ab.string(), "--out", "cli_ab"}) == 0);
  CHECK(json::parse(slurp("cli_ab/network_info.json")).at("strongly_connected") == false);
}

TEST_CASE("synthesis: the hyperbolic anchor") {
  const auto cfg = write_json("cli_syn.json", {{"model", "tutorial"}, {"anchors", {{0.0, 0.0025, -0.05}}}});
  REQUIRE(run({"synthesis", "--config", cfg.string(), "--out", "cli_syn"}) == 0);
  const json rep = json::parse(slurp("cli_syn/synthesis_report.json"));
  REQUIRE(rep.at("anchors").size() == 1);
  CHECK(rep.at("anchors")[0].at("label") == "HyperbolicFold");
  CHECK(fs::exists("cli_syn/loci_Gs.csv"));
}

TEST_CASE("series: crossing column flips at a/(6c)") {
  const auto cfg = write_json("cli_ser.json", {{"model", "tutorial"}, {"series", {{"s0", {0.0, 0.5, 31}}}}});
  REQUIRE(run({"series", "--config", cfg.string(), "--order", "4", "--out", "cli_ser"}) == 0);
  for (const auto& r : read_csv("cli_ser/crossing.csv")) {
    const double s0 = std::stod(r.at("s0"));
    if (std::abs(s0 - 1.0 / 6.0) < 1e-9) continue;
    CHECK((r.at("switch_plus") == "1") == (s0 > 1.0 / 6.0));
  }
  // truncation error does not grow with the order at the checked times
  std::map<std::string, std::map<int, double>> err;
  for (const auto& r : read_csv("cli_ser/series_truncation.csv"))
    err[r.at("t")][std::stoi(r.at("order"))] = std::stod(r.at("max_abs_error"));
  REQUIRE_FALSE(err.empty());
  for (const auto& [t, by_order] : err) {
    double prev = 1e300;
    for (const auto& [o, e] : by_order) {
      CHECK(e <= prev * (1 + 1e-6) + 1e-11);  // saturates at the integrator floor
      prev = e;
    }
  }
}

TEST_CASE("series: p3 table is the cubic 1/2 t(-2ct^2 + (a - 6c s0)t - 6c s0^2 + 6c w0)") {
  const auto cfg = write_json("cli_p3.json", {{"model", "tutorial"}, {"parameters", {{"a", 1.0}, {"c", 1.0}}}});
  REQUIRE(run({"series", "--config", cfg.string(), "--order", "4", "--out", "cli_p3"}) == 0);
  // (e_t, e_w0, e_s0) -> coefficient, eps = +1
  std::map<std::tuple<int, int, int>, double> want = {
      {{3, 0, 0}, -1.0}, {{2, 0, 0}, 0.5}, {{2, 0, 1}, -3.0}, {{1, 0, 2}, -3.0}, {{1, 1, 0}, 3.0}};
  std::map<std::tuple<int, int, int>, double> got;
  for (const auto& r : read_csv("cli_p3/series_flow.csv"))
    if (r.at("component") == "flow_plus_p3")
      got[{std::stoi(r.at("e_t")), std::stoi(r.at("e_w0")), std::stoi(r.at("e_s0"))}] = std::stod(r.at("coefficient"));
  CHECK(got.size() == want.size());
  for (const auto& [k, v] : want) {
    REQUIRE(got.count(k));
    CHECK(std::abs(got[k] - v) < 1e-12);
  }
}

TEST_CASE("synthesis: elliptic anchor with cut samples, and oracle verdicts") {
  const auto cfg = write_json("cli_ell.json", {{"model", "tutorial"},
                                               {"parameters", {{"a", 1.0}, {"c", 5.0}}},
                                               {"anchors", {{0.0, 0.0016, 0.04}}}});
  REQUIRE(run({"synthesis", "--config", cfg.string(), "--out", "cli_ell"}) == 0);
  const json rep = json::parse(slurp("cli_ell/synthesis_report.json"));
  CHECK(rep.at("anchors")[0].at("label") == "EllipticFold");
  CHECK(read_csv("cli_ell/loci_C1.csv").size() + read_csv("cli_ell/loci_C12.csv").size() > 0);
  CHECK_FALSE(rep.at("anchors")[0].contains("oracle"));

  const auto hyp = write_json("cli_orc.json", {{"model", "tutorial"}, {"anchors", {{0.0, 0.0625, -0.25}}}});
  REQUIRE(run({"synthesis", "--config", hyp.string(), "--oracle", "--out", "cli_orc"}) == 0);
  const json v = json::parse(slurp("cli_orc/synthesis_report.json")).at("anchors")[0].at("oracle");
  CHECK(v.at("status") == "ok");
  CHECK(v.contains("pattern_match"));
  CHECK(v.contains("oracle_pattern"));
}

TEST_CASE("series: models without a K surface still emit the flow tables") {
  const auto cfg = write_json("cli_snf.json", {{"model", "seminf"}, {"parameters", {{"a", 1.0}, {"us0", 3.0}}}});
  REQUIRE(run({"series", "--config", cfg.string(), "--order", "3", "--out", "cli_snf"}) == 0);
  const json info = json::parse(slurp("cli_snf/series_info.json"));
  CHECK(info.at("K_plus").get<std::string>().rfind("skipped", 0) == 0);
  CHECK_FALSE(fs::exists("cli_snf/crossing.csv"));
  CHECK(fs::exists("cli_snf/series_gamma.csv"));
}
