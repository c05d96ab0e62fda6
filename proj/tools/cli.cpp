#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>
#include <spdlog/spdlog.h>

#include "crnsynth/crn.hpp"
#include "crnsynth/extremal.hpp"
#include "crnsynth/lieseries.hpp"
#include "crnsynth/synthesis.hpp"

namespace crnsynth::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------- config schema

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

double positive(const json& j, const std::string& key, const std::string& where) {
  if (!j.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
  const double v = j.at(key).get<double>();
  if (!(v > 0)) throw ConfigError(where + "." + key + ": must be positive");
  return v;
}

void fill(json& j, const std::string& key, const json& def) {
  if (!j.contains(key)) j[key] = def;
}

const std::map<std::string, json>& model_defaults() {
  static const std::map<std::string, json> m = {
      {"tutorial", {{"a", 1.0}, {"c", 1.0}}},
      {"seminf",
       {{"a", -1.0}, {"alpha1", 1.0}, {"alpha2", 1.0}, {"alpha3", 1.0}, {"b", 1.0}, {"c", 1.0}, {"us0", 1.0},
        {"usx", 1.0}, {"usy", 1.0}}},
      {"unfolding", {{"a", -1.0}, {"us0", 0.0}}},
      // delta1 and delta2 have no defaults
      {"mckeithan", {{"alpha2", 1.0}, {"alpha3", 1.0}, {"alpha4", 1.0}, {"beta2", 1.0}, {"beta3", 1.0}, {"beta4", 1.0}}},
  };
  return m;
}

json normalize_range(json r, const std::string& where) {
  if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
    throw ConfigError(where + ": expected [lo, hi]");
  if (!(r[0].get<double>() < r[1].get<double>())) throw ConfigError(where + ": lo must be below hi");
  return r;
}

json normalize_linspace(json r, const std::string& where) {
  if (!r.is_array() || r.size() != 3 || !r[0].is_number() || !r[1].is_number() || !r[2].is_number_integer())
    throw ConfigError(where + ": expected [lo, hi, n]");
  if (!(r[0].get<double>() <= r[1].get<double>()) || r[2].get<int>() < 1) throw ConfigError(where + ": bad range");
  return r;
}

std::vector<double> linspace(const json& r) {
  const double lo = r[0], hi = r[1];
  const int n = r[2];
  std::vector<double> v(n);
  for (int k = 0; k < n; ++k) v[k] = n == 1 ? lo : lo + (hi - lo) * k / (n - 1);
  return v;
}

}  // namespace

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

json normalize_config(const std::string& command, json cfg) {
  if (cfg.is_null()) cfg = json::object();
  check_keys(cfg, {"model", "parameters", "d", "grid", "horizon", "order", "tolerances", "anchors", "probes", "seed",
                   "oracle", "network", "series", "out"},
             "config");
  fill(cfg, "seed", 0);
  if (!cfg["seed"].is_number_integer()) throw ConfigError("config.seed: expected an integer");

  if (command == "network") {
    if (!cfg.contains("network")) throw ConfigError("network: missing 'network' section");
    return cfg;
  }

  if (!cfg.contains("model") || !cfg["model"].is_string()) throw ConfigError("config.model: required string");
  const std::string model = cfg["model"];
  const auto& defs = model_defaults();
  auto it = defs.find(model);
  if (it == defs.end()) throw ConfigError("config.model: unknown model '" + model + "'");
  fill(cfg, "parameters", json::object());
  json& par = cfg["parameters"];
  std::set<std::string> allowed;
  for (auto p = it->second.begin(); p != it->second.end(); ++p) allowed.insert(p.key());
  if (model == "mckeithan") allowed.insert({"delta1", "delta2"});
  check_keys(par, allowed, "parameters");
  for (auto p = it->second.begin(); p != it->second.end(); ++p) fill(par, p.key(), p.value());
  for (auto p = par.begin(); p != par.end(); ++p)
    if (!p.value().is_number()) throw ConfigError("parameters." + p.key() + ": expected a number");

  if (model == "mckeithan") {
    if (!par.contains("delta1") || !par.contains("delta2"))
      throw ConfigError("parameters: McKeithan needs delta1 and delta2 (no defaults)");
    positive(par, "delta1", "parameters");
    positive(par, "delta2", "parameters");
    for (const char* b : {"beta2", "beta3", "beta4"}) positive(par, b, "parameters");
    if (!cfg.contains("d")) throw ConfigError("config.d: required for the McKeithan model");
    positive(cfg, "d", "config");
  } else {
    fill(cfg, "d", 0.0);
    if (!cfg["d"].is_number()) throw ConfigError("config.d: expected a number");
  }

  fill(cfg, "grid", json::object());
  json& g = cfg["grid"];
  check_keys(g, {"y", "z", "ny", "nz"}, "grid");
  if (model == "mckeithan") {
    fill(g, "y", json::array({0.0, par["delta2"].get<double>()}));
    fill(g, "z", json::array({0.01, 2.0}));
  } else {
    fill(g, "y", json::array({-0.3, 0.3}));
    fill(g, "z", json::array({-0.3, 0.3}));
  }
  fill(g, "ny", 61);
  fill(g, "nz", 61);
  g["y"] = normalize_range(g["y"], "grid.y");
  g["z"] = normalize_range(g["z"], "grid.z");
  for (const char* k : {"ny", "nz"})
    if (!g[k].is_number_integer() || g[k].get<int>() < 2) throw ConfigError(std::string("grid.") + k + ": integer >= 2");

  fill(cfg, "horizon", 0.5);
  positive(cfg, "horizon", "config");
  fill(cfg, "order", 5);
  if (!cfg["order"].is_number_integer() || cfg["order"].get<int>() < 1) throw ConfigError("config.order: integer >= 1");

  fill(cfg, "tolerances", json::object());
  json& tol = cfg["tolerances"];
  check_keys(tol, {"on_locus", "saturation", "bifurcation", "semi_bridge", "ode"}, "tolerances");
  fill(tol, "on_locus", 1e-9);
  fill(tol, "saturation", 1e-6);
  fill(tol, "bifurcation", 1e-6);
  fill(tol, "semi_bridge", 1e-9);
  fill(tol, "ode", 1e-11);
  for (auto p = tol.begin(); p != tol.end(); ++p) positive(tol, p.key(), "tolerances");

  fill(cfg, "anchors", json::array());
  if (!cfg["anchors"].is_array()) throw ConfigError("config.anchors: expected a list of [x, y, z]");
  for (const auto& a : cfg["anchors"])
    if (!a.is_array() || a.size() != 3 || !a[0].is_number() || !a[1].is_number() || !a[2].is_number())
      throw ConfigError("config.anchors: each anchor is [x, y, z]");
  fill(cfg, "probes", 0);
  if (!cfg["probes"].is_number_integer() || cfg["probes"].get<int>() < 0) throw ConfigError("config.probes: integer >= 0");

  fill(cfg, "oracle", json::object());
  json& o = cfg["oracle"];
  check_keys(o, {"enabled", "dt", "max_arcs", "tau_s", "chain_horizon"}, "oracle");
  fill(o, "enabled", false);
  fill(o, "dt", 1e-3);
  fill(o, "max_arcs", 3);
  fill(o, "tau_s", 0.05);
  fill(o, "chain_horizon", 0.2);
  for (const char* k : {"dt", "tau_s", "chain_horizon"}) positive(o, k, "oracle");
  if (!o["max_arcs"].is_number_integer() || o["max_arcs"].get<int>() < 1) throw ConfigError("oracle.max_arcs: integer >= 1");

  fill(cfg, "series", json::object());
  json& s = cfg["series"];
  check_keys(s, {"s0", "check_t", "check_w0", "check_s0", "split", "leaf"}, "series");
  fill(s, "s0", json::array({-0.3, 0.3, 21}));
  s["s0"] = normalize_linspace(s["s0"], "series.s0");
  fill(s, "check_t", json::array({1e-3, 1e-2, 4}));
  s["check_t"] = normalize_linspace(s["check_t"], "series.check_t");
  fill(s, "check_w0", 0.02);
  fill(s, "check_s0", 0.03);
  if (s.contains("split")) {
    check_keys(s["split"], {"w0", "s0"}, "series.split");
    for (const char* k : {"w0", "s0"}) {
      if (!s["split"].contains(k)) throw ConfigError(std::string("series.split.") + k + ": required");
      s["split"][k] = normalize_linspace(s["split"][k], std::string("series.split.") + k);
    }
  }
  if (s.contains("leaf")) {
    if (model != "tutorial") throw ConfigError("series.leaf: only the tutorial model has a closed-form leaf");
    check_keys(s["leaf"], {"z0", "z"}, "series.leaf");
    if (!s["leaf"].contains("z0") || !s["leaf"]["z0"].is_number()) throw ConfigError("series.leaf.z0: required number");
    if (!s["leaf"].contains("z")) throw ConfigError("series.leaf.z: required");
    s["leaf"]["z"] = normalize_linspace(s["leaf"]["z"], "series.leaf.z");
  }
  return cfg;
}

namespace {

// ---------------------------------------------------------------- output

struct Writer {
  fs::path dir;
  json meta;  // shared sidecar fields
  std::vector<std::string> written;

  void write(const std::string& name, const std::string& content) {
    fs::create_directories(dir);
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    f << content;
    json m = meta;
    m["file"] = name;
    std::ofstream mf(dir / (name + ".meta.json"));
    mf << m.dump(2) << "\n";
    written.push_back(name);
  }
};

std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

McKeithanParams mck_params(const json& p) {
  McKeithanParams m;
  m.alpha2 = p["alpha2"];
  m.alpha3 = p["alpha3"];
  m.alpha4 = p["alpha4"];
  m.beta2 = p["beta2"];
  m.beta3 = p["beta3"];
  m.beta4 = p["beta4"];
  m.delta1 = p["delta1"];
  m.delta2 = p["delta2"];
  return m;
}

ControlAffineSystem build_model(const json& cfg) {
  const std::string model = cfg["model"];
  const json& p = cfg["parameters"];
  if (model == "tutorial") return make_tutorial({p["a"], p["c"]});
  if (model == "unfolding") return make_unfolding_2d({p["a"], p["us0"]});
  if (model == "seminf") {
    SemiNormalFormParams s;
    s.a = p["a"];
    s.alpha1 = p["alpha1"];
    s.alpha2 = p["alpha2"];
    s.alpha3 = p["alpha3"];
    s.b = p["b"];
    s.c = p["c"];
    s.us0 = p["us0"];
    s.usx = p["usx"];
    s.usy = p["usy"];
    return make_semi_normal_form(s);
  }
  return mckeithan_lift(mck_params(p), cfg["d"]);
}


void apply_level(ControlAffineSystem& sys, const json& cfg) {
  TargetManifold t = sys.target();
  t.level = cfg["d"];
  sys.set_target(t);
}

TargetGrid make_grid(const json& g) {
  TargetGrid t;
  t.y_lo = g["y"][0];
  t.y_hi = g["y"][1];
  t.z_lo = g["z"][0];
  t.z_hi = g["z"][1];
  t.ny = g["ny"];
  t.nz = g["nz"];
  return t;
}

StrataTolerances make_tol(const json& t) {
  StrataTolerances s;
  s.on_locus = t["on_locus"];
  s.saturation = t["saturation"];
  s.bifurcation = t["bifurcation"];
  s.semi_bridge = t["semi_bridge"];
  return s;
}

OdeOptions make_ode(const json& t) {
  OdeOptions o;
  o.abs_tol = o.rel_tol = t["ode"];
  return o;
}

const char* b01(bool b) { return b ? "1" : "0"; }

std::string sample_header() {
  return "x,y,z,on_S,on_E,classification,u_s,admissible,saturated,semi_bridge,eps,n_GF,n_F,n_GFG,n_GFF\n";
}
std::string sample_row(const StratumSample& s) {
  std::ostringstream o;
  o << num(s.q[0]) << ',' << num(s.q[1]) << ',' << num(s.q[2]) << ',' << b01(s.on_S) << ',' << b01(s.on_E) << ','
    << to_string(s.cls.type) << ',' << num(s.us) << ',' << b01(s.admissible) << ',' << b01(s.saturated) << ','
    << b01(s.semi_bridge) << ',' << s.eps << ',' << num(s.nGF) << ',' << num(s.nF) << ',' << num(s.nGFG) << ','
    << num(s.nGFF) << '\n';
  return o.str();
}
std::string samples_csv(const std::vector<StratumSample>& v) {
  std::string s = sample_header();
  for (const auto& x : v) s += sample_row(x);
  return s;
}

// ---------------------------------------------------------------- commands

int cmd_network(const json& cfg, Writer& w, const std::string& model_path) {
  json net_cfg = cfg.contains("network") ? cfg["network"] : json::object();
  if (!model_path.empty()) {
    std::ifstream f(model_path);
    if (!f) throw ConfigError("cannot open network file " + model_path);
    try {
      net_cfg = json::parse(f);
    } catch (const json::parse_error& e) {
      throw ConfigError(model_path + ": " + e.what());
    }
  }
  double T = 300.0;
  std::optional<Eigen::VectorXd> c0;
  double t_end = 0;
  int samples = 100;
  auto read_sim = [&](const json& j) {
    if (j.contains("T")) T = j["T"].get<double>();
    if (j.contains("c0")) {
      auto v = j["c0"].get<std::vector<double>>();
      c0 = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (j.contains("t_end")) t_end = j["t_end"].get<double>();
    if (j.contains("samples")) samples = j["samples"].get<int>();
  };
  std::optional<ReactionNetwork> net;
  try {
    if (net_cfg.value("scheme", "") == "mckeithan") {
      check_keys(net_cfg, {"scheme", "n_bound", "k1", "kp", "km", "T", "c0", "t_end", "samples"}, "network");
      net = mckeithan_network(net_cfg.at("n_bound").get<int>(), net_cfg.at("k1").get<double>(),
                              net_cfg.at("kp").get<std::vector<double>>(), net_cfg.at("km").get<std::vector<double>>());
    } else {
      net = ReactionNetwork::from_json(net_cfg);
    }
    read_sim(net_cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  if (!(T > 0)) throw ConfigError("network.T: must be positive");
  if (c0 && c0->size() != net->num_species()) throw ConfigError("network.c0: wrong length");
  if (c0 && (!(t_end > 0) || samples < 1)) throw ConfigError("network: simulation needs t_end > 0 and samples >= 1");

  const DeficiencyInfo d = deficiency(*net);
  json info;
  info["species"] = net->species();
  info["deficiency"] = {{"n", d.n}, {"l", d.l}, {"s", d.s}, {"delta", d.delta}};
  info["strongly_connected"] = strongly_connected(*net);
  const Eigen::MatrixXd C = conservation_basis(*net);
  json cons = json::array();
  for (int i = 0; i < C.rows(); ++i) {
    std::vector<double> row(C.cols());
    for (int k = 0; k < C.cols(); ++k) row[k] = C(i, k);
    cons.push_back(row);
  }
  info["conservation_basis"] = cons;
  info["T"] = T;
  if (c0) {
    // fixed: conservation drift must stay below 1e-9 whatever --tol says
    const Trajectory tr = simulate(*net, *c0, T, t_end, 1e-10, samples);
    std::ostringstream s;
    s << "t";
    for (const auto& sp : net->species()) s << ',' << sp;
    s << '\n';
    for (size_t k = 0; k < tr.t.size(); ++k) {
      s << num(tr.t[k]);
      for (int i = 0; i < tr.c[k].size(); ++i) s << ',' << num(tr.c[k][i]);
      s << '\n';
    }
    w.write("simulation.csv", s.str());
    info["simulation"] = {{"rows", tr.t.size()}, {"max_conservation_drift", tr.max_conservation_drift},
                          {"clamp_events", tr.clamp_events}};
    const EquilibriumResult eq = equilibrium(*net, *c0, T);
    info["equilibrium"] = {{"c", std::vector<double>(eq.c.data(), eq.c.data() + eq.c.size())},
                           {"residual", eq.residual}};
  }
  w.write("network_info.json", info.dump(2) + "\n");
  return kOk;
}

int cmd_strata(const json& cfg, Writer& w) {
  ControlAffineSystem sys = build_model(cfg);
  if (cfg["model"] != "mckeithan") apply_level(sys, cfg);
  const TargetGrid grid = make_grid(cfg["grid"]);
  const StrataTolerances tol = make_tol(cfg["tolerances"]);
  const Stratification st = stratify_target(sys, grid, tol);
  w.write("strata.csv", samples_csv(st.grid));
  w.write("loci_S.csv", samples_csv(st.S));
  w.write("loci_E.csv", samples_csv(st.E));
  std::string ev = "kind," + sample_header();
  for (const auto& [name, v] : std::vector<std::pair<std::string, const std::vector<StratumSample>*>>{
           {"saturation", &st.saturation}, {"bifurcation", &st.bifurcation}, {"semi_bridge", &st.semi_bridge}})
    for (const auto& s : *v) ev += name + "," + sample_row(s);
  w.write("events.csv", ev);

  if (cfg["model"] == "mckeithan") {
    const McKeithanParams p = mck_params(cfg["parameters"]);
    const double d = cfg["d"];
    std::vector<double> vs;
    for (int j = 0; j < grid.nz; ++j) vs.push_back(grid.z(j));
    const auto S = mckeithan_singular_locus(p, d, vs);
    const auto E = mckeithan_exceptional_locus(p, d, vs);
    auto locus_csv = [](const McKeithanLocus& L) {
      std::string s = "v,y,branch,discriminant,residual\n";
      for (const auto& x : L.points)
        s += num(x.v) + "," + num(x.y) + "," + std::to_string(x.branch) + "," + num(x.discriminant) + "," +
             num(x.residual) + "\n";
      return s;
    };
    w.write("mckeithan_S.csv", locus_csv(S));
    w.write("mckeithan_E.csv", locus_csv(E));
    // two independent paths to the same curves
    auto deviation = [&](const McKeithanLocus& L, const std::vector<StratumSample>& gen) {
      double worst = 0;
      for (const auto& x : L.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& s : gen)
          if (std::abs(s.q[2] - x.v) <= 1e-14 * std::max(1.0, x.v)) best = std::min(best, std::abs(s.q[1] - x.y));
        if (std::isfinite(best)) worst = std::max(worst, best);
      }
      return worst;
    };
    const SemiBridgeResult sb = semi_bridge_points(p, d);
    json j;
    j["S"] = {{"samples", S.points.size()},
              {"min_discriminant", S.min_discriminant},
              {"discriminant_positive", S.discriminant_positive},
              {"max_deviation_from_root_finder", deviation(S, st.S)}};
    j["E"] = {{"samples", E.points.size()},
              {"min_discriminant", E.min_discriminant},
              {"discriminant_positive", E.discriminant_positive},
              {"max_deviation_from_root_finder", deviation(E, st.E)}};
    const double dist = locus_min_distance(S, E);
    j["S_E_min_distance"] = std::isfinite(dist) ? json(dist) : json(nullptr);
    j["semi_bridge"] = {{"v", sb.v}, {"ad_residual", sb.ad_residual}, {"reason", sb.reason}};
    w.write("mckeithan.json", j.dump(2) + "\n");
  }
  return kOk;
}

int cmd_synthesis(const json& cfg, Writer& w) {
  ControlAffineSystem sys = build_model(cfg);
  if (cfg["model"] != "mckeithan") apply_level(sys, cfg);
  const TargetGrid grid = make_grid(cfg["grid"]);
  SynthesisOptions opt;
  opt.tol = make_tol(cfg["tolerances"]);
  opt.sweep.horizon = cfg["horizon"];
  opt.sweep.ode = make_ode(cfg["tolerances"]);
  opt.split.order = cfg["order"];

  std::vector<Vec3d> anchors;
  for (const auto& a : cfg["anchors"]) anchors.push_back({a[0], a[1], a[2]});
  const double level = sys.target().level;
  std::mt19937_64 rng(cfg["seed"].get<std::uint64_t>());
  std::uniform_real_distribution<double> uy(grid.y_lo, grid.y_hi), uz(grid.z_lo, grid.z_hi);
  for (int k = 0; k < cfg["probes"].get<int>(); ++k) {
    const double y = uy(rng);
    const double z = uz(rng);
    anchors.push_back({level, y, z});
  }
  if (anchors.empty()) {
    // default anchors: the marked points of the stratification
    const Stratification st = stratify_target(sys, grid, opt.tol);
    for (const auto* v : {&st.saturation, &st.bifurcation, &st.semi_bridge})
      for (const auto& s : *v) anchors.push_back(s.q);
  }
  if (anchors.empty()) throw ConfigError("synthesis: no anchors given and no marked points on the grid");

  const json& oc = cfg["oracle"];
  OracleOptions oo;
  oo.dt = oc["dt"];
  oo.max_arcs = oc["max_arcs"];

  json report;
  report["model"] = cfg["model"];
  report["anchors"] = json::array();
  std::map<std::string, std::string> loci_csv;
  for (const char* k : {"Wp", "Wm", "Ws", "Gs", "C1", "C12"}) loci_csv[k] = "anchor,x,y,z\n";
  std::string chains = "anchor,chain,arc,label,t,x,y,z,p1,p2,p3\n";
  for (size_t ia = 0; ia < anchors.size(); ++ia) {
    const SynthesisReport r = local_synthesis(sys, anchors[ia], opt);
    json jr = to_json(r);
    for (const auto& [k, pts] : r.loci) {
      auto& s = loci_csv[k];
      for (const auto& q : pts) s += std::to_string(ia) + "," + num(q[0]) + "," + num(q[1]) + "," + num(q[2]) + "\n";
      jr["loci"][k].erase("points");
    }
    for (size_t ic = 0; ic < r.chains.size(); ++ic) {
      const auto& c = r.chains[ic];
      for (size_t k = 0; k < c.arcs.size(); ++k) {
        const auto& arc = c.arcs[k];
        const size_t stride = std::max<size_t>(1, arc.t.size() / 50);
        for (size_t i = 0; i < arc.t.size(); i += stride) {
          const auto& z = arc.z[i];
          chains += std::to_string(ia) + "," + std::to_string(ic) + "," + std::to_string(k) + "," + to_string(arc.label) +
                    "," + num(arc.t[i]);
          for (double v : z) chains += "," + num(v);
          chains += "\n";
        }
      }
    }

    if (oc["enabled"].get<bool>() && !r.policy.empty()) {
      json jv;
      try {
        SweepOptions so = opt.sweep;
        so.horizon = oc["chain_horizon"];
        const auto probe = oracle_probe_chain(sys, r, oc["tau_s"], 1.0, opt, so, 10 * oo.dt);
        if (!probe) {
          jv["status"] = "no probe chain";
        } else {
          const OracleVerdict v = oracle_check(sys, *probe, r.policy, oo);
          jv["status"] = v.oracle.reachable ? "ok" : "unreachable";
          jv["chain_pattern"] = v.predicted_pattern;
          jv["chain_time"] = v.chain_time;
          jv["oracle_pattern"] = v.oracle.best.pattern;
          jv["oracle_reduced_pattern"] = reduced_pattern(v.oracle.best, 2 * oo.dt);
          jv["oracle_durations"] = v.oracle.best.durations;
          jv["oracle_time"] = v.oracle.best.time;
          jv["best_bang_bang_pattern"] = v.oracle.best_bang_bang.pattern;
          jv["best_bang_bang_time"] = v.oracle.best_bang_bang.time;
          jv["pattern_match"] = v.pattern_match;
          jv["time_match"] = v.time_match;
        }
      } catch (const std::exception& e) {
        jv["status"] = std::string("failed: ") + e.what();
      }
      jr["oracle"] = jv;
    }
    report["anchors"].push_back(jr);
  }
  for (const auto& [k, s] : loci_csv) w.write("loci_" + k + ".csv", s);
  w.write("chains.csv", chains);
  w.write("synthesis_report.json", report.dump(2) + "\n");
  return kOk;
}

int cmd_series(const json& cfg, Writer& w) {
  ControlAffineSystem sys = build_model(cfg);
  if (cfg["model"] != "mckeithan") apply_level(sys, cfg);
  const int order = cfg["order"];
  const json& sc = cfg["series"];
  const char* xyz[3] = {"x", "y", "z"};

  std::vector<std::pair<std::string, TruncatedSeries>> gamma, ksurf;
  std::vector<SwitchingSurface> K;
  json info;
  info["order"] = order;
  for (double eps : {1.0, -1.0}) {
    const std::string tag = eps > 0 ? "plus" : "minus";
    const auto g = gamma_surface(sys, eps, order);
    for (int i = 0; i < 3; ++i) gamma.emplace_back("gamma_" + tag + "_" + xyz[i], g[i]);
    try {
      K.push_back(switching_surface_series(sys, eps, order));
    } catch (const SeriesSolveError& e) {
      // no K surface as a graph over (t, s0), e.g. when S is not a graph w0(s0)
      info["K_" + tag] = std::string("skipped: ") + e.what();
      continue;
    }
    for (int i = 0; i < 3; ++i) ksurf.emplace_back("K_" + tag + "_" + xyz[i], K.back().K[i]);
    ksurf.emplace_back("K_" + tag + "_w0", K.back().w0);
    ksurf.emplace_back("K_" + tag + "_residual", K.back().residual);
  }
  {
    const auto flow = lie_series_flow(sys, SeriesControl::bang(1.0), target_start(sys, target_basis(order)));
    const char* names[6] = {"x", "y", "z", "p1", "p2", "p3"};
    std::vector<std::pair<std::string, TruncatedSeries>> comps;
    for (int i = 0; i < 6; ++i) comps.emplace_back(std::string("flow_plus_") + names[i], flow.z[i]);
    std::ostringstream s;
    write_series_csv(s, comps);
    w.write("series_flow.csv", s.str());
  }
  std::ostringstream gs;
  write_series_csv(gs, gamma);
  w.write("series_gamma.csv", gs.str());
  if (!ksurf.empty()) {
    std::ostringstream ks;
    write_series_csv(ks, ksurf);
    w.write("series_K.csv", ks.str());
  }
  if (K.size() == 2) {
    std::string cross = "s0,det_plus,switch_plus,det_minus,switch_minus\n";
    for (double s0 : linspace(sc["s0"])) {
      const double dp = crossing_test(K[0], s0), dm = crossing_test(K[1], s0);
      cross += num(s0) + "," + num(dp) + "," + b01(dp > 0) + "," + num(dm) + "," + b01(-dm > 0) + "\n";
    }
    w.write("crossing.csv", cross);
  }

  // truncation error against the integrator, per order, for the bang +1 flow
  {
    const double w0 = sc["check_w0"], s0 = sc["check_s0"];
    const Vec3d q0{sys.target().level, w0, s0};
    BangOptions bo;
    bo.continue_past_switches = true;
    bo.stop_outside_validity = false;
    bo.ode.abs_tol = bo.ode.rel_tol = 1e-13;
    std::string s = "order,t,max_abs_error\n";
    const auto ts = linspace(sc["check_t"]);
    for (int ord = 1; ord <= order; ++ord) {
      const auto flow = lie_series_flow(sys, SeriesControl::bang(1.0), target_start(sys, target_basis(ord)));
      for (double t : ts) {
        const BangResult br = integrate_bang(sys, make_z(q0, sys.target().normal), 1.0, {0.0, t}, bo);
        if (br.error || br.arc.z.empty()) throw std::runtime_error("series check: integration failed: " + br.message);
        const ZState& zt = br.arc.z.back();
        double err = 0;
        for (int i = 0; i < 6; ++i) err = std::max(err, std::abs(flow.z[i].evaluate(std::vector<double>{t, w0, s0}) - zt[i]));
        s += std::to_string(ord) + "," + num(t) + "," + num(err) + "\n";
      }
    }
    w.write("series_truncation.csv", s);
  }

  if (sc.contains("split")) {
    SplitOptions so;
    so.order = order;
    so.w0_grid = linspace(sc["split"]["w0"]);
    so.s0_grid = linspace(sc["split"]["s0"]);
    for (SplitKind kind : {SplitKind::C1, SplitKind::C12}) {
      std::string s = "w0,s0,t,t1,w0p,s0p,x,y,z,residual,switch_free\n";
      for (const auto& m : splitting_locus(sys, kind, so))
        s += num(m.w0) + "," + num(m.s0) + "," + num(m.t) + "," + num(m.t1) + "," + num(m.w0p) + "," + num(m.s0p) + "," +
             num(m.q[0]) + "," + num(m.q[1]) + "," + num(m.q[2]) + "," + num(m.residual) + "," + b01(m.switch_free) + "\n";
      w.write(std::string("loci_") + to_string(kind) + ".csv", s);
    }
  }
  if (sc.contains("leaf")) {
    const json& p = cfg["parameters"];
    const auto leaf = singular_leaf_tutorial(p["a"], p["c"], sc["leaf"]["z0"], linspace(sc["leaf"]["z"]));
    std::string s = "z0,z,x,y,x_printed\n";
    for (const auto& l : leaf)
      s += num(l.z0) + "," + num(l.z) + "," + num(l.x) + "," + num(l.y) + "," + num(l.x_printed) + "\n";
    w.write("leaf.csv", s);
  }
  w.write("series_info.json", info.dump(2) + "\n");
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Time-minimal syntheses near a target manifold"};
  app.require_subcommand(1);
  std::string model, config_path, outdir = "out", grid;
  int order = 0, seed = -1;
  double horizon = 0, tol = 0;
  bool oracle = false;
  std::string command;
  for (const char* name : {"network", "strata", "synthesis", "series"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--model", model, "tutorial | seminf | unfolding | mckeithan | path to a network JSON");
    sub->add_option("--config", config_path, "JSON config");
    sub->add_option("--out", outdir, "output directory");
    sub->add_option("--order", order, "series truncation order");
    sub->add_option("--grid", grid, "grid size ny,nz on the target");
    sub->add_option("--horizon", horizon, "backward sweep horizon");
    sub->add_flag("--oracle", oracle, "brute-force oracle verdicts per anchor");
    sub->add_option("--seed", seed, "seed for probe points");
    sub->add_option("--tol", tol, "integrator tolerance");
    sub->callback([&command, name] { command = name; });
  }
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  json cfg = json::object();
  std::string network_file;
  try {
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw ConfigError("cannot open config " + config_path);
      try {
        cfg = json::parse(f);
      } catch (const json::parse_error& e) {
        throw ConfigError(config_path + ": " + e.what());
      }
    }
    if (!model.empty()) {
      if (model_defaults().count(model)) {
        cfg["model"] = model;
      } else if (command == "network" && fs::exists(model)) {
        network_file = model;
      } else {
        throw ConfigError("--model: unknown model '" + model + "'");
      }
    }
    if (order) cfg["order"] = order;
    if (horizon) cfg["horizon"] = horizon;
    if (seed >= 0) cfg["seed"] = seed;
    if (!grid.empty()) {
      int a = 0, b = 0;
      char comma = 0;
      std::istringstream s(grid);
      if (!(s >> a >> comma >> b) || comma != ',') throw ConfigError("--grid: expected ny,nz");
      cfg["grid"]["ny"] = a;
      cfg["grid"]["nz"] = b;
    }
    if (tol) cfg["tolerances"]["ode"] = tol;
    if (oracle) cfg["oracle"]["enabled"] = true;
    if (command == "network" && !network_file.empty() && !cfg.contains("network")) cfg["network"] = json::object();
    cfg = normalize_config(command, cfg);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  Writer w;
  w.dir = outdir;
  w.meta = {{"command", command},
            {"config_hash", [&] {
               std::ostringstream h;
               h << std::hex << std::setw(16) << std::setfill('0') << fnv1a(cfg.dump());
               return h.str();
             }()},
            {"config", cfg},
            {"tolerances", cfg.contains("tolerances") ? cfg["tolerances"] : json(nullptr)},
            {"versions",
             {{"crnsynth", kVersion},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"boost", BOOST_LIB_VERSION},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
  try {
    int rc = kOk;
    if (command == "network") rc = cmd_network(cfg, w, network_file);
    if (command == "strata") rc = cmd_strata(cfg, w);
    if (command == "synthesis") rc = cmd_synthesis(cfg, w);
    if (command == "series") rc = cmd_series(cfg, w);
    for (const auto& f : w.written) out << (w.dir / f).string() << "\n";
    return rc;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  }
}

}  // namespace crnsynth::cli
