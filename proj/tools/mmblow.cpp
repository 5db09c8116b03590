#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mmblow/lab.hpp"

using namespace mmblow;
namespace fs = std::filesystem;

namespace {

json read_json(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw ConfigError("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::exception &ex) {
    throw ConfigError(path + ": " + ex.what());
  }
}

std::string csv(const RadialFunction &f) {
  std::ostringstream os;
  write_csv(os, f);
  return os.str();
}

int cmd_groundstate(int dim, double rmax, int nodes, const std::vector<double> &ps, bool mu,
                    const fs::path &out) {
  require(dim >= 1 && dim <= 4, "groundstate: dim must lie in 1..4");
  const GroundStateData gs = build_ground_state(make_grid(dim, rmax, nodes), ps, mu);
  const GroundStateResiduals r = ground_state_residuals(gs);
  json lp = json::object();
  for (const auto &[p, v] : gs.norms.lp1)
    lp[std::to_string(p)] = v;
  const bool pass = r.ode <= 1e-10 && r.lminus_q <= 1e-6 && r.lplus_lq <= 1e-6 &&
                    r.lminus_y2q <= 1e-6 && r.lplus_rho <= 1e-6 && r.pohozaev <= 1e-8 &&
                    r.positive && r.decreasing && (!mu || gs.mu > 0);
  json j{{"grid", json::parse(grid_json(*gs.grid))},
         {"Q0", gs.Q.values(0).real()},
         {"norms",
          {{"mass", gs.norms.mass}, {"grad", gs.norms.grad}, {"crit", gs.norms.crit},
           {"yQ", gs.norms.yQ}, {"y2Q", gs.norms.y2Q}, {"lp1", lp}}},
         {"residuals",
          {{"ode", r.ode}, {"lminus_q", r.lminus_q}, {"lplus_lq", r.lplus_lq},
           {"lminus_y2q", r.lminus_y2q}, {"lplus_rho", r.lplus_rho}, {"pohozaev", r.pohozaev},
           {"pohozaev_mass", r.pohozaev_mass}, {"q_rho_literal", r.q_rho_literal},
           {"q_rho_corrected", r.q_rho_corrected}, {"positive", r.positive},
           {"decreasing", r.decreasing}}},
         {"pass", pass}};
  if (mu)
    j["mu"] = gs.mu;
  const std::string tg = "N" + std::to_string(dim);
  write_text(out / ("Q_" + tg + ".csv"), csv(gs.Q));
  write_text(out / ("rho_" + tg + ".csv"), csv(gs.rho));
  write_text(out / ("groundstate_" + tg + ".json"), j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return pass ? 0 : 1;
}

int cmd_profile(int dim, double p, int K, int sweep, const fs::path &out) {
  require(sweep >= 2, "profile: --sweep needs at least 2 samples");
  auto gs = std::make_shared<const GroundStateData>(build_ground_state(default_grid(dim), {p}));
  const ProfileExpansion e = build_expansion(gs, p, K);
  const double eps = default_eps_prime(*gs);
  std::ostringstream os;
  os << std::setprecision(12) << "lambda,b,psi_norm,energy,mass\n";
  for (int i = 0; i < sweep; ++i) {
    // b² = λ^α across λ ∈ [1e-3, 1e-1]
    const double l = std::pow(10.0, -3 + 2.0 * i / (sweep - 1));
    const double b = std::pow(l, e.alpha / 2);
    os << l << ',' << b << ',' << residual_Psi(e, b, l, eps) << ',' << profile_energy(e, l, b)
       << ',' << profile_mass(e, l, b) << '\n';
  }
  json betas = json::array();
  for (const auto &[jk, t] : e.terms)
    betas.push_back({{"j", jk.first}, {"k", jk.second}, {"beta", t.beta}});
  const double rel = std::abs(e.beta / e.beta_formula() - 1);
  json j{{"dim", dim},          {"p", p},         {"K", K},
         {"alpha", e.alpha},    {"beta", e.beta}, {"beta_formula", e.beta_formula()},
         {"beta_rel_error", rel}, {"B", e.B()},   {"eps_prime", eps},
         {"max_defect", e.max_defect}, {"betas", betas}};
  std::ostringstream tg;
  tg << "N" << dim << "_p" << p << "_K" << K;
  write_text(out / ("profile_" + tg.str() + ".csv"), os.str());
  write_text(out / ("profile_" + tg.str() + ".json"), j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return rel <= 1e-8 ? 0 : 1;
}

int cmd_law(int dim, double p, int K, double E0, std::optional<double> t1,
            std::optional<double> s1) {
  require(!(t1 && s1), "law: give at most one of --t1 and --s1");
  auto gs = std::make_shared<const GroundStateData>(build_ground_state(default_grid(dim), {p}));
  const ProfileExpansion e = build_expansion(gs, p, K);
  const LawConstants law = make_law_constants(e, E0);
  if (t1)
    require(*t1 < 0, "law: t1 must be negative");
  const double s = t1 ? s1_of_t1(*t1, law) : s1.value_or(400.0);
  require(s >= 50, "law: s1 must be at least 50");
  const InitialParams ip = initial_params(s, law, e);
  json j{{"alpha", law.alpha},     {"beta", law.beta}, {"C", law.C},
         {"C_lambda", law.C_lambda}, {"C_b", law.C_b}, {"s1", s},
         {"t1", t1 ? *t1 : t1_of_s1(s, law)}, {"lambda1", ip.lambda1},
         {"b1", ip.b1}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_evolve(const std::string &config, const fs::path &out) {
  const RunConfig cfg = run_config_from_json(read_json(config));
  const Trajectory tr = run(cfg);
  write_trajectory(out, tr);
  const bool drift_ok =
      tr.max_mass_drift <= cfg.mass_tol && tr.max_energy_drift <= cfg.energy_tol;
  const bool status_ok = tr.status != "resolution-limit" && tr.status != "step-limit";
  std::cout << "status " << tr.status << ", " << tr.track.points.size() << " snapshots, "
            << tr.steps << " steps, mass drift " << tr.max_mass_drift << ", energy drift "
            << tr.max_energy_drift << "\noutput " << out.string() << "\n";
  return drift_ok && status_ok ? 0 : 1;
}

int cmd_experiment(ExperimentSpec spec, const std::string &config, const fs::path &out) {
  if (!config.empty()) {
    const std::string kind = spec.kind;
    spec = experiment_from_json(read_json(config));
    if (!kind.empty())
      spec.kind = kind;
  }
  require(!spec.kind.empty(), "experiment: give --kind or a config with a kind");
  if (spec.out_dir.empty())
    spec.out_dir = out / spec.kind;
  const ExperimentResult r = run_experiment(spec);
  std::cout << "experiment " << spec.kind << ": " << (r.pass ? "pass" : "FAIL") << "\nreport "
            << (spec.out_dir / "report.json").string() << "\n";
  return r.pass ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Minimal-mass blow-up laboratory for the double-power radial NLS"};
  app.require_subcommand(1);
  std::string out_flag;
  app.add_option("--out", out_flag, "output root (overrides MMBLOW_OUT)");

  int dim = 1, nodes = 1500, K = 2, sweep = 9;
  double rmax = 30, p = 2, E0 = 0;
  std::vector<double> ps;
  bool mu = false;
  std::optional<double> t1, s1;
  std::string config;
  ExperimentSpec spec;
  spec.dims.clear();
  spec.ps.clear();

  auto *gs = app.add_subcommand("groundstate", "ground state Q, ρ and their invariants");
  gs->add_option("--dim", dim)->check(CLI::Range(1, 4));
  gs->add_option("--rmax", rmax);
  gs->add_option("--nodes", nodes);
  gs->add_option("--p", ps, "exponents for ||Q||_{p+1}");
  gs->add_flag("--mu", mu, "solve the constrained eigenproblem for μ");

  auto *pr = app.add_subcommand("profile", "approximate blow-up profile");
  pr->add_option("--dim", dim)->check(CLI::Range(1, 4));
  pr->add_option("--p", p);
  pr->add_option("--K", K)->check(CLI::Range(1, 4));
  pr->add_option("--sweep", sweep, "samples along b² = λ^α, λ ∈ [1e-3, 1e-1]");

  auto *lw = app.add_subcommand("law", "law constants and initial parameters");
  lw->add_option("--dim", dim)->check(CLI::Range(1, 4));
  lw->add_option("--p", p);
  lw->add_option("--K", K)->check(CLI::Range(1, 4));
  lw->add_option("--E0", E0);
  lw->add_option("--t1", t1);
  lw->add_option("--s1", s1);

  auto *ev = app.add_subcommand("evolve", "run one trajectory from a JSON config");
  ev->add_option("--config", config)->required();

  auto *ex = app.add_subcommand("experiment", "canned suites, sweeps and rate fits");
  ex->add_option("--kind", spec.kind)
      ->check(CLI::IsMember({"verify-statics", "verify-profile", "verify-law", "rate-fit",
                             "sweep"}));
  ex->add_option("--config", config, "experiment JSON");
  ex->add_option("--dim", spec.dims);
  ex->add_option("--p", spec.ps);
  ex->add_option("--K", spec.K);
  ex->add_option("--E0", spec.E0);
  ex->add_option("--s1", spec.s1);
  ex->add_option("--workers", spec.workers);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const fs::path out = out_flag.empty() ? output_root() : fs::path(out_flag);
    if (*gs)
      return cmd_groundstate(dim, rmax, nodes, ps, mu, out / "groundstate");
    if (*pr)
      return cmd_profile(dim, p, K, sweep, out / "profile");
    if (*lw)
      return cmd_law(dim, p, K, E0, t1, s1);
    if (*ev)
      return cmd_evolve(config, out / "evolve");
    if (spec.dims.empty())
      spec.dims = {1};
    if (spec.ps.empty())
      spec.ps = {2};
    return cmd_experiment(spec, config, out);
  } catch (const ConfigError &e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
