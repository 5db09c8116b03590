#include "mmblow/lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include <Eigen/QR>
#include <boost/math/tools/minima.hpp>

#include "mmblow/fd.hpp"

namespace mmblow {

namespace fs = std::filesystem;

namespace {

std::vector<double> logs(const std::vector<double> &v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return std::log(x); });
  return out;
}

double fit_slope(const std::vector<double> &x, const std::vector<double> &y) {
  return fd::fit_line(logs(x), logs(y)).slope;
}

std::vector<double> log_space(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i)
    v[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1));
  return v;
}

double sq_residual(const std::vector<double> &x, const std::vector<double> &y) {
  const auto f = fd::fit_line(x, y);
  double r = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = y[i] - f.intercept - f.slope * x[i];
    r += d * d;
  }
  return r;
}

} // namespace

RateFitResult rate_fit(const std::vector<double> &t, const std::vector<double> &value,
                       double t_star) {
  require(t.size() == value.size(), "rate_fit: series lengths differ");
  require(t.size() >= 20, "rate_fit: need at least 20 points");
  std::vector<double> x(t.size()), y(t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    const double d = t_star - t[i];
    require(d > 0 && value[i] > 0, "rate_fit: need t < t_star and positive values");
    x[i] = std::log(d);
    y[i] = std::log(value[i]);
  }
  const auto [xlo, xhi] = std::minmax_element(x.begin(), x.end());
  require(*xhi - *xlo >= std::log(10.0) * (1 - 1e-12),
          "rate_fit: |t| must span at least one decade");
  const auto f = fd::fit_line(x, y);
  RateFitResult r;
  r.exponent = f.slope;
  r.constant = std::exp(f.intercept);
  r.r2 = f.r2;
  r.window_max = *std::max_element(value.begin(), value.end());
  r.window_min = *std::min_element(value.begin(), value.end());
  r.points = t.size();
  r.t_star = t_star;
  return r;
}

RateFitResult rate_fit_free(const std::vector<double> &t, const std::vector<double> &value) {
  require(t.size() == value.size() && t.size() >= 20, "rate_fit: need at least 20 points");
  const auto [tlo, thi] = std::minmax_element(t.begin(), t.end());
  const double span = *thi - *tlo;
  require(span > 0, "rate_fit: times must differ");
  const std::vector<double> y = logs(value);
  auto cost = [&](double ts) {
    std::vector<double> x(t.size());
    for (size_t i = 0; i < t.size(); ++i)
      x[i] = std::log(ts - t[i]);
    return sq_residual(x, y);
  };
  // The blow-up time lies after the last sample, within one window length of it.
  const double lo = *thi + 1e-9 * span, hi = *thi + span;
  const auto m = boost::math::tools::brent_find_minima(cost, lo, hi, 52);
  return rate_fit(t, value, m.first);
}

RateReport rate_report(const Trajectory &tr, double lambda_lo, double lambda_hi) {
  RateReport rep;
  rep.lambda_lo = lambda_lo;
  rep.lambda_hi = lambda_hi;
  rep.target_lambda = lambda_exponent(tr.law.dim, tr.law.p);
  rep.target_b = b_exponent(tr.law.dim, tr.law.p);
  rep.C_lambda = tr.law.C_lambda;
  rep.C_b = tr.law.C_b;
  std::vector<double> t, l, b;
  for (const auto &p : tr.track.points)
    if (p.st.lambda >= lambda_lo && p.st.lambda <= lambda_hi) {
      t.push_back(p.st.t);
      l.push_back(p.st.lambda);
      b.push_back(p.st.b);
    }
  require(!t.empty(), "rate_report: no snapshots inside the lambda window");
  require(*std::min_element(b.begin(), b.end()) > 0,
          "rate_report: b changes sign inside the lambda window");
  rep.lambda = rate_fit(t, l);
  rep.b = rate_fit(t, b);
  rep.lambda_free = rate_fit_free(t, l);
  rep.b_free = rate_fit(t, b, rep.lambda_free.t_star);
  auto within = [](double v, double target, double tol) {
    return std::abs(v / target - 1) <= tol;
  };
  rep.pass = within(rep.lambda.exponent, rep.target_lambda, 0.05) &&
             within(rep.b.exponent, rep.target_b, 0.10) &&
             within(rep.lambda.constant, rep.C_lambda, 0.10) &&
             within(rep.b.constant, rep.C_b, 0.10) && rep.lambda.r2 >= 0.99 &&
             rep.b.r2 >= 0.99;
  return rep;
}

double mod_norm(const TrackPoint &p) {
  return std::sqrt(p.mod[0] * p.mod[0] + p.mod[1] * p.mod[1] + p.mod[2] * p.mod[2]);
}

DecaySlope decay_slope(const ModulationTrack &track,
                       const std::function<double(const TrackPoint &)> &f, double s1,
                       double margin) {
  std::vector<double> head;
  for (const auto &p : track.points)
    if (p.st.s >= 0.5 * s1)
      head.push_back(std::abs(f(p)));
  require(!head.empty(), "decay_slope: no snapshots in the initial segment");
  std::nth_element(head.begin(), head.begin() + head.size() / 2, head.end());
  DecaySlope out;
  out.floor = head[head.size() / 2];
  std::vector<double> s, v;
  for (const auto &p : track.points) {
    const double a = std::abs(f(p));
    if (p.st.s >= 1 && a >= margin * out.floor && a > 0) {
      s.push_back(p.st.s);
      v.push_back(a);
    }
  }
  out.points = s.size();
  if (s.size() < 5) {
    out.slope = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.s_lo = *std::min_element(s.begin(), s.end());
  out.s_hi = *std::max_element(s.begin(), s.end());
  out.slope = fit_slope(s, v);
  return out;
}

CoercivityFit coercivity_fit(const ModulationTrack &track, int K) {
  std::vector<const TrackPoint *> pts;
  for (const auto &p : track.points)
    if (p.st.s >= 1 && p.eps_H1 > 0)
      pts.push_back(&p);
  CoercivityFit out;
  out.points = pts.size();
  require(pts.size() >= 3, "coercivity_fit: need at least 3 snapshots with s >= 1");
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd h(n);
  out.min_ratio = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const auto &p = *pts[i];
    const double en =
        p.eps_H1 * p.eps_H1 + p.st.b * p.st.b * p.eps_weighted * p.eps_weighted;
    A(i, 0) = en;
    A(i, 1) = -std::pow(p.st.s, -2.0 * (K + 2));
    h(i) = p.H;
    out.min_ratio = std::min(out.min_ratio, p.H / en);
  }
  // Column scaling keeps the two regressors comparable.
  const Eigen::Vector2d scale = A.colwise().norm().transpose().cwiseMax(1e-300);
  const Eigen::Vector2d x =
      (A * scale.cwiseInverse().asDiagonal()).colPivHouseholderQr().solve(h);
  out.c = x(0) / scale(0);
  out.C = x(1) / scale(1);
  return out;
}

SlopeSamples psi_slope(const ProfileExpansion &e, double eps_prime, double x_lo, double x_hi,
                       int samples) {
  require(samples >= 3 && x_lo > 0 && x_hi > x_lo, "psi_slope: bad sampling range");
  SlopeSamples out;
  for (double x : log_space(x_lo, x_hi, samples)) {
    const double la = 0.5 * x;
    const double b = std::sqrt(la), lambda = std::pow(la, 1 / e.alpha);
    out.x.push_back(x);
    out.y.push_back(residual_Psi(e, b, lambda, eps_prime));
  }
  out.slope = fit_slope(out.x, out.y);
  return out;
}

SlopeSamples energy_band(const ProfileExpansion &e, double lambda_lo, double lambda_hi,
                         int samples) {
  require(samples >= 2 && lambda_lo > 0 && lambda_hi > lambda_lo,
          "energy_band: bad sampling range");
  SlopeSamples out;
  const double yQ = e.gs->norms.yQ, a = e.alpha, B = e.B();
  for (double l : log_space(lambda_lo, lambda_hi, samples)) {
    const double b = std::pow(l, a / 2);
    const double E = profile_energy(e, l, b);
    const double lead = yQ * (b * b / (l * l) - B * std::pow(l, a - 2));
    const double scale = std::pow(l, a) * (b * b + std::pow(l, a)) / (l * l);
    out.x.push_back(l);
    out.y.push_back(std::abs(8 * E - lead) / scale);
  }
  out.slope = fit_slope(out.x, out.y);
  return out;
}

SlopeSamples F_band(const LawConstants &c, double lambda_lo, double lambda_hi, int samples) {
  require(samples >= 2 && lambda_lo > 0 && lambda_hi > lambda_lo && lambda_hi <= c.lambda0,
          "F_band: bad sampling range");
  SlopeSamples out;
  const double a = c.alpha;
  for (double l : log_space(lambda_lo, lambda_hi, samples)) {
    const double lead = 2 / (a * std::pow(l, a / 2) * std::sqrt(c.B));
    const double scale = std::pow(l, -a / 4) + std::pow(l, 2 - 1.5 * a);
    out.x.push_back(l);
    out.y.push_back(std::abs(F_of_lambda(l, c) - lead) / scale);
  }
  out.slope = fit_slope(out.x, out.y);
  return out;
}

SlopeSamples closeness_sweep(const LawConstants &c, const ProfileExpansion &e,
                             const std::vector<double> &s1s) {
  require(s1s.size() >= 2, "closeness_sweep: need at least two s1 values");
  SlopeSamples out;
  for (double s1 : s1s) {
    out.x.push_back(s1);
    out.y.push_back(initial_params(s1, c, e).closeness);
  }
  out.slope = fit_slope(out.x, out.y);
  return out;
}

double band_ratio(const std::vector<double> &v) {
  require(!v.empty(), "band_ratio: empty sample");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (!(*lo > 0))
    return std::numeric_limits<double>::infinity();
  return *hi / *lo;
}

json constants_json(const ProfileExpansion &e, const LawConstants &law,
                    const DiagnosticsConfig &diag, double mu) {
  return {{"dim", e.dim},       {"p", e.p},           {"alpha", law.alpha},
          {"beta", law.beta},   {"B", law.B},         {"C", law.C},
          {"C_lambda", law.C_lambda}, {"C_b", law.C_b}, {"E0", law.E0},
          {"C0", law.C0},       {"lambda0", law.lambda0}, {"mu", mu},
          {"m", diag.m},        {"K", diag.K},        {"M", diag.M},
          {"eps_prime", diag.eps_prime}, {"s_star", diag.s_star}};
}

namespace {

const std::map<std::string, Scheme> &scheme_names() {
  static const std::map<std::string, Scheme> m{{"strang", Scheme::strang},
                                               {"yoshida4", Scheme::yoshida4},
                                               {"suzuki4", Scheme::suzuki4},
                                               {"yoshida6", Scheme::yoshida6}};
  return m;
}

std::string scheme_name(Scheme s) {
  for (const auto &[k, v] : scheme_names())
    if (v == s)
      return k;
  return "unknown";
}

template <class T> void read(const json &j, const char *key, T &out) {
  if (j.contains(key))
    out = j.at(key).get<T>();
}

void reject_unknown(const json &j, const std::vector<std::string> &known, const char *what) {
  require(j.is_object(), std::string(what) + ": expected a JSON object");
  for (const auto &[k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError(std::string(what) + ": unknown key '" + k + "'");
}

} // namespace

json to_json(const RunConfig &c) {
  json j{{"dim", c.dim},
         {"p", c.p},
         {"E0", c.E0},
         {"K", c.K},
         {"t1", c.t1},
         {"s1", c.s1},
         {"direction", c.direction},
         {"t_end", c.t_end ? json(*c.t_end) : json(nullptr)},
         {"nodes", c.nodes},
         {"core_lo", c.core_lo},
         {"core_hi", c.core_hi},
         {"ds", c.ds},
         {"snap_frac", c.snap_frac},
         {"snap_min", c.snap_min},
         {"scheme", scheme_name(c.scheme)},
         {"lambda_max", c.lambda_max},
         {"lambda_min", c.lambda_min},
         {"b_max", c.b_max},
         {"sign", c.sign},
         {"flip_b", c.flip_b},
         {"ground_state_data", c.ground_state_data},
         {"profile_nodes", c.profile_nodes},
         {"profile_rmax", c.profile_rmax},
         {"mass_tol", c.mass_tol},
         {"energy_tol", c.energy_tol},
         {"max_halvings", c.max_halvings},
         {"max_steps", c.max_steps},
         {"stop_on_tube_exit", c.stop_on_tube_exit},
         {"field_every", c.field_every}};
  return j;
}

RunConfig run_config_from_json(const json &j) {
  RunConfig c;
  std::vector<std::string> known;
  const json defaults = to_json(c);
  for (const auto &[k, v] : defaults.items())
    known.push_back(k);
  reject_unknown(j, known, "run config");
  try {
    read(j, "dim", c.dim);
    read(j, "p", c.p);
    read(j, "E0", c.E0);
    read(j, "K", c.K);
    read(j, "t1", c.t1);
    read(j, "s1", c.s1);
    read(j, "direction", c.direction);
    if (j.contains("t_end") && !j.at("t_end").is_null())
      c.t_end = j.at("t_end").get<double>();
    read(j, "nodes", c.nodes);
    read(j, "core_lo", c.core_lo);
    read(j, "core_hi", c.core_hi);
    read(j, "ds", c.ds);
    read(j, "snap_frac", c.snap_frac);
    read(j, "snap_min", c.snap_min);
    if (j.contains("scheme")) {
      const auto name = j.at("scheme").get<std::string>();
      const auto it = scheme_names().find(name);
      require(it != scheme_names().end(), "run config: unknown scheme '" + name + "'");
      c.scheme = it->second;
    }
    read(j, "lambda_max", c.lambda_max);
    read(j, "lambda_min", c.lambda_min);
    read(j, "b_max", c.b_max);
    read(j, "sign", c.sign);
    read(j, "flip_b", c.flip_b);
    read(j, "ground_state_data", c.ground_state_data);
    read(j, "profile_nodes", c.profile_nodes);
    read(j, "profile_rmax", c.profile_rmax);
    read(j, "mass_tol", c.mass_tol);
    read(j, "energy_tol", c.energy_tol);
    read(j, "max_halvings", c.max_halvings);
    read(j, "max_steps", c.max_steps);
    read(j, "stop_on_tube_exit", c.stop_on_tube_exit);
    read(j, "field_every", c.field_every);
  } catch (const json::exception &ex) {
    throw ConfigError(std::string("run config: ") + ex.what());
  }
  validate(c);
  return c;
}

json to_json(const RateFitResult &r) {
  return {{"exponent", r.exponent}, {"constant", r.constant}, {"r2", r.r2},
          {"window", {r.window_max, r.window_min}}, {"points", r.points},
          {"t_star", r.t_star}};
}

json trajectory_report(const Trajectory &tr) {
  json j;
  j["config"] = to_json(tr.config);
  j["status"] = tr.status;
  j["steps"] = tr.steps;
  j["regrids"] = tr.regrids;
  j["halvings"] = tr.halvings;
  j["untracked"] = tr.untracked;
  j["snapshots"] = tr.track.points.size();
  j["max_mass_drift"] = tr.max_mass_drift;
  j["max_energy_drift"] = tr.max_energy_drift;
  j["initial"] = {{"s1", tr.init.s1},
                  {"lambda1", tr.init.lambda1},
                  {"b1", tr.init.b1},
                  {"closeness", tr.init.closeness},
                  {"t1", tr.ledger.empty() ? 0.0 : tr.ledger.front().t}};
  j["law"] = {{"alpha", tr.law.alpha}, {"beta", tr.law.beta},     {"C", tr.law.C},
              {"C_lambda", tr.law.C_lambda}, {"C_b", tr.law.C_b}, {"B", tr.law.B},
              {"lambda0", tr.law.lambda0}, {"E0", tr.law.E0}};
  j["diagnostics"] = {{"m", tr.diag.m},   {"K", tr.diag.K},
                      {"M", tr.diag.M},   {"eps_prime", tr.diag.eps_prime},
                      {"s_star", tr.diag.s_star}};
  double ortho = 0;
  size_t checked = 0;
  for (const auto &p : tr.track.points) {
    ortho = std::max({ortho, p.ortho[0], p.ortho[1], p.ortho[2]});
    checked += p.checked;
  }
  j["max_ortho_residual"] = ortho;
  json boot{{"violations", tr.bootstrap.violations}, {"checked_snapshots", checked}};
  if (tr.bootstrap.first_index) {
    boot["first_index"] = *tr.bootstrap.first_index;
    boot["first_s"] = tr.bootstrap.first_s;
    boot["first_check"] = tr.bootstrap.first_check;
  }
  j["bootstrap"] = boot;
  try {
    const RateReport r = rate_report(tr);
    j["rates"] = {{"lambda", to_json(r.lambda)},          {"b", to_json(r.b)},
                  {"lambda_free_tstar", to_json(r.lambda_free)},
                  {"b_free_tstar", to_json(r.b_free)},
                  {"target_lambda", r.target_lambda},     {"target_b", r.target_b},
                  {"pass", r.pass}};
  } catch (const ConfigError &ex) {
    j["rates"] = {{"skipped", ex.what()}};
  }
  if (tr.track.points.size() >= 3) {
    const double s1 = tr.init.s1;
    const DecaySlope m = decay_slope(tr.track, mod_norm, s1);
    const DecaySlope q =
        decay_slope(tr.track, [](const TrackPoint &p) { return p.eps_Q; }, s1);
    auto js = [](const DecaySlope &d) {
      return json{{"slope", std::isnan(d.slope) ? json(nullptr) : json(d.slope)},
                  {"floor", d.floor}, {"points", d.points}, {"s_range", {d.s_lo, d.s_hi}}};
    };
    j["mod_decay"] = js(m);
    j["epsQ_decay"] = js(q);
    try {
      const CoercivityFit c = coercivity_fit(tr.track, tr.diag.K);
      j["coercivity"] = {{"c", c.c}, {"C", c.C}, {"points", c.points},
                         {"min_ratio", c.min_ratio}};
    } catch (const ConfigError &ex) {
      j["coercivity"] = {{"skipped", ex.what()}};
    }
  }
  return j;
}

void write_text(const fs::path &file, const std::string &text) {
  if (file.has_parent_path())
    fs::create_directories(file.parent_path());
  std::ofstream os(file);
  if (!os)
    throw ConfigError("cannot write " + file.string());
  os << text;
}

void write_trajectory(const fs::path &dir, const Trajectory &tr) {
  fs::create_directories(dir);
  std::ostringstream led, trk, lam, bb, mod, grad;
  led << std::setprecision(17) << "t,s,mass,energy,grad_norm,dt\n";
  for (const auto &r : tr.ledger)
    led << r.t << ',' << r.s << ',' << r.mass << ',' << r.energy << ',' << r.grad_norm << ','
        << r.dt << '\n';
  trk << std::setprecision(17)
      << "t,s,lambda,b,gamma,eps_H1,eps_weighted,eps_Q,ortho0,ortho1,ortho2,mod0,mod1,mod2,"
         "H,S,boot1,boot2,re1,re2,checked,h_phys\n";
  lam << std::setprecision(12) << "# |t| lambda\n";
  bb << std::setprecision(12) << "# |t| b\n";
  mod << std::setprecision(12) << "# s |Mod|\n";
  grad << std::setprecision(12) << "# t grad_norm\n";
  for (const auto &p : tr.track.points) {
    trk << p.st.t << ',' << p.st.s << ',' << p.st.lambda << ',' << p.st.b << ',' << p.st.gamma
        << ',' << p.eps_H1 << ',' << p.eps_weighted << ',' << p.eps_Q << ',' << p.ortho[0] << ','
        << p.ortho[1] << ',' << p.ortho[2] << ',' << p.mod[0] << ',' << p.mod[1] << ','
        << p.mod[2] << ',' << p.H << ',' << p.S << ',' << p.boot1 << ',' << p.boot2 << ','
        << p.re1 << ',' << p.re2 << ',' << p.checked << ',' << p.h_phys << '\n';
    lam << std::abs(p.st.t) << ' ' << p.st.lambda << '\n';
    bb << std::abs(p.st.t) << ' ' << p.st.b << '\n';
    mod << p.st.s << ' ' << mod_norm(p) << '\n';
  }
  for (const auto &r : tr.ledger)
    grad << r.t << ' ' << r.grad_norm << '\n';
  write_text(dir / "ledger.csv", led.str());
  write_text(dir / "track.csv", trk.str());
  write_text(dir / "lambda_vs_t.dat", lam.str());
  write_text(dir / "b_vs_t.dat", bb.str());
  write_text(dir / "mod_vs_s.dat", mod.str());
  write_text(dir / "gradnorm_vs_t.dat", grad.str());
  for (size_t k = 0; k < tr.fields.size(); ++k) {
    const auto &f = tr.fields[k];
    std::ostringstream os;
    os << std::setprecision(17) << "# t = " << f.t << '\n';
    write_csv(os, RadialFunction(f.grid, f.u));
    std::ostringstream name;
    name << "field_" << std::setw(4) << std::setfill('0') << k << ".csv";
    write_text(dir / "fields" / name.str(), os.str());
  }
  write_text(dir / "report.json", trajectory_report(tr).dump(2) + "\n");
}

fs::path output_root(const fs::path &fallback) {
  if (const char *env = std::getenv("MMBLOW_OUT"); env && *env)
    return env;
  return fallback;
}

ExperimentSpec experiment_from_json(const json &j) {
  reject_unknown(j, {"kind", "dims", "ps", "E0", "t1", "s1", "lambda_start", "K", "run",
                     "out_dir", "workers"},
                 "experiment");
  ExperimentSpec s;
  try {
    read(j, "kind", s.kind);
    read(j, "dims", s.dims);
    read(j, "ps", s.ps);
    read(j, "E0", s.E0);
    if (j.contains("t1") && !j.at("t1").is_null())
      s.t1 = j.at("t1").get<double>();
    read(j, "s1", s.s1);
    read(j, "lambda_start", s.lambda_start);
    read(j, "K", s.K);
    read(j, "workers", s.workers);
    if (j.contains("out_dir"))
      s.out_dir = j.at("out_dir").get<std::string>();
  } catch (const json::exception &ex) {
    throw ConfigError(std::string("experiment: ") + ex.what());
  }
  if (j.contains("run"))
    s.run = run_config_from_json(j.at("run"));
  return s;
}

namespace {

const std::vector<std::string> kinds{"verify-statics", "verify-profile", "verify-law",
                                     "rate-fit", "sweep"};

void validate(const ExperimentSpec &s) {
  require(std::find(kinds.begin(), kinds.end(), s.kind) != kinds.end(),
          "experiment: unknown kind '" + s.kind + "'");
  require(!s.dims.empty() && !s.ps.empty(), "experiment: dims and ps must be nonempty");
  for (int d : s.dims)
    require(d >= 1 && d <= 4, "experiment: dims must lie in 1..4");
  require(s.K >= 1 && s.K <= 4, "experiment: K must lie in 1..4");
  require(s.lambda_start > 0 && s.lambda_start < 0.1, "experiment: lambda_start in (0, 0.1)");
  require(s.workers >= 0, "experiment: workers must be nonnegative");
}

std::string tag(int dim, double p) {
  std::ostringstream os;
  os << "N" << dim << "_p" << p;
  return os.str();
}

std::string csv_function(const RadialFunction &f) {
  std::ostringstream os;
  write_csv(os, f);
  return os.str();
}

std::string two_column(const SlopeSamples &s, const char *header) {
  std::ostringstream os;
  os << std::setprecision(12) << "# " << header << '\n';
  for (size_t i = 0; i < s.x.size(); ++i)
    os << s.x[i] << ' ' << s.y[i] << '\n';
  return os.str();
}

double dim1_closed_form_error(const GroundStateData &gs) {
  const auto &r = gs.grid->r;
  double err = 0;
  for (int i = 0; i < gs.grid->n; ++i) {
    const double exact = std::pow(3.0, 0.25) / std::sqrt(std::cosh(2 * r(i)));
    err = std::max(err, std::abs(gs.Q.values(i).real() - exact));
  }
  return err;
}

json verify_statics(const ExperimentSpec &spec, bool &pass) {
  json out = json::array();
  for (int dim : spec.dims) {
    const GroundStateData gs = build_ground_state(default_grid(dim), {}, true);
    const GroundStateResiduals r = ground_state_residuals(gs);
    json j{{"dim", dim},
           {"mass", gs.norms.mass},
           {"mu", gs.mu},
           {"ode", r.ode},
           {"lminus_q", r.lminus_q},
           {"lplus_lq", r.lplus_lq},
           {"lminus_y2q", r.lminus_y2q},
           {"lplus_rho", r.lplus_rho},
           {"pohozaev", r.pohozaev},
           {"pohozaev_mass", r.pohozaev_mass},
           {"q_rho_literal", r.q_rho_literal},
           {"q_rho_corrected", r.q_rho_corrected},
           {"positive", r.positive},
           {"decreasing", r.decreasing}};
    bool ok = r.ode <= 1e-10 && r.lminus_q <= 1e-6 && r.lplus_lq <= 1e-6 &&
              r.lminus_y2q <= 1e-6 && r.lplus_rho <= 1e-6 &&
              std::abs(r.q_rho_literal) <= 1e-6 && r.pohozaev <= 1e-8 && r.positive &&
              r.decreasing && gs.mu > 0;
    if (dim == 1) {
      const double e = dim1_closed_form_error(gs);
      j["closed_form_error"] = e;
      ok = ok && e <= 1e-8;
    }
    j["pass"] = ok;
    pass = pass && ok;
    write_text(spec.out_dir / ("Q_N" + std::to_string(dim) + ".csv"), csv_function(gs.Q));
    write_text(spec.out_dir / ("rho_N" + std::to_string(dim) + ".csv"), csv_function(gs.rho));
    out.push_back(j);
  }
  return out;
}

json beta_table(const ProfileExpansion &e) {
  json t = json::array();
  for (const auto &[jk, term] : e.terms)
    t.push_back({{"j", jk.first}, {"k", jk.second}, {"beta", term.beta}});
  return t;
}

json verify_profile(const ExperimentSpec &spec, bool &pass) {
  json out = json::array();
  for (int dim : spec.dims) {
    auto gs = std::make_shared<const GroundStateData>(
        build_ground_state(default_grid(dim), spec.ps, false));
    for (double p : spec.ps) {
      const ProfileExpansion e = build_expansion(gs, p, spec.K);
      const double eps = default_eps_prime(*gs);
      const double beta_rel = std::abs(e.beta / e.beta_formula() - 1);
      const SlopeSamples psi = psi_slope(e, eps);
      const SlopeSamples en = energy_band(e);
      const double band = band_ratio(en.y);
      const bool ok = beta_rel <= 1e-8 && psi.slope >= (spec.K + 2) * 0.9 && band <= 3;
      pass = pass && ok;
      const std::string tg = tag(dim, p);
      write_text(spec.out_dir / (tg + "_psi.dat"), two_column(psi, "b^2+lambda^alpha psi_norm"));
      write_text(spec.out_dir / (tg + "_energy.dat"), two_column(en, "lambda scaled_residual"));
      write_text(spec.out_dir / (tg + "_P.csv"), csv_function(eval_P(e, 0.1, 0.01)));
      out.push_back({{"dim", dim},
                     {"p", p},
                     {"K", spec.K},
                     {"alpha", e.alpha},
                     {"beta", e.beta},
                     {"beta_formula", e.beta_formula()},
                     {"beta_rel_error", beta_rel},
                     {"beta_table", beta_table(e)},
                     {"max_defect", e.max_defect},
                     {"eps_prime", eps},
                     {"psi_slope", psi.slope},
                     {"energy_band", band},
                     {"pass", ok}});
    }
  }
  return out;
}

json verify_law(const ExperimentSpec &spec, bool &pass) {
  json out = json::array();
  for (int dim : spec.dims) {
    auto gs = std::make_shared<const GroundStateData>(
        build_ground_state(default_grid(dim), spec.ps, false));
    for (double p : spec.ps) {
      const ProfileExpansion e = build_expansion(gs, p, spec.K);
      const LawConstants law = make_law_constants(e, spec.E0);
      const LawConstants law0 = make_law_constants(e, 0.0);
      const SlopeSamples fb = F_band(law0);
      const double band = band_ratio(fb.y);
      double closed = 0;
      for (double l : {1e-6, 1e-4, 1e-2}) {
        const double exact = 2 / (law0.alpha * std::sqrt(law0.B)) *
                             (std::pow(l, -law0.alpha / 2) - std::pow(law0.lambda0, -law0.alpha / 2));
        closed = std::max(closed, std::abs(F_of_lambda(l, law0) / exact - 1));
      }
      const SlopeSamples cl = closeness_sweep(law, e, {100, 400, 1600});
      const double target = std::min(0.5, 4 / law.alpha - 2);
      const bool cl_ok = std::abs(-cl.slope / target - 1) <= 0.25;
      const bool ok = band <= 3 && closed <= 1e-10 && cl_ok;
      pass = pass && ok;
      const std::string tg = tag(dim, p);
      write_text(spec.out_dir / (tg + "_F_band.dat"), two_column(fb, "lambda scaled_F_error"));
      write_text(spec.out_dir / (tg + "_closeness.dat"), two_column(cl, "s1 closeness"));
      json j{{"dim", dim},
             {"p", p},
             {"constants", {{"alpha", law.alpha}, {"beta", law.beta}, {"C", law.C},
                            {"C_lambda", law.C_lambda}, {"C_b", law.C_b}, {"B", law.B},
                            {"lambda0", law.lambda0}, {"E0", law.E0}}},
             {"F_band", band},
             {"F_closed_form_error", closed},
             {"closeness", cl.y},
             {"closeness_decay", -cl.slope},
             {"closeness_target", target},
             {"pass", ok}};
      const double s1 = spec.s1 > 0 ? spec.s1 : (spec.t1 ? s1_of_t1(*spec.t1, law) : 0.0);
      if (s1 > 0) {
        const InitialParams ip = initial_params(s1, law, e);
        j["initial"] = {{"s1", s1}, {"t1", t1_of_s1(s1, law)}, {"lambda1", ip.lambda1},
                        {"b1", ip.b1}, {"closeness", ip.closeness}};
      }
      out.push_back(j);
    }
  }
  return out;
}

double pick_s1(const ExperimentSpec &spec, const LawConstants &law) {
  if (spec.s1 > 0)
    return spec.s1;
  if (spec.t1)
    return s1_of_t1(*spec.t1, law);
  return std::max(50.0, F_of_lambda(spec.lambda_start, law));
}

struct RunCase {
  int dim;
  double p;
  json report;
  bool pass = false;
  double exponent = std::numeric_limits<double>::quiet_NaN();
  double target = 0;
};

RunCase rate_case(const ExperimentSpec &spec, int dim, double p) {
  RunCase rc{dim, p, {}};
  RunConfig cfg = spec.run;
  cfg.dim = dim;
  cfg.p = p;
  cfg.E0 = spec.E0;
  cfg.K = spec.K;
  cfg.t1 = 0;
  auto gs = profile_ground_state(cfg);
  const ProfileExpansion e = build_expansion(gs, p, spec.K);
  const LawConstants law = make_law_constants(e, spec.E0);
  cfg.s1 = pick_s1(spec, law);
  const fs::path dir = spec.out_dir / tag(dim, p);
  try {
    const Trajectory tr = run(cfg, e);
    write_trajectory(dir, tr);
    rc.report = trajectory_report(tr);
    rc.report["constants"] =
        constants_json(e, tr.law, tr.diag, coercivity_mu(gs->Q, gs->rho));
    const bool drift_ok = tr.max_mass_drift <= cfg.mass_tol && tr.max_energy_drift <= cfg.energy_tol;
    const bool status_ok = tr.status == "lambda-limit" || tr.status == "b-limit" || tr.status == "t_end";
    bool rates_ok = false;
    try {
      const RateReport r = rate_report(tr);
      rates_ok = r.pass;
      rc.exponent = r.lambda.exponent;
      rc.target = r.target_lambda;
    } catch (const ConfigError &) {
    }
    rc.pass = drift_ok && status_ok && rates_ok;
  } catch (const NumericalError &ex) {
    rc.report = {{"error", ex.what()}};
    write_text(dir / "FAILED", std::string(ex.what()) + "\n");
  }
  rc.report["dim"] = dim;
  rc.report["p"] = p;
  rc.report["pass"] = rc.pass;
  return rc;
}

std::vector<RunCase> run_cases(const ExperimentSpec &spec) {
  std::vector<std::pair<int, double>> todo;
  for (int d : spec.dims)
    for (double p : spec.ps)
      todo.emplace_back(d, p);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const size_t workers = spec.workers > 0 ? static_cast<size_t>(spec.workers) : hw;
  std::vector<RunCase> out;
  for (size_t i = 0; i < todo.size(); i += workers) {
    std::vector<std::future<RunCase>> batch;
    for (size_t k = i; k < std::min(todo.size(), i + workers); ++k)
      batch.push_back(std::async(std::launch::async, rate_case, std::cref(spec),
                                 todo[k].first, todo[k].second));
    for (auto &f : batch)
      out.push_back(f.get());
  }
  return out;
}

} // namespace

ExperimentResult run_experiment(const ExperimentSpec &spec_in) {
  ExperimentSpec spec = spec_in;
  validate(spec);
  if (spec.out_dir.empty())
    spec.out_dir = output_root() / spec.kind;
  fs::create_directories(spec.out_dir);
  ExperimentResult res;
  res.pass = true;
  res.report["kind"] = spec.kind;
  try {
    if (spec.kind == "verify-statics") {
      res.report["cases"] = verify_statics(spec, res.pass);
    } else if (spec.kind == "verify-profile") {
      res.report["cases"] = verify_profile(spec, res.pass);
    } else if (spec.kind == "verify-law") {
      res.report["cases"] = verify_law(spec, res.pass);
    } else {
      const auto cases = run_cases(spec);
      json arr = json::array();
      for (const auto &c : cases) {
        arr.push_back(c.report);
        res.pass = res.pass && c.pass;
      }
      res.report["cases"] = arr;
      if (spec.kind == "sweep") {
        // Fitted λ exponents must fall with p in each dimension.
        json table = json::array();
        for (int d : spec.dims) {
          std::vector<std::pair<double, double>> row;
          for (const auto &c : cases)
            if (c.dim == d) {
              row.emplace_back(c.p, c.exponent);
              table.push_back({{"dim", d}, {"p", c.p}, {"exponent", c.exponent},
                               {"target", c.target}});
            }
          std::sort(row.begin(), row.end());
          for (size_t k = 1; k < row.size(); ++k)
            res.pass = res.pass && row[k].second < row[k - 1].second;
        }
        res.report["exponent_table"] = table;
        std::ostringstream os;
        os << "# dim p fitted_exponent target\n";
        for (const auto &r : table)
          os << r["dim"] << ' ' << r["p"] << ' ' << r["exponent"] << ' ' << r["target"] << '\n';
        write_text(spec.out_dir / "exponents.dat", os.str());
      }
    }
  } catch (const std::exception &ex) {
    res.report["error"] = ex.what();
    res.report["pass"] = false;
    write_text(spec.out_dir / "report.json", res.report.dump(2) + "\n");
    write_text(spec.out_dir / "FAILED", std::string(ex.what()) + "\n");
    throw;
  }
  res.report["pass"] = res.pass;
  write_text(spec.out_dir / "report.json", res.report.dump(2) + "\n");
  if (!res.pass)
    write_text(spec.out_dir / "FAILED", "one or more assertions failed\n");
  else if (fs::exists(spec.out_dir / "FAILED"))
    fs::remove(spec.out_dir / "FAILED");
  return res;
}

} // namespace mmblow
