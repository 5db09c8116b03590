#include "mmblow/evolution.hpp"

#include <algorithm>
#include <cmath>

namespace mmblow {

Propagator::Propagator(Grid g, double p, int sign)
    : g_(std::move(g)), p_(p), q_(4.0 / g_->dim), sign_(sign), hw_(RadialGrid::half_width) {
  require(sign == 1 || sign == -1, "Propagator: sign must be +1 or -1");
  const int n = g_->n, w = 2 * hw_ + 1;
  band_.assign(static_cast<size_t>(n) * w, 0.0);
  for (int k = 0; k < g_->lap.outerSize(); ++k)
    for (SpMat::InnerIterator it(g_->lap, k); it; ++it) {
      const int off = static_cast<int>(it.col() - it.row());
      if (std::abs(off) > hw_)
        throw NumericalError("Propagator: Laplacian wider than its stencil");
      band_[static_cast<size_t>(it.row()) * w + off + hw_] += it.value();
    }
}

void Propagator::nonlinear(CVec &u, double tau) const {
  const double hq = 0.5 * q_, hp = 0.5 * (p_ - 1);
  auto power = [](double a2, double e) {
    if (e == 1)
      return a2;
    if (e == 2)
      return a2 * a2;
    if (e == 0.5)
      return std::sqrt(a2);
    return std::pow(a2, e);
  };
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double a2 = std::norm(u(i));
    if (a2 == 0)
      continue;
    const double v = power(a2, hq) + sign_ * power(a2, hp);
    u(i) *= std::polar(1.0, tau * v);
  }
}

// LU without pivoting is safe here: I - i dt/2 Δ has Hermitian part close to I.
const std::vector<cplx> &Propagator::factor(double dt) {
  auto it = cache_.find(dt);
  if (it != cache_.end())
    return it->second;
  if (cache_.size() >= 12)
    cache_.clear();
  const int n = g_->n, h = hw_, w = 2 * h + 1;
  std::vector<cplx> a(static_cast<size_t>(n) * w);
  for (size_t k = 0; k < a.size(); ++k)
    a[k] = -I * (0.5 * dt) * band_[k];
  for (int i = 0; i < n; ++i)
    a[static_cast<size_t>(i) * w + h] += 1.0;
  auto at = [&](int i, int j) -> cplx & { return a[static_cast<size_t>(i) * w + (j - i) + h]; };
  for (int k = 0; k < n; ++k) {
    const cplx piv = at(k, k);
    if (std::abs(piv) < 1e-12)
      throw NumericalError("Propagator: vanishing pivot in the banded factorization");
    const int last = std::min(n - 1, k + h);
    for (int i = k + 1; i <= last; ++i) {
      const cplx l = at(i, k) / piv;
      at(i, k) = l;
      if (l == 0.0)
        continue;
      for (int j = k + 1; j <= last; ++j)
        at(i, j) -= l * at(k, j);
    }
  }
  return cache_.emplace(dt, std::move(a)).first->second;
}

void Propagator::linear(CVec &u, double dt) {
  const auto &a = factor(dt);
  const int n = g_->n, h = hw_, w = 2 * h + 1;
  const cplx c = I * (0.5 * dt);
  CVec y(n);
  for (int i = 0; i < n; ++i) {
    const double *row = &band_[static_cast<size_t>(i) * w];
    cplx acc = 0;
    for (int j = std::max(0, i - h); j <= std::min(n - 1, i + h); ++j)
      acc += row[j - i + h] * u(j);
    y(i) = u(i) + c * acc;
  }
  for (int i = 0; i < n; ++i) {
    const cplx *row = &a[static_cast<size_t>(i) * w];
    cplx acc = y(i);
    for (int j = std::max(0, i - h); j < i; ++j)
      acc -= row[j - i + h] * y(j);
    y(i) = acc;
  }
  for (int i = n - 1; i >= 0; --i) {
    const cplx *row = &a[static_cast<size_t>(i) * w];
    cplx acc = y(i);
    for (int j = i + 1; j <= std::min(n - 1, i + h); ++j)
      acc -= row[j - i + h] * y(j);
    y(i) = acc / row[h];
  }
  u = std::move(y);
}

void Propagator::compose(CVec &u, double dt, int n, const std::vector<double> &w) {
  const size_t m = w.size();
  nonlinear(u, 0.5 * w.front() * dt);
  for (int k = 0; k < n; ++k)
    for (size_t j = 0; j < m; ++j) {
      linear(u, w[j] * dt);
      const double next = j + 1 < m ? w[j + 1] : (k + 1 < n ? w.front() : 0.0);
      nonlinear(u, 0.5 * (w[j] + next) * dt);
    }
}

void Propagator::advance(CVec &u, double dt, int n, Scheme s) {
  if (n <= 0)
    return;
  switch (s) {
  case Scheme::strang:
    compose(u, dt, n, {1.0});
    break;
  case Scheme::yoshida4: {
    const double c = std::cbrt(2.0), w1 = 1 / (2 - c);
    compose(u, dt, n, {w1, -c * w1, w1});
    break;
  }
  case Scheme::suzuki4: {
    const double w1 = 1 / (4 - std::cbrt(4.0));
    compose(u, dt, n, {w1, w1, 1 - 4 * w1, w1, w1});
    break;
  }
  case Scheme::yoshida6: {
    const double w1 = -1.17767998417887, w2 = 0.235573213359357, w3 = 0.784513610477560;
    const double w0 = 1 - 2 * (w1 + w2 + w3);
    compose(u, dt, n, {w3, w2, w1, w0, w1, w2, w3});
    break;
  }
  }
}

EvolutionState step(EvolutionState st, Propagator &prop, Scheme s) {
  require(st.grid == prop.grid(), "step: state and propagator grids differ");
  require(st.dt != 0, "step: dt must be nonzero");
  prop.advance(st.field, st.dt, 1, s);
  st.t += st.dt;
  return st;
}

void validate(const RunConfig &cfg) {
  require(cfg.dim >= 1 && cfg.dim <= 4, "run: dim must lie in 1..4");
  require(cfg.p > 1 && cfg.p < 1 + 4.0 / cfg.dim, "run: need 1 < p < 1 + 4/N");
  require(cfg.s1 >= 50 || cfg.t1 < 0, "run: s1 must be at least 50");
  require(cfg.t1 <= 0, "run: t1 must be negative");
  require(cfg.direction == 1 || cfg.direction == -1, "run: direction must be +1 or -1");
  if (cfg.t_end && cfg.t1 < 0)
    require((*cfg.t_end - cfg.t1) * cfg.direction > 0, "run: t_end lies on the wrong side of t1");
  require(cfg.nodes >= 256, "run: nodes must be at least 256");
  require(cfg.core_lo > 4 && cfg.core_hi >= 2 * cfg.core_lo,
          "run: need core_lo > 4 and core_hi >= 2 core_lo");
  require(cfg.nodes >= 30 * cfg.core_hi, "run: nodes must cover 30 core widths");
  require(cfg.ds > 0 && cfg.snap_frac > 0 && cfg.snap_min > 0, "run: step sizes must be positive");
  require(cfg.sign == 1 || cfg.sign == -1, "run: sign must be +1 or -1");
  require(cfg.b_max > 0 && cfg.b_max <= 0.5, "run: b_max must lie in (0, 1/2]");
  require(cfg.lambda_max > 0 && cfg.lambda_max <= 0.5, "run: lambda_max must lie in (0, 1/2]");
  require(cfg.mass_tol > 0 && cfg.energy_tol > 0, "run: drift tolerances must be positive");
  require(cfg.K >= 1 && cfg.K <= 4, "run: K must lie in 1..4");
  require(cfg.field_every >= 0, "run: field_every must be nonnegative");
  require(cfg.profile_rmax >= 20 && cfg.profile_nodes >= 8 * cfg.profile_rmax,
          "run: profile grid too small");
}

std::shared_ptr<const GroundStateData> profile_ground_state(const RunConfig &cfg) {
  auto g = make_grid(cfg.dim, cfg.profile_rmax, cfg.profile_nodes);
  return std::make_shared<const GroundStateData>(build_ground_state(g));
}

namespace {

LedgerRow ledger_row(const RadialGrid &g, const CVec &u, double p, int sign, double t,
                     double s, double dt) {
  const EnergyParts ep = energy_parts(g, u, p, sign);
  LedgerRow row;
  row.t = t;
  row.s = s;
  row.mass = norm2sq(g, u);
  row.energy = ep.total;
  row.grad_norm = std::sqrt(2 * ep.kinetic);
  row.dt = dt;
  return row;
}

CVec ground_state_data(const ProfileExpansion &e, double lambda, double b,
                       const RadialGrid &target) {
  const auto &g = e.grid();
  CVec v = interpolate(g, CVec(e.gs->Q.values.cast<cplx>()), target.r / lambda);
  const double amp = std::pow(lambda, -0.5 * e.dim);
  for (int i = 0; i < target.n; ++i) {
    const double x = target.r(i);
    v(i) *= amp * std::polar(1.0, -b * x * x / (4 * lambda * lambda));
  }
  return v;
}

} // namespace

EvolutionState make_initial(const ProfileExpansion &e, const LawConstants &law,
                            const InitialParams &ip, const RunConfig &cfg) {
  (void)law;
  // Start at the end of the core window the run moves away from.
  const double core = cfg.direction < 0 ? cfg.core_lo : cfg.core_hi;
  const double h = ip.lambda1 / core;
  auto grid = make_grid(cfg.dim, h * cfg.nodes, cfg.nodes);
  const double b = cfg.flip_b ? -ip.b1 : ip.b1;
  EvolutionState st;
  st.grid = grid;
  st.field = cfg.ground_state_data ? ground_state_data(e, ip.lambda1, b, *grid)
                                   : rescale_profile(e, ip.lambda1, b, 0.0, *grid);
  st.t = cfg.t1 < 0 ? cfg.t1 : t1_of_s1(ip.s1, law);
  const LedgerRow r0 = ledger_row(*grid, st.field, cfg.p, cfg.sign, st.t, ip.s1, 0);
  st.mass0 = r0.mass;
  st.energy0 = r0.energy;
  st.ledger.push_back(r0);
  return st;
}

Trajectory run(const RunConfig &cfg, const ProfileExpansion &e) {
  validate(cfg);
  require(e.dim == cfg.dim && e.p == cfg.p, "run: profile does not match the configuration");
  Trajectory tr;
  tr.config = cfg;
  tr.law = make_law_constants(e, cfg.E0);
  const double s1 = cfg.t1 < 0 ? s1_of_t1(cfg.t1, tr.law) : cfg.s1;
  tr.init = initial_params(s1, tr.law, e);
  tr.diag = default_diagnostics(e);

  EvolutionState st = make_initial(e, tr.law, tr.init, cfg);
  if (cfg.t_end)
    require((*cfg.t_end - st.t) * cfg.direction > 0, "run: t_end lies on the wrong side of t1");
  auto prop = std::make_unique<Propagator>(st.grid, cfg.p, cfg.sign);
  const int dir = cfg.direction;

  ParamState guess{tr.init.lambda1, cfg.flip_b ? -tr.init.b1 : tr.init.b1, 0, s1, st.t};
  Decomposition d0 = decompose(*st.grid, st.field, e, guess);
  d0.params.s = s1;
  d0.params.t = st.t;
  TrackPoint tp0 = make_track_point(d0, e, tr.diag);
  tp0.h_phys = st.grid->h;
  tr.track.points.push_back(tp0);
  if (cfg.field_every > 0)
    tr.fields.push_back({st.t, st.grid, st.field});
  long accepted = 0;

  double ds = cfg.ds;
  double s = s1;
  double lam_cur = tr.init.lambda1;
  const double grad_q = std::sqrt(grad2sq(e.grid(), CVec(e.gs->Q.values.cast<cplx>())));
  const double norm_energy0 = std::max(std::abs(st.energy0), st.ledger[0].grad_norm * st.ledger[0].grad_norm / 2);
  tr.status = "running";

  while (tr.status == "running") {
    const ParamState &last = tr.track.points.back().st;
    const double lam = lam_cur;
    const double snap = std::max(cfg.snap_frac * std::abs(s), cfg.snap_min);
    int n = std::max(1, static_cast<int>(std::lround(snap / ds)));
    double dt = dir * ds * lam * lam;
    bool hit_end = false;
    if (cfg.t_end && (st.t + n * dt - *cfg.t_end) * dir >= 0) {
      n = std::max(1, static_cast<int>(std::ceil(std::abs(*cfg.t_end - st.t) / std::abs(dt))));
      dt = (*cfg.t_end - st.t) / n;
      hit_end = true;
    }
    if (tr.steps + n > cfg.max_steps) {
      tr.status = "step-limit";
      break;
    }

    CVec u = st.field;
    prop->advance(u, dt, n, cfg.scheme);
    const double t_new = hit_end ? *cfg.t_end : st.t + n * dt;

    // Guess from linear extrapolation of (ln λ, b, γ) in t.
    ParamState g = last;
    if (tr.track.points.size() >= 2) {
      const ParamState &prev = tr.track.points[tr.track.points.size() - 2].st;
      const double r = (t_new - last.t) / (last.t - prev.t);
      g.lambda = last.lambda * std::pow(last.lambda / prev.lambda, r);
      g.b = last.b + r * (last.b - prev.b);
      g.gamma = last.gamma + r * (last.gamma - prev.gamma);
    } else {
      g.gamma = last.gamma + (t_new - last.t) / (lam * lam);
    }
    Decomposition d;
    bool tracked = true;
    try {
      d = decompose(*st.grid, u, e, g);
    } catch (const NumericalError &) {
      if (cfg.stop_on_tube_exit) {
        tr.status = "tube-exit";
        break;
      }
      tracked = false;
    }
    LedgerRow row = ledger_row(*st.grid, u, cfg.p, cfg.sign, t_new, 0, dt);
    const double lam_new = tracked ? d.params.lambda : grad_q / row.grad_norm;
    const double s_new = s + 0.5 * (t_new - st.t) * (1 / (lam * lam) + 1 / (lam_new * lam_new));
    row.s = s_new;
    const double span = std::max(1.0, std::abs(s_new - s1));
    const double md = std::abs(row.mass - st.mass0) / st.mass0;
    const double ed = std::abs(row.energy - st.energy0) /
                      std::max(norm_energy0, row.grad_norm * row.grad_norm / 2);
    if (md > cfg.mass_tol * span || ed > cfg.energy_tol * span) {
      if (++tr.halvings > cfg.max_halvings) {
        tr.status = "resolution-limit";
        break;
      }
      ds *= 0.5;
      continue;
    }
    tr.max_mass_drift = std::max(tr.max_mass_drift, md / span);
    tr.max_energy_drift = std::max(tr.max_energy_drift, ed / span);

    st.field = std::move(u);
    st.t = t_new;
    st.dt = dt;
    st.mass_drift = md;
    st.energy_drift = ed;
    st.ledger.push_back(row);
    tr.steps += n;
    s = s_new;
    lam_cur = lam_new;
    if (cfg.field_every > 0 && ++accepted % cfg.field_every == 0)
      tr.fields.push_back({st.t, st.grid, st.field});
    if (tracked) {
      d.params.t = t_new;
      d.params.s = s_new;
      TrackPoint tp = make_track_point(d, e, tr.diag);
      tp.h_phys = st.grid->h;
      tr.track.points.push_back(tp);
    } else {
      ++tr.untracked;
    }

    if (lam_new >= cfg.lambda_max)
      tr.status = "lambda-limit";
    else if (cfg.lambda_min > 0 && lam_new <= cfg.lambda_min)
      tr.status = "lambda-limit";
    else if (tracked && std::abs(d.params.b) >= cfg.b_max)
      tr.status = "b-limit";
    else if (hit_end)
      tr.status = "t_end";
    if (tr.status != "running")
      break;

    // Keep the core resolved with a fixed node count.
    const double core = lam_new / st.grid->h;
    double factor = 1;
    if (core < cfg.core_lo)
      factor = 0.5;
    else if (core > cfg.core_hi)
      factor = 2;
    if (factor != 1) {
      auto ng = make_grid(cfg.dim, st.grid->rmax * factor, cfg.nodes);
      st.field = interpolate(*st.grid, st.field, ng->r);
      st.grid = ng;
      prop = std::make_unique<Propagator>(st.grid, cfg.p, cfg.sign);
      ++tr.regrids;
    }
  }

  // Rescaled time from the high-order quadrature of λ^{-2}; untracked runs keep
  // the running trapezoid estimate.
  if (tr.untracked == 0 && tr.track.points.size() >= 2) {
    std::vector<double> tt, ll;
    for (const auto &p : tr.track.points) {
      tt.push_back(p.st.t);
      ll.push_back(p.st.lambda);
    }
    TimeMap tm(tt, ll, s1);
    for (size_t i = 0; i < tr.track.points.size(); ++i) {
      const double si = tm.s_of_t(tt[i]);
      tr.track.points[i].st.s = si;
      st.ledger[i].s = si;
    }
  }
  if (tr.track.points.size() >= 3)
    track_mod(tr.track, e);
  tr.bootstrap = bootstrap_monitor(tr.track, tr.diag, tr.law);
  tr.ledger = st.ledger;
  tr.last = std::move(st);
  return tr;
}

Trajectory run(const RunConfig &cfg) {
  validate(cfg);
  auto gs = profile_ground_state(cfg);
  const ProfileExpansion e = build_expansion(gs, cfg.p, cfg.K);
  return run(cfg, e);
}

} // namespace mmblow
