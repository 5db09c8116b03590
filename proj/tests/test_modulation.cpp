#include <doctest.h>

#include <cmath>

#include "mmblow/modulation.hpp"

using namespace mmblow;

namespace {

struct Fixture {
  std::shared_ptr<const GroundStateData> gs =
      std::make_shared<const GroundStateData>(build_ground_state(default_grid(1), {2.0}));
  ProfileExpansion e = build_expansion(gs, 2.0, 2);
  LawConstants law = make_law_constants(e, 0.0);
};

const Fixture &fx() {
  static const Fixture f;
  return f;
}

Grid phys_grid(double lambda) { return make_grid(1, 30 * lambda, 2048); }

CVec rho_field(const ProfileExpansion &e) { return I * e.gs->rho.values; }

double rel(double a, double b) { return std::abs(a / b - 1); }

} // namespace

TEST_CASE("exact profile is a fixed point of the decomposition") {
  const auto &e = fx().e;
  const ParamState truth{0.05, 0.1, 0.7, 0, 0};
  auto g = phys_grid(truth.lambda);
  const CVec u = rescale_profile(e, truth.lambda, truth.b, truth.gamma, *g);
  const ParamState guess{0.051, 0.098, 0.69, 0, 0};
  const Decomposition d = decompose(*g, u, e, guess);
  CHECK(rel(d.params.lambda, truth.lambda) <= 1e-10);
  CHECK(std::abs(d.params.b - truth.b) <= 1e-10);
  CHECK(std::abs(d.params.gamma - truth.gamma) <= 1e-10);
  CHECK(std::sqrt(h1sq(e.grid(), d.eps)) <= 1e-8);
}

TEST_CASE("injected iρ is reallocated consistently") {
  const auto &e = fx().e;
  const ParamState truth{0.05, 0.1, 0.7, 0, 0};
  auto g = phys_grid(truth.lambda);
  const CVec u = recompose(e, truth, 1e-4 * rho_field(e), *g);
  const Decomposition d = decompose(*g, u, e, truth);
  const auto &pg = e.grid();
  const CVec P = e.eval_P(d.params.b, d.params.lambda);
  const double scale = std::sqrt(norm2sq(pg, P + d.eps));
  CHECK(std::abs(inner(pg, d.eps, rho_field(e))) <= 1e-9 * scale * std::sqrt(norm2sq(pg, rho_field(e))));
  for (double o : d.ortho)
    CHECK(o <= 1e-9);
  // The perturbation moves the parameters, and recomposition is exact.
  CHECK(std::abs(d.params.gamma - truth.gamma) > 1e-7);
  const CVec back = recompose(e, d.params, d.eps, *g);
  CHECK((back - u).cwiseAbs().maxCoeff() <= 1e-9 * u.cwiseAbs().maxCoeff());

  SUBCASE("idempotence on orthogonal ε") {
    const CVec v = recompose(e, d.params, d.eps, *g);
    ParamState guess = d.params;
    guess.lambda *= 1.01;
    guess.b += 1e-3;
    const Decomposition d2 = decompose(*g, v, e, guess);
    CHECK(rel(d2.params.lambda, d.params.lambda) <= 1e-10);
    CHECK(std::abs(d2.params.b - d.params.b) <= 1e-10);
    CHECK(std::abs(d2.params.gamma - d.params.gamma) <= 1e-10);
  }
  SUBCASE("gauge covariance") {
    const double phi = 0.4;
    const CVec v = u * std::polar(1.0, phi);
    const Decomposition d2 = decompose(*g, v, e, d.params);
    CHECK(std::abs(d2.params.gamma - d.params.gamma - phi) <= 1e-10);
    CHECK(rel(d2.params.lambda, d.params.lambda) <= 1e-10);
    CHECK(std::abs(d2.params.b - d.params.b) <= 1e-10);
    CHECK(std::abs(std::sqrt(h1sq(pg, d2.eps)) - std::sqrt(h1sq(pg, d.eps))) <= 1e-10);
  }
  SUBCASE("scaling covariance at fixed profile") {
    // Freeze the profile at Q so that it carries no explicit λ dependence;
    // a^{N/2} u(a x) sampled at x_i = r_i / a then equals a^{N/2} u(r_i).
    ProfileExpansion fixed = e;
    fixed.terms.clear();
    const Decomposition d0 = decompose(*g, u, fixed, truth);
    const double a = 2.0;
    auto ga = make_grid(1, g->rmax / a, g->n);
    const CVec v = std::sqrt(a) * u;
    const Decomposition d2 = decompose(*ga, v, fixed, truth);
    CHECK(rel(d2.params.lambda, d0.params.lambda / a) <= 1e-8);
    CHECK(std::abs(d2.params.b - d0.params.b) <= 1e-8);
    CHECK(std::abs(d2.params.gamma - d0.params.gamma) <= 1e-8);
  }
}

TEST_CASE("decomposition far outside the tube is reported") {
  const auto &e = fx().e;
  auto g = phys_grid(0.05);
  CVec u = CVec::Zero(g->n);
  for (int i = 0; i < g->n; ++i)
    u(i) = 0.05 * std::exp(-g->r(i));
  CHECK_THROWS_AS(decompose(*g, u, e, ParamState{0.05, 0.1, 0, 0, 0}), NumericalError);
}

TEST_CASE("H vanishes at ε = 0 and S rescales it") {
  const auto &e = fx().e;
  const CVec z = CVec::Zero(e.grid().n);
  CHECK(diag_H(z, e, 0.1, 0.01) == 0);
  DiagnosticsConfig cfg = default_diagnostics(e);
  CHECK(diag_S(2.0, 0.5, cfg) == doctest::Approx(2.0 * std::pow(0.5, -cfg.m)));
  // Small ε: H is dominated by its positive quadratic part.
  const CVec eps = 1e-3 * CVec(e.gs->Q.values.cwiseProduct(e.grid().r.cast<cplx>()));
  CHECK(diag_H(eps, e, 0.1, 0.01) > 0);
}

TEST_CASE("diagnostics configuration") {
  const auto &e = fx().e;
  DiagnosticsConfig cfg = default_diagnostics(e);
  CHECK(cfg.m == 10);
  CHECK(cfg.K == 2);
  CHECK(cfg.M == doctest::Approx(0.25));
  CHECK_NOTHROW(validate(cfg, e.alpha));
  cfg.M = 0.6;
  CHECK_THROWS_AS(validate(cfg, e.alpha), ConfigError);
}

namespace {

// Track on the approximate law with t(s) from the rescaled-time constant.
ModulationTrack law_track(const std::vector<double> &s_values) {
  const auto &f = fx();
  ModulationTrack tr;
  for (double s : s_values) {
    const AppLaw l = lambda_b_app(s, f.law);
    Decomposition d;
    d.params = {l.lambda, l.b, s, s, t1_of_s1(s, f.law)};
    d.eps = CVec::Zero(f.e.grid().n);
    tr.points.push_back(make_track_point(d, f.e, default_diagnostics(f.e)));
  }
  return tr;
}

} // namespace

TEST_CASE("Mod along the approximate law") {
  // Geometric sampling matches the run's rescaled-time spacing.
  std::vector<double> s;
  for (double v = 200; v >= 50; v *= 0.99)
    s.push_back(v);
  ModulationTrack tr = law_track(s);
  track_mod(tr, fx().e);
  for (size_t i = 0; i < tr.points.size(); ++i) {
    const auto &p = tr.points[i];
    CAPTURE(p.st.s);
    CHECK(std::abs(p.mod[0]) <= 1e-10);
    // γ(t) = s(t) is steep in t; the nine-point stencil error dominates.
    CHECK(std::abs(p.mod[2]) <= 1e-6);
    // b_s + b² - θ reduces to the higher-order part of θ beyond β λ^α.
    const double theta = fx().e.theta(p.st.b, p.st.lambda);
    const double expect = fx().law.beta * std::pow(p.st.lambda, fx().law.alpha) - theta;
    CHECK(std::abs(p.mod[1] - expect) <= 1e-10);
  }
  ModulationTrack two;
  two.points.resize(2);
  CHECK_THROWS_AS(track_mod(two, fx().e), ConfigError);
}

TEST_CASE("bootstrap monitor on exact and corrupted tracks") {
  std::vector<double> s;
  for (int i = 0; i <= 40; ++i)
    s.push_back(400 - 8.0 * i);
  const int K = 2;
  SUBCASE("exact profile passes") {
    ModulationTrack tr = law_track(s);
    const BootstrapReport r = bootstrap_monitor(tr, default_diagnostics(fx().e), fx().law);
    CHECK(r.violations == 0);
    CHECK_FALSE(r.first_index.has_value());
    for (const auto &p : tr.points)
      CHECK(p.checked);
  }
  SUBCASE("inflation by s^K triggers at the injected index") {
    ModulationTrack tr = law_track(s);
    for (auto &p : tr.points)
      p.eps_H1 = 0.5 * std::pow(p.st.s, -(K + 1.0));
    const size_t k = 17;
    for (size_t i = k; i < tr.points.size(); ++i)
      tr.points[i].eps_H1 *= std::pow(tr.points[i].st.s, K);
    const BootstrapReport r = bootstrap_monitor(tr, default_diagnostics(fx().e), fx().law);
    REQUIRE(r.first_index.has_value());
    CHECK(*r.first_index == k);
    CHECK(r.first_s == doctest::Approx(s[k]));
    CHECK(r.first_check == "bootstrap-eps");
  }
  SUBCASE("points below s_star are not checked") {
    ModulationTrack tr = law_track({60, 50, 40, 30});
    for (auto &p : tr.points)
      p.eps_H1 = 1;
    const BootstrapReport r = bootstrap_monitor(tr, default_diagnostics(fx().e), fx().law);
    CHECK(*r.first_index == 0);
    CHECK_FALSE(tr.points[2].checked);
    // Two checked points, each failing only the two ε checks.
    CHECK(r.violations == 2 * 2);
  }
}
