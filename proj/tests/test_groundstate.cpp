#include <doctest.h>

#include <cmath>

#include "mmblow/groundstate.hpp"

using namespace mmblow;

// Q(0) and ||Q||² from an independent scipy shooting run (rtol 1e-13), and the
// one-dimensional closed form 3^{1/4} sech^{1/2}(2r).
namespace oracle {
constexpr double Q0[] = {1.3160740130518644, 2.2062008656354655, 4.191723340567952,
                         8.671934323918755};
constexpr double mass_dim1 = 2.7206990463513265; // √3 π / 2
constexpr double mass_dim2 = 11.700895901134926; // truncated at r = 9, tail below 1e-6
constexpr double lp1_dim1_p2 = 2.7311691203012356;  // 3^{3/4} B(3/4, 1/2) / 2
constexpr double lp1_dim1_p15 = 2.6823764116881503; // 3^{5/8} B(5/8, 1/2) / 2
constexpr double yQ_dim1 = 1.678263955119292;       // √3 π³ / 32
// μ for dim 1 from the dense constrained eigenproblem on a 400-node grid.
constexpr double mu_dim1 = 0.06046083647;
} // namespace oracle

TEST_CASE("shooting reproduces Q(0) in dimensions 1 to 4") {
  for (int d = 1; d <= 4; ++d)
    CHECK(std::abs(shoot_Q0(d) / oracle::Q0[d - 1] - 1) <= 1e-8);
}

TEST_CASE("dimension one matches the closed form") {
  const GroundStateData gs = build_ground_state(default_grid(1), {2.0, 1.5});
  double err = 0;
  for (int i = 0; i < gs.grid->n; ++i) {
    const double r = gs.grid->r(i);
    err = std::max(err, std::abs(gs.Q.values(i).real() -
                                 std::pow(3.0, 0.25) / std::sqrt(std::cosh(2 * r))));
  }
  CHECK(err <= 1e-8);
  CHECK(std::abs(gs.norms.mass / oracle::mass_dim1 - 1) <= 1e-10);
  CHECK(std::abs(inner(gs.Q, gs.Q) / oracle::mass_dim1 - 1) <= 1e-10);
  CHECK(std::abs(gs.lp1(2.0) / oracle::lp1_dim1_p2 - 1) <= 1e-10);
  CHECK(std::abs(gs.lp1(1.5) / oracle::lp1_dim1_p15 - 1) <= 1e-10);
  CHECK(std::abs(gs.norms.yQ / oracle::yQ_dim1 - 1) <= 1e-10);
}

TEST_CASE("Townes profile in dimension two") {
  const GroundStateData gs = build_ground_state(default_grid(2));
  CHECK(std::abs(gs.norms.mass / oracle::mass_dim2 - 1) <= 1e-6);
  const RVec lq = lambda_apply(*gs.grid, gs.Q.real());
  CHECK(std::abs(inner(*gs.grid, lq, gs.Q.real())) <= 1e-8);
}

TEST_CASE("linearized operator identities and Pohozaev in dimensions 1 to 4") {
  for (int d = 1; d <= 4; ++d) {
    const GroundStateData gs = build_ground_state(default_grid(d));
    const GroundStateResiduals r = ground_state_residuals(gs);
    CAPTURE(d);
    CHECK(r.ode <= 1e-10);
    CHECK(r.lminus_q <= 1e-8);
    CHECK(r.lplus_lq <= 1e-6);
    CHECK(r.lminus_y2q <= 1e-6);
    CHECK(r.lplus_rho <= 1e-6);
    CHECK(r.pohozaev <= 1e-8);
    CHECK(r.pohozaev_mass <= 1e-8);
    CHECK(r.positive);
    CHECK(r.decreasing);
    // (Q, ρ) equals half the weighted mass |||y|Q||².
    CHECK(std::abs(r.q_rho_corrected) <= 1e-8);
    CHECK(gs.Q.decay_ok());
    CHECK(gs.rho.decay_ok(1e-8));
  }
}

TEST_CASE("rho has a tail controlled by a polynomial times Q") {
  for (int d = 1; d <= 2; ++d) {
    const GroundStateData gs = build_ground_state(default_grid(d));
    const auto &g = *gs.grid;
    // log|ρ/Q| ≈ log C + κ log(1+r) over the tail where both are resolved.
    std::vector<double> x, y;
    for (int i = 0; i < g.n; ++i)
      if (g.r(i) >= 3 && g.r(i) <= 15) {
        x.push_back(std::log1p(g.r(i)));
        y.push_back(std::log(std::abs(gs.rho.values(i).real() / gs.Q.values(i).real())));
      }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i];
    }
    const double kappa = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double logC = (sy - kappa * sx) / n;
    CHECK(std::isfinite(kappa));
    CHECK(kappa < 4);
    double worst = 0;
    for (size_t i = 0; i < x.size(); ++i)
      worst = std::max(worst, y[i] - logC - kappa * x[i]);
    CHECK(worst < 1.0); // ρ ≤ e C (1+r)^κ Q on the tail
  }
}

TEST_CASE("coercivity constant is positive and grid stable") {
  const GroundStateData a = build_ground_state(make_grid(1, 20, 400), {}, true);
  const GroundStateData b = build_ground_state(make_grid(1, 20, 800), {}, true);
  CHECK(a.mu > 0);
  CHECK(std::abs(a.mu / oracle::mu_dim1 - 1) <= 1e-8);
  CHECK(std::abs(b.mu / a.mu - 1) <= 0.02);
  const GroundStateData c = build_ground_state(make_grid(2, 20, 400), {}, true);
  const GroundStateData e = build_ground_state(make_grid(2, 20, 800), {}, true);
  CHECK(c.mu > 0);
  CHECK(std::abs(e.mu / c.mu - 1) <= 0.02);
}

TEST_CASE("linearized solver inverts L+") {
  const GroundStateData gs = build_ground_state(default_grid(1));
  const LinearizedSolver solver(gs);
  const auto &g = *gs.grid;
  const RVec Q = gs.Q.real();
  const RVec rhs = (g.r.array().square() * Q.array()).matrix();
  const RVec x = solver.solve_plus(rhs);
  const RVec back = apply_Lplus(g, Q, x);
  CHECK((back - rhs).norm() / rhs.norm() <= 1e-10);
  double defect = 1;
  const RVec y = solver.solve_minus(Q.cwiseProduct(g.r), &defect);
  CHECK(std::abs(inner(g, y, Q)) <= 1e-10);
}
