#include <doctest.h>

#include <cmath>
#include <random>

#include "mmblow/law.hpp"

using namespace mmblow;

namespace {

struct Fixture {
  std::shared_ptr<const GroundStateData> gs =
      std::make_shared<const GroundStateData>(build_ground_state(default_grid(1), {2.0}));
  ProfileExpansion e = build_expansion(gs, 2.0, 2);
};

const Fixture &fx() {
  static const Fixture f;
  return f;
}

} // namespace

TEST_CASE("approximate law solves its ODE system") {
  const LawConstants c = make_law_constants(fx().e, 0.0);
  CHECK(c.alpha == 1.5);
  CHECK(std::abs(lambda_b_app(10, c).b - 2.0 / 15) <= 1e-15);
  const double a = c.alpha, k = 0.5 * a * std::sqrt(c.B);
  for (double s : {10.0, 100.0, 1000.0}) {
    const AppLaw l = lambda_b_app(s, c);
    CHECK(std::abs(std::pow(l.lambda, a / 2) * k * s - 1) <= 1e-13);
    const double bs = -2 / (a * s * s);
    const double lam_s = -2 / a * l.lambda / s;
    CHECK(std::abs(bs + l.b * l.b - c.beta * std::pow(l.lambda, a)) <= 1e-12);
    CHECK(std::abs(l.b + lam_s / l.lambda) <= 1e-15);
  }
  CHECK_THROWS_AS(lambda_b_app(0, c), ConfigError);
}

TEST_CASE("rate exponents") {
  CHECK(std::abs(lambda_exponent(1, 2) - 0.8) <= 1e-15);
  CHECK(std::abs(b_exponent(1, 2) - 0.6) <= 1e-15);
  CHECK(std::abs(lambda_exponent(2, 2) - 2.0 / 3) <= 1e-15);
  CHECK(std::abs(b_exponent(2, 2) - 1.0 / 3) <= 1e-15);
  std::mt19937 rng(7);
  for (int i = 0; i < 20; ++i) {
    const int N = 1 + static_cast<int>(rng() % 4);
    const double p = 1 + 4.0 / N * std::uniform_real_distribution<double>(0.01, 0.99)(rng);
    const double m = N * (p - 1);
    CHECK(std::abs(lambda_exponent(N, p) - 4 / (4 + m)) <= 1e-14);
    CHECK(std::abs(b_exponent(N, p) - (4 - m) / (4 + m)) <= 1e-14);
  }
}

TEST_CASE("F has the closed form when C0 = 0") {
  const LawConstants c = make_law_constants(fx().e, 0.0);
  CHECK(F_of_lambda(c.lambda0, c) == 0);
  double prev = 0;
  for (double l : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-8}) {
    const double exact = 2 / (c.alpha * std::sqrt(c.B)) *
                         (std::pow(l, -c.alpha / 2) - std::pow(c.lambda0, -c.alpha / 2));
    const double F = F_of_lambda(l, c);
    CHECK(std::abs(F / exact - 1) <= 1e-10);
    CHECK(F > prev);
    prev = F;
  }
  CHECK_THROWS_AS(F_of_lambda(0.2, c), ConfigError);
  CHECK_THROWS_AS(F_of_lambda(0, c), ConfigError);
}

TEST_CASE("negative energy shrinks lambda0 and keeps the radicand positive") {
  const LawConstants c = make_law_constants(fx().e, -5.0);
  CHECK(c.C0 < 0);
  CHECK(c.lambda0 < 0.1);
  CHECK(c.B + c.C0 * std::pow(c.lambda0, 2 - c.alpha) >= 0.5 * c.B * (1 - 1e-12));
  double prev = 0;
  for (double l : {1e-3, 1e-4, 1e-5}) {
    const double F = F_of_lambda(l, c);
    CHECK(F > prev);
    prev = F;
  }
}

TEST_CASE("initial parameters at zero energy") {
  const auto &e = fx().e;
  const LawConstants c = make_law_constants(e, 0.0);
  const InitialParams ip = initial_params(200, c, e);
  // Invert the closed form of F.
  const double lam = std::pow(200 * c.alpha * std::sqrt(c.B) / 2 +
                                  std::pow(c.lambda0, -c.alpha / 2),
                              -2 / c.alpha);
  CHECK(std::abs(ip.lambda1 / lam - 1) <= 1e-12);
  // Leading balance of the energy expansion at E = 0.
  const double b_lead = ip.lambda1 * std::sqrt(c.B * std::pow(ip.lambda1, c.alpha - 2));
  CHECK(std::abs(ip.b1 / b_lead - 1) <= 0.05);
  CHECK(std::abs(profile_energy(e, ip.lambda1, ip.b1)) <=
        1e-9 * c.yQ * ip.b1 * ip.b1 / (ip.lambda1 * ip.lambda1));
  CHECK(ip.b1 > 0);
  CHECK(ip.closeness <= 5 * (std::pow(200, -0.5) + std::pow(200, 2 - 4 / c.alpha)));
  CHECK_THROWS_AS(initial_params(10, c, e), ConfigError);
}

TEST_CASE("initial parameters follow the leading scaling in s1") {
  const auto &e = fx().e;
  const LawConstants c = make_law_constants(e, 0.0);
  const InitialParams a = initial_params(400, c, e), b = initial_params(1600, c, e);
  const double r = std::pow(a.lambda1 / b.lambda1, c.alpha / 2);
  CHECK(std::abs(r / 4 - 1) <= 0.02);
  std::vector<double> cl;
  for (double s1 : {100.0, 400.0, 1600.0})
    cl.push_back(initial_params(s1, c, e).closeness);
  CHECK(cl[1] < cl[0]);
  CHECK(cl[2] < cl[1]);
}

TEST_CASE("t1 and s1 maps") {
  const LawConstants c = make_law_constants(fx().e, 0.0);
  const double t1 = -1e-5;
  const double s1 = s1_of_t1(t1, c);
  CHECK(std::abs(s1 - std::pow(std::abs(t1 / c.C), -0.6)) <= 1e-12 * s1);
  CHECK(std::abs(t1_of_s1(s1, c) / t1 - 1) <= 1e-13);
  CHECK_THROWS_AS(s1_of_t1(0.0, c), ConfigError);
}

TEST_CASE("rate constants convert the approximate law") {
  // Along λ_app(s), b_app(s) with dt/ds = λ², t(s) = -𝒞 s^{-(4-α)/α} exactly.
  const LawConstants c = make_law_constants(fx().e, 0.0);
  for (double s : {100.0, 1000.0}) {
    const AppLaw l = lambda_b_app(s, c);
    const double t = t1_of_s1(s, c);
    CHECK(std::abs(l.lambda / (c.C_lambda * std::pow(-t, lambda_exponent(1, 2))) - 1) <= 1e-12);
    CHECK(std::abs(l.b / (c.C_b * std::pow(-t, b_exponent(1, 2))) - 1) <= 1e-12);
    const double h = 1e-4 * s;
    const double dt = (t1_of_s1(s + h, c) - t1_of_s1(s - h, c)) / (2 * h);
    CHECK(std::abs(dt / (l.lambda * l.lambda) - 1) <= 1e-7);
  }
}

TEST_CASE("time map integrates lambda^-2 and inverts") {
  // λ(t) = (1 - t)^{1/2} on t ∈ [0, 1]: s(t) = s1 - log(1 - t).
  std::vector<double> t, lam;
  for (int i = 0; i <= 200; ++i) {
    t.push_back(0.005 * i * 0.9);
    lam.push_back(std::sqrt(1 - t.back()));
  }
  // Accuracy is set by the cubic interpolation of the sampled λ^{-2}.
  const TimeMap m(t, lam, 10.0);
  for (double x : {0.1, 0.33, 0.8}) {
    CHECK(std::abs(m.s_of_t(x) - (10 - std::log(1 - x))) <= 1e-6);
    CHECK(std::abs(m.t_of_s(m.s_of_t(x)) - x) <= 1e-9);
  }
  // Backward samples give the same map.
  std::vector<double> tb(t.rbegin(), t.rend()), lb(lam.rbegin(), lam.rend());
  const TimeMap mb(tb, lb, 10.0 - std::log(1 - tb.front()));
  for (double x : {0.1, 0.33, 0.8})
    CHECK(std::abs(mb.s_of_t(x) - (10 - std::log(1 - x))) <= 1e-6);
}
