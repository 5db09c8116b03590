#pragma once

#include <array>
#include <optional>
#include <vector>

#include "mmblow/law.hpp"

namespace mmblow {

struct ParamState {
  double lambda = 1, b = 0, gamma = 0, s = 0, t = 0;
};

struct Decomposition {
  ParamState params;
  CVec eps;                     // on the profile grid
  std::array<double, 3> ortho{}; // |(ε, X_k)| / (||X_k|| ||P+ε||)
  int iterations = 0;
};

// Pullback U = λ^{N/2} u(λy) e^{i b|y|²/4 - iγ} sampled on the profile grid.
CVec pullback(const RadialGrid &phys, const CVec &u, const RadialGrid &prof,
              double lambda, double b, double gamma);

// Inverse of pullback: λ^{-N/2} (P+ε)(x/λ) e^{-i b|x|²/(4λ²) + iγ}.
CVec recompose(const ProfileExpansion &e, const ParamState &st, const CVec &eps,
               const RadialGrid &phys);

// Newton solve of (ε, iΛP) = (ε, |y|²P) = (ε, iρ) = 0 with an analytic Jacobian.
Decomposition decompose(const RadialGrid &phys, const CVec &u, const ProfileExpansion &e,
                        const ParamState &guess);

struct DiagnosticsConfig {
  double m = 10;
  double eps_prime = 0.5;
  double M = 0.25;
  int K = 2;
  double s_star = 50;  // bootstrap bounds are monitored for s >= s_star
};
// M defaults to half of min(1/2, 4/α - 2).
DiagnosticsConfig default_diagnostics(const ProfileExpansion &e);
void validate(const DiagnosticsConfig &cfg, double alpha);

double diag_H(const CVec &eps, const ProfileExpansion &e, double b, double lambda);
double diag_S(double H, double lambda, const DiagnosticsConfig &cfg);

struct TrackPoint {
  ParamState st;
  double eps_H1 = 0;        // ||ε||_{H^1}
  double eps_weighted = 0;  // || |y| ε ||_2
  double eps_Q = 0;         // (ε, Q)_2
  std::array<double, 3> ortho{};
  std::array<double, 3> mod{};
  double H = 0, S = 0;
  bool boot1 = true, boot2 = true; // bootstrap inequalities
  bool re1 = true, re2 = true;     // sharpened re-estimation bounds
  bool checked = false;            // false below s_star, outside the bootstrap regime
  double h_phys = 0;               // physical grid spacing at this snapshot
};

struct ModulationTrack {
  std::vector<TrackPoint> points;
};

TrackPoint make_track_point(const Decomposition &d, const ProfileExpansion &e,
                            const DiagnosticsConfig &cfg);

// Mod = (λ_s/λ + b, b_s + b² - θ, 1 - γ_s). Derivatives come from high-order
// finite differences in t over neighbouring snapshots, converted with
// d/ds = λ² d/dt.
void track_mod(ModulationTrack &track, const ProfileExpansion &e, int stencil = 9);

struct BootstrapReport {
  int violations = 0;
  std::optional<size_t> first_index;
  double first_s = 0;
  std::string first_check;
};
BootstrapReport bootstrap_monitor(ModulationTrack &track, const DiagnosticsConfig &cfg,
                                  const LawConstants &law);

} // namespace mmblow
