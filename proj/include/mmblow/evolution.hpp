#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmblow/modulation.hpp"

namespace mmblow {

struct LedgerRow {
  double t = 0, s = 0, mass = 0, energy = 0, grad_norm = 0, dt = 0;
};

struct EvolutionState {
  Grid grid;
  CVec field;
  double t = 0, dt = 0;
  double mass0 = 0, energy0 = 0;
  double mass_drift = 0, energy_drift = 0; // latest relative drifts
  std::vector<LedgerRow> ledger;
};

// strang: second order. yoshida4: triple-jump composition of strang.
// suzuki4: five-stage composition of strang with a smaller error constant.
// yoshida6: seven-stage sixth-order composition of strang.
enum class Scheme { strang, yoshida4, suzuki4, yoshida6 };

// Split-step propagator for i u_t + Δu + |u|^{4/N}u + sign |u|^{p-1}u = 0.
// The nonlinear substep is the exact phase rotation; the linear substep is
// Crank-Nicolson on the radial Laplacian, factorized once per step size.
class Propagator {
public:
  Propagator(Grid g, double p, int sign);
  const Grid &grid() const { return g_; }
  void nonlinear(CVec &u, double tau) const;
  void linear(CVec &u, double dt);
  // n consecutive steps of size dt with adjacent nonlinear substeps merged.
  void advance(CVec &u, double dt, int n, Scheme s);

private:
  const std::vector<cplx> &factor(double dt);
  void compose(CVec &u, double dt, int n, const std::vector<double> &w);
  Grid g_;
  double p_, q_;
  int sign_;
  int hw_;
  std::vector<double> band_; // Laplacian rows, 2hw+1 entries centred on the diagonal
  std::map<double, std::vector<cplx>> cache_; // banded LU of I - i dt/2 Δ
};

EvolutionState step(EvolutionState st, Propagator &prop, Scheme s = Scheme::strang);

struct RunConfig {
  int dim = 1;
  double p = 2;
  double E0 = 0;
  int K = 2;
  double t1 = 0;            // 0 means: derive from s1
  double s1 = 400;
  int direction = -1;       // -1 integrates backward from t1 (the construction)
  std::optional<double> t_end;
  int nodes = 2560;         // physical grid nodes, fixed across regrids
  double core_lo = 32;      // regrid when λ/h leaves [core_lo, core_hi]
  double core_hi = 64;
  double ds = 0.005;        // nominal step in rescaled time
  double snap_frac = 0.01;  // snapshot spacing Δs = max(snap_frac·|s|, snap_min)
  double snap_min = 0.02;
  Scheme scheme = Scheme::suzuki4;
  double lambda_max = 0.1;  // stop once λ grows past this
  double lambda_min = 0;    // stop once λ falls below this
  double b_max = 0.45;      // stop once |b| exceeds this (profile validity)
  int sign = +1;            // -1 selects the defocusing lower-order term
  bool flip_b = false;      // start on the expanding branch
  bool ground_state_data = false; // start from the rescaled Q (exact critical mass)
  int profile_nodes = 1500; // profile grid: profile_rmax·50 nodes by default
  double profile_rmax = 30;
  double mass_tol = 1e-8;   // relative drift per unit rescaled time
  double energy_tol = 1e-6;
  int max_halvings = 20;
  long max_steps = 5'000'000;
  bool stop_on_tube_exit = true; // otherwise continue untracked, λ from ||∇Q||/||∇u||
  int field_every = 0;      // keep every k-th accepted snapshot field (0: none)
};

struct FieldSnapshot {
  double t = 0;
  Grid grid;
  CVec u;
};

void validate(const RunConfig &cfg);

struct Trajectory {
  RunConfig config;
  LawConstants law;
  InitialParams init;
  DiagnosticsConfig diag;
  ModulationTrack track;
  BootstrapReport bootstrap;
  std::vector<LedgerRow> ledger;
  std::string status;       // lambda-limit | b-limit | t_end | tube-exit | resolution-limit | step-limit
  int regrids = 0;
  int halvings = 0;
  int untracked = 0;        // snapshots where the decomposition failed
  long steps = 0;
  double max_mass_drift = 0;   // max relative mass drift per unit |Δs| (floored at 1)
  double max_energy_drift = 0; // same for energy relative to max(|E0|, ½||∇u||²)
  std::vector<FieldSnapshot> fields;
  EvolutionState last;
};

// u(t1) = P_{λ1, b1, 0} on a physical grid sized for the run.
EvolutionState make_initial(const ProfileExpansion &e, const LawConstants &law,
                            const InitialParams &ip, const RunConfig &cfg);

Trajectory run(const RunConfig &cfg, const ProfileExpansion &e);
Trajectory run(const RunConfig &cfg);

std::shared_ptr<const GroundStateData> profile_ground_state(const RunConfig &cfg);

} // namespace mmblow
