#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmblow/evolution.hpp"

namespace mmblow {

using json = nlohmann::json;

// value ≈ constant · (t_star - t)^exponent by least squares in log-log.
struct RateFitResult {
  double exponent = 0, constant = 0, r2 = 0;
  double window_max = 0, window_min = 0; // value range actually used
  size_t points = 0;
  double t_star = 0;
};

// Needs >= 20 points spanning >= 1 decade in |t_star - t|.
RateFitResult rate_fit(const std::vector<double> &t, const std::vector<double> &value,
                       double t_star = 0);
// Same fit with t_star chosen to minimize the log-log residual.
RateFitResult rate_fit_free(const std::vector<double> &t, const std::vector<double> &value);

struct RateReport {
  RateFitResult lambda, b;            // against |t|, the blow-up time fixed at 0
  RateFitResult lambda_free, b_free;  // blow-up time fitted
  double target_lambda = 0, target_b = 0;
  double C_lambda = 0, C_b = 0;
  double lambda_lo = 0, lambda_hi = 0;
  bool pass = false;                  // exponents 5% / 10%, prefactors 10%, r² ≥ 0.99
};
RateReport rate_report(const Trajectory &tr, double lambda_lo = 1e-3, double lambda_hi = 1e-1);

// Slope of log|f| against log s over snapshots with s >= 1 that sit at least
// a factor `margin` above the noise floor, the floor being the median of |f|
// over the initial segment s >= s1/2 where the true decay is far below it.
struct DecaySlope {
  double slope = 0;
  double floor = 0;
  size_t points = 0;
  double s_lo = 0, s_hi = 0;
};
DecaySlope decay_slope(const ModulationTrack &track,
                       const std::function<double(const TrackPoint &)> &f, double s1,
                       double margin = 10);
double mod_norm(const TrackPoint &p);

// Least squares fit of H ≈ c (||ε||²_{H¹} + b²|||y|ε||²) - C s^{-2(K+2)}.
struct CoercivityFit {
  double c = 0, C = 0;
  size_t points = 0;
  double min_ratio = 0; // min over points of H / (||ε||²_{H¹} + b²|||y|ε||²)
};
CoercivityFit coercivity_fit(const ModulationTrack &track, int K);

// Ψ slope: log-log slope of the weighted Ψ norm against b² + λ^α along b² = λ^α.
struct SlopeSamples {
  std::vector<double> x, y;
  double slope = 0;
};
SlopeSamples psi_slope(const ProfileExpansion &e, double eps_prime, double x_lo = 1e-2,
                       double x_hi = 1e-1, int samples = 9);

// Energy expansion: |8E(P) - |||y|Q||²(b²/λ² - Bλ^{α-2})| / (λ^α(b²+λ^α)/λ²)
// along b = λ^{α/2}.
SlopeSamples energy_band(const ProfileExpansion &e, double lambda_lo = 1e-3,
                         double lambda_hi = 1e-1, int samples = 9);

// |ℱ(λ) - 2/(αλ^{α/2}√B)| / (λ^{-α/4} + λ^{2-3α/2}) over λ ∈ [lo, hi].
SlopeSamples F_band(const LawConstants &c, double lambda_lo = 1e-6, double lambda_hi = 1e-2,
                    int samples = 9);

// Closeness of (λ1, b1) to the approximate law for several s1 with its fitted decay.
SlopeSamples closeness_sweep(const LawConstants &c, const ProfileExpansion &e,
                             const std::vector<double> &s1s);

double band_ratio(const std::vector<double> &v); // max/min of positive values

// Reports and output.
json constants_json(const ProfileExpansion &e, const LawConstants &law,
                    const DiagnosticsConfig &diag, double mu);
json to_json(const RunConfig &cfg);
RunConfig run_config_from_json(const json &j);
json to_json(const RateFitResult &r);
json trajectory_report(const Trajectory &tr);
void write_trajectory(const std::filesystem::path &dir, const Trajectory &tr);
void write_text(const std::filesystem::path &file, const std::string &text);

// MMBLOW_OUT if set, else the given default.
std::filesystem::path output_root(const std::filesystem::path &fallback = "mmblow_out");

struct ExperimentSpec {
  std::string kind; // verify-statics | verify-profile | verify-law | rate-fit | sweep
  std::vector<int> dims{1};
  std::vector<double> ps{2};
  double E0 = 0;
  std::optional<double> t1;
  double s1 = 0;    // 0 picks the smallest s1 >= 50 with λ1 below lambda_start
  double lambda_start = 5e-4;
  int K = 2;
  RunConfig run;    // template for rate-fit and sweep runs
  std::filesystem::path out_dir;
  int workers = 0;  // 0: hardware concurrency
};

ExperimentSpec experiment_from_json(const json &j);

struct ExperimentResult {
  bool pass = false;
  json report;
};

// Writes report.json plus CSV and plot-data files under spec.out_dir.
ExperimentResult run_experiment(const ExperimentSpec &spec);

} // namespace mmblow
