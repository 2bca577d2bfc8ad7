#pragma once

// Near-critical experiments at delta = delta_c - tau: threshold bisection,
// tau sweeps of the bound pipelines, and least-squares fits of the results.

#include <treecast/bms.hpp>

#include <optional>
#include <string>
#include <vector>

namespace treecast {

// Whether the chi^2 recursion on the BSC side, started just below 1/2, grows
// the information (true) or lets it decay (false).
bool chi2_expands(const TreeParams<double>& params);

// Bisection of chi2_expands over delta in [0, 1/2].
double find_threshold(int d, double tol);

enum class SweepMethod { scalar, local, two_atom };

struct SweepOptions {
  SweepMethod method = SweepMethod::local;
  Index cells = 1024;
  long depth_cap = 0;  // 0 selects max(1e4, 50 / tau) per point
  int jobs = 0;        // 0 selects the hardware concurrency
  // Extrapolate the upgraded chains and warm start the degraded chi^2 chain from
  // the upgraded fixed point.  Off: every chain iterates plainly from perfect
  // leaves.
  bool accelerate = true;
  double tol = 1e-12;  // per-level change that counts as converged
};

struct SweepResult {
  int d = 2;
  SweepMethod method = SweepMethod::local;
  Index cells = 0;
  std::vector<double> taus;
  std::vector<double> lower_I, upper_I, lower_Pe, upper_Pe;
  std::vector<bool> converged;
  std::vector<long> levels;      // most levels used by any chain of the point
  std::vector<long> depth_caps;
  std::vector<std::string> warnings;
};

long default_depth_cap(double tau);

struct BoundRow {
  long level = 0;
  double lower_Pe = 0, upper_Pe = 0, lower_I = 0, upper_I = 0;
};

// Per-level bounds from perfect leaves.  Every chain is a plain comparison
// chain, so each row brackets the tree at that depth.  With depth unset, each
// chain runs to convergence (at most cap levels) and a finished chain keeps
// reporting its final value.
struct BoundReport {
  int d = 2;
  double delta = 0;
  SweepMethod method = SweepMethod::local;
  Index cells = 0;
  std::vector<BoundRow> rows;
  bool converged = true;
  std::vector<std::string> warnings;
};

BoundReport level_bounds(const TreeParams<double>& params, SweepMethod method, Index cells,
                         std::optional<long> depth, long cap = 100000, double tol = 1e-12);

// Throws invariant_error at the first row whose bounds cross by more than slack.
void check_sandwich(const BoundReport& r, double slack = 1e-12);

SweepResult tau_sweep(int d, const std::vector<double>& taus, const SweepOptions& opt = {});

// Throws invariant_error naming the first point where a lower bound exceeds
// its upper bound by more than slack.
void check_sandwich(const SweepResult& r, double slack = 1e-12);

std::vector<double> log_spaced(double lo, double hi, int n);

enum class FitTransform { linear, log_log };

struct SlopeFit {
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
  FitTransform transform = FitTransform::linear;
};

SlopeFit fit_slope(const std::vector<double>& xs, const std::vector<double>& ys, FitTransform transform);

// The constant c in I = c tau + o(tau): intercept of the straight-line fit of
// I / tau against tau, i.e. the fit of I = c tau + b tau^2.
SlopeFit info_slope_fit(const std::vector<double>& taus, const std::vector<double>& info);

struct ConjectureReport {
  SweepResult sweep;
  SlopeFit info_lower;       // I/tau against tau, lower curve
  SlopeFit info_upper;       // I/tau against tau, upper curve
  SlopeFit pe_exponent;      // log(1 - 2 upper_Pe) against log tau
  SlopeFit pe_exponent_alt;  // log(1 - 2 lower_Pe) against log tau
  double max_relative_gap = 0;  // max over tau of (upper_I - lower_I) / tau
};

ConjectureReport conjecture_report(int d, Index cells, const std::vector<double>& taus,
                                   const SweepOptions& opt = {});

std::string to_string(SweepMethod m);
std::string to_string(FitTransform t);

}  // namespace treecast
