// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Criteria 4 and 5 run a 1024-cell sweep and take several minutes.

#include <treecast/treecast.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace treecast;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double x, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

bool within(double value, double target, double rel) { return std::abs(value - target) <= rel * std::abs(target); }

int failures = 0;

void run(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("criterion %d %s: %s (%s; %.1f s)\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
  std::fflush(stdout);
}

Outcome threshold() {
  Outcome o;
  double worst = 0;
  for (int d : {2, 3, 4, 5, 9}) worst = std::max(worst, std::abs(find_threshold(d, 1e-9) - delta_c(d)));
  o.pass = worst <= 1e-4;
  o.detail = "max |threshold - delta_c| = " + num(worst, 3) + " over d in {2,3,4,5,9}";
  return o;
}

Outcome scalar_constants() {
  const double tau = 1e-4;
  const TreeParams<double> p(2, delta_c(2) - tau);
  FixedPointConfig<double> cfg;
  cfg.max_iters = 5000000;
  const auto lo = scalar_info_dynamics(p, Side::bsc, std::nullopt, cfg);
  const auto up = scalar_info_dynamics(p, Side::bec, std::nullopt, cfg);
  const double a = lo.last().capacity / tau, b = up.last().capacity / tau;
  Outcome o;
  o.pass = lo.converged && up.converged && within(a, 8.161, 0.02) && within(b, 16.971, 0.02);
  o.detail = "lower I/tau = " + num(a) + " (target 8.161), upper I/tau = " + num(b) + " (target 16.971)";
  return o;
}

Outcome two_atom_constant() {
  const double tau = 1e-4;
  FixedPointConfig<double> cfg;
  cfg.max_iters = 5000000;
  const auto r = two_atom_upper(TreeParams<double>(2, delta_c(2) - tau), std::nullopt, cfg);
  const double c = r.info_bound / tau;
  Outcome o;
  o.pass = r.converged && within(c, 14.208, 0.02);
  o.detail = "info_bound/tau = " + num(c) + " (target 14.208)";
  return o;
}

struct SweepData {
  ConjectureReport fine;
  SweepResult coarse;
};

SweepData& sweeps() {
  static SweepData data = [] {
    const auto taus = log_spaced(1e-4, 1e-2, 15);
    SweepData s;
    s.fine = conjecture_report(2, 1024, taus);
    SweepOptions o;
    o.cells = 64;
    s.coarse = tau_sweep(2, taus, o);
    return s;
  }();
  return data;
}

Outcome info_slopes() {
  auto& s = sweeps();
  check_sandwich(s.fine.sweep);
  check_sandwich(s.coarse);
  const double lo = s.fine.info_lower.intercept, up = s.fine.info_upper.intercept;
  bool shrinks = true;
  double worst_ratio = 0;
  for (std::size_t i = 0; i < s.coarse.taus.size(); ++i) {
    const double g_fine = s.fine.sweep.upper_I[i] - s.fine.sweep.lower_I[i];
    const double g_coarse = s.coarse.upper_I[i] - s.coarse.lower_I[i];
    shrinks = shrinks && g_fine < g_coarse;
    worst_ratio = std::max(worst_ratio, g_fine / g_coarse);
  }
  bool converged = true;
  for (bool c : s.fine.sweep.converged) converged = converged && c;
  Outcome o;
  o.pass = within(lo, 8.16, 0.05) && within(up, 8.16, 0.05) && shrinks;
  o.detail = "slope lower = " + num(lo) + ", upper = " + num(up) + " (target 8.16); gap(1024)/gap(64) <= " +
             num(worst_ratio, 3) + (converged ? "" : "; some points hit the depth cap");
  return o;
}

Outcome pe_exponent() {
  auto& s = sweeps();
  const double k = s.fine.pe_exponent.slope, alt = s.fine.pe_exponent_alt.slope;
  Outcome o;
  o.pass = k >= 0.49 && k <= 0.53;  // inside [0.48, 0.53] and at least 0.49
  o.detail = "slope of log(1 - 2 upper_Pe) = " + num(k) + " (r^2 " + num(s.fine.pe_exponent.r_squared, 8) +
             "); slope of log(1 - 2 lower_Pe) = " + num(alt) + "; target 0.504";
  return o;
}

Outcome oracle_equivalence() {
  double worst = 0;
  int configs = 0;
  for (auto [d, hmax] : {std::pair{2, 4}, std::pair{3, 2}}) {
    for (int h = 0; h <= hmax; ++h) {
      for (double delta : {0.0, 0.05, 0.1, 0.25, 0.4, 0.5}) {
        const TreeParams<double> p(d, delta);
        const auto a = exact_tree(p, h);
        const auto b = summarize(exact_de(p, h), a.leaf_count);
        worst = std::max({worst, std::abs(a.p_e - b.p_e), std::abs(a.mutual_info - b.mutual_info),
                          std::abs(a.chi2_info - b.chi2_info)});
        ++configs;
      }
    }
  }
  Outcome o;
  o.pass = worst <= 1e-12;
  o.detail = "max discrepancy " + num(worst, 3) + " over " + std::to_string(configs) + " configurations";
  return o;
}

Outcome properties() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_measure = [&](int n) {
    std::vector<std::pair<double, double>> atoms;
    for (int i = 0; i < n; ++i) atoms.emplace_back(0.5 * unit(rng), 0.01 + unit(rng));
    return DeltaMeasure<double>(std::move(atoms));
  };
  std::vector<std::string> broken;

  // Q-operators preserve their matched functional.
  double q_err = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto w = random_measure(1 + rep * 10);
    const auto grid = uniform_grid(1 + rep % 100);
    q_err = std::max({q_err, std::abs(p_e(q_bsc(w, grid)) - p_e(w)), std::abs(p_e(q_bec(w, grid)) - p_e(w)),
                      std::abs(chi2_capacity(q_bsc_chi2(w, grid)) - chi2_capacity(w)),
                      std::abs(chi2_capacity(q_bec_chi2(w, grid)) - chi2_capacity(w))});
  }
  if (q_err > 1e-12) broken.push_back("Q preservation " + num(q_err, 3));

  // Sandwich at every level against exact BP on random configurations.
  int sandwich_cases = 0, sandwich_bad = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int d = 2 + rep % 3;
    const TreeParams<double> p(d, 0.5 * unit(rng));
    const auto grid = uniform_grid(1 + static_cast<Index>(unit(rng) * 64));
    const long depth = d == 2 ? 4 : (d == 3 ? 3 : 2);
    const auto lo_pe = local_comparison(p, Side::bec, Target::error, grid, bsc(0.0), depth);
    const auto up_pe = local_comparison(p, Side::bsc, Target::error, grid, bsc(0.0), depth);
    const auto lo_i = local_comparison(p, Side::bsc, Target::info, grid, bsc(0.0), depth);
    const auto up_i = local_comparison(p, Side::bec, Target::info, grid, bsc(0.0), depth);
    DeltaMeasure<double> exact = bsc(0.0);
    for (long t = 0; t <= depth; ++t) {
      if (t > 0) exact = layer_bp(p, exact);
      const auto f = functionals(exact);
      const bool ok = lo_pe.functional_track[t].p_e <= f.p_e + 1e-12 && f.p_e <= up_pe.functional_track[t].p_e + 1e-12 &&
                      lo_i.functional_track[t].capacity <= f.capacity + 1e-12 &&
                      f.capacity <= up_i.functional_track[t].capacity + 1e-12;
      if (!ok) ++sandwich_bad;
    }
    ++sandwich_cases;
  }
  if (sandwich_bad > 0) broken.push_back(std::to_string(sandwich_bad) + " sandwich violations");

  // Refinement: the information gap shrinks from 8 to 64 to 1024 cells.
  for (double tau : {0.01, 0.03}) {
    const TreeParams<double> p(2, delta_c(2) - tau);
    double prev = 2;
    for (Index cells : {8, 64, 1024}) {
      const auto grid = uniform_grid(cells);
      const double gap = local_comparison(p, Side::bec, Target::info, grid, bsc(0.0), 100L).last().capacity -
                         local_comparison(p, Side::bsc, Target::info, grid, bsc(0.0), 100L).last().capacity;
      if (gap > prev) broken.push_back("refinement at tau " + num(tau));
      prev = gap;
    }
  }

  // One cell reproduces the scalar recursions.
  double reduce_err = 0;
  const auto one = uniform_grid(1);
  for (int d : {2, 3}) {
    for (double delta : {0.05, 0.1, delta_c(d) - 0.01}) {
      const TreeParams<double> p(d, delta);
      const auto a = local_comparison(p, Side::bsc, Target::error, one, bsc(0.0), 50L);
      const auto b = scalar_pe_dynamics(p, Side::bsc, 50L);
      const auto c = local_comparison(p, Side::bec, Target::info, one, bsc(0.0), 50L);
      const auto e = scalar_info_dynamics(p, Side::bec, 50L);
      for (std::size_t t = 0; t < a.functional_track.size(); ++t)
        reduce_err = std::max({reduce_err, std::abs(a.functional_track[t].p_e - b.functional_track[t].p_e),
                               std::abs(c.functional_track[t].capacity - e.functional_track[t].capacity)});
    }
  }
  if (reduce_err > 1e-10) broken.push_back("one-cell reduction " + num(reduce_err, 3));

  // g <= f and monotone layer functions.
  int order_bad = 0;
  for (int d : {2, 3, 4}) {
    for (double delta : {0.0, 0.05, 0.1, delta_c(d)}) {
      const TreeParams<double> p(d, delta);
      for (int k = 0; k <= 10000; ++k)
        if (g_expansion(p, k / 1e4) > f_percolation(p, k / 1e4) + 1e-15) ++order_bad;
      double prev[4] = {-1, -1, -1, -1};
      for (int k = 0; k <= 200; ++k) {
        const double q = 0.5 * k / 200, e = k / 200.0;
        const double cur[4] = {error_function_bsc(p, q), erasure_function_bec(p, e), chi2_entropy_bsc(p, q),
                               chi2_entropy_bec(p, e)};
        for (int j = 0; j < 4; ++j) {
          if (cur[j] < prev[j] - 1e-15) ++order_bad;
          prev[j] = cur[j];
        }
      }
    }
  }
  if (order_bad > 0) broken.push_back(std::to_string(order_bad) + " dominance/monotonicity violations");

  Outcome o;
  o.pass = broken.empty() && sandwich_cases >= 1000;
  o.detail = std::to_string(sandwich_cases) + " sandwich cases, Q error " + num(q_err, 3) + ", reduction error " +
             num(reduce_err, 3);
  for (const auto& b : broken) o.detail += "; " + b;
  return o;
}

Outcome dichotomy() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> arity(2, 9);
  std::uniform_real_distribution<double> share(0.02, 1.0);
  FixedPointConfig<double> cfg;
  cfg.max_iters = 5000000;
  int bad = 0;
  double worst_super = 0, worst_sub = 1;
  for (int rep = 0; rep < 20; ++rep) {
    const int d = arity(rng);
    const double dc = delta_c(d);
    const TreeParams<double> above(d, dc + share(rng) * (0.5 - dc));
    const TreeParams<double> below(d, dc - share(rng) * dc);
    const double up = scalar_info_dynamics(above, Side::bec, std::nullopt, cfg).last().capacity;
    const double lo = scalar_info_dynamics(below, Side::bsc, std::nullopt, cfg).last().capacity;
    worst_super = std::max(worst_super, up);
    worst_sub = std::min(worst_sub, lo);
    if (!(up < 1e-8)) ++bad;
    if (!(lo >= 1e-6)) ++bad;
  }
  Outcome o;
  o.pass = bad == 0;
  o.detail = "max supercritical upper bound " + num(worst_super, 3) + ", min subcritical lower bound " +
             num(worst_sub, 3) + " over 20 + 20 pairs";
  return o;
}

}  // namespace

int main() {
  run(1, "threshold", threshold);
  run(2, "scalar constants", scalar_constants);
  run(3, "two-atom constant", two_atom_constant);
  run(4, "information slope", info_slopes);
  run(5, "error exponent", pe_exponent);
  run(6, "oracle equivalence", oracle_equivalence);
  run(7, "property suites", properties);
  run(8, "dichotomy", dichotomy);
  return failures == 0 ? 0 : 1;
}
