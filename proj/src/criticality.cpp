#include <treecast/criticality.hpp>

#include <treecast/dynamics.hpp>
#include <treecast/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace treecast {

bool chi2_expands(const TreeParams<double>& params) {
  // The quadratic term of the map biases the answer by about the starting
  // information, so start tiny: 4e-14 keeps the bias near 1e-14 in delta.
  const double q0 = 0.5 - 1e-7;
  const double start = (1.0 - 2.0 * q0) * (1.0 - 2.0 * q0);
  double q = q0, info = start;
  for (int it = 0; it < 10000; ++it) {
    info = chi2_info_bsc(params, q);
    if (info > start) return true;
    if (info < 0.5 * start) return false;
    q = std::clamp(0.5 - 0.5 * std::sqrt(info), 0.0, 0.5);
  }
  return info > start;
}

double find_threshold(int d, double tol) {
  if (d < 2) throw std::domain_error("find_threshold: arity must be at least 2");
  if (!(tol > 0)) throw std::domain_error("find_threshold: tolerance must be positive");
  double lo = 0.0, hi = 0.5;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_expands(TreeParams<double>(d, mid)))
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

long default_depth_cap(double tau) { return std::max(10000L, static_cast<long>(std::ceil(50.0 / tau))); }

namespace {

struct PointResult {
  double lower_I = 0, upper_I = 0, lower_Pe = 0, upper_Pe = 0;
  bool converged = true;
  long levels = 0;
};

template <typename Trace>
void note(PointResult& r, const Trace& tr) {
  r.converged = r.converged && tr.converged;
  r.levels = std::max(r.levels, tr.iterations);
}

PointResult run_scalar_point(const TreeParams<double>& p, long cap, double tol, bool two_atom) {
  FixedPointConfig<double> cfg;
  cfg.max_iters = cap;
  cfg.tol = tol;
  PointResult r;
  const auto lo_i = scalar_info_dynamics(p, Side::bsc, std::nullopt, cfg);
  const auto lo_pe = scalar_pe_dynamics(p, Side::bec, std::nullopt, cfg);
  const auto up_pe = scalar_pe_dynamics(p, Side::bsc, std::nullopt, cfg);
  r.lower_I = lo_i.last().capacity;
  r.lower_Pe = lo_pe.last().p_e;
  r.upper_Pe = up_pe.last().p_e;
  note(r, lo_i);
  note(r, lo_pe);
  note(r, up_pe);
  if (two_atom) {
    const auto tr = two_atom_trace(p, std::nullopt, cfg);
    r.upper_I = tr.last().capacity;
    note(r, tr);
  } else {
    const auto up_i = scalar_info_dynamics(p, Side::bec, std::nullopt, cfg);
    r.upper_I = up_i.last().capacity;
    note(r, up_i);
  }
  return r;
}

PointResult run_local_point(const TreeParams<double>& p, const QuantGrid<double>& grid, long cap, double tol,
                            bool accelerate) {
  LocalComparisonOptions<double> opt;
  opt.convergence.max_iters = cap;
  opt.convergence.tol = tol;
  LocalComparisonOptions<double> fast = opt;
  fast.accelerate = accelerate;
  const DeltaMeasure<double> perfect = bsc(0.0);
  PointResult r;

  const auto up_i = local_comparison(p, Side::bec, Target::info, grid, perfect, std::nullopt, fast);
  // The degraded chi^2 chain started from the upgraded fixed point lands on its
  // own fixed point within a few levels, instead of tens of thousands.
  const auto lo_i = local_comparison(p, Side::bsc, Target::info, grid, accelerate ? up_i.states.back() : perfect,
                                     std::nullopt, opt);
  const auto lo_pe = local_comparison(p, Side::bec, Target::error, grid, perfect, std::nullopt, fast);
  const auto up_pe = local_comparison(p, Side::bsc, Target::error, grid, perfect, std::nullopt, opt);
  r.upper_I = up_i.last().capacity;
  r.lower_I = lo_i.last().capacity;
  r.lower_Pe = lo_pe.last().p_e;
  r.upper_Pe = up_pe.last().p_e;
  for (const auto* tr : {&up_i, &lo_i, &lo_pe, &up_pe}) note(r, *tr);
  return r;
}

}  // namespace

SweepResult tau_sweep(int d, const std::vector<double>& taus, const SweepOptions& opt) {
  const double dc = delta_c<double>(d);
  for (double t : taus)
    if (!(t > 0 && t < dc)) throw precondition_error("tau_sweep: every tau must lie in (0, delta_c)");
  if (opt.method == SweepMethod::local && opt.cells < 1) throw precondition_error("tau_sweep: need at least one cell");
  if (!(opt.tol > 0)) throw precondition_error("tau_sweep: tolerance must be positive");

  SweepResult out;
  out.d = d;
  out.method = opt.method;
  out.cells = opt.method == SweepMethod::local ? opt.cells : 0;
  out.taus = taus;
  const std::size_t n = taus.size();
  std::vector<PointResult> points(n);
  out.depth_caps.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.depth_caps[i] = opt.depth_cap > 0 ? opt.depth_cap : default_depth_cap(taus[i]);

  const QuantGrid<double> grid = uniform_grid<double>(std::max<Index>(opt.cells, 1));
  // Smallest tau first: those points take longest.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return taus[a] < taus[b]; });

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= n) return;
      const std::size_t i = order[k];
      try {
        const TreeParams<double> p(d, dc - taus[i]);
        switch (opt.method) {
          case SweepMethod::scalar:
            points[i] = run_scalar_point(p, out.depth_caps[i], opt.tol, false);
            break;
          case SweepMethod::two_atom:
            points[i] = run_scalar_point(p, out.depth_caps[i], opt.tol, true);
            break;
          case SweepMethod::local:
            points[i] = run_local_point(p, grid, out.depth_caps[i], opt.tol, opt.accelerate);
            break;
        }
      } catch (...) {
        std::lock_guard<std::mutex> g(failure_lock);
        if (!failure) failure = std::current_exception();
        next.store(n);
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t jobs = std::min<std::size_t>(n, opt.jobs > 0 ? static_cast<std::size_t>(opt.jobs) : hw);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = points[i];
    out.lower_I.push_back(p.lower_I);
    out.upper_I.push_back(p.upper_I);
    out.lower_Pe.push_back(p.lower_Pe);
    out.upper_Pe.push_back(p.upper_Pe);
    out.converged.push_back(p.converged);
    out.levels.push_back(p.levels);
    if (!p.converged) {
      std::ostringstream msg;
      msg.precision(12);
      msg << "tau=" << taus[i] << ": depth cap " << out.depth_caps[i] << " reached before convergence";
      out.warnings.push_back(msg.str());
    }
  }
  return out;
}

void check_sandwich(const SweepResult& r, double slack) {
  for (std::size_t i = 0; i < r.taus.size(); ++i) {
    if (r.lower_I[i] > r.upper_I[i] + slack || r.lower_Pe[i] > r.upper_Pe[i] + slack) {
      std::ostringstream msg;
      msg.precision(12);
      msg << "bounds cross at tau=" << r.taus[i] << ": I in [" << r.lower_I[i] << ", " << r.upper_I[i]
          << "], P_e in [" << r.lower_Pe[i] << ", " << r.upper_Pe[i] << "]";
      throw invariant_error(msg.str());
    }
  }
}

namespace {

template <typename Trace>
double at_level(const Trace& tr, long t, Target target) {
  const auto& track = tr.functional_track;
  const auto& f = track[static_cast<std::size_t>(std::min<long>(t, static_cast<long>(track.size()) - 1))];
  return target == Target::error ? f.p_e : f.capacity;
}

}  // namespace

BoundReport level_bounds(const TreeParams<double>& params, SweepMethod method, Index cells,
                         std::optional<long> depth, long cap, double tol) {
  if (method == SweepMethod::local && cells < 1) throw precondition_error("level_bounds: need at least one cell");
  if (cap < 1) throw precondition_error("level_bounds: the depth cap must be positive");
  if (!(tol > 0)) throw precondition_error("level_bounds: tolerance must be positive");
  BoundReport rep;
  rep.d = params.d;
  rep.delta = params.delta;
  rep.method = method;
  rep.cells = method == SweepMethod::local ? cells : 0;

  std::vector<DynamicsTrace<double, double>> scalar;
  std::vector<DynamicsTrace<DeltaMeasure<double>, double>> local;
  // Order: lower_Pe, upper_Pe, lower_I, upper_I.
  const std::pair<Side, Target> chains[] = {
      {Side::bec, Target::error}, {Side::bsc, Target::error}, {Side::bsc, Target::info}, {Side::bec, Target::info}};
  if (method == SweepMethod::local) {
    const auto grid = uniform_grid<double>(cells);
    LocalComparisonOptions<double> opt;
    opt.convergence.max_iters = cap;
    opt.convergence.tol = tol;
    for (const auto& [side, target] : chains)
      local.push_back(local_comparison(params, side, target, grid, bsc(0.0), depth, opt));
  } else {
    FixedPointConfig<double> cfg;
    cfg.max_iters = cap;
    cfg.tol = tol;
    scalar.push_back(scalar_pe_dynamics(params, Side::bec, depth, cfg));
    scalar.push_back(scalar_pe_dynamics(params, Side::bsc, depth, cfg));
    scalar.push_back(scalar_info_dynamics(params, Side::bsc, depth, cfg));
    if (method == SweepMethod::two_atom) {
      const auto tr = two_atom_trace(params, depth, cfg);
      DynamicsTrace<double, double> flat;
      flat.functional_track = tr.functional_track;
      flat.converged = tr.converged;
      flat.iterations = tr.iterations;
      scalar.push_back(std::move(flat));
    } else {
      scalar.push_back(scalar_info_dynamics(params, Side::bec, depth, cfg));
    }
  }

  long levels = 0;
  auto visit = [&](const auto& traces) {
    for (std::size_t k = 0; k < traces.size(); ++k) {
      levels = std::max(levels, static_cast<long>(traces[k].functional_track.size()) - 1);
      // A fixed depth is reached by construction.
      if (!depth && !traces[k].converged) {
        rep.converged = false;
        rep.warnings.push_back("chain " + std::to_string(k) + ": depth cap " + std::to_string(cap) +
                               " reached before convergence");
      }
    }
    rep.rows.resize(static_cast<std::size_t>(levels) + 1);
    for (long t = 0; t <= levels; ++t) {
      BoundRow& row = rep.rows[static_cast<std::size_t>(t)];
      row.level = t;
      row.lower_Pe = at_level(traces[0], t, Target::error);
      row.upper_Pe = at_level(traces[1], t, Target::error);
      row.lower_I = at_level(traces[2], t, Target::info);
      row.upper_I = at_level(traces[3], t, Target::info);
    }
  };
  if (method == SweepMethod::local)
    visit(local);
  else
    visit(scalar);
  return rep;
}

void check_sandwich(const BoundReport& r, double slack) {
  for (const auto& row : r.rows) {
    if (row.lower_I > row.upper_I + slack || row.lower_Pe > row.upper_Pe + slack) {
      std::ostringstream msg;
      msg.precision(12);
      msg << "bounds cross at level " << row.level << ": I in [" << row.lower_I << ", " << row.upper_I
          << "], P_e in [" << row.lower_Pe << ", " << row.upper_Pe << "]";
      throw invariant_error(msg.str());
    }
  }
}

std::vector<double> log_spaced(double lo, double hi, int n) {
  if (!(lo > 0 && hi >= lo) || n < 1) throw std::domain_error("log_spaced: need 0 < lo <= hi and n >= 1");
  std::vector<double> v(static_cast<std::size_t>(n));
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  const Eigen::ArrayXd e = Eigen::ArrayXd::LinSpaced(n, std::log(lo), std::log(hi)).exp();
  for (int i = 0; i < n; ++i) v[i] = e[i];
  v.front() = lo;
  v.back() = hi;
  return v;
}

SlopeFit fit_slope(const std::vector<double>& xs, const std::vector<double>& ys, FitTransform transform) {
  if (xs.size() != ys.size()) throw precondition_error("fit_slope: xs and ys differ in length");
  if (xs.size() < 3) throw precondition_error("fit_slope: need at least three points");
  const Index n = static_cast<Index>(xs.size());
  Eigen::VectorXd x(n), y(n);
  for (Index i = 0; i < n; ++i) {
    x[i] = xs[i];
    y[i] = ys[i];
    if (transform == FitTransform::log_log) {
      if (!(xs[i] > 0 && ys[i] > 0)) throw precondition_error("fit_slope: log-log fit needs positive values");
      x[i] = std::log(xs[i]);
      y[i] = std::log(ys[i]);
    }
  }
  const double xm = x.mean();
  const Eigen::VectorXd xc = x.array() - xm;
  const double spread = xc.squaredNorm();
  if (!(spread > 1e-24 * std::max(1.0, x.squaredNorm()))) throw std::domain_error("fit_slope: degenerate x spread");

  Eigen::MatrixXd a(n, 2);
  a.col(0).setOnes();
  a.col(1) = x;
  const Eigen::Vector2d beta = a.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd resid = y - a * beta;
  const double ss_res = resid.squaredNorm();
  const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
  SlopeFit f;
  f.intercept = beta[0];
  f.slope = beta[1];
  f.r_squared = ss_tot > 0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  f.transform = transform;
  return f;
}

SlopeFit info_slope_fit(const std::vector<double>& taus, const std::vector<double>& info) {
  std::vector<double> ratio(info.size());
  for (std::size_t i = 0; i < info.size(); ++i) ratio[i] = info[i] / taus[i];
  return fit_slope(taus, ratio, FitTransform::linear);
}

ConjectureReport conjecture_report(int d, Index cells, const std::vector<double>& taus, const SweepOptions& opt) {
  SweepOptions o = opt;
  o.method = SweepMethod::local;
  o.cells = cells;
  ConjectureReport rep;
  rep.sweep = tau_sweep(d, taus, o);
  const auto& s = rep.sweep;
  rep.info_lower = info_slope_fit(s.taus, s.lower_I);
  rep.info_upper = info_slope_fit(s.taus, s.upper_I);
  std::vector<double> lo_gap(s.taus.size()), hi_gap(s.taus.size());
  for (std::size_t i = 0; i < s.taus.size(); ++i) {
    lo_gap[i] = 1.0 - 2.0 * s.upper_Pe[i];
    hi_gap[i] = 1.0 - 2.0 * s.lower_Pe[i];
    rep.max_relative_gap = std::max(rep.max_relative_gap, (s.upper_I[i] - s.lower_I[i]) / s.taus[i]);
  }
  rep.pe_exponent = fit_slope(s.taus, lo_gap, FitTransform::log_log);
  rep.pe_exponent_alt = fit_slope(s.taus, hi_gap, FitTransform::log_log);
  return rep;
}

std::string to_string(SweepMethod m) {
  switch (m) {
    case SweepMethod::scalar:
      return "scalar";
    case SweepMethod::local:
      return "local";
    case SweepMethod::two_atom:
      return "two_atom";
  }
  return "unknown";
}

std::string to_string(FitTransform t) { return t == FitTransform::linear ? "linear" : "log-log"; }

}  // namespace treecast
