#pragma once

// Iterated layer maps.  Scalar recursions replace the channel after every layer
// by an extremal BSC or BEC with a matched functional; the local comparison
// recursion replaces it by a cellwise quantization; the two-atom recursion
// follows a BSC/BEC mixture family on the binary tree.

#include <treecast/bms.hpp>
#include <treecast/bp_layer.hpp>
#include <treecast/errors.hpp>
#include <treecast/quantize.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace treecast {

enum class Side { bec, bsc };
enum class Target { error, info };

template <typename Scalar = double>
struct FixedPointConfig {
  Scalar tol = Scalar(1e-12);
  int patience = 3;  // consecutive small steps required
  long max_iters = 100000;
  Scalar damping = Scalar(0);
  // Optional plateau test for maps whose iterates jitter at a level above tol:
  // stop once the mean over consecutive windows of `window` levels moves by
  // less than window_tol per level.  window = 0 disables it.
  long window = 0;
  Scalar window_tol = Scalar(1e-11);
};

template <typename Scalar = double>
struct FixedPointResult {
  Scalar value;
  bool converged;
  long iterations;
};

template <typename Scalar, typename Map>
FixedPointResult<Scalar> fixed_point(Map&& map, Scalar init, const FixedPointConfig<Scalar>& cfg = {}) {
  using std::abs;
  Scalar x = init;
  int calm = 0;
  for (long it = 1; it <= cfg.max_iters; ++it) {
    const Scalar next = (Scalar(1) - cfg.damping) * map(x) + cfg.damping * x;
    const Scalar step = abs(next - x);
    x = next;
    calm = step < cfg.tol ? calm + 1 : 0;
    if (calm >= std::max(cfg.patience, 1)) return {x, true, it};
  }
  return {x, false, cfg.max_iters};
}

template <typename State, typename Scalar = double>
struct DynamicsTrace {
  // Entry 0 is the initial state; entry t is the state after t layers.
  std::vector<State> states;
  std::vector<ChannelFunctionals<Scalar>> functional_track;
  bool converged = false;
  long iterations = 0;
  long extrapolations = 0;

  const ChannelFunctionals<Scalar>& last() const { return functional_track.back(); }
  Scalar value(Target t) const { return t == Target::error ? last().p_e : last().capacity; }
};

namespace detail {

// Shared stopping rule for all dynamics: `patience` consecutive steps with
// change below tol, or a flat plateau of window means.
template <typename Scalar>
class ConvergenceMonitor {
 public:
  explicit ConvergenceMonitor(const FixedPointConfig<Scalar>& cfg) : cfg_(cfg) {}

  bool push(Scalar v) {
    using std::abs;
    if (have_prev_) calm_ = abs(v - prev_) < cfg_.tol ? calm_ + 1 : 0;
    prev_ = v;
    have_prev_ = true;
    if (calm_ >= std::max(cfg_.patience, 1)) return true;
    if (cfg_.window > 0) {
      sum_ += v;
      if (++count_ == cfg_.window) {
        const Scalar mean = sum_ / Scalar(cfg_.window);
        const bool flat = have_mean_ && abs(mean - mean_) < cfg_.window_tol * Scalar(cfg_.window);
        mean_ = mean;
        have_mean_ = true;
        sum_ = 0;
        count_ = 0;
        if (flat) return true;
      }
    }
    return false;
  }

  void reset() { *this = ConvergenceMonitor(cfg_); }

 private:
  FixedPointConfig<Scalar> cfg_;
  Scalar prev_ = 0, sum_ = 0, mean_ = 0;
  bool have_prev_ = false, have_mean_ = false;
  int calm_ = 0;
  long count_ = 0;
};

template <typename Scalar>
long level_budget(std::optional<long> depth, const FixedPointConfig<Scalar>& cfg) {
  if (depth && *depth < 0) throw std::domain_error("dynamics: negative depth");
  return depth ? *depth : cfg.max_iters;
}

template <typename Scalar>
ChannelFunctionals<Scalar> bsc_functionals(Scalar q) {
  const Scalar u = Scalar(1) - Scalar(2) * q;
  return {q, bsc_capacity(q), u * u};
}

template <typename Scalar>
ChannelFunctionals<Scalar> bec_functionals(Scalar q) {
  return {q / Scalar(2), Scalar(1) - q, Scalar(1) - q};
}

// Runs a scalar recursion on an internal state x, reporting q = to_q(x).
template <typename Scalar, typename Step, typename ToQ, typename Func>
DynamicsTrace<Scalar, Scalar> run_scalar(Scalar x0, Step step, ToQ to_q, Func func, Target target,
                                         std::optional<long> depth, const FixedPointConfig<Scalar>& cfg) {
  DynamicsTrace<Scalar, Scalar> tr;
  const long budget = level_budget(depth, cfg);
  ConvergenceMonitor<Scalar> mon(cfg);
  Scalar x = x0;
  auto record = [&] {
    const Scalar q = to_q(x);
    tr.states.push_back(q);
    tr.functional_track.push_back(func(q));
    const auto& f = tr.functional_track.back();
    return mon.push(target == Target::error ? f.p_e : f.capacity);
  };
  record();
  for (long t = 1; t <= budget; ++t) {
    x = step(x);
    tr.iterations = t;
    tr.converged = record();
    if (tr.converged && !depth) break;
  }
  return tr;
}

}  // namespace detail

// Error-probability recursions: q <- 2 E^BEC(q) on the BEC side and
// q <- E^BSC(q) on the BSC side, from perfect leaves.  P_e(BEC_q) = q/2 is a
// lower bound and P_e(BSC_q) = q an upper bound on the tree's error.
template <typename Scalar>
DynamicsTrace<Scalar, Scalar> scalar_pe_dynamics(const TreeParams<Scalar>& p, Side side,
                                                 std::optional<long> depth = std::nullopt,
                                                 const FixedPointConfig<Scalar>& cfg = {}) {
  auto id = [](Scalar q) { return q; };
  if (side == Side::bec) {
    return detail::run_scalar<Scalar>(
        Scalar(0), [&](Scalar q) { return std::min(Scalar(1), Scalar(2) * erasure_function_bec(p, q)); }, id,
        detail::bec_functionals<Scalar>, Target::error, depth, cfg);
  }
  return detail::run_scalar<Scalar>(
      Scalar(0), [&](Scalar q) { return std::min(Scalar(0.5), error_function_bsc(p, q)); }, id,
      detail::bsc_functionals<Scalar>, Target::error, depth, cfg);
}

// chi^2 recursions.  BEC side: the unerased probability eps = 1 - q follows
// eps <- g(eps), giving an upper bound 1 - q on the information.  BSC side:
// q <- 1/2 - sqrt(I_chi2(q)) / 2, giving a lower bound 1 - h(q).
template <typename Scalar>
DynamicsTrace<Scalar, Scalar> scalar_info_dynamics(const TreeParams<Scalar>& p, Side side,
                                                   std::optional<long> depth = std::nullopt,
                                                   const FixedPointConfig<Scalar>& cfg = {}) {
  using std::sqrt;
  if (side == Side::bec) {
    return detail::run_scalar<Scalar>(
        Scalar(1), [&](Scalar eps) { return g_expansion(p, eps); }, [](Scalar eps) { return Scalar(1) - eps; },
        [](Scalar q) {
          return ChannelFunctionals<Scalar>{q / Scalar(2), Scalar(1) - q, Scalar(1) - q};
        },
        Target::info, depth, cfg);
  }
  return detail::run_scalar<Scalar>(
      Scalar(0),
      [&](Scalar q) { return std::clamp(Scalar(0.5) - sqrt(chi2_info_bsc(p, q)) / Scalar(2), Scalar(0), Scalar(0.5)); },
      [](Scalar q) { return q; }, detail::bsc_functionals<Scalar>, Target::info, depth, cfg);
}

inline QuantKind quantizer_for(Side side, Target target) {
  if (target == Target::error) return side == Side::bsc ? QuantKind::bsc : QuantKind::bec;
  return side == Side::bsc ? QuantKind::bsc_chi2 : QuantKind::bec_chi2;
}

template <typename Scalar = double>
struct LocalComparisonOptions {
  FixedPointConfig<Scalar> convergence{Scalar(1e-12), 3, 100000, Scalar(0), 200, Scalar(1e-11)};
  QuantizedBpOptions<Scalar> layer{};
  bool record_states = false;  // keep every measure, not only the first and last
  // Windowed extrapolation along the slow direction of the cell moments.  The
  // iteration is resumed from the extrapolated state, so the reported value is
  // still a fixed point of the quantized map, but intermediate levels no longer
  // form a comparison chain.
  bool accelerate = false;
};

namespace detail {

template <typename Scalar>
long extrapolation_window(const TreeParams<Scalar>& p) {
  using std::abs;
  const Scalar gap = abs(p.ks() - Scalar(1));
  if (!(gap > Scalar(0))) return 5000;
  return std::clamp<long>(static_cast<long>(Scalar(0.15) / gap), 20, 5000);
}

}  // namespace detail

// mu_t = Q(BP(mu_{t-1})).  Spread quantizers give upper bounds on the
// information and lower bounds on the error probability; collapse quantizers
// the reverse.
template <typename Scalar>
DynamicsTrace<DeltaMeasure<Scalar>, Scalar> local_comparison(const TreeParams<Scalar>& p, Side side, Target target,
                                                             const QuantGrid<Scalar>& grid,
                                                             const DeltaMeasure<Scalar>& init,
                                                             std::optional<long> depth = std::nullopt,
                                                             const LocalComparisonOptions<Scalar>& opt = {}) {
  if (side == Side::bec && !(init.size() == 1 && init.delta(0) == Scalar(0)))
    throw precondition_error("local_comparison: the upgraded chain must start from perfect leaves");
  if (side == Side::bsc && target == Target::error && init.size() != 1)
    throw precondition_error("local_comparison: the degraded error chain must start from a BSC");

  const QuantKind kind = quantizer_for(side, target);
  const auto& cfg = opt.convergence;
  const long budget = detail::level_budget(depth, cfg);
  const long window = detail::extrapolation_window(p);

  DynamicsTrace<DeltaMeasure<Scalar>, Scalar> tr;
  detail::ConvergenceMonitor<Scalar> mon(cfg);
  auto tracked = [&](const ChannelFunctionals<Scalar>& f) { return target == Target::error ? f.p_e : f.capacity; };

  DeltaMeasure<Scalar> mu = init;
  tr.states.push_back(mu);
  tr.functional_track.push_back(functionals(mu));
  mon.push(tracked(tr.functional_track.back()));

  std::vector<CellMoments<Scalar>> snaps;
  std::vector<Scalar> snap_values;
  for (long t = 1; t <= budget; ++t) {
    CellMoments<Scalar> m = quantized_layer_moments(p, mu, grid, kind, opt.layer);
    mu = from_cell_moments(m, grid, kind);
    auto f = functionals(mu);
    tr.iterations = t;

    if (opt.accelerate && t % window == 0) {
      snaps.push_back(m);
      snap_values.push_back(tracked(f));
      const std::size_t k = snap_values.size();
      if (k >= 4) {
        using std::abs;
        const Scalar d1 = snap_values[k - 1] - snap_values[k - 2];
        const Scalar d2 = snap_values[k - 2] - snap_values[k - 3];
        const Scalar d3 = snap_values[k - 3] - snap_values[k - 4];
        const Scalar r1 = d1 / d2, r2 = d2 / d3;
        const bool geometric = r1 > 0 && r1 < 1 && r2 > 0 && r2 < 1 && abs(r1 - r2) < Scalar(0.05) * (1 - r1);
        if (geometric) {
          const Scalar gain = r1 / (1 - r1);
          const CellMoments<Scalar>& prev = snaps[k - 2];
          CellMoments<Scalar> e = m;
          e.mass += gain * (m.mass - prev.mass);
          e.moment += gain * (m.moment - prev.moment);
          for (Index c = 0; c < e.mass.size(); ++c) {
            if (!(e.mass[c] > Scalar(0))) e.mass[c] = e.moment[c] = Scalar(0);
          }
          mu = from_cell_moments(e, grid, kind);
          f = functionals(mu);
          ++tr.extrapolations;
          snaps.clear();
          snap_values.clear();
          mon.reset();
        }
      }
    }

    if (opt.record_states || t == budget) tr.states.push_back(mu);
    tr.functional_track.push_back(f);
    const bool done = mon.push(tracked(f));
    tr.converged = done;
    if (done && !depth) {
      if (!opt.record_states && t != budget) tr.states.push_back(mu);
      break;
    }
  }
  return tr;
}

template <typename Scalar = double>
struct TwoAtomResult {
  Scalar alpha = 0;
  Scalar eps_weight = 0;
  Scalar info_bound = 0;
  bool converged = false;
  long iterations = 0;
};

// Binary tree, channel family (1 - eps) BSC_{1/2 - alpha} + eps BSC_{1/2}.  One
// layer maps the informative atom to BSC_{delta'} with
// delta' = dbar^2 / (dbar^2 + (1 - dbar)^2), dbar = 1/2 - alpha (1 - 2 delta); the
// one-informative-child event (a BSC_dbar) is replaced by a chi^2-preserving
// mixture of BSC_{delta'} and BSC_{1/2}.  The state kept is beta = 1 - eps.
template <typename Scalar>
DynamicsTrace<std::pair<Scalar, Scalar>, Scalar> two_atom_trace(const TreeParams<Scalar>& p,
                                                               std::optional<long> depth = std::nullopt,
                                                               const FixedPointConfig<Scalar>& cfg = {}) {
  if (p.d != 2) throw unsupported_error("two_atom_upper: only the binary tree recursion is available");
  if (!(p.delta < Scalar(0.25))) throw precondition_error("two_atom_upper: requires delta < 1/4");
  const long budget = detail::level_budget(depth, cfg);
  DynamicsTrace<std::pair<Scalar, Scalar>, Scalar> tr;
  detail::ConvergenceMonitor<Scalar> mon(cfg);
  Scalar alpha = Scalar(0.5), beta = Scalar(1);
  auto record = [&] {
    const Scalar cap = beta * bsc_capacity(Scalar(0.5) - alpha);
    tr.states.emplace_back(alpha, Scalar(1) - beta);
    tr.functional_track.push_back({beta * (Scalar(0.5) - alpha) + (Scalar(1) - beta) / Scalar(2), cap,
                                   beta * Scalar(4) * alpha * alpha});
    return mon.push(cap);
  };
  record();
  for (long t = 1; t <= budget; ++t) {
    const Scalar dbar = Scalar(0.5) - alpha * (Scalar(1) - Scalar(2) * p.delta);
    const Scalar s = dbar * dbar + (Scalar(1) - dbar) * (Scalar(1) - dbar);
    const Scalar next_delta = dbar * dbar / s;
    // (1 - 2 dbar)^2 / (1 - 2 delta')^2 simplifies to s^2.
    const Scalar keep = s * s;
    beta = beta * beta * s + Scalar(2) * beta * (Scalar(1) - beta) * keep;
    alpha = Scalar(0.5) - next_delta;
    tr.iterations = t;
    const bool done = record();
    tr.converged = done;
    if (done && !depth) break;
  }
  return tr;
}

template <typename Scalar>
TwoAtomResult<Scalar> two_atom_upper(const TreeParams<Scalar>& p, std::optional<long> depth = std::nullopt,
                                     const FixedPointConfig<Scalar>& cfg = {}) {
  const auto tr = two_atom_trace(p, depth, cfg);
  const auto [alpha, eps] = tr.states.back();
  return {alpha, eps, tr.last().capacity, tr.converged, tr.iterations};
}

}  // namespace treecast
