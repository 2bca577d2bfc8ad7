#pragma once

// One layer of belief propagation.  The root bit X0 is copied to d children
// through BSC_delta edges, and each child is observed through a leaf channel.
// Channels are DeltaMeasures, so the layer is serial composition with the edge
// followed by the Bayes combination of d independent looks at X0.

#include <treecast/bms.hpp>
#include <treecast/errors.hpp>

#include <cmath>
#include <limits>
#include <vector>

namespace treecast {

template <typename Scalar = double>
struct LayerSpec {
  TreeParams<Scalar> params;
  DeltaMeasure<Scalar> leaf_channel;
};

// BSC_delta followed by W: each atom moves to delta * Delta = delta + Delta - 2 delta Delta.
template <typename Scalar>
DeltaMeasure<Scalar> serial_compose(Scalar delta, const DeltaMeasure<Scalar>& w,
                                    Scalar merge_tol = Scalar(kMergeTol)) {
  if (!(delta >= Scalar(0) && delta <= Scalar(0.5)))
    throw std::domain_error("serial_compose: delta outside [0, 1/2]");
  using Array = typename DeltaMeasure<Scalar>::Array;
  const Array moved = delta + w.deltas() - Scalar(2) * delta * w.deltas();
  return DeltaMeasure<Scalar>(moved, w.weights(), merge_tol);
}

// Two conditionally independent observations of the same uniform bit.  Each
// pair of atoms splits into an agreement and a disagreement event.
template <typename Scalar>
DeltaMeasure<Scalar> star_combine(const DeltaMeasure<Scalar>& a, const DeltaMeasure<Scalar>& b,
                                  Scalar merge_tol = Scalar(kMergeTol),
                                  Index max_atoms = std::numeric_limits<Index>::max()) {
  const Index na = a.size(), nb = b.size();
  if (na > max_atoms / (2 * nb)) throw resource_error("star_combine: support budget exceeded");
  std::vector<std::pair<Scalar, Scalar>> atoms;
  atoms.reserve(static_cast<std::size_t>(2 * na * nb));
  for (Index i = 0; i < na; ++i) {
    const Scalar x = a.delta(i), wx = a.weight(i);
    for (Index j = 0; j < nb; ++j) {
      const Scalar y = b.delta(j), w = wx * b.weight(j);
      const Scalar same_err = x * y, same_ok = (1 - x) * (1 - y);
      const Scalar agree = same_err + same_ok;
      atoms.emplace_back(same_err / agree, w * agree);
      const Scalar m1 = x * (1 - y), m2 = (1 - x) * y;
      const Scalar disagree = m1 + m2;
      if (disagree > Scalar(0)) atoms.emplace_back(std::min(m1, m2) / disagree, w * disagree);
    }
  }
  return DeltaMeasure<Scalar>(std::move(atoms), merge_tol);
}

template <typename Scalar>
DeltaMeasure<Scalar> layer_bp(const TreeParams<Scalar>& params, const DeltaMeasure<Scalar>& leaf,
                              Scalar merge_tol = Scalar(kMergeTol),
                              Index max_atoms = std::numeric_limits<Index>::max()) {
  const DeltaMeasure<Scalar> child = serial_compose(params.delta, leaf, merge_tol);
  DeltaMeasure<Scalar> out = child;
  for (int k = 1; k < params.d; ++k) out = star_combine(out, child, merge_tol, max_atoms);
  return out;
}

template <typename Scalar>
DeltaMeasure<Scalar> layer_bp(const LayerSpec<Scalar>& spec) {
  return layer_bp(spec.params, spec.leaf_channel);
}

namespace detail {

template <typename Scalar>
std::vector<Scalar> binomial_row(int n) {
  std::vector<Scalar> row(static_cast<std::size_t>(n) + 1, Scalar(1));
  for (int k = 1; k < n; ++k) row[k] = row[k - 1] * Scalar(n - k + 1) / Scalar(k);
  return row;
}

template <typename Scalar>
Scalar ipow(Scalar x, int n) {
  Scalar r = 1;
  for (; n > 0; n >>= 1) {
    if (n & 1) r *= x;
    x *= x;
  }
  return r;
}

// a^m - b^m for a = 1 - b, using the exactly known difference a - b so that
// nothing cancels when a and b are both near 1/2.
template <typename Scalar>
Scalar pow_diff(Scalar a, Scalar b, Scalar a_minus_b, int m) {
  if (m == 0) return Scalar(0);
  Scalar s = 0, ak = 1;
  for (int k = 0; k < m; ++k) {
    s += ak * ipow(b, m - 1 - k);
    ak *= a;
  }
  return a_minus_b * s;
}

// Likelihoods of a pattern with i "ones" out of n looks through BSC_kappa, and
// the squared gap between the two hypotheses.
template <typename Scalar>
struct PatternTerms {
  Scalar p0, p1, gap_sq;
};

template <typename Scalar>
PatternTerms<Scalar> pattern(Scalar kappa, Scalar one_minus_2kappa, int n, int i) {
  const Scalar ok = Scalar(1) - kappa;
  const Scalar p0 = ipow(kappa, i) * ipow(ok, n - i);
  const Scalar p1 = ipow(kappa, n - i) * ipow(ok, i);
  const int lo = std::min(i, n - i), m = std::abs(n - 2 * i);
  const Scalar common = ipow(kappa * ok, lo);
  const Scalar diff = common * pow_diff(ok, kappa, one_minus_2kappa, m);
  return {p0, p1, diff * diff};
}

template <typename Scalar>
void check_unit(Scalar x, Scalar hi, const char* what) {
  if (!(x >= Scalar(0) && x <= hi)) throw std::domain_error(what);
}

// Sum over the 2^n patterns of n looks through BSC_kappa of the map
// (p0, p1, (p0 - p1)^2) -> value.
template <typename Scalar, typename F>
Scalar bsc_pattern_sum(Scalar kappa, Scalar one_minus_2kappa, int n, F&& f) {
  const auto c = binomial_row<Scalar>(n);
  Scalar s = 0;
  for (int i = 0; i <= n; ++i) {
    const auto t = pattern(kappa, one_minus_2kappa, n, i);
    s += c[i] * f(t);
  }
  return s;
}

template <typename Scalar>
Scalar min_term(const PatternTerms<Scalar>& t) {
  return std::min(t.p0, t.p1);
}

template <typename Scalar>
Scalar posterior_term(const PatternTerms<Scalar>& t) {
  const Scalar s = t.p0 + t.p1;
  return s > Scalar(0) ? t.p0 * t.p1 / s : Scalar(0);
}

template <typename Scalar>
Scalar chi2_term(const PatternTerms<Scalar>& t) {
  const Scalar s = t.p0 + t.p1;
  return s > Scalar(0) ? t.gap_sq / (Scalar(2) * s) : Scalar(0);
}

// Mixture over the number i of unerased children, each unerased child seen
// through BSC_delta.
template <typename Scalar, typename F>
Scalar bec_pattern_sum(const TreeParams<Scalar>& p, Scalar unerased, F&& f) {
  const auto c = binomial_row<Scalar>(p.d);
  const Scalar one_minus_2delta = Scalar(1) - Scalar(2) * p.delta;
  Scalar s = 0;
  for (int i = 0; i <= p.d; ++i) {
    const Scalar mix = c[i] * ipow(unerased, i) * ipow(Scalar(1) - unerased, p.d - i);
    if (mix == Scalar(0)) continue;
    s += mix * bsc_pattern_sum(p.delta, one_minus_2delta, i, f);
  }
  return s;
}

}  // namespace detail

// MAP error probability of the layer channel with BSC_q leaves.
template <typename Scalar>
Scalar error_function_bsc(const TreeParams<Scalar>& p, Scalar q) {
  detail::check_unit(q, Scalar(0.5), "error_function_bsc: q outside [0, 1/2]");
  const Scalar kappa = p.delta + q - Scalar(2) * p.delta * q;
  const Scalar gap = (Scalar(1) - Scalar(2) * p.delta) * (Scalar(1) - Scalar(2) * q);
  return Scalar(0.5) * detail::bsc_pattern_sum(kappa, gap, p.d, detail::min_term<Scalar>);
}

// MAP error probability of the layer channel with BEC_q leaves.
template <typename Scalar>
Scalar erasure_function_bec(const TreeParams<Scalar>& p, Scalar q) {
  detail::check_unit(q, Scalar(1), "erasure_function_bec: q outside [0, 1]");
  return Scalar(0.5) * detail::bec_pattern_sum(p, Scalar(1) - q, detail::min_term<Scalar>);
}

// Average posterior of the wrong root value, E[P(X0 = 1 | Y) | X0 = 0].  This is
// not the MAP error and is not used by the dynamics.
template <typename Scalar>
Scalar posterior_error_function_bsc(const TreeParams<Scalar>& p, Scalar q) {
  detail::check_unit(q, Scalar(0.5), "posterior_error_function_bsc: q outside [0, 1/2]");
  const Scalar kappa = p.delta + q - Scalar(2) * p.delta * q;
  const Scalar gap = (Scalar(1) - Scalar(2) * p.delta) * (Scalar(1) - Scalar(2) * q);
  return detail::bsc_pattern_sum(kappa, gap, p.d, detail::posterior_term<Scalar>);
}

template <typename Scalar>
Scalar posterior_erasure_function_bec(const TreeParams<Scalar>& p, Scalar q) {
  detail::check_unit(q, Scalar(1), "posterior_erasure_function_bec: q outside [0, 1]");
  return detail::bec_pattern_sum(p, Scalar(1) - q, detail::posterior_term<Scalar>);
}

// chi^2-information between X0 and the d observations, BSC_q leaves.
template <typename Scalar>
Scalar chi2_info_bsc(const TreeParams<Scalar>& p, Scalar q) {
  detail::check_unit(q, Scalar(0.5), "chi2_info_bsc: q outside [0, 1/2]");
  const Scalar kappa = p.delta + q - Scalar(2) * p.delta * q;
  const Scalar gap = (Scalar(1) - Scalar(2) * p.delta) * (Scalar(1) - Scalar(2) * q);
  return detail::bsc_pattern_sum(kappa, gap, p.d, detail::chi2_term<Scalar>);
}

// The expansion map g: chi^2-information of the layer when each leaf is
// unerased with probability eps.
template <typename Scalar>
Scalar g_expansion(const TreeParams<Scalar>& p, Scalar eps) {
  detail::check_unit(eps, Scalar(1), "g_expansion: eps outside [0, 1]");
  return detail::bec_pattern_sum(p, eps, detail::chi2_term<Scalar>);
}

template <typename Scalar>
Scalar chi2_info_bec(const TreeParams<Scalar>& p, Scalar q) {
  detail::check_unit(q, Scalar(1), "chi2_info_bec: q outside [0, 1]");
  return g_expansion(p, Scalar(1) - q);
}

template <typename Scalar>
Scalar chi2_entropy_bsc(const TreeParams<Scalar>& p, Scalar q) {
  return Scalar(1) - chi2_info_bsc(p, q);
}

template <typename Scalar>
Scalar chi2_entropy_bec(const TreeParams<Scalar>& p, Scalar q) {
  return Scalar(1) - chi2_info_bec(p, q);
}

// Percolation map f(eps) = 1 - (1 - (1 - 2 delta)^2 eps)^d.
template <typename Scalar>
Scalar f_percolation(const TreeParams<Scalar>& p, Scalar eps) {
  using std::expm1;
  using std::log1p;
  detail::check_unit(eps, Scalar(1), "f_percolation: eps outside [0, 1]");
  const Scalar s = (Scalar(1) - Scalar(2) * p.delta) * (Scalar(1) - Scalar(2) * p.delta) * eps;
  if (s >= Scalar(1)) return Scalar(1);
  return -expm1(Scalar(p.d) * log1p(-s));
}

}  // namespace treecast
