#pragma once

// Binary memoryless symmetric channels stored as finite mixtures of BSCs.
// A channel is a probability measure over the crossover parameter
// Delta in [0, 1/2]; BSC_delta is one atom and BEC_q is the pair
// {0 w.p. 1-q, 1/2 w.p. q}.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace treecast {

using Index = Eigen::Index;

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kMergeTol = 1e-12;

template <typename Scalar>
Scalar binary_entropy(Scalar p) {
  using std::log2;
  if (!(p >= Scalar(0) && p <= Scalar(1)))
    throw std::domain_error("binary_entropy: argument outside [0, 1]");
  if (p == Scalar(0) || p == Scalar(1)) return Scalar(0);
  return -p * log2(p) - (Scalar(1) - p) * log2(Scalar(1) - p);
}

// 1 - h(delta) without the cancellation near delta = 1/2.  With u = 1 - 2 delta
// this is ((1+u) ln(1+u) + (1-u) ln(1-u)) / (2 ln 2).
template <typename Scalar>
Scalar bsc_capacity(Scalar delta) {
  using std::log1p;
  const Scalar u = Scalar(1) - Scalar(2) * delta;
  const Scalar plus = (Scalar(1) + u) * log1p(u);
  const Scalar minus = u < Scalar(1) ? (Scalar(1) - u) * log1p(-u) : Scalar(0);
  return (plus + minus) / (Scalar(2) * Scalar(std::numbers::ln2_v<long double>));
}

template <typename Scalar = double>
Scalar delta_c(int d) {
  using std::sqrt;
  if (d < 2) throw std::domain_error("delta_c: arity must be at least 2");
  return (Scalar(1) - Scalar(1) / sqrt(Scalar(d))) / Scalar(2);
}

// Arity d and edge flip probability delta.  d = 1 (a chain) is accepted so the
// layer functions can be evaluated on it; it has no critical point.
template <typename Scalar = double>
struct TreeParams {
  int d = 2;
  Scalar delta = Scalar(0);

  TreeParams() = default;
  TreeParams(int arity, Scalar edge_delta) : d(arity), delta(edge_delta) {
    if (d < 1) throw std::domain_error("TreeParams: arity must be positive");
    if (!(delta >= Scalar(0) && delta <= Scalar(0.5)))
      throw std::domain_error("TreeParams: delta outside [0, 1/2]");
  }

  Scalar critical_delta() const { return delta_c<Scalar>(d); }
  // Distance below the threshold; negative when the noise is supercritical.
  Scalar tau() const { return critical_delta() - delta; }
  // d (1 - 2 delta)^2, the Kesten-Stigum quantity.
  Scalar ks() const { return Scalar(d) * (Scalar(1) - 2 * delta) * (Scalar(1) - 2 * delta); }
};

template <typename Scalar = double>
struct ChannelFunctionals {
  Scalar p_e = Scalar(0);
  Scalar capacity = Scalar(1);
  Scalar chi2 = Scalar(1);
};

namespace detail {

// Sorts atoms by delta, merges runs that sit within tol of the first atom of
// the run (weight-averaged position), and drops zero weights.  Returns the
// total weight before normalization.
template <typename Scalar>
Scalar canonicalize(std::vector<std::pair<Scalar, Scalar>>& atoms, Scalar tol) {
  std::sort(atoms.begin(), atoms.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t out = 0;
  Scalar total = 0;
  std::size_t i = 0;
  while (i < atoms.size()) {
    const Scalar anchor = atoms[i].first;
    Scalar w = 0, moment = 0;
    std::size_t j = i;
    for (; j < atoms.size() && atoms[j].first - anchor <= tol; ++j) {
      w += atoms[j].second;
      moment += atoms[j].second * atoms[j].first;
    }
    if (w > Scalar(0)) {
      Scalar pos = j - i == 1 ? anchor : moment / w;
      pos = std::clamp(pos, anchor, atoms[j - 1].first);
      atoms[out++] = {pos, w};
      total += w;
    }
    i = j;
  }
  atoms.resize(out);
  return total;
}

}  // namespace detail

// Finite atomic measure over Delta.  Atoms are strictly increasing, weights are
// positive and sum to one.  Construction sorts, merges near duplicates and
// renormalizes.
template <typename Scalar_ = double>
class DeltaMeasure {
 public:
  using Scalar = Scalar_;
  using Array = ArrayX<Scalar>;

  // Perfect channel.
  DeltaMeasure() : deltas_(Array::Zero(1)), weights_(Array::Ones(1)) {}

  DeltaMeasure(const Array& deltas, const Array& weights, Scalar merge_tol = Scalar(kMergeTol)) {
    if (deltas.size() != weights.size())
      throw std::invalid_argument("DeltaMeasure: deltas and weights differ in length");
    std::vector<std::pair<Scalar, Scalar>> atoms(deltas.size());
    for (Index i = 0; i < deltas.size(); ++i) atoms[i] = {deltas[i], weights[i]};
    assign(std::move(atoms), merge_tol);
  }

  DeltaMeasure(std::initializer_list<std::pair<Scalar, Scalar>> atoms,
               Scalar merge_tol = Scalar(kMergeTol)) {
    assign(std::vector<std::pair<Scalar, Scalar>>(atoms), merge_tol);
  }

  explicit DeltaMeasure(std::vector<std::pair<Scalar, Scalar>> atoms,
                        Scalar merge_tol = Scalar(kMergeTol)) {
    assign(std::move(atoms), merge_tol);
  }

  // Wraps arrays that are already sorted, strictly increasing, positive and
  // normalized.  Only the hot loops use this; nothing is checked.
  static DeltaMeasure from_canonical(Array deltas, Array weights) {
    DeltaMeasure m;
    m.deltas_ = std::move(deltas);
    m.weights_ = std::move(weights);
    return m;
  }

  Index size() const { return deltas_.size(); }
  const Array& deltas() const { return deltas_; }
  const Array& weights() const { return weights_; }
  Scalar delta(Index i) const { return deltas_[i]; }
  Scalar weight(Index i) const { return weights_[i]; }

  template <typename Other>
  DeltaMeasure<Other> cast() const {
    return DeltaMeasure<Other>::from_canonical(deltas_.template cast<Other>(),
                                               weights_.template cast<Other>());
  }

 private:
  void assign(std::vector<std::pair<Scalar, Scalar>> atoms, Scalar merge_tol) {
    if (atoms.empty()) throw std::domain_error("DeltaMeasure: no atoms");
    if (!(merge_tol >= Scalar(0))) throw std::domain_error("DeltaMeasure: negative merge tolerance");
    // Values produced by arithmetic may overshoot the range by a few ulps.
    const Scalar slack = Scalar(1e-12);
    for (auto& [d, w] : atoms) {
      if (!std::isfinite(static_cast<double>(d)) || d < -slack || d > Scalar(0.5) + slack)
        throw std::domain_error("DeltaMeasure: atom outside [0, 1/2]");
      if (!std::isfinite(static_cast<double>(w)) || w < Scalar(0))
        throw std::domain_error("DeltaMeasure: negative or non-finite weight");
      d = std::clamp(d, Scalar(0), Scalar(0.5));
    }
    const Scalar total = detail::canonicalize(atoms, merge_tol);
    if (!(total > Scalar(0))) throw std::domain_error("DeltaMeasure: total weight is zero");
    deltas_.resize(static_cast<Index>(atoms.size()));
    weights_.resize(static_cast<Index>(atoms.size()));
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      deltas_[i] = atoms[i].first;
      weights_[i] = atoms[i].second / total;
    }
  }

  Array deltas_;
  Array weights_;
};

template <typename Scalar>
DeltaMeasure<Scalar> bsc(Scalar delta) {
  if (!(delta >= Scalar(0) && delta <= Scalar(0.5)))
    throw std::domain_error("bsc: crossover outside [0, 1/2]");
  return DeltaMeasure<Scalar>({{delta, Scalar(1)}});
}

template <typename Scalar>
DeltaMeasure<Scalar> bec(Scalar q) {
  if (!(q >= Scalar(0) && q <= Scalar(1))) throw std::domain_error("bec: erasure outside [0, 1]");
  return DeltaMeasure<Scalar>({{Scalar(0), Scalar(1) - q}, {Scalar(0.5), q}});
}

template <typename Scalar>
Scalar p_e(const DeltaMeasure<Scalar>& w) {
  const Scalar v = (w.weights() * w.deltas()).sum();
  return std::clamp(v, Scalar(0), Scalar(0.5));
}

template <typename Scalar>
Scalar capacity(const DeltaMeasure<Scalar>& w) {
  const Scalar v = (w.weights() * w.deltas().unaryExpr([](Scalar d) { return bsc_capacity(d); })).sum();
  return std::clamp(v, Scalar(0), Scalar(1));
}

template <typename Scalar>
Scalar chi2_capacity(const DeltaMeasure<Scalar>& w) {
  const Scalar v = (w.weights() * (Scalar(1) - 2 * w.deltas()).square()).sum();
  return std::clamp(v, Scalar(0), Scalar(1));
}

template <typename Scalar>
ChannelFunctionals<Scalar> functionals(const DeltaMeasure<Scalar>& w) {
  return {p_e(w), capacity(w), chi2_capacity(w)};
}

template <typename Scalar>
DeltaMeasure<Scalar> merge_atoms(const DeltaMeasure<Scalar>& w, Scalar tol) {
  if (!(tol >= Scalar(0))) throw std::domain_error("merge_atoms: negative tolerance");
  std::vector<std::pair<Scalar, Scalar>> atoms(w.size());
  for (Index i = 0; i < w.size(); ++i) atoms[i] = {w.delta(i), w.weight(i)};
  return DeltaMeasure<Scalar>(std::move(atoms), tol);
}

}  // namespace treecast
