#pragma once

// Cellwise quantizers on [0, 1/2].  Each keeps one functional per cell (the
// error probability or the chi^2 value) and either collapses the cell's mass to
// one interior atom (a degraded / noisier channel) or spreads it to the two
// cell endpoints (an upgraded / less noisy channel).

#include <treecast/bms.hpp>
#include <treecast/bp_layer.hpp>
#include <treecast/errors.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace treecast {

enum class QuantKind { bsc, bec, bsc_chi2, bec_chi2 };

inline bool is_spread(QuantKind k) { return k == QuantKind::bec || k == QuantKind::bec_chi2; }
inline bool is_chi2(QuantKind k) { return k == QuantKind::bsc_chi2 || k == QuantKind::bec_chi2; }

// Cells are (b_i, b_{i+1}] except the first, which is [0, b_1].  An atom on an
// interior boundary therefore belongs to the cell on its left.
template <typename Scalar_ = double>
class QuantGrid {
 public:
  using Scalar = Scalar_;
  using Array = ArrayX<Scalar>;

  explicit QuantGrid(const Array& boundaries) : b_(boundaries) {
    if (b_.size() < 2) throw std::domain_error("QuantGrid: need at least two boundaries");
    if (b_[0] != Scalar(0) || b_[b_.size() - 1] != Scalar(0.5))
      throw std::domain_error("QuantGrid: boundaries must run from 0 to 1/2");
    for (Index i = 1; i < b_.size(); ++i)
      if (!(b_[i] > b_[i - 1])) throw std::domain_error("QuantGrid: boundaries not strictly increasing");
  }

  static QuantGrid uniform(Index n_cells) {
    if (n_cells < 1) throw std::domain_error("uniform_grid: need at least one cell");
    Array b(n_cells + 1);
    for (Index i = 0; i <= n_cells; ++i) b[i] = Scalar(i) / Scalar(2 * n_cells);
    QuantGrid g(b);
    g.uniform_ = true;
    return g;
  }

  Index cells() const { return b_.size() - 1; }
  const Array& boundaries() const { return b_; }
  Scalar lower(Index cell) const { return b_[cell]; }
  Scalar upper(Index cell) const { return b_[cell + 1]; }
  bool is_uniform() const { return uniform_; }

  Index cell_of(Scalar delta) const {
    const Index n = cells();
    if (uniform_) {
      using std::ceil;
      const Index k = static_cast<Index>(ceil(delta * Scalar(2 * n))) - 1;
      return std::clamp<Index>(k, 0, n - 1);
    }
    const Scalar* first = b_.data() + 1;
    const Scalar* it = std::lower_bound(first, b_.data() + b_.size(), delta);
    return std::clamp<Index>(static_cast<Index>(it - first), 0, n - 1);
  }

 private:
  Array b_;
  bool uniform_ = false;
};

template <typename Scalar = double>
QuantGrid<Scalar> uniform_grid(Index n_cells) {
  return QuantGrid<Scalar>::uniform(n_cells);
}

// Per-cell mass and the mass-weighted matched functional (Delta for the error
// quantizers, (1 - 2 Delta)^2 for the chi^2 quantizers).
template <typename Scalar>
struct CellMoments {
  ArrayX<Scalar> mass;
  ArrayX<Scalar> moment;
};

template <typename Scalar>
Scalar matched_functional(QuantKind kind, Scalar delta) {
  if (!is_chi2(kind)) return delta;
  const Scalar u = Scalar(1) - Scalar(2) * delta;
  return u * u;
}

template <typename Scalar>
CellMoments<Scalar> cell_moments(const DeltaMeasure<Scalar>& w, const QuantGrid<Scalar>& grid,
                                 QuantKind kind) {
  CellMoments<Scalar> m{ArrayX<Scalar>::Zero(grid.cells()), ArrayX<Scalar>::Zero(grid.cells())};
  for (Index i = 0; i < w.size(); ++i) {
    const Index c = grid.cell_of(w.delta(i));
    m.mass[c] += w.weight(i);
    m.moment[c] += w.weight(i) * matched_functional(kind, w.delta(i));
  }
  return m;
}

// Builds the quantized measure from cell moments.  Masses are renormalized.
template <typename Scalar>
DeltaMeasure<Scalar> from_cell_moments(const CellMoments<Scalar>& m, const QuantGrid<Scalar>& grid,
                                       QuantKind kind) {
  using std::sqrt;
  const Index n = grid.cells();
  const Scalar total = m.mass.sum();
  if (!(total > Scalar(0))) throw invariant_error("quantize: no mass left after quantization");
  std::vector<Scalar> pos, wt;
  pos.reserve(static_cast<std::size_t>(is_spread(kind) ? n + 1 : n));
  wt.reserve(pos.capacity());
  auto push = [&](Scalar x, Scalar w) {
    if (!(w > Scalar(0))) return;
    if (!pos.empty() && x <= pos.back()) {
      // Neighbouring spread cells share an endpoint; keep it exact.
      const Scalar s = wt.back() + w;
      if (x != pos.back()) pos.back() = (pos.back() * wt.back() + x * w) / s;
      wt.back() = s;
      return;
    }
    pos.push_back(x);
    wt.push_back(w);
  };
  for (Index c = 0; c < n; ++c) {
    const Scalar mass = m.mass[c];
    if (!(mass > Scalar(0))) continue;
    const Scalar a = grid.lower(c), b = grid.upper(c);
    const Scalar mean = m.moment[c] / mass;
    const Scalar w = mass / total;
    switch (kind) {
      case QuantKind::bsc:
        push(std::clamp(mean, a, b), w);
        break;
      case QuantKind::bsc_chi2:
        push(std::clamp((Scalar(1) - sqrt(std::max(mean, Scalar(0)))) / Scalar(2), a, b), w);
        break;
      case QuantKind::bec:
      case QuantKind::bec_chi2: {
        using std::abs;
        const Scalar fa = matched_functional(kind, a), fb = matched_functional(kind, b);
        if (fa == fb) throw invariant_error("quantize: degenerate cell");
        // A mean within rounding of an endpoint is that endpoint; otherwise
        // requantizing would split off atoms of weight ~1e-16.
        const Scalar ulps = Scalar(4) * std::numeric_limits<Scalar>::epsilon();
        Scalar alpha = std::clamp((fb - mean) / (fb - fa), Scalar(0), Scalar(1));
        if (abs(fb - mean) <= ulps * abs(fb)) alpha = Scalar(0);
        if (abs(mean - fa) <= ulps * abs(fa)) alpha = Scalar(1);
        push(a, alpha * w);
        push(b, (Scalar(1) - alpha) * w);
        break;
      }
    }
  }
  ArrayX<Scalar> d = Eigen::Map<ArrayX<Scalar>>(pos.data(), static_cast<Index>(pos.size()));
  ArrayX<Scalar> ws = Eigen::Map<ArrayX<Scalar>>(wt.data(), static_cast<Index>(wt.size()));
  ws /= ws.sum();
  return DeltaMeasure<Scalar>::from_canonical(std::move(d), std::move(ws));
}

template <typename Scalar>
DeltaMeasure<Scalar> quantize(const DeltaMeasure<Scalar>& w, const QuantGrid<Scalar>& grid, QuantKind kind) {
  return from_cell_moments(cell_moments(w, grid, kind), grid, kind);
}

template <typename Scalar>
DeltaMeasure<Scalar> q_bsc(const DeltaMeasure<Scalar>& w, const QuantGrid<Scalar>& grid) {
  return quantize(w, grid, QuantKind::bsc);
}

template <typename Scalar>
DeltaMeasure<Scalar> q_bec(const DeltaMeasure<Scalar>& w, const QuantGrid<Scalar>& grid) {
  return quantize(w, grid, QuantKind::bec);
}

template <typename Scalar>
DeltaMeasure<Scalar> q_bsc_chi2(const DeltaMeasure<Scalar>& w, const QuantGrid<Scalar>& grid) {
  return quantize(w, grid, QuantKind::bsc_chi2);
}

template <typename Scalar>
DeltaMeasure<Scalar> q_bec_chi2(const DeltaMeasure<Scalar>& w, const QuantGrid<Scalar>& grid) {
  return quantize(w, grid, QuantKind::bec_chi2);
}

namespace detail {

// Accumulates the cell moments of star_combine(x, y) without building the
// product measure.  With symmetric = true, x and y are the same measure and only
// pairs j >= i are visited, off-diagonal pairs counted twice.
template <typename Scalar>
void star_moments(const DeltaMeasure<Scalar>& x, const DeltaMeasure<Scalar>& y, bool symmetric,
                  const QuantGrid<Scalar>& grid, QuantKind kind, CellMoments<Scalar>& out) {
  const Index n = grid.cells();
  const Index ny = y.size();
  const bool chi2 = is_chi2(kind);
  // Slot k holds ceil(Delta * 2n); slot 0 and slot n + 1 fold into their
  // neighbours afterwards.
  std::vector<Scalar> mass(static_cast<std::size_t>(n + 2), Scalar(0));
  std::vector<Scalar> mom(mass.size(), Scalar(0));
  std::vector<Scalar> ia(ny), id(ny), ma(ny), md(ny), fa(ny), fd(ny);
  const Scalar scale = Scalar(2 * n);
  const Scalar* yd = y.deltas().data();
  const Scalar* yw = y.weights().data();

  auto flush_runs = [&](const Scalar* idx, const Scalar* m, const Scalar* f, Index len) {
    if (grid.is_uniform()) {
      Index cur = static_cast<Index>(idx[0]);
      Scalar sm = 0, sf = 0;
      for (Index j = 0; j < len; ++j) {
        const Index c = static_cast<Index>(idx[j]);
        if (c != cur) {
          mass[cur] += sm;
          mom[cur] += sf;
          sm = sf = 0;
          cur = c;
        }
        sm += m[j];
        sf += f[j];
      }
      mass[cur] += sm;
      mom[cur] += sf;
    } else {
      for (Index j = 0; j < len; ++j) {
        const Index c = grid.cell_of(idx[j]) + 1;
        mass[c] += m[j];
        mom[c] += f[j];
      }
    }
  };

  for (Index i = 0; i < x.size(); ++i) {
    const Scalar a = x.delta(i), a1 = Scalar(1) - a;
    const Index start = symmetric ? i : 0;
    const Index len = ny - start;
    const Scalar w2 = (symmetric ? Scalar(2) : Scalar(1)) * x.weight(i);
    const Scalar* __restrict bp = yd + start;
    const Scalar* __restrict wp = yw + start;
    Scalar* __restrict iap = ia.data();
    Scalar* __restrict idp = id.data();
    Scalar* __restrict map = ma.data();
    Scalar* __restrict mdp = md.data();
    Scalar* __restrict fap = fa.data();
    Scalar* __restrict fdp = fd.data();
    const bool uniform = grid.is_uniform();
    for (Index j = 0; j < len; ++j) {
      const Scalar b = bp[j], b1 = Scalar(1) - b;
      const Scalar w = w2 * wp[j];
      const Scalar pa = a * b, ag = pa + a1 * b1;
      const Scalar m1 = a * b1, m2 = a1 * b, di = m1 + m2;
      const Scalar mn = m1 < m2 ? m1 : m2;
      const Scalar ra = pa / ag;
      const Scalar rd = di > Scalar(0) ? mn / di : Scalar(0);
      if (uniform) {
        using std::ceil;
        iap[j] = ceil(ra * scale);
        idp[j] = ceil(rd * scale);
      } else {
        iap[j] = ra;
        idp[j] = rd;
      }
      const Scalar xa = w * ag, xd = w * di;
      map[j] = xa;
      mdp[j] = xd;
      if (chi2) {
        const Scalar ua = Scalar(1) - Scalar(2) * ra, ud = Scalar(1) - Scalar(2) * rd;
        fap[j] = xa * ua * ua;
        fdp[j] = xd * ud * ud;
      } else {
        fap[j] = w * pa;
        fdp[j] = w * mn;
      }
    }
    if (symmetric) {
      map[0] *= Scalar(0.5);
      mdp[0] *= Scalar(0.5);
      fap[0] *= Scalar(0.5);
      fdp[0] *= Scalar(0.5);
    }
    flush_runs(iap, map, fap, len);
    flush_runs(idp, mdp, fdp, len);
  }

  out.mass.resize(n);
  out.moment.resize(n);
  for (Index c = 0; c < n; ++c) {
    out.mass[c] = mass[c + 1];
    out.moment[c] = mom[c + 1];
  }
  out.mass[0] += mass[0];
  out.moment[0] += mom[0];
  out.mass[n - 1] += mass[n + 1];
  out.moment[n - 1] += mom[n + 1];
}

}  // namespace detail

template <typename Scalar = double>
struct QuantizedBpOptions {
  Scalar merge_tol = Scalar(kMergeTol);
  // For d >= 3 the partial products of the layer are formed exactly while their
  // raw support stays below this budget and quantized with the same operator
  // otherwise.
  Index max_intermediate_atoms = Index(1) << 16;
};

// Cell moments of layer_bp(params, w) for the quantizer `kind`, normalized to
// unit mass, computed without materializing the d-fold product.
template <typename Scalar>
CellMoments<Scalar> quantized_layer_moments(const TreeParams<Scalar>& params, const DeltaMeasure<Scalar>& w,
                                            const QuantGrid<Scalar>& grid, QuantKind kind,
                                            const QuantizedBpOptions<Scalar>& opt = {}) {
  const DeltaMeasure<Scalar> child = serial_compose(params.delta, w, opt.merge_tol);
  CellMoments<Scalar> m;
  if (params.d == 1) {
    m = cell_moments(child, grid, kind);
  } else {
    DeltaMeasure<Scalar> partial = child;
    for (int k = 2; k < params.d; ++k) {
      if (2 * partial.size() * child.size() <= opt.max_intermediate_atoms) {
        partial = star_combine(partial, child, opt.merge_tol);
      } else {
        detail::star_moments(partial, child, false, grid, kind, m);
        partial = from_cell_moments(m, grid, kind);
      }
    }
    detail::star_moments(partial, child, params.d == 2, grid, kind, m);
  }
  // The total is squared at every layer, so its rounding error would compound
  // across iterations if it were not reset here.
  const Scalar total = m.mass.sum();
  m.mass /= total;
  m.moment /= total;
  return m;
}

// Q(layer_bp(params, w)).
template <typename Scalar>
DeltaMeasure<Scalar> quantized_layer_bp(const TreeParams<Scalar>& params, const DeltaMeasure<Scalar>& w,
                                        const QuantGrid<Scalar>& grid, QuantKind kind,
                                        const QuantizedBpOptions<Scalar>& opt = {}) {
  return from_cell_moments(quantized_layer_moments(params, w, grid, kind, opt), grid, kind);
}

}  // namespace treecast
