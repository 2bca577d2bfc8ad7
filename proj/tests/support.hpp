#pragma once

#include <treecast/treecast.hpp>

#include <doctest.h>

#include <random>
#include <vector>

namespace tc_test {

using treecast::DeltaMeasure;
using treecast::Index;

inline doctest::Approx near(double v, double tol = 1e-12) { return doctest::Approx(v).epsilon(tol); }

// Random measure with n atoms; a share of them snapped onto a uniform grid's
// boundaries so boundary handling gets exercised.
inline DeltaMeasure<double> random_measure(std::mt19937_64& rng, int n, Index snap_cells = 0) {
  std::uniform_real_distribution<double> pos(0.0, 0.5), wt(0.01, 1.0), coin(0.0, 1.0);
  std::vector<std::pair<double, double>> atoms;
  for (int i = 0; i < n; ++i) {
    double d = pos(rng);
    if (snap_cells > 0 && coin(rng) < 0.2) {
      std::uniform_int_distribution<Index> k(0, snap_cells);
      d = 0.5 * static_cast<double>(k(rng)) / static_cast<double>(snap_cells);
    }
    atoms.emplace_back(d, wt(rng));
  }
  return DeltaMeasure<double>(std::move(atoms));
}

inline double total_weight(const DeltaMeasure<double>& w) { return w.weights().sum(); }

}  // namespace tc_test
