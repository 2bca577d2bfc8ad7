#include "support.hpp"

#include <algorithm>

using namespace treecast;
using tc_test::near;

namespace {

int oracle_depth(int d) { return d == 2 ? 4 : (d == 3 ? 3 : 2); }

QuantGrid<double> random_grid(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 3);
  if (pick(rng) > 0) {
    std::uniform_int_distribution<Index> cells(1, 64);
    return uniform_grid(cells(rng));
  }
  std::uniform_real_distribution<double> pos(0.0, 0.5);
  std::vector<double> b{0.0, 0.5};
  for (int i = 0; i < 9; ++i) b.push_back(pos(rng));
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return QuantGrid<double>(Eigen::Map<ArrayX<double>>(b.data(), static_cast<Index>(b.size())));
}

}  // namespace

TEST_CASE("quantized chains bracket exact BP at every level") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> arity(2, 4);
  std::uniform_real_distribution<double> noise(0.0, 0.5);
  const double slack = 1e-12;
  int cases = 0;
  for (int rep = 0; rep < 1200; ++rep) {
    const int d = arity(rng);
    const TreeParams<double> p(d, rep % 5 == 0 ? delta_c(d) + noise(rng) * 0.02 - 0.01 : noise(rng));
    const auto grid = random_grid(rng);
    const long depth = oracle_depth(d);
    const auto lo_pe = local_comparison(p, Side::bec, Target::error, grid, bsc(0.0), depth);
    const auto up_pe = local_comparison(p, Side::bsc, Target::error, grid, bsc(0.0), depth);
    const auto lo_i = local_comparison(p, Side::bsc, Target::info, grid, bsc(0.0), depth);
    const auto up_i = local_comparison(p, Side::bec, Target::info, grid, bsc(0.0), depth);
    const auto s_lo_pe = scalar_pe_dynamics(p, Side::bec, depth), s_up_pe = scalar_pe_dynamics(p, Side::bsc, depth);
    const auto s_lo_i = scalar_info_dynamics(p, Side::bsc, depth), s_up_i = scalar_info_dynamics(p, Side::bec, depth);
    DeltaMeasure<double> exact = bsc(0.0);
    for (long t = 0; t <= depth; ++t) {
      if (t > 0) exact = layer_bp(p, exact);
      const auto f = functionals(exact);
      CAPTURE(d);
      CAPTURE(p.delta);
      CAPTURE(t);
      CHECK(lo_pe.functional_track[t].p_e <= f.p_e + slack);
      CHECK(f.p_e <= up_pe.functional_track[t].p_e + slack);
      CHECK(lo_i.functional_track[t].capacity <= f.capacity + slack);
      CHECK(f.capacity <= up_i.functional_track[t].capacity + slack);
      CHECK(s_lo_pe.functional_track[t].p_e <= f.p_e + slack);
      CHECK(f.p_e <= s_up_pe.functional_track[t].p_e + slack);
      CHECK(s_lo_i.functional_track[t].capacity <= f.capacity + slack);
      CHECK(f.capacity <= s_up_i.functional_track[t].capacity + slack);
    }
    ++cases;
  }
  CHECK(cases >= 1000);
}

TEST_CASE("sandwich holds deep into the chains") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> arity(2, 4);
  std::uniform_real_distribution<double> noise(0.0, 0.5);
  for (int rep = 0; rep < 30; ++rep) {
    const int d = arity(rng);
    const TreeParams<double> p(d, noise(rng));
    const auto grid = random_grid(rng);
    const auto rows = level_bounds(p, SweepMethod::local, grid.cells(), 60L).rows;
    for (const auto& r : rows) {
      CHECK(r.lower_Pe <= r.upper_Pe + 1e-12);
      CHECK(r.lower_I <= r.upper_I + 1e-12);
    }
  }
}

TEST_CASE("supercritical and subcritical dichotomy") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> arity(2, 9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FixedPointConfig<double> cfg;
  cfg.max_iters = 1000000;
  for (int rep = 0; rep < 20; ++rep) {
    const int d = arity(rng);
    const double dc = delta_c(d);
    // Keep a margin from the threshold so the chains settle quickly.
    const double above = dc + 0.01 + unit(rng) * (0.5 - dc - 0.01);
    const double below = unit(rng) * (dc - 0.01);
    CHECK(scalar_info_dynamics(TreeParams<double>(d, above), Side::bec, std::nullopt, cfg).last().capacity < 1e-6);
    CHECK(scalar_info_dynamics(TreeParams<double>(d, below), Side::bsc, std::nullopt, cfg).last().capacity >= 1e-6);
  }
}
