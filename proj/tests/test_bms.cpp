#include "support.hpp"

#include <cmath>

using namespace treecast;
using tc_test::near;

TEST_CASE("binary entropy values and domain") {
  CHECK(binary_entropy(0.5) == near(1.0));
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  CHECK(binary_entropy(0.1) == near(0.468995593589, 1e-11));
  for (double p = 0.0; p <= 1.0; p += 0.01) CHECK(binary_entropy(p) == near(binary_entropy(1.0 - p), 1e-14));
  CHECK_THROWS_AS(binary_entropy(-0.1), std::domain_error);
  CHECK_THROWS_AS(binary_entropy(1.5), std::domain_error);
}

TEST_CASE("stable capacity formula matches 1 - h") {
  for (double d = 0.0; d <= 0.5; d += 0.003125) CHECK(bsc_capacity(d) == near(1.0 - binary_entropy(d), 1e-14));
  // Near 1/2 the capacity is 2 u^2 / ln 2 to leading order.
  const double u = 1e-6;
  CHECK(bsc_capacity(0.5 - u / 2) == near(u * u / (2 * std::log(2.0)), 1e-6));
}

TEST_CASE("critical delta") {
  CHECK(delta_c(2) == near(0.14644661, 1e-8));
  CHECK(delta_c(4) == 0.25);
  CHECK(delta_c(9) == near(1.0 / 3.0, 1e-15));
  for (int d = 2; d <= 100; ++d) {
    const double e = 1.0 - 2.0 * delta_c(d);
    CHECK(std::abs(d * e * e - 1.0) < 1e-14);
  }
  CHECK_THROWS_AS(delta_c(1), std::domain_error);
}

TEST_CASE("tree parameters") {
  const TreeParams<double> p(2, 0.1);
  CHECK(p.tau() == near(delta_c(2) - 0.1, 1e-15));
  CHECK(p.ks() == near(2 * 0.64, 1e-15));
  CHECK(TreeParams<double>(2, 0.3).tau() < 0);
  CHECK_THROWS_AS(TreeParams<double>(0, 0.1), std::domain_error);
  CHECK_THROWS_AS(TreeParams<double>(2, 0.6), std::domain_error);
  CHECK_THROWS_AS(TreeParams<double>(1, 0.1).critical_delta(), std::domain_error);
}

TEST_CASE("extremal channels") {
  for (double d : {0.0, 0.1, 0.5}) {
    const auto w = bsc(d);
    REQUIRE(w.size() == 1);
    CHECK(w.delta(0) == d);
    CHECK(w.weight(0) == 1.0);
  }
  CHECK_THROWS_AS(bsc(0.6), std::domain_error);
  CHECK_THROWS_AS(bsc(-0.01), std::domain_error);

  const auto perfect = bec(0.0);
  REQUIRE(perfect.size() == 1);
  CHECK(perfect.delta(0) == 0.0);
  const auto erased = bec(1.0);
  REQUIRE(erased.size() == 1);
  CHECK(erased.delta(0) == 0.5);
  const auto w = bec(0.3);
  REQUIRE(w.size() == 2);
  CHECK(w.delta(0) == 0.0);
  CHECK(w.weight(0) == near(0.7));
  CHECK(w.delta(1) == 0.5);
  CHECK(w.weight(1) == near(0.3));
  CHECK_THROWS_AS(bec(1.1), std::domain_error);
}

TEST_CASE("functionals of extremal channels") {
  auto f = functionals(bsc(0.5));
  CHECK(f.p_e == 0.5);
  CHECK(f.capacity == near(0.0));
  CHECK(f.chi2 == near(0.0));

  f = functionals(bec(0.3));
  CHECK(f.p_e == near(0.15));
  CHECK(f.capacity == near(0.7));
  CHECK(f.chi2 == near(0.7));

  f = functionals(bsc(0.25));
  CHECK(f.p_e == near(0.25));
  CHECK(f.capacity == near(0.188721875541, 1e-11));
  CHECK(f.chi2 == near(0.25));

  for (int i = 0; i <= 500; ++i) {
    const double d = 0.5 * i / 500.0, q = i / 500.0;
    const auto a = functionals(bsc(d));
    CHECK(a.p_e == near(d));
    CHECK(a.capacity == near(1.0 - binary_entropy(d)));
    CHECK(a.chi2 == near((1 - 2 * d) * (1 - 2 * d)));
    const auto b = functionals(bec(q));
    CHECK(b.p_e == near(q / 2));
    CHECK(b.capacity == near(1 - q));
    CHECK(b.chi2 == near(1 - q));
  }
}

TEST_CASE("construction sorts, merges and normalizes") {
  const DeltaMeasure<double> w{{0.3, 2.0}, {0.1, 1.0}, {0.3, 1.0}, {0.2, 0.0}};
  REQUIRE(w.size() == 2);
  CHECK(w.delta(0) == 0.1);
  CHECK(w.delta(1) == 0.3);
  CHECK(w.weight(0) == near(0.25));
  CHECK(w.weight(1) == near(0.75));

  CHECK_THROWS_AS(DeltaMeasure<double>(std::vector<std::pair<double, double>>{}), std::domain_error);
  CHECK_THROWS_AS((DeltaMeasure<double>{{0.1, -1.0}}), std::domain_error);
  CHECK_THROWS_AS((DeltaMeasure<double>{{0.7, 1.0}}), std::domain_error);
  CHECK_THROWS_AS((DeltaMeasure<double>{{0.1, 0.0}}), std::domain_error);
  // Arithmetic overshoot of a few ulps is clamped rather than rejected.
  const DeltaMeasure<double> edge{{0.5 + 1e-15, 1.0}};
  CHECK(edge.delta(0) == 0.5);
}

TEST_CASE("merge_atoms") {
  auto m = merge_atoms(DeltaMeasure<double>({{0.1, 0.5}, {0.1, 0.5}}, 0.0), 0.0);
  REQUIRE(m.size() == 1);
  CHECK(m.delta(0) == 0.1);
  CHECK(m.weight(0) == 1.0);

  m = merge_atoms(DeltaMeasure<double>({{0.1, 0.5}, {0.2, 0.5}}, 0.0), 0.0);
  CHECK(m.size() == 2);

  m = merge_atoms(DeltaMeasure<double>({{0.1, 0.5}, {0.1 + 1e-15, 0.5}}, 0.0), 1e-12);
  REQUIRE(m.size() == 1);
  CHECK(m.delta(0) == near(0.1, 1e-14));
  CHECK(m.weight(0) == near(1.0));

  CHECK_THROWS_AS(merge_atoms(bsc(0.1), -1.0), std::domain_error);
}

TEST_CASE("merging preserves the error probability and the mass") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<std::pair<double, double>> atoms;
    std::uniform_real_distribution<double> pos(0.0, 0.5), wt(0.01, 1.0), jitter(0.0, 1e-7);
    for (int i = 0; i < 30; ++i) {
      const double base = pos(rng);
      atoms.emplace_back(base, wt(rng));
      atoms.emplace_back(std::min(0.5, base + jitter(rng)), wt(rng));
    }
    const DeltaMeasure<double> fine(atoms, 0.0);
    const auto coarse = merge_atoms(fine, 1e-6);
    CHECK(coarse.size() <= fine.size());
    CHECK(p_e(coarse) == near(p_e(fine)));
    CHECK(tc_test::total_weight(coarse) == near(1.0));
  }
}

TEST_CASE("measure invariants on random inputs") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 300; ++rep) {
    const auto w = tc_test::random_measure(rng, 1 + rep % 50);
    CHECK(tc_test::total_weight(w) == near(1.0));
    for (Index i = 1; i < w.size(); ++i) CHECK(w.delta(i) > w.delta(i - 1));
    for (Index i = 0; i < w.size(); ++i) {
      CHECK(w.weight(i) > 0);
      CHECK(w.delta(i) >= 0);
      CHECK(w.delta(i) <= 0.5);
    }
    const auto f = functionals(w);
    CHECK(f.p_e >= 0);
    CHECK(f.p_e <= 0.5);
    CHECK(f.capacity >= 0);
    CHECK(f.capacity <= 1);
    CHECK(f.chi2 >= 0);
    CHECK(f.chi2 <= 1);
  }
}

TEST_CASE("extended precision instantiation") {
  using LD = long double;
  const auto w = bec<LD>(0.25L);
  const auto f = functionals(w);
  CHECK(static_cast<double>(f.p_e) == near(0.125));
  CHECK(static_cast<double>(f.capacity) == near(0.75));
  CHECK(static_cast<double>(binary_entropy<LD>(0.1L)) == near(0.468995593589, 1e-11));
  const auto back = w.cast<double>();
  CHECK(p_e(back) == near(0.125));
}
