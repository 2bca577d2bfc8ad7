#pragma once

// Reference values at small depth: brute-force enumeration over all leaf
// configurations of the tree, and exact density evolution on DeltaMeasures.

#include <treecast/bms.hpp>

#include <Eigen/Core>

#include <utility>

namespace treecast {

struct ExactResult {
  double p_e = 0;
  double mutual_info = 1;  // bits
  double chi2_info = 1;
  long leaf_count = 1;
};

inline constexpr long kMaxEnumeratedLeaves = 16;
inline constexpr Index kMaxDensityAtoms = 1000000;

// P(leaves = y | root = 0) and P(leaves = y | root = 1) over the 2^(d^h) leaf
// configurations; bit k of the index is leaf k.
std::pair<Eigen::VectorXd, Eigen::VectorXd> leaf_conditionals(const TreeParams<double>& params, int depth);

// MAP error, mutual information and chi^2-information between the root and the
// depth-h leaves by enumeration.  Throws resource_error beyond 16 leaves.
ExactResult exact_tree(const TreeParams<double>& params, int depth);

// The root-to-leaves channel after h layers of exact BP from perfect leaves.
// Throws resource_error when the support outgrows kMaxDensityAtoms.
DeltaMeasure<double> exact_de(const TreeParams<double>& params, int depth);

// Functionals of the channel, as an ExactResult for comparison.
ExactResult summarize(const DeltaMeasure<double>& w, long leaf_count);

}  // namespace treecast
