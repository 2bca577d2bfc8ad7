#include <treecast/oracle.hpp>

#include <treecast/bp_layer.hpp>
#include <treecast/errors.hpp>

#include <cmath>
#include <string>

namespace treecast {

namespace {

long leaves_at(int d, int depth) {
  long n = 1;
  for (int i = 0; i < depth; ++i) {
    n *= d;
    if (n > kMaxEnumeratedLeaves) return n;
  }
  return n;
}

// Kronecker power of the per-child likelihood vector: the children's subtrees
// are independent given their common parent.
Eigen::VectorXd kron(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() * b.size());
  for (Index i = 0; i < b.size(); ++i) out.segment(i * a.size(), a.size()) = b[i] * a;
  return out;
}

}  // namespace

std::pair<Eigen::VectorXd, Eigen::VectorXd> leaf_conditionals(const TreeParams<double>& params, int depth) {
  if (depth < 0) throw std::domain_error("exact_tree: negative depth");
  const long leaves = leaves_at(params.d, depth);
  if (leaves > kMaxEnumeratedLeaves)
    throw resource_error("exact_tree: " + std::to_string(leaves) + " leaves exceed the enumeration limit");

  // Depth 0: the root is its own leaf.
  Eigen::VectorXd p0(2), p1(2);
  p0 << 1.0, 0.0;
  p1 << 0.0, 1.0;
  for (int level = 0; level < depth; ++level) {
    // Likelihood of one child's subtree given the parent, through the edge.
    const Eigen::VectorXd c0 = (1.0 - params.delta) * p0 + params.delta * p1;
    const Eigen::VectorXd c1 = params.delta * p0 + (1.0 - params.delta) * p1;
    Eigen::VectorXd n0 = c0, n1 = c1;
    for (int k = 1; k < params.d; ++k) {
      n0 = kron(n0, c0);
      n1 = kron(n1, c1);
    }
    p0 = std::move(n0);
    p1 = std::move(n1);
  }
  return {p0, p1};
}

ExactResult exact_tree(const TreeParams<double>& params, int depth) {
  const auto [p0, p1] = leaf_conditionals(params, depth);
  ExactResult r;
  r.leaf_count = leaves_at(params.d, depth);
  const Eigen::ArrayXd a = p0.array(), b = p1.array();
  const Eigen::ArrayXd s = a + b;
  r.p_e = 0.5 * a.min(b).sum();
  double info = 0, chi2 = 0;
  for (Index y = 0; y < a.size(); ++y) {
    if (s[y] <= 0) continue;
    const double mix = 0.5 * s[y];
    if (a[y] > 0) info += 0.5 * a[y] * std::log2(a[y] / mix);
    if (b[y] > 0) info += 0.5 * b[y] * std::log2(b[y] / mix);
    chi2 += (a[y] - b[y]) * (a[y] - b[y]) / (2.0 * s[y]);
  }
  r.mutual_info = info;
  r.chi2_info = chi2;
  return r;
}

DeltaMeasure<double> exact_de(const TreeParams<double>& params, int depth) {
  if (depth < 0) throw std::domain_error("exact_de: negative depth");
  DeltaMeasure<double> w = bsc(0.0);
  for (int level = 0; level < depth; ++level) {
    w = layer_bp(params, w, kMergeTol, kMaxDensityAtoms);
    if (w.size() > kMaxDensityAtoms) throw resource_error("exact_de: support exceeds the atom budget");
  }
  return w;
}

ExactResult summarize(const DeltaMeasure<double>& w, long leaf_count) {
  const auto f = functionals(w);
  return {f.p_e, f.capacity, f.chi2, leaf_count};
}

}  // namespace treecast
