#pragma once

#include <stdexcept>
#include <string>

namespace treecast {

// Argument outside the mathematical domain uses std::domain_error directly.

// An operation was called with arguments that break its documented contract.
struct precondition_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Work would exceed an enumeration or memory budget.
struct resource_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The requested parameter combination has no implementation (e.g. d != 2 where
// only the binary tree recursion is known).
struct unsupported_error : std::logic_error {
  using std::logic_error::logic_error;
};

// A computed result failed an internal consistency check.
struct invariant_error : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace treecast
