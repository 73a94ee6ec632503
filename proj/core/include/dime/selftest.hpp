// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace dime {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick analytic invariants: SVD round trip, merge identities, gradient
/// agreement with finite differences, Balanced Softmax degeneracy, metric
/// identities and protocol construction.
std::vector<CheckResult> run_selftest();

}  // namespace dime
