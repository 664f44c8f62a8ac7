#pragma once

// Self-contained correctness checks against independent oracles: assignment
// costs against permutation enumeration, loss gradients against central
// differences, and gap identities on random maps.

#include <iosfwd>
#include <string>
#include <vector>

#include "dpot/random.hpp"

namespace dpot {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// 200 random 6x6 and 100 random 8x8 cost matrices: solve_exact cost equals
/// the enumeration oracle to 1e-9.
CheckResult check_assignment_oracle(std::uint64_t seed);

/// DPOT loss gradient of a 16-point, 2-hidden-layer network against central
/// differences (relative error < 1e-4 per coordinate) for every architecture.
CheckResult check_loss_gradients(std::uint64_t seed);

/// 50 random (T(X), X, Y) triples: eps terms >= -1e-12 and summing to the
/// fresh loss minus lambda W2(X, Y) to 1e-10; a map tabulated from the exact
/// assignment has every eps below 1e-9.
CheckResult check_gap_identity(std::uint64_t seed);

std::vector<CheckResult> run_oracle_checks(std::uint64_t seed);

/// "PASS name (seconds) detail" or "FAIL ...".
void print_check(std::ostream& os, const CheckResult& result);

}  // namespace dpot
