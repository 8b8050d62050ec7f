#pragma once

#include <iosfwd>

#include "epispde/config.hpp"

namespace epispde {

/// The built-in invariant suite behind `epispde verify`: positivity and clip
/// accounting, the mass-bound lemma, noise covariance against its closed
/// form, and the strong self-convergence order.  Runs on trimmed horizons
/// and path counts so it finishes in seconds.  Prints one PASS/FAIL line per
/// check; returns true when all pass.
bool run_verification(const Simulation& sim, std::ostream& out);

}  // namespace epispde
