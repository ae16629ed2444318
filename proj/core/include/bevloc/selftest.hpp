#pragma once

#include <iosfwd>

namespace bevloc {

/// Quick invariant sweep across the library (geometry group laws, raster
/// oracles, schedule consistency, DDIM recovery, metric edge cases, ...).
/// Prints one line per check; returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace bevloc
