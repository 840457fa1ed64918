#pragma once

#include <cstdint>
#include <ostream>

namespace dopobc::tools {

// Oracle equivalence and kernel invariants. Prints one line per check; returns the number of
// failed checks.
int run_checks(std::ostream& out, std::uint64_t seed);

}  // namespace dopobc::tools
