#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace phil {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Quick internal consistency suites: analytic against finite-difference
/// gradients, BFS distances against all-pairs shortest paths, and search
/// bookkeeping invariants on random graphs.
std::vector<CheckResult> run_selfcheck(std::uint64_t seed);

}  // namespace phil
