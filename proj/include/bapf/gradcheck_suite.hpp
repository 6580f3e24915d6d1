#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bapf {

/// One entry of the finite-difference suite. `run` returns the worst relative
/// error over every input it checks for the given seed.
struct GradcheckCase {
    std::string name;
    double threshold = 1e-4;
    std::function<double(uint64_t seed)> run;
};

const std::vector<GradcheckCase>& gradcheck_registry();

struct GradcheckResult {
    std::string name;
    uint64_t seed = 0;
    double max_rel_error = 0;
    double threshold = 0;
    bool passed() const { return max_rel_error <= threshold; }
};

/// Runs every case whose name contains `filter` (all when empty) for each seed.
std::vector<GradcheckResult> run_gradchecks(const std::string& filter, const std::vector<uint64_t>& seeds);

}  // namespace bapf
