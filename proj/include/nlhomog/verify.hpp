#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nlhomog/cli_io.hpp"

namespace nlhomog {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    double seconds = 0.0;
    double limit_seconds = 0.0;
    std::string detail;
};

inline constexpr int kCriterionCount = 10;

/// Runs acceptance criteria (all when `only` is empty) on the setup described by `base`;
/// each result line is echoed to `progress` as soon as it is known.
std::vector<CriterionResult> run_acceptance(const RunConfig& base, std::ostream& progress,
                                            const std::vector<int>& only = {});

/// "PASS  3 supercritical endpoint (0.01 s): ..." style line.
std::string format_result(const CriterionResult& r);

} // namespace nlhomog
