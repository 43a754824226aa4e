// Runs every acceptance criterion on the default setup and prints one line per criterion.
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "nlhomog/verify.hpp"

int main(int argc, char** argv) {
    using namespace nlhomog;
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    const RunConfig cfg = RunConfig::load(NLHOMOG_DEFAULT_CONFIG);
    const auto results = run_acceptance(cfg, std::cout, only);
    int failed = 0;
    for (const auto& r : results) failed += r.passed ? 0 : 1;
    std::cout << (results.size() - failed) << "/" << results.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
