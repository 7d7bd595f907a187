// Acceptance suite: runs every validation criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit 0 iff all pass.

#include <cstdio>
#include <vector>

#include "wiener/validate.hpp"

int main() {
    const std::vector<wiener::CriterionResult> results = wiener::run_validation();
    bool all_pass = true;
    for (const wiener::CriterionResult& r : results) {
        all_pass = all_pass && r.pass;
        std::printf("[%s] criterion %2d: %s\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str());
        std::printf("        %s\n", r.detail.c_str());
    }
    std::printf("%s\n", all_pass ? "acceptance: all criteria passed"
                                 : "acceptance: FAILURES present");
    return all_pass ? 0 : 1;
}
