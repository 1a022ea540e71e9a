#include <cstdio>
#include <cstdlib>
#include <string>

#include "kf/verify.hpp"

// Runs the nine acceptance criteria (or the ones named on the command line) and prints one line each.
int main(int argc, char** argv) {
    kf::VerifyOptions opt;
    int failed = 0;
    auto run = [&](int id) {
        const auto r = kf::run_criterion(id, opt);
        std::printf("%s\n", kf::format_result(r).c_str());
        std::fflush(stdout);
        failed += !r.passed;
    };
    if (argc > 1) {
        for (int i = 1; i < argc; ++i) run(std::atoi(argv[i]));
    } else {
        for (int id = 1; id <= kf::criterion_count(); ++id) run(id);
    }
    std::printf("%d failed\n", failed);
    return failed == 0 ? 0 : 1;
}
