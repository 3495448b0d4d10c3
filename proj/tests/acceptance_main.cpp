// Prints one PASS/FAIL line per acceptance criterion and exits nonzero if any fail.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpfq/acceptance.hpp"
#include "gpfq/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"gpfq acceptance suites"};
  std::uint64_t seed = gpfq::kDefaultMasterSeed;
  unsigned threads = 1;
  std::vector<int> only;
  std::string csv_dir;
  app.add_option("--seed", seed, "master seed");
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 256u));
  app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 11));
  app.add_option("--csv-dir", csv_dir, "write each suite's CSV here");
  CLI11_PARSE(app, argc, argv);

  if (only.empty()) {
    for (int id = 1; id <= gpfq::kCriterionCount; ++id) only.push_back(id);
  }
  gpfq::parallel::set_thread_count(threads);

  int failed = 0;
  std::vector<gpfq::CriterionResult> results;
  for (int id : only) {
    const gpfq::CriterionResult r = id == gpfq::kCriterionCount
                                        ? gpfq::run_determinism(results, seed)
                                        : gpfq::run_criterion(id, seed);
    std::printf("%s criterion %2d %-20s %7.2f s  %s\n", r.passed ? "PASS" : "FAIL", r.id,
                r.name.c_str(), r.seconds, r.detail.c_str());
    std::fflush(stdout);
    if (!r.passed) ++failed;
    if (!csv_dir.empty()) {
      std::filesystem::create_directories(csv_dir);
      std::ofstream(std::filesystem::path(csv_dir) / ("criterion_" + std::to_string(id) + ".csv"),
                    std::ios::binary)
          << r.csv;
    }
    results.push_back(r);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(results.size()) - failed,
              results.size());
  return failed == 0 ? 0 : 1;
}
