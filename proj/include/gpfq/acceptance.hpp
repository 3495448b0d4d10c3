#pragma once

// Acceptance suites 1-11. Each suite is a pure function of the master seed
// and emits CSV data that must be byte-identical across runs and thread counts.

#include <cstdint>
#include <string>
#include <vector>

namespace gpfq {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;
  std::string csv;
};

inline constexpr std::uint64_t kDefaultMasterSeed = 20211012;
inline constexpr int kCriterionCount = 11;

std::string criterion_name(int id);
double criterion_budget_seconds(int id);

/// Runs suite `id` (1..11). A suite passes only if its checks hold and it
/// finishes within its time budget. Throws InvalidSpec on an unknown id.
CriterionResult run_criterion(int id, std::uint64_t master_seed);

/// Suite 11 given already-computed results of suites 1-10 at the current
/// thread count: reruns suites 1-10 at 1 and 8 threads and compares CSV bytes.
CriterionResult run_determinism(const std::vector<CriterionResult>& reference,
                                std::uint64_t master_seed);

/// Runs the requested suites in order; suite 11 reuses earlier results when present.
std::vector<CriterionResult> run_acceptance(const std::vector<int>& ids, std::uint64_t master_seed);

}  // namespace gpfq
