#pragma once

// The gpfq command line.
//
//   gpfq [--config PATH] [--seed N] [--threads N] [--strict] [--out DIR] COMMAND ...
//
// Commands: quantize, verify, sweep-width, sweep-lambda, sweep-c, gen-data,
// inspect. GPFQ_THREADS is read when --threads is absent. Diagnostics go to
// `err`; data goes to files under --out, except `inspect`, which prints JSON
// to `out`. A failing command writes no files.
//
// Exit codes: 0 success, 1 runtime error or --strict failure, 2 usage error.

#include <ostream>
#include <string>
#include <vector>

namespace gpfq {

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace gpfq
